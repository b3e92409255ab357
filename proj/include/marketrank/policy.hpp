#pragma once

// Scoring functions, argSort policies, and hybrid alpha-mixing.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "marketrank/dataset.hpp"
#include "marketrank/records.hpp"

namespace marketrank {

enum class ScorerKind { Linear, MLP1 };

// f(item, context) over the concatenation [item_features, context_features].
// Linear: w.x + b. MLP1: w2.tanh(W1 x + b1) + b2.
class ScoringFunction {
 public:
  ScoringFunction() = default;

  static ScoringFunction linear(std::size_t input_dim);
  static ScoringFunction mlp1(std::size_t input_dim, std::size_t hidden_width, std::uint64_t seed);

  ScorerKind kind() const { return kind_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_width() const { return hidden_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  double score(std::span<const double> item, std::span<const double> context) const;
  // grad += scale * d score / d parameters.
  void accumulate_gradient(std::span<const double> item, std::span<const double> context,
                           double scale, std::span<double> grad) const;

  bool operator==(const ScoringFunction&) const = default;

  friend void to_json(nlohmann::json& j, const ScoringFunction& f);
  friend void from_json(const nlohmann::json& j, ScoringFunction& f);

 private:
  void check_dims(std::span<const double> item, std::span<const double> context) const;

  ScorerKind kind_ = ScorerKind::Linear;
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
};

// (1 - alpha) z_acq(f_acq) + alpha z_eng(f_eng), where z_* are the frozen
// standardizations fitted on a calibration dataset.
struct HybridScorer {
  ScoringFunction f_acquisition;
  ScoringFunction f_engagement;
  double alpha = 0.0;
  double acquisition_mean = 0.0;
  double acquisition_scale = 1.0;
  double engagement_mean = 0.0;
  double engagement_scale = 1.0;

  double score(std::span<const double> item, std::span<const double> context) const;

  friend void to_json(nlohmann::json& j, const HybridScorer& h);
  friend void from_json(const nlohmann::json& j, HybridScorer& h);
};

class Policy {
 public:
  Policy() = default;
  explicit Policy(ScoringFunction f) : scorer_(std::move(f)) {}
  explicit Policy(HybridScorer h) : scorer_(std::move(h)) {}

  double score(std::span<const double> item, std::span<const double> context) const;

  const std::variant<ScoringFunction, HybridScorer>& scorer() const { return scorer_; }

  friend void to_json(nlohmann::json& j, const Policy& p);
  friend void from_json(const nlohmann::json& j, Policy& p);

 private:
  std::variant<ScoringFunction, HybridScorer> scorer_;
};

double score(const ScoringFunction& f, std::span<const double> item_features,
             std::span<const double> context_features);

// Indices sorted by score descending, ties by ascending item id.
std::vector<std::size_t> argsort_scores(std::span<const double> scores,
                                        std::span<const ItemId> item_ids);

std::vector<std::size_t> rank(const Policy& policy, std::span<const ContextItem> items,
                              std::span<const double> context_features);
std::vector<std::size_t> rank(const Policy& policy, std::span<const ItemRecord> items,
                              std::span<const double> context_features);

// Standardizes both components on every item of the calibration contexts.
// Zero-variance component scores throw.
Policy mix(const ScoringFunction& f_acquisition, const ScoringFunction& f_engagement,
           double alpha, const Dataset& calibration);

}  // namespace marketrank

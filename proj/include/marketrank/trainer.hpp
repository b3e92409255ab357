#pragma once

// Value-weighted LambdaLoss training with an EM-style swap-delta refresh, and
// the weighted cross-entropy pointwise baseline.

#include <cstdint>
#include <span>
#include <vector>

#include "marketrank/dataset.hpp"
#include "marketrank/policy.hpp"
#include "marketrank/reward.hpp"

namespace marketrank {

enum class DeltaRefresh { PerMinibatch, PerEpoch };

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 30;
  std::size_t minibatch_size = 256;
  std::uint64_t seed = 1;
  double l2_penalty = 1e-4;
  DeltaRefresh delta_refresh = DeltaRefresh::PerMinibatch;

  void validate() const;
};

struct TrainResult {
  ScoringFunction scorer;
  // Full-batch objective after each epoch.
  std::vector<double> loss_trace;
};

// Swap deltas for one context under the current ranking (the E-step):
// pairs (hi, lo) with label[hi] > label[lo] and weight
// |l(rank hi) - l(rank lo)| * (label[hi] - label[lo]), divided by IDCG when
// normalizing.
struct SwapPair {
  std::size_t hi = 0;
  std::size_t lo = 0;
  double delta = 0.0;
};

std::vector<SwapPair> swap_deltas(const TrainingContext& context, std::span<const double> scores,
                                  const RankDiscount& discount, bool idcg_normalize);

// context_weight * sum delta * log(1 + exp(-(f(hi) - f(lo)))), deltas held fixed.
double lambda_loss(const ScoringFunction& f, const TrainingContext& context,
                   std::span<const SwapPair> pairs);

// Gradient of lambda_loss with the deltas refreshed from f's own ranking.
std::vector<double> lambda_gradient(const ScoringFunction& f, const TrainingContext& context,
                                    const RankDiscount& discount, bool idcg_normalize);

// context_weight * sum_d BCE(sigmoid(f(d)), label_d), labels clamped to [0,1].
double pointwise_loss(const ScoringFunction& f, const TrainingContext& context);
std::vector<double> pointwise_gradient(const ScoringFunction& f, const TrainingContext& context);

// Minibatch gradient descent on sum_c w_c loss_c / sum_c w_c + l2/2 |theta|^2.
// Zero-weight contexts are dropped before shuffling. Non-finite loss throws
// TrainingError.
TrainResult train(const Dataset& dataset, const ScoringFunction& init, const TrainConfig& config,
                  const RankDiscount& discount = RankDiscount::log_discount());

TrainResult train_pointwise(const Dataset& dataset, const ScoringFunction& init,
                            const TrainConfig& config);

}  // namespace marketrank

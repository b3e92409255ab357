#include "marketrank/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "marketrank/error.hpp"
#include "marketrank/random.hpp"

namespace marketrank {

ScoringFunction ScoringFunction::linear(std::size_t input_dim) {
  ScoringFunction f;
  f.kind_ = ScorerKind::Linear;
  f.input_dim_ = input_dim;
  f.params_.assign(input_dim + 1, 0.0);
  return f;
}

ScoringFunction ScoringFunction::mlp1(std::size_t input_dim, std::size_t hidden_width,
                                      std::uint64_t seed) {
  if (hidden_width == 0) throw ConfigError("hidden width must be positive");
  ScoringFunction f;
  f.kind_ = ScorerKind::MLP1;
  f.input_dim_ = input_dim;
  f.hidden_ = hidden_width;
  // [W1 (H x d) | b1 (H) | w2 (H) | b2]
  f.params_.assign(hidden_width * input_dim + 2 * hidden_width + 1, 0.0);
  Rng rng(seed);
  std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(static_cast<double>(input_dim + 1)));
  std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(static_cast<double>(hidden_width)));
  for (std::size_t i = 0; i < hidden_width * input_dim; ++i) f.params_[i] = w1(rng);
  const std::size_t out_offset = hidden_width * input_dim + hidden_width;
  for (std::size_t h = 0; h < hidden_width; ++h) f.params_[out_offset + h] = w2(rng);
  return f;
}

void ScoringFunction::check_dims(std::span<const double> item,
                                 std::span<const double> context) const {
  if (item.size() + context.size() != input_dim_)
    throw DimensionError("scorer expects " + std::to_string(input_dim_) + " inputs, got " +
                         std::to_string(item.size()) + " + " + std::to_string(context.size()));
}

namespace {

inline double input_at(std::span<const double> item, std::span<const double> context,
                       std::size_t i) {
  return i < item.size() ? item[i] : context[i - item.size()];
}

}  // namespace

double ScoringFunction::score(std::span<const double> item,
                              std::span<const double> context) const {
  check_dims(item, context);
  const std::size_t d = input_dim_;
  if (kind_ == ScorerKind::Linear) {
    double s = params_[d];
    for (std::size_t i = 0; i < item.size(); ++i) s += params_[i] * item[i];
    for (std::size_t i = 0; i < context.size(); ++i) s += params_[item.size() + i] * context[i];
    return s;
  }
  const std::size_t H = hidden_;
  const double* b1 = params_.data() + H * d;
  const double* w2 = b1 + H;
  double out = w2[H];
  for (std::size_t h = 0; h < H; ++h) {
    double a = b1[h];
    const double* row = params_.data() + h * d;
    for (std::size_t i = 0; i < d; ++i) a += row[i] * input_at(item, context, i);
    out += w2[h] * std::tanh(a);
  }
  return out;
}

void ScoringFunction::accumulate_gradient(std::span<const double> item,
                                          std::span<const double> context, double scale,
                                          std::span<double> grad) const {
  check_dims(item, context);
  if (grad.size() != params_.size()) throw DimensionError("gradient buffer size mismatch");
  const std::size_t d = input_dim_;
  if (kind_ == ScorerKind::Linear) {
    for (std::size_t i = 0; i < d; ++i) grad[i] += scale * input_at(item, context, i);
    grad[d] += scale;
    return;
  }
  const std::size_t H = hidden_;
  const double* b1 = params_.data() + H * d;
  const double* w2 = b1 + H;
  for (std::size_t h = 0; h < H; ++h) {
    double a = b1[h];
    const double* row = params_.data() + h * d;
    for (std::size_t i = 0; i < d; ++i) a += row[i] * input_at(item, context, i);
    const double t = std::tanh(a);
    const double back = scale * w2[h] * (1.0 - t * t);
    for (std::size_t i = 0; i < d; ++i) grad[h * d + i] += back * input_at(item, context, i);
    grad[H * d + h] += back;
    grad[H * d + H + h] += scale * t;
  }
  grad[H * d + 2 * H] += scale;
}

void to_json(nlohmann::json& j, const ScoringFunction& f) {
  j = nlohmann::json{{"kind", f.kind_ == ScorerKind::Linear ? "linear" : "mlp1"},
                     {"input_dim", f.input_dim_},
                     {"hidden_width", f.hidden_},
                     {"parameters", f.params_}};
}

void from_json(const nlohmann::json& j, ScoringFunction& f) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "linear")
    f.kind_ = ScorerKind::Linear;
  else if (kind == "mlp1")
    f.kind_ = ScorerKind::MLP1;
  else
    throw ConfigError("unknown scorer kind '" + kind + "'");
  j.at("input_dim").get_to(f.input_dim_);
  j.at("hidden_width").get_to(f.hidden_);
  j.at("parameters").get_to(f.params_);
  const std::size_t expected = f.kind_ == ScorerKind::Linear
                                   ? f.input_dim_ + 1
                                   : f.hidden_ * f.input_dim_ + 2 * f.hidden_ + 1;
  if (f.params_.size() != expected) throw DimensionError("parameter count mismatch in model JSON");
}

double HybridScorer::score(std::span<const double> item, std::span<const double> context) const {
  const double zp = (f_acquisition.score(item, context) - acquisition_mean) / acquisition_scale;
  const double zc = (f_engagement.score(item, context) - engagement_mean) / engagement_scale;
  return (1.0 - alpha) * zp + alpha * zc;
}

void to_json(nlohmann::json& j, const HybridScorer& h) {
  j = nlohmann::json{
      {"kind", "hybrid"},
      {"alpha", h.alpha},
      {"f_acquisition", h.f_acquisition},
      {"f_engagement", h.f_engagement},
      {"standardization",
       {{"acquisition_mean", h.acquisition_mean},
        {"acquisition_scale", h.acquisition_scale},
        {"engagement_mean", h.engagement_mean},
        {"engagement_scale", h.engagement_scale}}}};
}

void from_json(const nlohmann::json& j, HybridScorer& h) {
  j.at("alpha").get_to(h.alpha);
  j.at("f_acquisition").get_to(h.f_acquisition);
  j.at("f_engagement").get_to(h.f_engagement);
  const auto& s = j.at("standardization");
  s.at("acquisition_mean").get_to(h.acquisition_mean);
  s.at("acquisition_scale").get_to(h.acquisition_scale);
  s.at("engagement_mean").get_to(h.engagement_mean);
  s.at("engagement_scale").get_to(h.engagement_scale);
  if (h.alpha < 0.0 || h.alpha > 1.0) throw ConfigError("alpha outside [0,1]");
  if (!(h.acquisition_scale > 0.0) || !(h.engagement_scale > 0.0))
    throw ConfigError("standardization scales must be positive");
}

double Policy::score(std::span<const double> item, std::span<const double> context) const {
  return std::visit([&](const auto& s) { return s.score(item, context); }, scorer_);
}

void to_json(nlohmann::json& j, const Policy& p) {
  std::visit([&](const auto& s) { j = s; }, p.scorer_);
}

void from_json(const nlohmann::json& j, Policy& p) {
  if (j.at("kind").get<std::string>() == "hybrid")
    p.scorer_ = j.get<HybridScorer>();
  else
    p.scorer_ = j.get<ScoringFunction>();
}

double score(const ScoringFunction& f, std::span<const double> item_features,
             std::span<const double> context_features) {
  return f.score(item_features, context_features);
}

std::vector<std::size_t> argsort_scores(std::span<const double> scores,
                                        std::span<const ItemId> item_ids) {
  if (scores.size() != item_ids.size()) throw DimensionError("scores and ids differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return item_ids[a] < item_ids[b];
  });
  return order;
}

namespace {

template <typename Item>
std::vector<std::size_t> rank_items(const Policy& policy, std::span<const Item> items,
                                    std::span<const double> context_features) {
  std::vector<double> scores;
  std::vector<ItemId> ids;
  scores.reserve(items.size());
  ids.reserve(items.size());
  for (const auto& it : items) {
    scores.push_back(policy.score(it.features, context_features));
    ids.push_back(it.item_id);
  }
  return argsort_scores(scores, ids);
}

struct Moments {
  double mean = 0.0;
  double scale = 0.0;
};

Moments moments(const ScoringFunction& f, const Dataset& calibration) {
  std::vector<double> scores;
  for (const auto& c : calibration.contexts)
    for (const auto& it : c.items) scores.push_back(f.score(it.features, c.context_features));
  if (scores.empty()) throw std::invalid_argument("empty calibration dataset");
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace

std::vector<std::size_t> rank(const Policy& policy, std::span<const ContextItem> items,
                              std::span<const double> context_features) {
  return rank_items(policy, items, context_features);
}

std::vector<std::size_t> rank(const Policy& policy, std::span<const ItemRecord> items,
                              std::span<const double> context_features) {
  return rank_items(policy, items, context_features);
}

Policy mix(const ScoringFunction& f_acquisition, const ScoringFunction& f_engagement,
           double alpha, const Dataset& calibration) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  const auto mp = moments(f_acquisition, calibration);
  const auto mc = moments(f_engagement, calibration);
  if (!(mp.scale > 1e-12) || !(mc.scale > 1e-12))
    throw std::invalid_argument("component scores have zero variance on the calibration set");
  HybridScorer h;
  h.f_acquisition = f_acquisition;
  h.f_engagement = f_engagement;
  h.alpha = alpha;
  h.acquisition_mean = mp.mean;
  h.acquisition_scale = mp.scale;
  h.engagement_mean = mc.mean;
  h.engagement_scale = mc.scale;
  return Policy(std::move(h));
}

}  // namespace marketrank

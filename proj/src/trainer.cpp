#include "marketrank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "marketrank/error.hpp"
#include "marketrank/random.hpp"

namespace marketrank {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (minibatch_size < 1) throw ConfigError("minibatch_size must be >= 1");
  if (l2_penalty < 0.0) throw ConfigError("l2_penalty must be non-negative");
}

namespace {

// log(1 + exp(-x))
double softplus_neg(double x) {
  return x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

// d/dx log(1 + exp(-x)) = -1 / (1 + exp(x))
double softplus_neg_slope(double x) {
  if (x > 0.0) {
    const double e = std::exp(-x);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(x));
}

// log(1 + exp(x)) - y x
double bce_logit(double x, double y) {
  const double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return sp - y * x;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> context_scores(const ScoringFunction& f, const TrainingContext& c) {
  std::vector<double> s;
  s.reserve(c.items.size());
  for (const auto& it : c.items) s.push_back(f.score(it.features, c.context_features));
  return s;
}

double lambda_loss_from_scores(const TrainingContext& c, std::span<const double> scores,
                               std::span<const SwapPair> pairs) {
  double loss = 0.0;
  for (const auto& p : pairs) loss += p.delta * softplus_neg(scores[p.hi] - scores[p.lo]);
  return c.context_weight * loss;
}

// Adds scale * d(lambda loss)/d(theta) for one context into grad.
void lambda_accumulate(const ScoringFunction& f, const TrainingContext& c,
                       std::span<const double> scores, std::span<const SwapPair> pairs,
                       double scale, std::span<double> grad) {
  std::vector<double> coef(c.items.size(), 0.0);
  for (const auto& p : pairs) {
    const double g = p.delta * softplus_neg_slope(scores[p.hi] - scores[p.lo]);
    coef[p.hi] += g;
    coef[p.lo] -= g;
  }
  const double w = scale * c.context_weight;
  for (std::size_t i = 0; i < c.items.size(); ++i)
    if (coef[i] != 0.0) f.accumulate_gradient(c.items[i].features, c.context_features, w * coef[i], grad);
}

void pointwise_accumulate(const ScoringFunction& f, const TrainingContext& c, double scale,
                          std::span<double> grad) {
  const double w = scale * c.context_weight;
  for (const auto& it : c.items) {
    const double y = std::clamp(it.label, 0.0, 1.0);
    const double s = f.score(it.features, c.context_features);
    f.accumulate_gradient(it.features, c.context_features, w * (sigmoid(s) - y), grad);
  }
}

std::vector<const TrainingContext*> active_contexts(const Dataset& dataset) {
  std::vector<const TrainingContext*> out;
  for (const auto& c : dataset.contexts)
    if (c.context_weight > 0.0 && c.items.size() >= 2) out.push_back(&c);
  return out;
}

double l2_term(const ScoringFunction& f, double l2) {
  double sq = 0.0;
  for (double p : f.parameters()) sq += p * p;
  return 0.5 * l2 * sq;
}

void check_finite(double loss, int epoch, const char* what) {
  if (std::isfinite(loss)) return;
  std::ostringstream os;
  os << what << " loss became non-finite (" << loss << ") after epoch " << epoch
     << "; lower the learning rate or check feature scales";
  throw TrainingError(os.str());
}

}  // namespace

std::vector<SwapPair> swap_deltas(const TrainingContext& context, std::span<const double> scores,
                                  const RankDiscount& discount, bool idcg_normalize) {
  const std::size_t n = context.items.size();
  if (scores.size() != n) throw DimensionError("scores do not match context items");
  std::vector<ItemId> ids;
  std::vector<double> labels;
  ids.reserve(n);
  labels.reserve(n);
  for (const auto& it : context.items) {
    ids.push_back(it.item_id);
    labels.push_back(it.label);
  }
  const auto order = argsort_scores(scores, ids);
  std::vector<double> gain_at(n);
  for (std::size_t r = 0; r < n; ++r) gain_at[order[r]] = discount(static_cast<int>(r + 1));

  double norm = 1.0;
  if (idcg_normalize) {
    const double ideal = ideal_dcg(labels, discount);
    if (!(ideal > 0.0)) return {};
    norm = ideal;
  }
  std::vector<SwapPair> pairs;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (!(labels[a] > labels[b])) continue;
      const double delta = std::abs(gain_at[a] - gain_at[b]) * (labels[a] - labels[b]) / norm;
      pairs.push_back({a, b, delta});
    }
  return pairs;
}

double lambda_loss(const ScoringFunction& f, const TrainingContext& context,
                   std::span<const SwapPair> pairs) {
  const auto scores = context_scores(f, context);
  return lambda_loss_from_scores(context, scores, pairs);
}

std::vector<double> lambda_gradient(const ScoringFunction& f, const TrainingContext& context,
                                    const RankDiscount& discount, bool idcg_normalize) {
  std::vector<double> grad(f.parameter_count(), 0.0);
  if (context.items.size() < 2) return grad;
  const auto scores = context_scores(f, context);
  const auto pairs = swap_deltas(context, scores, discount, idcg_normalize);
  lambda_accumulate(f, context, scores, pairs, 1.0, grad);
  return grad;
}

double pointwise_loss(const ScoringFunction& f, const TrainingContext& context) {
  double loss = 0.0;
  for (const auto& it : context.items)
    loss += bce_logit(f.score(it.features, context.context_features), std::clamp(it.label, 0.0, 1.0));
  return context.context_weight * loss;
}

std::vector<double> pointwise_gradient(const ScoringFunction& f, const TrainingContext& context) {
  std::vector<double> grad(f.parameter_count(), 0.0);
  pointwise_accumulate(f, context, 1.0, grad);
  return grad;
}

namespace {

enum class Objective { Lambda, Pointwise };

TrainResult run_training(const Dataset& dataset, const ScoringFunction& init,
                         const TrainConfig& config, const RankDiscount& discount,
                         Objective objective) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  const auto contexts = active_contexts(dataset);
  if (contexts.empty()) throw std::invalid_argument("dataset has no positively weighted contexts");

  const bool idcg = dataset.spec.idcg_normalize;
  double total_weight = 0.0;
  for (const auto* c : contexts) total_weight += c->context_weight;
  const double n = static_cast<double>(contexts.size());

  TrainResult result{init, {}};
  ScoringFunction& f = result.scorer;
  std::vector<double> grad(f.parameter_count());
  std::vector<std::size_t> order(contexts.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<SwapPair>> epoch_pairs;
  Rng rng(config.seed);

  auto full_loss = [&](const ScoringFunction& g) {
    double loss = 0.0;
    for (const auto* c : contexts) {
      if (objective == Objective::Pointwise) {
        loss += pointwise_loss(g, *c);
        continue;
      }
      const auto scores = context_scores(g, *c);
      const auto pairs = swap_deltas(*c, scores, discount, idcg);
      loss += lambda_loss_from_scores(*c, scores, pairs);
    }
    return loss / total_weight + l2_term(g, config.l2_penalty);
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    if (objective == Objective::Lambda && config.delta_refresh == DeltaRefresh::PerEpoch) {
      epoch_pairs.resize(contexts.size());
      for (std::size_t i = 0; i < contexts.size(); ++i)
        epoch_pairs[i] =
            swap_deltas(*contexts[i], context_scores(f, *contexts[i]), discount, idcg);
    }
    for (std::size_t start = 0; start < order.size(); start += config.minibatch_size) {
      const std::size_t end = std::min(order.size(), start + config.minibatch_size);
      const double scale = n / (static_cast<double>(end - start) * total_weight);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const TrainingContext& c = *contexts[i];
        if (objective == Objective::Pointwise) {
          pointwise_accumulate(f, c, scale, grad);
          continue;
        }
        const auto scores = context_scores(f, c);
        if (config.delta_refresh == DeltaRefresh::PerEpoch) {
          lambda_accumulate(f, c, scores, epoch_pairs[i], scale, grad);
        } else {
          const auto pairs = swap_deltas(c, scores, discount, idcg);
          lambda_accumulate(f, c, scores, pairs, scale, grad);
        }
      }
      auto params = f.parameters();
      for (std::size_t p = 0; p < params.size(); ++p)
        params[p] -= config.learning_rate * (grad[p] + config.l2_penalty * params[p]);
    }
    const double loss = full_loss(f);
    check_finite(loss, epoch, objective == Objective::Lambda ? "lambda" : "pointwise");
    result.loss_trace.push_back(loss);
  }
  return result;
}

}  // namespace

TrainResult train(const Dataset& dataset, const ScoringFunction& init, const TrainConfig& config,
                  const RankDiscount& discount) {
  return run_training(dataset, init, config, discount, Objective::Lambda);
}

TrainResult train_pointwise(const Dataset& dataset, const ScoringFunction& init,
                            const TrainConfig& config) {
  return run_training(dataset, init, config, RankDiscount::log_discount(), Objective::Pointwise);
}

}  // namespace marketrank

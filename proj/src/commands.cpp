#include "marketrank/commands.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "marketrank/ab_test.hpp"
#include "marketrank/dataset.hpp"
#include "marketrank/error.hpp"
#include "marketrank/eval.hpp"
#include "marketrank/log_io.hpp"
#include "marketrank/trainer.hpp"

namespace marketrank::cli {

namespace {

void require_file(const path& p, const std::string& what) {
  if (!std::filesystem::exists(p))
    throw std::runtime_error(what + " not found: " + p.string());
}

void ensure_out_dir(const path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw std::runtime_error("cannot create output directory " + dir.string());
}

void write_json(const nlohmann::json& j, const path& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << j.dump(2) << '\n';
}

nlohmann::json read_json(const path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot read " + file.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, file.string() + ": " + e.what());
  }
}

void write_manifest(const std::string& command, const RunConfig& config,
                    const std::vector<path>& inputs, const std::vector<std::string>& outputs) {
  write_json(make_manifest(command, config, inputs, outputs), config.out / (command + ".manifest.json"));
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

RankDiscount load_discount(const std::optional<path>& file) {
  if (!file) return RankDiscount::log_discount();
  require_file(*file, "propensity file");
  const auto j = read_json(*file);
  return (j.contains("discount") ? j.at("discount") : j).get<RankDiscount>();
}

std::vector<SessionRecord> load_logs(const path& file) {
  require_file(file, "log file");
  return read_log(file);
}

EvalOptions eval_options(const RunConfig& config, const std::optional<path>& propensity) {
  EvalOptions o;
  if (propensity) o.propensity = load_discount(propensity);
  o.label_cap = config.label_cap;
  o.bootstrap_replicates = config.bootstrap_replicates;
  o.seed = config.require_seed();
  o.threads = config.worker_threads();
  return o;
}

Dataset eval_set_from_logs(std::span<const SessionRecord> logs, const RewardSpec& spec,
                           const RunConfig& config) {
  const auto fits = fit_corpus(logs, spec);
  Dataset d = build_eval_set(logs, spec, fits, config.dataset);
  d.spec = spec;
  return d;
}

}  // namespace

RunConfig resolve_config(const Overrides& o) {
  RunConfig config = o.config ? load_config(*o.config) : RunConfig{};
  if (o.seed) config.seed = *o.seed;
  if (o.out) config.out = *o.out;
  if (o.spec) config.spec = *o.spec;
  if (o.alpha_grid) config.alpha_grid = parse_double_list(*o.alpha_grid);
  if (o.threads) config.threads = *o.threads;
  if (o.n_sessions) config.n_sessions = *o.n_sessions;
  config.validate();
  return config;
}

ItemCatalog catalog_for(const RunConfig& config) {
  return sample_catalog(config.sim.n_items, config.sim.n_buckets, config.catalog_seed, config.sim);
}

Policy load_policy(const path& file) {
  require_file(file, "model file");
  const auto j = read_json(file);
  return (j.contains("policy") ? j.at("policy") : j).get<Policy>();
}

ScoringFunction load_scorer(const path& file) {
  const Policy p = load_policy(file);
  if (const auto* f = std::get_if<ScoringFunction>(&p.scorer())) return *f;
  throw ConfigError("model " + file.string() + " is a hybrid; a single scoring function is required");
}

void write_model(const ModelFile& model, const path& file) {
  write_json({{"spec_tag", model.spec_tag}, {"policy", model.policy}}, file);
}

namespace {

bool builtin_policy(const std::string& source) {
  return source == "random" || source == "oracle" || source == "oracle-noisy" ||
         source == "retrieval";
}

}  // namespace

SimPolicy load_sim_policy(const std::string& source, const RunConfig& config) {
  if (source == "random") return SimPolicy::random();
  if (source == "oracle") return SimPolicy::oracle();
  if (source == "oracle-noisy") return SimPolicy::oracle_noisy(config.logging_noise);
  if (source == "retrieval") return SimPolicy::retrieval(config.sim);
  return SimPolicy::model(load_policy(source));
}

nlohmann::json make_manifest(const std::string& command, const RunConfig& config,
                             const std::vector<path>& inputs,
                             const std::vector<std::string>& outputs) {
  nlohmann::json in = nlohmann::json::object();
  for (const auto& p : inputs) in[p.string()] = file_sha256(p);
  return {{"command", command},
          {"config_hash", config_hash(config)},
          {"seed", config.require_seed()},
          {"inputs", std::move(in)},
          {"outputs", outputs}};
}

void cmd_simulate(const RunConfig& config) {
  const std::uint64_t seed = config.require_seed();
  ensure_out_dir(config.out);
  const ItemCatalog catalog = catalog_for(config);
  const SimPolicy logging = load_sim_policy(config.logging_policy, config);
  const auto sessions =
      simulate_corpus(logging, catalog, config.sim, config.n_sessions, seed, config.worker_threads());
  write_log(records_of(sessions), config.out / "sessions.jsonl");
  write_ground_truth(sessions, config.out / "ground_truth.json");
  std::vector<path> inputs;
  if (!builtin_policy(config.logging_policy)) inputs.emplace_back(config.logging_policy);
  write_manifest("simulate", config, inputs, {"sessions.jsonl", "ground_truth.json"});
}

void cmd_fit_propensity(const RunConfig& config, const path& logs) {
  config.require_seed();
  ensure_out_dir(config.out);
  const auto sessions = load_logs(logs);
  const RankDiscount fitted = fit_propensity_curve(sessions);
  write_json({{"examination_exponent", fitted.exponent()}, {"discount", fitted}},
             config.out / "propensity.json");
  write_manifest("fit-propensity", config, {logs}, {"propensity.json"});
}

void cmd_train(const RunConfig& config, const path& logs, const std::optional<path>& ground_truth) {
  const std::uint64_t seed = config.require_seed();
  ensure_out_dir(config.out);
  auto sessions = load_logs(logs);
  std::vector<path> inputs{logs};
  if (ground_truth) {
    require_file(*ground_truth, "ground truth file");
    attach_soft_labels(sessions, read_ground_truth(*ground_truth));
    inputs.push_back(*ground_truth);
  }
  const RewardSpec spec = config.reward_spec();
  const auto fits = fit_corpus(sessions, spec);
  Dataset data = build_training_set(sessions, spec, fits, config.dataset, seed);
  data.spec = spec;
  if (data.empty())
    throw std::invalid_argument("no training contexts under spec '" + spec.name + "'");

  const auto& first = data.contexts.front();
  const std::size_t dim = first.items.front().features.size() + first.context_features.size();
  const ScoringFunction init = config.scorer == "mlp1"
                                   ? ScoringFunction::mlp1(dim, config.hidden_width, config.train.seed)
                                   : ScoringFunction::linear(dim);
  const TrainResult result = config.objective == "pointwise"
                                 ? train_pointwise(data, init, config.train)
                                 : train(data, init, config.train);

  write_model({spec.tag(), Policy(result.scorer)}, config.out / "model.json");
  {
    std::ofstream os(config.out / "loss_trace.csv");
    if (!os) throw std::runtime_error("cannot write loss_trace.csv");
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e)
      os << e + 1 << ',' << fmt(result.loss_trace[e]) << '\n';
  }
  write_dataset(data, config.out / "train_dataset.jsonl");
  write_manifest("train", config, inputs, {"model.json", "loss_trace.csv", "train_dataset.jsonl"});
}

void cmd_eval(const RunConfig& config, const EvalInputs& in) {
  config.require_seed();
  if (in.logs.has_value() == in.dataset.has_value())
    throw ConfigError("eval needs exactly one of --logs or --dataset");
  ensure_out_dir(config.out);
  const RewardSpec spec = config.reward_spec();
  std::vector<path> inputs{in.model};
  Dataset data;
  if (in.dataset) {
    require_file(*in.dataset, "dataset file");
    auto [tag, contexts] = read_dataset(*in.dataset);
    require_spec(tag, spec);
    data.spec = spec;
    data.contexts = std::move(contexts);
    inputs.push_back(*in.dataset);
  } else {
    const auto sessions = load_logs(*in.logs);
    data = eval_set_from_logs(sessions, spec, config);
    inputs.push_back(*in.logs);
  }
  if (in.propensity) inputs.push_back(*in.propensity);
  const EvalOptions options = eval_options(config, in.propensity);
  const Policy policy = load_policy(in.model);
  const MetricEstimate est = counterfactual_metric(data, policy, spec, options);

  nlohmann::json report{{"metric", to_string(est.metric)}, {"spec_tag", spec.tag()},
                        {"value", est.value},          {"n_contexts", est.n_contexts},
                        {"ci_low", est.ci_low},        {"ci_high", est.ci_high}};
  std::vector<std::string> outputs{"eval.json"};
  if (in.baseline_model) {
    inputs.push_back(*in.baseline_model);
    const Policy base = load_policy(*in.baseline_model);
    const auto lifts = segment_lift(data, policy_ranker(policy), policy_ranker(base), spec, options);
    write_segments_csv(lifts, config.out / "segments.csv");
    outputs.push_back("segments.csv");
  }
  write_json(report, config.out / "eval.json");
  write_manifest("eval", config, inputs, outputs);
}

void cmd_abtest(const RunConfig& config, const std::string& policy_a, const std::string& policy_b) {
  ABConfig ab;
  ab.seed = config.require_seed();
  ab.n_sessions = config.ab_sessions;
  ab.threads = config.worker_threads();
  ab.bootstrap_replicates = config.bootstrap_replicates;
  ab.pairing = config.ab_pairing;
  ensure_out_dir(config.out);
  const ItemCatalog catalog = catalog_for(config);
  const SimPolicy a = load_sim_policy(policy_a, config);
  const SimPolicy b = load_sim_policy(policy_b, config);
  const ABReport report = run_ab_test(a, b, catalog, config.sim, ab);
  nlohmann::json j = report;
  j["policy_a"] = policy_a;
  j["policy_b"] = policy_b;
  write_json(j, config.out / "ab_report.json");
  std::vector<path> inputs;
  for (const auto& p : {policy_a, policy_b})
    if (!builtin_policy(p)) inputs.emplace_back(p);
  write_manifest("abtest", config, inputs, {"ab_report.json"});
}

void cmd_sweep(const RunConfig& config, const SweepInputs& in) {
  config.require_seed();
  ensure_out_dir(config.out);
  const ScoringFunction f_p = load_scorer(in.model_acquisition);
  const ScoringFunction f_c = load_scorer(in.model_engagement);
  const auto logs = load_logs(in.logs);
  std::vector<path> inputs{in.model_acquisition, in.model_engagement, in.logs};

  std::map<Metric, Dataset> sets;
  for (const char* name : {"engagement", "purchase", "revenue"}) {
    const RewardSpec spec = config.reward_spec(name);
    sets.emplace(metric_of(spec.kind), eval_set_from_logs(logs, spec, config));
  }
  Dataset calibration;
  if (in.calibration_logs) {
    const auto cal = load_logs(*in.calibration_logs);
    calibration = eval_set_from_logs(cal, config.reward_spec("engagement"), config);
    inputs.push_back(*in.calibration_logs);
  } else {
    calibration = sets.at(Metric::ExpClicks);
  }
  if (in.propensity) inputs.push_back(*in.propensity);
  std::map<Metric, const Dataset*> views;
  for (const auto& [m, d] : sets) views.emplace(m, &d);

  const auto alphas = config.alphas();
  const SweepCurve curve =
      alpha_sweep(f_p, f_c, alphas, views, calibration, eval_options(config, in.propensity));
  write_sweep_csv(curve, config.out / "sweep.csv");
  write_manifest("sweep", config, inputs, {"sweep.csv"});
}

std::string cmd_print_config(const RunConfig& config) { return dump_config(config); }

}  // namespace marketrank::cli

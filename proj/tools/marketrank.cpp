// marketrank: simulate marketplace logs, train value-weighted rankers, and
// evaluate them offline and in simulated AB tests.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "marketrank/commands.hpp"
#include "marketrank/error.hpp"

namespace cli = marketrank::cli;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string spec;
  std::string alpha_grid;
  std::optional<unsigned> threads;
  std::optional<std::size_t> n_sessions;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "config file (sectioned key = value)");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--spec", c.spec, "reward spec: engagement, purchase, revenue or custom");
  app->add_option("--alpha-grid", c.alpha_grid, "comma-separated alphas in [0,1]");
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  app->add_option("--sessions", c.n_sessions, "number of sessions to simulate");
}

marketrank::RunConfig resolve(const Common& c) {
  cli::Overrides o;
  if (!c.config.empty()) o.config = c.config;
  o.seed = c.seed;
  if (!c.out.empty()) o.out = c.out;
  if (!c.spec.empty()) o.spec = c.spec;
  if (!c.alpha_grid.empty()) o.alpha_grid = c.alpha_grid;
  o.threads = c.threads;
  o.n_sessions = c.n_sessions;
  return cli::resolve_config(o);
}

std::optional<cli::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return cli::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value-weighted learning to rank for marketplace search"};
  app.require_subcommand(1);
  Common common;

  auto* simulate = app.add_subcommand("simulate", "simulate sessions under a logging policy");
  add_common(simulate, common);

  std::string logs, model, model_b, dataset, propensity, ground_truth, calibration;
  auto* fit = app.add_subcommand("fit-propensity", "fit a power-law examination curve");
  add_common(fit, common);
  fit->add_option("--logs", logs, "randomized session logs")->required();

  auto* train = app.add_subcommand("train", "build a dataset under a reward spec and train");
  add_common(train, common);
  train->add_option("--logs", logs, "session logs")->required();
  train->add_option("--ground-truth", ground_truth, "oracle relevance file for soft labels");

  auto* eval = app.add_subcommand("eval", "counterfactual evaluation on held-out logs");
  add_common(eval, common);
  eval->add_option("--model", model, "model JSON")->required();
  eval->add_option("--logs", logs, "held-out session logs");
  eval->add_option("--dataset", dataset, "dataset JSONL written by train");
  eval->add_option("--model-b", model_b, "baseline model for per-bucket lifts");
  eval->add_option("--propensity", propensity, "propensity.json used to debias clicks");

  std::string policy_a, policy_b;
  auto* ab = app.add_subcommand("abtest", "simulated randomized AB test");
  add_common(ab, common);
  ab->add_option("--model-a", policy_a, "treatment: model JSON, random, oracle, oracle-noisy or retrieval")
      ->required();
  ab->add_option("--model-b", policy_b, "control: model JSON, random, oracle, oracle-noisy or retrieval")
      ->required();

  std::string model_p, model_c;
  auto* sweep = app.add_subcommand("sweep", "alpha sweep between two trained models");
  add_common(sweep, common);
  sweep->add_option("--model-p", model_p, "acquisition (purchase) model")->required();
  sweep->add_option("--model-c", model_c, "engagement model")->required();
  sweep->add_option("--logs", logs, "held-out session logs")->required();
  sweep->add_option("--calibration-logs", calibration, "logs for score standardization");
  sweep->add_option("--propensity", propensity, "propensity.json used to debias clicks");

  auto* print = app.add_subcommand("print-config", "print the effective configuration");
  add_common(print, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const marketrank::RunConfig config = resolve(common);
    if (*simulate) {
      cli::cmd_simulate(config);
    } else if (*fit) {
      cli::cmd_fit_propensity(config, logs);
    } else if (*train) {
      cli::cmd_train(config, logs, opt_path(ground_truth));
    } else if (*eval) {
      cli::cmd_eval(config, {model, opt_path(logs), opt_path(dataset), opt_path(model_b),
                             opt_path(propensity)});
    } else if (*ab) {
      cli::cmd_abtest(config, policy_a, policy_b);
    } else if (*sweep) {
      cli::cmd_sweep(config, {model_p, model_c, logs, opt_path(calibration), opt_path(propensity)});
    } else if (*print) {
      std::cout << cli::cmd_print_config(config);
    }
  } catch (const std::exception& e) {
    std::cerr << "marketrank: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "marketrank/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "marketrank/error.hpp"
#include "marketrank/eval.hpp"

namespace marketrank {

namespace {

std::string fmt_double(double x) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf.data(), end);
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto s = trim(v);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return x;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int x{};
  const auto s = trim(v);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt_list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(xs[i]);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string qualified(const Field& f) { return f.section + "." + f.key; }

#define MR_DOUBLE(sec, name, member)                                              \
  Field {                                                                         \
    sec, name, [](const RunConfig& c) { return fmt_double(c.member); },           \
        [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); } \
  }
#define MR_INT(sec, name, type, member)                                                  \
  Field {                                                                                \
    sec, name, [](const RunConfig& c) { return std::to_string(c.member); },              \
        [](RunConfig& c, const std::string& v) { c.member = to_int<type>(name, v); } \
  }
#define MR_BOOL(sec, name, member)                                              \
  Field {                                                                       \
    sec, name, [](const RunConfig& c) { return c.member ? "true" : "false"; },  \
        [](RunConfig& c, const std::string& v) { c.member = to_bool(name, v); } \
  }
#define MR_STRING(sec, name, member)                                                  \
  Field {                                                                             \
    sec, name, [](const RunConfig& c) { return std::string(c.member); },              \
        [](RunConfig& c, const std::string& v) { c.member = trim(v); }                \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"run", "seed",
            [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); },
            [](RunConfig& c, const std::string& v) {
              if (trim(v).empty())
                c.seed.reset();
              else
                c.seed = to_int<std::uint64_t>("seed", v);
            }},
      MR_INT("run", "n_sessions", std::size_t, n_sessions),
      MR_INT("run", "threads", unsigned, threads),
      Field{"run", "out", [](const RunConfig& c) { return c.out.string(); },
            [](RunConfig& c, const std::string& v) { c.out = trim(v); }},

      MR_INT("sim", "catalog_seed", std::uint64_t, catalog_seed),
      MR_INT("sim", "n_items", int, sim.n_items),
      MR_INT("sim", "n_buckets", int, sim.n_buckets),
      MR_INT("sim", "quality_dim", int, sim.quality_dim),
      MR_DOUBLE("sim", "feature_noise", sim.feature_noise),
      MR_DOUBLE("sim", "base_price", sim.base_price),
      MR_DOUBLE("sim", "bucket_price_ratio", sim.bucket_price_ratio),
      Field{"sim", "segment_mix", [](const RunConfig& c) { return fmt_list(c.sim.segment_mix); },
            [](RunConfig& c, const std::string& v) { c.sim.segment_mix = parse_double_list(v); }},
      MR_DOUBLE("sim", "examination_exponent", sim.click.examination_exponent),
      MR_DOUBLE("sim", "relevance_sharpness", sim.click.relevance_sharpness),
      MR_DOUBLE("sim", "relevance_offset", sim.relevance_offset),
      MR_DOUBLE("sim", "price_sensitivity", sim.price_sensitivity),
      MR_DOUBLE("sim", "price_sensitivity_above", sim.price_sensitivity_above),
      MR_DOUBLE("sim", "purchase_threshold", sim.purchase_threshold),
      MR_DOUBLE("sim", "purchase_price_sensitivity", sim.purchase_price_sensitivity),
      MR_DOUBLE("sim", "purchase_resolve_low", sim.purchase_resolve_low),
      MR_DOUBLE("sim", "purchase_resolve_high", sim.purchase_resolve_high),
      MR_DOUBLE("sim", "extra_queries_low", sim.extra_queries_low),
      MR_DOUBLE("sim", "extra_queries_high", sim.extra_queries_high),
      MR_INT("sim", "max_browse_depth", int, sim.max_browse_depth),
      MR_DOUBLE("sim", "query_refinement", sim.query_refinement),
      MR_INT("sim", "retrieval_k", int, sim.retrieval_k),
      MR_DOUBLE("sim", "retrieval_noise", sim.retrieval_noise),
      MR_INT("sim", "serp_size", int, sim.serp_size),
      MR_STRING("sim", "logging_policy", logging_policy),
      MR_DOUBLE("sim", "logging_noise", logging_noise),

      MR_STRING("reward", "spec", spec),
      Field{"reward", "custom_kind", [](const RunConfig& c) { return to_string(c.custom_kind); },
            [](RunConfig& c, const std::string& v) { c.custom_kind = parse_reward_kind(trim(v)); }},
      Field{"reward", "custom_attribution",
            [](const RunConfig& c) { return to_string(c.custom_attribution); },
            [](RunConfig& c, const std::string& v) {
              c.custom_attribution = parse_attribution(trim(v));
            }},
      Field{"reward", "clipping_cap",
            [](const RunConfig& c) {
              return c.clipping_cap ? fmt_double(*c.clipping_cap) : std::string("none");
            },
            [](RunConfig& c, const std::string& v) {
              if (trim(v) == "none")
                c.clipping_cap.reset();
              else
                c.clipping_cap = to_double("clipping_cap", v);
            }},
      MR_BOOL("reward", "self_normalize", self_normalize),
      MR_BOOL("reward", "idcg_normalize", idcg_normalize),
      MR_INT("reward", "n_value_buckets", int, n_value_buckets),
      Field{"reward", "label_source", [](const RunConfig& c) { return to_string(c.label_source); },
            [](RunConfig& c, const std::string& v) { c.label_source = parse_label_source(trim(v)); }},
      MR_INT("reward", "negatives_per_context", int, dataset.negatives_per_context),
      MR_DOUBLE("reward", "partial_click_label", dataset.partial_click_label),

      MR_STRING("train", "scorer", scorer),
      MR_INT("train", "hidden_width", std::size_t, hidden_width),
      MR_STRING("train", "objective", objective),
      MR_DOUBLE("train", "learning_rate", train.learning_rate),
      MR_INT("train", "epochs", int, train.epochs),
      MR_INT("train", "minibatch_size", std::size_t, train.minibatch_size),
      MR_INT("train", "seed", std::uint64_t, train.seed),
      MR_DOUBLE("train", "l2_penalty", train.l2_penalty),
      Field{"train", "delta_refresh",
            [](const RunConfig& c) {
              return std::string(c.train.delta_refresh == DeltaRefresh::PerEpoch ? "per_epoch"
                                                                                 : "per_minibatch");
            },
            [](RunConfig& c, const std::string& v) {
              const auto s = trim(v);
              if (s == "per_epoch")
                c.train.delta_refresh = DeltaRefresh::PerEpoch;
              else if (s == "per_minibatch")
                c.train.delta_refresh = DeltaRefresh::PerMinibatch;
              else
                throw ConfigError("delta_refresh must be per_minibatch or per_epoch");
            }},

      MR_INT("eval", "bootstrap_replicates", int, bootstrap_replicates),
      Field{"eval", "alpha_grid", [](const RunConfig& c) { return fmt_list(c.alpha_grid); },
            [](RunConfig& c, const std::string& v) { c.alpha_grid = parse_double_list(v); }},
      MR_INT("eval", "ab_sessions", std::size_t, ab_sessions),
      Field{"eval", "ab_pairing",
            [](const RunConfig& c) {
              return std::string(c.ab_pairing == BehaviorPairing::Common ? "common" : "independent");
            },
            [](RunConfig& c, const std::string& v) {
              const auto s = trim(v);
              if (s == "common")
                c.ab_pairing = BehaviorPairing::Common;
              else if (s == "independent")
                c.ab_pairing = BehaviorPairing::Independent;
              else
                throw ConfigError("ab_pairing must be common or independent");
            }},
      MR_DOUBLE("eval", "label_cap", label_cap),
  };
  return table;
}

#undef MR_DOUBLE
#undef MR_INT
#undef MR_BOOL
#undef MR_STRING

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (trim(part).empty()) continue;
    out.push_back(to_double("list", part));
  }
  return out;
}

void RunConfig::validate() const {
  sim.validate();
  train.validate();
  if (scorer != "linear" && scorer != "mlp1") throw ConfigError("scorer must be linear or mlp1");
  if (objective != "lambda" && objective != "pointwise")
    throw ConfigError("objective must be lambda or pointwise");
  if (scorer == "mlp1" && hidden_width == 0) throw ConfigError("hidden_width must be positive");
  if (bootstrap_replicates < 1) throw ConfigError("bootstrap_replicates must be >= 1");
  if (dataset.negatives_per_context < 0) throw ConfigError("negatives_per_context must be >= 0");
  if (!(label_cap > 0.0)) throw ConfigError("label_cap must be positive");
  if (logging_noise < 0.0) throw ConfigError("logging_noise must be non-negative");
  if (!sim.segment_mix.empty()) {
    double total = 0.0;
    for (double p : sim.segment_mix) total += p;
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("segment_mix must sum to 1");
  }
  if (!alpha_grid.empty()) validate_alpha_grid(alpha_grid);
  reward_spec().validate();
}

unsigned RunConfig::worker_threads() const {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ConfigError("a seed is mandatory: set [run] seed or pass --seed");
  return *seed;
}

RewardSpec RunConfig::reward_spec(const std::string& name) const {
  RewardSpec s;
  if (name == "custom") {
    s.name = "custom";
    s.kind = custom_kind;
    s.attribution = custom_attribution;
  } else {
    s = preset_spec(name);
  }
  s.clipping_cap = clipping_cap;
  s.self_normalize = self_normalize;
  s.idcg_normalize = idcg_normalize;
  s.n_value_buckets = n_value_buckets;
  s.label_source = label_source;
  s.validate();
  return s;
}

std::vector<double> RunConfig::alphas() const {
  return alpha_grid.empty() ? default_alpha_grid() : alpha_grid;
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::map<std::string, const Field*> by_name;
  for (const auto& f : fields()) by_name[qualified(f)] = &f;

  RunConfig config;
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty())
      throw ConfigError("config key '" + section + "' must live inside a section");
    for (const auto& [key, value] : entries) {
      const auto it = by_name.find(section + "." + key);
      if (it == by_name.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
      it->second->set(config, value.data());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(config) << '\n';
  }
  return os.str();
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string config_hash(const RunConfig& config) { return sha256_hex(dump_config(config)); }

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace marketrank

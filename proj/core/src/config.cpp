#include "knockens/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "knockens/errors.hpp"

namespace knockens {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size())
    throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
  return v;
}

/// Log-spaced grid over [lo, hi].
std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> out;
  if (count == 1) return {lo};
  const double step = (std::log(hi) - std::log(lo)) / double(count - 1);
  for (int i = 0; i < count; ++i) out.push_back(std::exp(std::log(lo) + step * i));
  return out;
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value': " +
                        line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str());
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

long KvConfig::get_long(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const double v = parse_double(key, it->second);
  if (v != std::floor(v)) throw ConfigError("config key '" + key + "' must be an integer");
  return static_cast<long>(v);
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' must be a boolean, got '" + v + "'");
}

std::vector<double> KvConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> KvConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_double_list(key)) {
    if (v != std::floor(v)) throw ConfigError("config key '" + key + "' must list integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<std::string> KvConfig::get_string_list(const std::string& key) const {
  return split_list(get_string(key));
}

Profile profile_from_name(const std::string& name) {
  if (name == "desk") return Profile::desk;
  if (name == "paper") return Profile::paper;
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

void ExperimentConfig::validate() const {
  if (!sim && !csv) throw ConfigError("experiment: no data source configured");
  if (sim && csv) throw ConfigError("experiment: configure either sim or csv, not both");
  if (sim) {
    if (amplitudes.empty()) throw ConfigError("experiment: amplitude list is empty");
    SimConfig check = *sim;
    for (double a : amplitudes) {
      check.amplitude = a;
      check.validate();
    }
  }
  if (knockoff_copies < 1) throw ConfigError("experiment: knockoff copies must be >= 1");
  grid.validate();
  if (ensembles.empty()) throw ConfigError("experiment: no ensemble strategies configured");
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("experiment: q must be in (0, 1)");
  if (replicates < 1) throw ConfigError("experiment: replicates must be >= 1");
  if (workers < 1) throw ConfigError("experiment: workers must be >= 1");
}

ExperimentConfig profile_defaults(Profile profile) {
  ExperimentConfig cfg;
  SimConfig sim;
  sim.r = 3;
  sim.noise_scale = 1.0;
  sim.task = Task::regression;

  if (profile == Profile::desk) {
    sim.n = 500;
    sim.p = 100;
    sim.s = 10;
    cfg.amplitudes = {20.0};
    cfg.grid.lambdas = log_spaced(1e-5, 1e-2, 20);
    cfg.grid.depths = {1};
    cfg.grid.epochs = 100;
    cfg.replicates = 10;
  } else {
    sim.n = 1000;
    sim.p = 500;
    sim.s = 25;
    cfg.amplitudes = {10.0, 15.0, 20.0, 25.0, 30.0};
    cfg.grid.lambdas = log_spaced(1e-5, 1e-2, 100);
    cfg.grid.depths = {1, 2, 3};
    cfg.grid.epochs = 300;
    cfg.replicates = 100;
  }
  sim.amplitude = cfg.amplitudes.front();
  cfg.sim = sim;

  cfg.grid.folds = 5;
  cfg.grid.batch_size = 32;
  cfg.grid.learning_rate = 1e-3;
  cfg.grid.hidden = 25;
  cfg.grid.dropout_prob = 0.5;

  const int m = profile == Profile::desk ? 100 : 500;
  cfg.ensembles = {
      {"best", {EnsembleStrategy::best, 1, std::nullopt, 0}},
      {"avg", {EnsembleStrategy::avg, 1, std::nullopt, 0}},
      {"top_m", {EnsembleStrategy::top_m, m, std::nullopt, 0}},
      {"m_influential", {EnsembleStrategy::m_influential, m, std::nullopt, 0}},
  };
  cfg.knockoff_copies = 1;
  cfg.q = 0.2;
  cfg.seed = 1;
  cfg.workers = 1;
  return cfg;
}

ExperimentConfig build_experiment_config(Profile profile, const KvConfig& kv) {
  ExperimentConfig cfg = profile_defaults(profile);

  const std::string source = kv.get_string("data", "sim");
  if (source == "csv") {
    CsvSource csv;
    csv.path = kv.get_string("csv.path");
    csv.response_column = kv.get_string("csv.response");
    if (kv.has("csv.covariates")) csv.covariate_columns = kv.get_string_list("csv.covariates");
    csv.standardize = kv.get_bool("csv.standardize", true);
    cfg.csv = csv;
    cfg.sim.reset();
    cfg.amplitudes.clear();
    // real-data defaults follow the multiple-knockoff setup
    cfg.knockoff_copies = 5;
    cfg.grid.depths = {3};
    cfg.grid.hidden = 50;
    cfg.grid.batch_size = 128;
    cfg.replicates = 1;
    for (auto& named : cfg.ensembles) {
      named.spec.m = 100;
      if (named.spec.strategy == EnsembleStrategy::m_influential)
        named.spec.percentile_filter = 25.0;
    }
  } else if (source == "sim") {
    SimConfig& sim = *cfg.sim;
    sim.n = static_cast<int>(kv.get_long("sim.n", sim.n));
    sim.p = static_cast<int>(kv.get_long("sim.p", sim.p));
    sim.r = static_cast<int>(kv.get_long("sim.r", sim.r));
    sim.s = static_cast<int>(kv.get_long("sim.s", sim.s));
    sim.noise_scale = kv.get_double("sim.noise_scale", sim.noise_scale);
    const std::string task = kv.get_string("sim.task", "regression");
    if (task != "regression" && task != "binary")
      throw ConfigError("sim.task must be regression or binary");
    sim.task = task == "binary" ? Task::binary : Task::regression;
    if (kv.has("sim.amplitudes"))
      cfg.amplitudes = kv.get_double_list("sim.amplitudes");
    else if (kv.has("sim.amplitude"))
      cfg.amplitudes = {kv.get_double("sim.amplitude", cfg.amplitudes.front())};
  } else {
    throw ConfigError("config key 'data' must be sim or csv");
  }

  cfg.knockoff_copies =
      static_cast<int>(kv.get_long("knockoff.m", cfg.knockoff_copies));

  if (kv.has("grid.lambdas")) {
    cfg.grid.lambdas = kv.get_double_list("grid.lambdas");
  } else if (kv.has("grid.lambda_count") || kv.has("grid.lambda_min") ||
             kv.has("grid.lambda_max")) {
    const int count = static_cast<int>(
        kv.get_long("grid.lambda_count", static_cast<long>(cfg.grid.lambdas.size())));
    const double lo = kv.get_double("grid.lambda_min", 1e-5);
    const double hi = kv.get_double("grid.lambda_max", 1e-2);
    if (count < 1 || lo <= 0 || hi < lo)
      throw ConfigError("invalid lambda range configuration");
    cfg.grid.lambdas = log_spaced(lo, hi, count);
  }
  if (kv.has("grid.depths")) cfg.grid.depths = kv.get_int_list("grid.depths");
  cfg.grid.epochs = static_cast<int>(kv.get_long("grid.epochs", cfg.grid.epochs));
  cfg.grid.folds = static_cast<int>(kv.get_long("grid.folds", cfg.grid.folds));
  cfg.grid.batch_size = static_cast<int>(kv.get_long("grid.batch_size", cfg.grid.batch_size));
  cfg.grid.learning_rate = kv.get_double("grid.learning_rate", cfg.grid.learning_rate);
  cfg.grid.hidden = static_cast<int>(kv.get_long("grid.hidden", cfg.grid.hidden));
  cfg.grid.dropout_prob = kv.get_double("grid.dropout_prob", cfg.grid.dropout_prob);

  if (kv.has("ensemble.strategies")) {
    std::vector<NamedEnsembleSpec> specs;
    for (const auto& name : kv.get_string_list("ensemble.strategies")) {
      NamedEnsembleSpec named;
      named.spec.strategy = strategy_from_name(name);
      named.name = strategy_name(named.spec.strategy);
      for (const auto& existing : cfg.ensembles)
        if (existing.spec.strategy == named.spec.strategy) named.spec = existing.spec;
      specs.push_back(named);
    }
    cfg.ensembles = std::move(specs);
  }
  if (kv.has("ensemble.m")) {
    const int m = static_cast<int>(kv.get_long("ensemble.m", 0));
    for (auto& named : cfg.ensembles) named.spec.m = m;
  }
  if (kv.has("ensemble.percentile_filter")) {
    const double pf = kv.get_double("ensemble.percentile_filter", 25.0);
    for (auto& named : cfg.ensembles)
      if (named.spec.strategy == EnsembleStrategy::m_influential)
        named.spec.percentile_filter = pf;
  }

  cfg.q = kv.get_double("select.q", cfg.q);
  cfg.replicates = static_cast<int>(kv.get_long("replicates", cfg.replicates));
  cfg.seed = static_cast<std::uint64_t>(kv.get_long("seed", static_cast<long>(cfg.seed)));
  cfg.standardize_response =
      kv.get_bool("train.standardize_response", cfg.standardize_response);
  return cfg;
}

}  // namespace knockens

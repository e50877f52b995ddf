#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "knockens/dataset.hpp"
#include "knockens/ensemble.hpp"
#include "knockens/trainer.hpp"

namespace knockens {

/// `key = value` text, one pair per line, '#' comments, dotted keys for
/// grouping, comma-separated lists.
class KvConfig {
public:
  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;  // throws ConfigError when absent
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

enum class Profile { desk, paper };
Profile profile_from_name(const std::string& name);

struct CsvSource {
  std::filesystem::path path;
  std::string response_column;
  std::vector<std::string> covariate_columns;
  bool standardize = true;
};

struct NamedEnsembleSpec {
  std::string name;  // strategy name, used in file names and report rows
  EnsembleSpec spec;
};

struct ExperimentConfig {
  // data source: simulation (with one or more amplitudes) or a CSV file
  std::optional<SimConfig> sim;
  std::vector<double> amplitudes;  // simulation only; one experiment cell each
  std::optional<CsvSource> csv;

  int knockoff_copies = 1;
  GridSpec grid;
  std::vector<NamedEnsembleSpec> ensembles;
  double q = 0.2;
  int replicates = 1;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  int workers = 1;
  /// Center/scale the regression response before training; selection is
  /// invariant to the scaling and optimization becomes amplitude-free.
  bool standardize_response = true;
  bool keep_artifacts = true;  // persist per-replicate intermediates

  void validate() const;
};

/// Profile defaults, then config-file overrides, then explicit CLI overrides.
ExperimentConfig build_experiment_config(Profile profile, const KvConfig& kv);

/// Built-in defaults for each profile (desk: p=100 scaled run; paper: the
/// full-scale 100-lambda x 3-depth grid).
ExperimentConfig profile_defaults(Profile profile);

}  // namespace knockens

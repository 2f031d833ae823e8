#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnf/ffnn.hpp"
#include "cnf/neural_form.hpp"
#include "cnf/training.hpp"

namespace cnf::experiments {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Experiment {
  EpochsSweep,
  DomainSweep,
  PointsSweep,
  ScalingTable,
  CnfVsScnf,
  OrderSweep,
  SubdomainSweep,
  SubdomainError,
  RigidBody,
  Single,
};

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& s);
std::vector<std::string> experiment_names();

/// Raw key=value settings in the flat config format. Keys are checked
/// against known_keys(); values stay text until resolve(). Each value
/// remembers where it came from ("file:line" or "--flag") for messages.
class Settings {
 public:
  /// Parses "key = value" lines; '#' starts a comment.
  static Settings parse(std::string_view text, const std::string& source = "<config>");
  static Settings load(const std::string& path);

  /// Throws ConfigError for an unknown key.
  void set(const std::string& key, const std::string& value, const std::string& origin = {});
  std::optional<std::string> get(const std::string& key) const;
  std::string origin(const std::string& key) const;
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Entries of `other` win.
  void merge(const Settings& other);

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origins_;
};

/// Every accepted key, in manifest order.
const std::vector<std::string>& known_keys();

enum class InitKind { Constant, Uniform };

std::string to_string(InitKind k);

/// Fully resolved and validated experiment parameters.
struct ExperimentConfig {
  Experiment experiment = Experiment::Single;
  std::string problem = "dahlquist";
  std::vector<Variant> variants{Variant::TSM};
  std::vector<std::size_t> orders{1};
  std::vector<InitKind> inits{InitKind::Constant};
  std::size_t hidden = 5;
  /// Training points per subdomain (n + 1).
  std::size_t points = 10;
  std::size_t subdomains = 1;
  double domain_end = 2.0;
  std::vector<double> domain_list;
  std::vector<std::size_t> points_list;
  std::vector<std::size_t> subdomain_list;
  std::vector<std::size_t> hidden_list;
  std::size_t cnf_hidden = 100;
  std::size_t cnf_points = 1000;
  double init_value = -10.0;
  double init_lo = -10.5;
  double init_hi = -9.5;
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
  long epochs = 1000;
  BatchMode batch = BatchMode::FB;
  bool incremental = false;
  bool penalise_invariants = false;
  AdamParams adam;
  bool adam_reset_per_stage = false;
  bool independent_init = false;
  /// "all" or one index 0..2 into the rigid body initial value sets.
  std::string iv_set = "all";
  std::size_t threads = 0;
  std::size_t samples = 1000;
  std::string output;

  InitMode init_mode(InitKind kind, std::uint64_t seed_offset = 0) const;
  TrainingConfig training(InitKind kind, std::uint64_t seed_offset = 0) const;
};

/// Experiment defaults, overridden by `settings`, validated in full.
/// Throws ConfigError before any work starts.
ExperimentConfig resolve(Experiment experiment, const Settings& settings);

/// Resolves settings that carry their own `experiment` key.
ExperimentConfig resolve(const Settings& settings);

/// Canonical key=value text of a resolved config; parses back to the same
/// config.
std::string to_settings_text(const ExperimentConfig& cfg);

/// $CNF_OUTPUT_ROOT, or "runs" when unset.
std::string output_root();

/// Formats a double so that it parses back to the same bits.
std::string format_double(double v);

}  // namespace cnf::experiments

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairdtmc/abstraction.hpp"
#include "fairdtmc/checker.hpp"
#include "fairdtmc/error.hpp"
#include "fairdtmc/learner.hpp"
#include "fairdtmc/repair.hpp"
#include "fairdtmc/sensitivity.hpp"

namespace fairdtmc {

/// Usage or configuration problem (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct TargetSetting {
  std::string target;  // see parse_target()
  std::string method = "kmeans";
  std::size_t k = 2;
};

struct RepairSettings {
  std::size_t top_k = 10;
  double alpha = 0.1;
  std::size_t n_eval = 5000;
  std::size_t swarm_size = 20;
  std::size_t max_iterations = 100;
};

struct RunConfig {
  std::filesystem::path model;
  std::optional<std::filesystem::path> dataset;
  std::string protected_feature;  // empty: the model's first protected feature
  std::string label;              // empty: the last label
  double mu_eps = 0.01;
  double mu_delta = 0.1;
  double xi = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t max_traces = 5'000'000;
  std::size_t batch_size = 100;
  std::size_t workers = 1;
  std::size_t pilot_size = 1000;
  std::vector<TargetSetting> abstraction;
  std::map<std::string, std::vector<double>> distribution;
  RepairSettings repair;
  bool no_repair = false;
  std::filesystem::path out_dir = ".";
};

/// Reads a JSON run config. Relative paths resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Throws ConfigError on out-of-range values.
void validate_run_config(const RunConfig& config);

struct VerificationReport {
  FairnessVerdict verdict;
  PacParams pac;
  double mu_eps = 0.0;
  double mu_delta = 0.0;
  std::string label;
  std::uint64_t traces_used = 0;
  std::vector<std::string> states;
  std::vector<std::string> starved_states;
  bool non_pac = false;
};

/// Repair section of the report. before/after are the learned-chain max_diff
/// of the original and the repaired network.
struct RepairSummary {
  RepairResult result;
  double before = 0.0;
  double after = 0.0;
  std::string verdict_after;
  bool reverify_non_pac = false;
};

/// Graphviz rendering: nodes and edges in state-id order, edge labels with
/// four decimals.
std::string export_dot(const Dtmc& dtmc);

std::string report_json(const VerificationReport& report, const SensitivityRanking* ranking,
                        const RepairSummary* repair);
void write_report(const VerificationReport& report, const SensitivityRanking* ranking,
                  const RepairSummary* repair, const std::filesystem::path& path);

struct RunOutcome {
  int exit_code = 0;
  VerificationReport report;
  std::optional<SensitivityRanking> ranking;
  std::optional<RepairSummary> repair;
  std::vector<std::filesystem::path> artifacts;
};

/// Learns the fairness chain (Start, protected values, outcomes), checks it,
/// and on failure learns the configured abstraction, ranks its targets and
/// repairs. Exit codes: 0 fair (possibly after repair), 2 still unfair,
/// 3 trace budget exhausted. Config problems throw ConfigError.
RunOutcome run_verify_repair(const RunConfig& config);

}  // namespace fairdtmc

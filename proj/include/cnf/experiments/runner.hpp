#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cnf/experiments/config.hpp"

namespace cnf::experiments {

/// Column names of one CSV table.
struct TableSchema {
  std::string file;
  std::vector<std::string> columns;
};

/// Every table an experiment writes, in a fixed order. Each artifact also
/// carries failures.csv.
std::vector<TableSchema> table_schemas(Experiment e);

inline constexpr const char* kManifestFile = "manifest.cfg";
inline constexpr const char* kFailuresFile = "failures.csv";
inline constexpr const char* kPlotFile = "plot.gp";

struct RunArtifact {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> tables;
  std::vector<std::filesystem::path> archives;
  std::filesystem::path manifest;
  std::filesystem::path plot_script;
  /// One entry per failed cell ("cell: message").
  std::vector<std::string> failures;
  double wall_seconds = 0.0;

  bool ok() const noexcept { return failures.empty(); }
};

/// Runs every cell of the experiment, writes the CSV tables, weight
/// archives, manifest and plot script into `dir` (default
/// output_root()/<experiment> when cfg.output is empty). Divergent cells
/// produce rows in failures.csv rather than exceptions.
RunArtifact run_experiment(const ExperimentConfig& cfg);

/// Re-runs the configuration recorded in a manifest. `output` overrides the
/// recorded output directory when non-empty.
RunArtifact replay(const std::filesystem::path& manifest, const std::string& output = {});

/// Writes plot.gp for an existing artifact directory. Throws IoError when
/// the directory is empty or lacks its manifest, and when CSVs are missing
/// (listing every absent file).
std::filesystem::path emit_plot_script(const std::filesystem::path& dir);

/// Formatting used for every CSV cell.
std::string csv_number(double v);

}  // namespace cnf::experiments

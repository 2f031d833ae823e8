// Command line front end: run, replay, eval and plot.

#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cnf/errors.hpp"
#include "cnf/experiments/archive.hpp"
#include "cnf/experiments/config.hpp"
#include "cnf/experiments/runner.hpp"

namespace {

using namespace cnf;
using namespace cnf::experiments;

enum ExitCode { kOk = 0, kConfig = 1, kDivergence = 2, kIo = 3 };

constexpr long kFullEpochs = 100000;

int report(const RunArtifact& art) {
  std::cout << "artifact: " << art.dir.string() << '\n';
  for (const auto& t : art.tables) std::cout << "  table   " << t.filename().string() << '\n';
  for (const auto& a : art.archives) std::cout << "  weights " << a.filename().string() << '\n';
  std::cout << "  wall time " << art.wall_seconds << " s\n";
  if (!art.ok()) {
    std::cerr << art.failures.size() << " cell(s) diverged:\n";
    for (const auto& f : art.failures) std::cerr << "  " << f << '\n';
    return kDivergence;
  }
  return kOk;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << '\n';
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kIo;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collocation neural form solver for initial value problems"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.set_version_flag("--version", std::string(cnf::experiments::kVersion));

  // run
  auto* run = app.add_subcommand("run", "Run a named experiment");
  std::string experiment, config_file, out_dir;
  bool full = false;
  std::map<std::string, std::string> overrides;
  run->add_option("experiment", experiment, "Experiment name")
      ->required()
      ->check(CLI::IsMember(experiment_names()));
  run->add_option("--config", config_file, "key=value config file");
  run->add_flag("--full", full, "Paper-scale training (1e5 epochs unless --epochs is given)");
  run->add_option("--out", out_dir, "Output directory (default $CNF_OUTPUT_ROOT/<experiment>)");
  for (const auto& key : known_keys()) {
    if (key == "experiment" || key == "output") continue;
    std::string names = "--" + key;
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (dashed != key) names += ",--" + dashed;
    run->add_option_function<std::string>(
        names, [&overrides, key](const std::string& v) { overrides[key] = v; },
        "Override '" + key + "'");
  }

  // replay
  auto* rep = app.add_subcommand("replay", "Re-run the configuration recorded in a manifest");
  std::string manifest, replay_out;
  rep->add_option("manifest", manifest, "manifest.cfg of an earlier run")->required();
  rep->add_option("--out", replay_out, "Output directory (default: the recorded one)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a stored solution");
  std::string weights;
  std::vector<double> at;
  ev->add_option("weights", weights, "Weight archive (.cnfw)")->required();
  ev->add_option("--at", at, "Time(s) to evaluate at")->required();

  // plot
  auto* plot = app.add_subcommand("plot", "Write the plot script of an artifact directory");
  std::string plot_dir;
  plot->add_option("dir", plot_dir, "Artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*run) {
    return guarded([&] {
      Settings s;
      if (!config_file.empty()) s = Settings::load(config_file);
      if (full) s.set("epochs", std::to_string(kFullEpochs), "--full");
      for (const auto& [k, v] : overrides) s.set(k, v, "--" + k);
      if (!out_dir.empty()) s.set("output", out_dir, "--out");
      const ExperimentConfig cfg = resolve(parse_experiment(experiment), s);
      return report(run_experiment(cfg));
    });
  }
  if (*rep) {
    return guarded([&] { return report(replay(manifest, replay_out)); });
  }
  if (*ev) {
    return guarded([&] {
      const LoadedSolution loaded = load_weights(weights);
      const auto& sol = loaded.solution;
      std::vector<State> values;
      for (double t : at) values.push_back(sol.evaluate(t));
      std::cout << "t";
      for (std::size_t c = 0; c < sol.dim; ++c) std::cout << ",u" << c;
      std::cout << '\n';
      for (std::size_t i = 0; i < at.size(); ++i) {
        std::cout << csv_number(at[i]);
        for (double x : values[i]) std::cout << ',' << csv_number(x);
        std::cout << '\n';
      }
      return kOk;
    });
  }
  if (*plot) {
    return guarded([&] {
      std::cout << emit_plot_script(plot_dir).string() << '\n';
      return kOk;
    });
  }
  return kConfig;
}

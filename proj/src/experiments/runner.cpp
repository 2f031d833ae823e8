#include "cnf/experiments/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "cnf/errors.hpp"
#include "cnf/experiments/archive.hpp"
#include "cnf/fragmentation.hpp"
#include "cnf/oracle.hpp"

namespace cnf::experiments {

namespace fs = std::filesystem;

namespace {

using Row = std::vector<std::string>;

const std::vector<std::string> kCellKey = {"variant", "m", "init"};

std::vector<std::string> with_key(std::vector<std::string> tail) {
  std::vector<std::string> out = kCellKey;
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

std::string num(double v) { return csv_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_line(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += csv_field(row[i]);
  }
  return out + '\n';
}

// Output of one sweep cell. Rows are keyed by table file name.
struct CellOutput {
  std::map<std::string, std::vector<Row>> rows;
  std::vector<std::string> failures;
  std::vector<fs::path> archives;

  void add(const std::string& file, Row row) { rows[file].push_back(std::move(row)); }
};

struct Cell {
  std::string label;
  std::function<void(CellOutput&)> run;
};

struct CellKey {
  Variant variant;
  std::size_t m;
  InitKind init;

  Row prefix() const { return {to_string(variant), std::to_string(m), to_string(init)}; }
  std::string label() const {
    return "variant=" + to_string(variant) + " m=" + std::to_string(m) + " init=" + to_string(init);
  }
  std::string tag() const {
    return to_string(variant) + "_m" + std::to_string(m) + "_" + to_string(init);
  }
};

Row concat(Row a, const Row& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<CellKey> cell_keys(const ExperimentConfig& cfg) {
  std::vector<CellKey> out;
  for (Variant v : cfg.variants) {
    for (InitKind k : cfg.inits) {
      for (std::size_t m : cfg.orders) out.push_back({v, m, k});
    }
  }
  return out;
}

std::vector<double> uniform_grid(double t0, double t_end, std::size_t points) {
  const Fragmentation f(t0, t_end, 1, points - 1);
  return {f.points().begin(), f.points().end()};
}

IvpSystem make_problem(const ExperimentConfig& cfg, double domain_end, std::span<const double> iv = {}) {
  IvpSystem p = problem_by_name(cfg.problem, iv);
  p.domain_end = domain_end;
  return p;
}

double exact1(const IvpSystem& p, double t) { return (*p.analytic)(t)[0]; }

struct CnfRun {
  std::vector<NeuralFormSpec> specs;
  TrainResult result;
};

// Single neural form over the whole grid; observer sees every epoch.
CnfRun train_cnf(const IvpSystem& problem, const CellKey& key, std::size_t hidden,
                 const TrainingConfig& tc, std::span<const double> grid,
                 const EpochObserver& observer = {}) {
  CnfRun run;
  std::vector<WeightMatrix> Ps;
  for (std::size_t c = 0; c < problem.dim; ++c) {
    run.specs.push_back({key.variant, grid.front(), problem.u0[c]});
    Ps.push_back(init_weight_matrix(tc.init, key.m, hidden, c, 0));
  }
  run.result = run_training(problem, run.specs, std::move(Ps), grid, tc, observer);
  return run;
}

double grid_delta_u(const IvpSystem& p, const NeuralFormSpec& spec, const WeightMatrix& P,
                    std::span<const double> grid) {
  double sum = 0.0;
  for (double t : grid) sum += std::abs(exact1(p, t) - nf_eval(spec, P, t).value);
  return sum / static_cast<double>(grid.size());
}

double final_cost(const TrainResult& r) {
  return r.loss_trace.empty() ? r.initial_cost : r.loss_trace.back();
}

Fragmentation fragmentation_for(const ExperimentConfig& cfg, std::size_t subdomains) {
  return Fragmentation(0.0, cfg.domain_end, subdomains, cfg.points - 1);
}

FragmentedSolution run_scnf(const ExperimentConfig& cfg, const IvpSystem& problem,
                            const CellKey& key, const Fragmentation& frag, bool keep_traces) {
  ScnfOptions opts;
  opts.independent_init = cfg.independent_init;
  opts.keep_traces = keep_traces;
  return solve_scnf(problem, key.variant, key.m, cfg.hidden, cfg.training(key.init), frag, opts);
}

void note_failure(CellOutput& out, const std::string& label, const FragmentedSolution& sol) {
  if (sol.failed_at) {
    out.failures.push_back(label + ": subdomain " + std::to_string(*sol.failed_at) + ": " + sol.failure);
  }
}

std::string status(const FragmentedSolution& sol) { return sol.complete() ? "ok" : "diverged"; }


// ---- experiment cell builders -------------------------------------------

std::vector<Cell> epochs_sweep(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    cells.push_back({key.label(), [&cfg, key](CellOutput& out) {
      const IvpSystem p = make_problem(cfg, cfg.domain_end);
      const auto grid = uniform_grid(p.t0, cfg.domain_end, cfg.points);
      std::vector<Row> trace;
      const NeuralFormSpec spec{key.variant, p.t0, p.u0[0]};
      auto observer = [&](long epoch, std::span<const WeightMatrix> Ps) {
        trace.push_back(concat(key.prefix(), {std::to_string(epoch + 1),
                                              num(grid_delta_u(p, spec, Ps[0], grid))}));
      };
      CnfRun run;
      try {
        run = train_cnf(p, key, cfg.hidden, cfg.training(key.init), grid, observer);
      } catch (const DivergenceError& e) {
        out.failures.push_back(key.label() + ": " + e.what());
        for (auto& r : trace) out.add("epochs_sweep.csv", concat(std::move(r), {""}));
        return;
      }
      for (std::size_t i = 0; i < trace.size(); ++i) {
        out.add("epochs_sweep.csv", concat(std::move(trace[i]), {num(run.result.loss_trace[i])}));
      }
      const auto rk4 = rk4_solve(p, grid);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        const double u = exact1(p, t);
        const double a = nf_eval(run.specs[0], run.result.Ps[0], t).value;
        out.add("grid_errors.csv", concat(key.prefix(), {num(t), num(u), num(a), num(std::abs(u - a)),
                                                         num(rk4[i][0]), num(std::abs(u - rk4[i][0]))}));
      }
    }});
  }
  return cells;
}

// Shared body of the domain and points sweeps: one CNF on a uniform grid.
void cnf_summary_cell(const ExperimentConfig& cfg, const CellKey& key, double t_end,
                      std::size_t points, const std::string& file, const std::string& axis,
                      CellOutput& out) {
  const IvpSystem p = make_problem(cfg, t_end);
  const auto grid = uniform_grid(p.t0, t_end, points);
  const std::string label = key.label() + " " + axis;
  try {
    const CnfRun run = train_cnf(p, key, cfg.hidden, cfg.training(key.init), grid);
    out.add(file, concat(key.prefix(), {axis.substr(axis.find('=') + 1),
                                        num(grid_delta_u(p, run.specs[0], run.result.Ps[0], grid)),
                                        num(final_cost(run.result)), "ok"}));
  } catch (const DivergenceError& e) {
    out.failures.push_back(label + ": " + e.what());
    out.add(file, concat(key.prefix(), {axis.substr(axis.find('=') + 1), "", "", "diverged"}));
  }
}

std::vector<Cell> domain_sweep(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    for (double t_end : cfg.domain_list) {
      const std::string axis = "t_end=" + num(t_end);
      cells.push_back({key.label() + " " + axis, [&cfg, key, t_end, axis](CellOutput& out) {
        cnf_summary_cell(cfg, key, t_end, cfg.points, "domain_sweep.csv", axis, out);
      }});
    }
  }
  return cells;
}

std::vector<Cell> points_sweep(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    for (std::size_t pts : cfg.points_list) {
      const std::string axis = "points=" + num(pts);
      cells.push_back({key.label() + " " + axis, [&cfg, key, pts, axis](CellOutput& out) {
        cnf_summary_cell(cfg, key, cfg.domain_end, pts, "points_sweep.csv", axis, out);
      }});
    }
  }
  return cells;
}

std::vector<Cell> scaling_table(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    for (std::size_t r = 0; r < cfg.domain_list.size(); ++r) {
      const std::string label = key.label() + " row=" + num(r);
      cells.push_back({label, [&cfg, key, r, label](CellOutput& out) {
        const double t_end = cfg.domain_list[r];
        const std::size_t hidden = cfg.hidden_list[r];
        const std::size_t points = cfg.points_list[r];
        const IvpSystem p = make_problem(cfg, t_end);
        const auto grid = uniform_grid(p.t0, t_end, points);
        const std::size_t runs = key.init == InitKind::Constant ? 1 : cfg.seeds;
        const Row shape = {num(t_end), num(hidden), num(points)};
        double sum = 0.0;
        std::size_t ok = 0;
        for (std::size_t s = 0; s < runs; ++s) {
          const std::string seed = key.init == InitKind::Constant ? "" : num(cfg.seed + s);
          try {
            const CnfRun run = train_cnf(p, key, hidden, cfg.training(key.init, s), grid);
            const double du = grid_delta_u(p, run.specs[0], run.result.Ps[0], grid);
            sum += du;
            ++ok;
            out.add("scaling_table.csv", concat(concat(key.prefix(), shape), {seed, num(du), "ok"}));
          } catch (const DivergenceError& e) {
            out.failures.push_back(label + " seed=" + seed + ": " + e.what());
            out.add("scaling_table.csv", concat(concat(key.prefix(), shape), {seed, "", "diverged"}));
          }
        }
        out.add("scaling_summary.csv",
                concat(concat(key.prefix(), shape),
                       {num(ok), ok ? num(sum / static_cast<double>(ok)) : std::string()}));
      }});
    }
  }
  return cells;
}

std::vector<Cell> cnf_vs_scnf(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    cells.push_back({key.label(), [&cfg, key](CellOutput& out) {
      const IvpSystem p = make_problem(cfg, cfg.domain_end);
      const auto grid = uniform_grid(p.t0, cfg.domain_end, cfg.cnf_points);
      const TrainingConfig tc = cfg.training(key.init);

      std::optional<CnfRun> cnf;
      try {
        cnf = train_cnf(p, key, cfg.cnf_hidden, tc, grid);
        out.add("cnf_vs_scnf_summary.csv",
                concat(key.prefix(), {"cnf", num(grid_delta_u(p, cnf->specs[0], cnf->result.Ps[0], grid)), "ok"}));
      } catch (const DivergenceError& e) {
        out.failures.push_back(key.label() + " cnf: " + e.what());
        out.add("cnf_vs_scnf_summary.csv", concat(key.prefix(), {"cnf", "", "diverged"}));
      }

      const Fragmentation frag = fragmentation_for(cfg, cfg.subdomains);
      const FragmentedSolution sol = run_scnf(cfg, p, key, frag, false);
      note_failure(out, key.label() + " scnf", sol);
      out.add("cnf_vs_scnf_summary.csv",
              concat(key.prefix(), {"scnf", sol.complete() ? num(delta_u_fragmented(sol, p).delta_u) : "",
                                    status(sol)}));
      if (sol.complete()) {
        save_weights(sol, cfg.problem, (fs::path(cfg.output) / ("weights_scnf_" + key.tag() + ".cnfw")).string());
        out.archives.push_back(fs::path(cfg.output) / ("weights_scnf_" + key.tag() + ".cnfw"));
      }

      const auto samples = uniform_grid(p.t0, cfg.domain_end, cfg.samples);
      for (double t : samples) {
        std::string c, s;
        if (cnf) c = num(nf_eval(cnf->specs[0], cnf->result.Ps[0], t).value);
        if (sol.complete()) s = num(sol.evaluate(t)[0]);
        out.add("cnf_vs_scnf.csv", concat(key.prefix(), {num(t), num(exact1(p, t)), c, s}));
      }
    }});
  }
  return cells;
}

std::vector<Cell> order_sweep(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    cells.push_back({key.label(), [&cfg, key](CellOutput& out) {
      const IvpSystem p = make_problem(cfg, cfg.domain_end);
      const FragmentedSolution sol = run_scnf(cfg, p, key, fragmentation_for(cfg, cfg.subdomains), false);
      note_failure(out, key.label(), sol);
      if (!sol.complete()) {
        out.add("order_sweep_summary.csv", concat(key.prefix(), {"", "", "", "", "diverged"}));
        return;
      }
      const ErrorReport rep = delta_u_fragmented(sol, p);
      out.add("order_sweep_summary.csv",
              concat(key.prefix(), {num(rep.delta_u), num(rep.interface_linf), num(rep.interface_linf_end),
                                    num(rep.interface_linf_start), "ok"}));
      for (double t : uniform_grid(p.t0, cfg.domain_end, cfg.samples)) {
        out.add("order_sweep_solution.csv",
                concat(key.prefix(), {num(t), num(exact1(p, t)), num(sol.evaluate(t)[0])}));
      }
      const fs::path archive = fs::path(cfg.output) / ("weights_" + key.tag() + ".cnfw");
      save_weights(sol, cfg.problem, archive.string());
      out.archives.push_back(archive);
    }});
  }
  return cells;
}

std::vector<Cell> subdomain_sweep(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    for (std::size_t h : cfg.subdomain_list) {
      const std::string label = key.label() + " subdomains=" + num(h);
      cells.push_back({label, [&cfg, key, h, label](CellOutput& out) {
        const IvpSystem p = make_problem(cfg, cfg.domain_end);
        const FragmentedSolution sol = run_scnf(cfg, p, key, fragmentation_for(cfg, h), false);
        note_failure(out, label, sol);
        out.add("subdomain_sweep.csv",
                concat(key.prefix(), {num(h), sol.complete() ? num(delta_u_fragmented(sol, p).delta_u) : "",
                                      status(sol)}));
      }});
    }
  }
  return cells;
}

std::vector<Cell> subdomain_error(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    cells.push_back({key.label(), [&cfg, key](CellOutput& out) {
      const IvpSystem p = make_problem(cfg, cfg.domain_end);
      const FragmentedSolution sol = run_scnf(cfg, p, key, fragmentation_for(cfg, cfg.subdomains), false);
      note_failure(out, key.label(), sol);
      if (sol.subdomains.empty()) return;
      const ErrorReport rep = delta_u_fragmented(sol, p);
      for (std::size_t l = 0; l < sol.subdomains.size(); ++l) {
        out.add("subdomain_error.csv",
                concat(key.prefix(), {num(l), num(sol.frag.start(l)), num(sol.frag.end(l)),
                                      num(rep.delta_u_l[l]), num(sol.subdomains[l].final_cost)}));
      }
    }});
  }
  return cells;
}

std::vector<std::size_t> iv_indices(const ExperimentConfig& cfg) {
  if (cfg.iv_set == "all") return {0, 1, 2};
  return {static_cast<std::size_t>(std::stoul(cfg.iv_set))};
}

// Substeps per grid interval of the fine-step reference integrator.
constexpr std::size_t kOracleSubsteps = 100;

std::vector<Cell> rigid_body(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    for (std::size_t iv : iv_indices(cfg)) {
      const std::string label = key.label() + " iv=" + num(iv);
      cells.push_back({label, [&cfg, key, iv, label](CellOutput& out) {
        const State u0 = rigid_body_initial_values()[iv];
        const IvpSystem p = make_problem(cfg, cfg.domain_end, u0);
        const Fragmentation frag = fragmentation_for(cfg, cfg.subdomains);
        const FragmentedSolution sol = run_scnf(cfg, p, key, frag, false);
        note_failure(out, label, sol);
        const Row prefix = concat(key.prefix(), {num(iv)});
        for (std::size_t l = 0; l < sol.subdomains.size(); ++l) {
          out.add("rigid_body_training.csv", concat(prefix, {num(l), num(sol.subdomains[l].final_cost)}));
        }
        const auto grid = frag.points();
        const auto rk4 = rk4_solve(p, grid, kOracleSubsteps);
        const State inv0 = p.eval_invariants(p.u0);
        double drift_r2 = 0.0, drift_h = 0.0, dev = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
          const double t = grid[i];
          if (frag.locate(t) >= sol.subdomains.size()) break;
          const State u = sol.evaluate(t);
          const State inv = p.eval_invariants(u);
          drift_r2 = std::max(drift_r2, std::abs(inv[0] - inv0[0]));
          drift_h = std::max(drift_h, std::abs(inv[1] - inv0[1]));
          for (std::size_t c = 0; c < 3; ++c) dev = std::max(dev, std::abs(u[c] - rk4[i][c]));
          out.add("rigid_body_trajectory.csv",
                  concat(prefix, {num(t), num(u[0]), num(u[1]), num(u[2]), num(rk4[i][0]), num(rk4[i][1]),
                                  num(rk4[i][2]), num(inv[0]), num(inv[1])}));
        }
        out.add("rigid_body_summary.csv",
                concat(prefix, {num(drift_r2), num(drift_h), num(dev), status(sol)}));
        if (sol.complete()) {
          const fs::path archive = fs::path(cfg.output) / ("weights_" + key.tag() + "_iv" + num(iv) + ".cnfw");
          save_weights(sol, cfg.problem, archive.string());
          out.archives.push_back(archive);
        }
      }});
    }
  }
  return cells;
}

std::vector<Cell> single(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const CellKey& key : cell_keys(cfg)) {
    cells.push_back({key.label(), [&cfg, key](CellOutput& out) {
      State iv;
      if (cfg.problem == "rigid_body") iv = rigid_body_initial_values()[iv_indices(cfg).front()];
      const IvpSystem p = make_problem(cfg, cfg.domain_end, iv);
      const FragmentedSolution sol = run_scnf(cfg, p, key, fragmentation_for(cfg, cfg.subdomains), true);
      note_failure(out, key.label(), sol);
      std::optional<ErrorReport> rep;
      if (p.analytic && !sol.subdomains.empty()) rep = delta_u_fragmented(sol, p);
      for (std::size_t l = 0; l < sol.subdomains.size(); ++l) {
        const auto& sub = sol.subdomains[l];
        out.add("subdomains.csv", concat(key.prefix(), {num(l), num(sol.frag.start(l)), num(sol.frag.end(l)),
                                                        num(sub.final_cost), rep ? num(rep->delta_u_l[l]) : ""}));
        for (std::size_t e = 0; e < sub.loss_trace.size(); ++e) {
          out.add("loss_trace.csv", concat(key.prefix(), {num(l), num(e + 1), num(sub.loss_trace[e])}));
        }
      }
      for (double t : uniform_grid(p.t0, cfg.domain_end, cfg.samples)) {
        if (sol.frag.locate(t) >= sol.subdomains.size()) break;
        const State u = sol.evaluate(t);
        const std::optional<State> exact = p.analytic ? std::optional<State>((*p.analytic)(t)) : std::nullopt;
        for (std::size_t c = 0; c < p.dim; ++c) {
          out.add("solution.csv", concat(key.prefix(), {num(t), num(c), num(u[c]), exact ? num((*exact)[c]) : ""}));
        }
      }
      if (!sol.subdomains.empty()) {
        const fs::path archive = fs::path(cfg.output) / ("weights_" + key.tag() + ".cnfw");
        save_weights(sol, cfg.problem, archive.string());
        out.archives.push_back(archive);
      }
    }});
  }
  return cells;
}

std::vector<Cell> build_cells(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::EpochsSweep: return epochs_sweep(cfg);
    case Experiment::DomainSweep: return domain_sweep(cfg);
    case Experiment::PointsSweep: return points_sweep(cfg);
    case Experiment::ScalingTable: return scaling_table(cfg);
    case Experiment::CnfVsScnf: return cnf_vs_scnf(cfg);
    case Experiment::OrderSweep: return order_sweep(cfg);
    case Experiment::SubdomainSweep: return subdomain_sweep(cfg);
    case Experiment::SubdomainError: return subdomain_error(cfg);
    case Experiment::RigidBody: return rigid_body(cfg);
    case Experiment::Single: return single(cfg);
  }
  return {};
}

// ---- cell execution and merging -----------------------------------------

fs::path part_path(const fs::path& parts, std::size_t cell, const std::string& file) {
  return parts / (std::to_string(cell) + "." + file);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_parts(const fs::path& parts, std::size_t cell, const CellOutput& out) {
  for (const auto& [file, rows] : out.rows) {
    std::string text;
    for (const auto& r : rows) text += csv_line(r);
    write_text(part_path(parts, cell, file), text);
  }
}

// Header plus every cell's part file in cell order, then an atomic rename.
void merge_table(const fs::path& dir, const fs::path& parts, std::size_t cells, const TableSchema& schema) {
  const fs::path tmp = dir / (schema.file + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << csv_line(schema.columns);
    for (std::size_t i = 0; i < cells; ++i) {
      const fs::path part = part_path(parts, i, schema.file);
      if (!fs::exists(part)) continue;
      std::ifstream in(part, std::ios::binary);
      out << in.rdbuf();
    }
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, dir / schema.file);
}

std::size_t worker_count(const ExperimentConfig& cfg, std::size_t cells) {
  std::size_t n = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, cells));
}

std::string plot_script(const ExperimentConfig& cfg);

}  // namespace

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

std::vector<TableSchema> table_schemas(Experiment e) {
  switch (e) {
    case Experiment::EpochsSweep:
      return {{"epochs_sweep.csv", with_key({"epoch", "delta_u", "cost"})},
              {"grid_errors.csv", with_key({"t", "exact", "approx", "abs_error", "rk4", "rk4_abs_error"})}};
    case Experiment::DomainSweep:
      return {{"domain_sweep.csv", with_key({"t_end", "delta_u", "final_cost", "status"})}};
    case Experiment::PointsSweep:
      return {{"points_sweep.csv", with_key({"points", "delta_u", "final_cost", "status"})}};
    case Experiment::ScalingTable:
      return {{"scaling_table.csv", with_key({"t_end", "hidden", "points", "seed", "delta_u", "status"})},
              {"scaling_summary.csv", with_key({"t_end", "hidden", "points", "runs", "mean_delta_u"})}};
    case Experiment::CnfVsScnf:
      return {{"cnf_vs_scnf.csv", with_key({"t", "exact", "cnf", "scnf"})},
              {"cnf_vs_scnf_summary.csv", with_key({"method", "delta_u", "status"})}};
    case Experiment::OrderSweep:
      return {{"order_sweep_solution.csv", with_key({"t", "exact", "approx"})},
              {"order_sweep_summary.csv", with_key({"delta_u", "interface_linf", "interface_linf_end",
                                                    "interface_linf_start", "status"})}};
    case Experiment::SubdomainSweep:
      return {{"subdomain_sweep.csv", with_key({"subdomains", "delta_u", "status"})}};
    case Experiment::SubdomainError:
      return {{"subdomain_error.csv", with_key({"subdomain", "t_start", "t_end", "delta_u_l", "final_cost"})}};
    case Experiment::RigidBody:
      return {{"rigid_body_trajectory.csv",
               with_key({"iv", "t", "u", "v", "w", "rk4_u", "rk4_v", "rk4_w", "r2", "energy"})},
              {"rigid_body_training.csv", with_key({"iv", "subdomain", "final_cost"})},
              {"rigid_body_summary.csv",
               with_key({"iv", "max_r2_drift", "max_energy_drift", "max_rk4_deviation", "status"})}};
    case Experiment::Single:
      return {{"solution.csv", with_key({"t", "component", "approx", "exact"})},
              {"subdomains.csv", with_key({"subdomain", "t_start", "t_end", "final_cost", "delta_u_l"})},
              {"loss_trace.csv", with_key({"subdomain", "epoch", "cost"})}};
  }
  return {};
}

RunArtifact run_experiment(const ExperimentConfig& in) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = in;
  if (cfg.output.empty()) cfg.output = (fs::path(output_root()) / to_string(cfg.experiment)).string();
  const fs::path dir(cfg.output);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  const fs::path parts = dir / ".cells";
  fs::remove_all(parts, ec);
  fs::create_directories(parts, ec);
  if (ec) throw IoError("cannot create '" + parts.string() + "': " + ec.message());

  std::vector<Cell> cells = build_cells(cfg);
  std::vector<std::vector<std::string>> failures(cells.size());
  std::vector<std::vector<fs::path>> archives(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= cells.size()) return;
      try {
        CellOutput out;
        cells[i].run(out);
        write_parts(parts, i, out);
        failures[i] = std::move(out.failures);
        archives[i] = std::move(out.archives);
      } catch (const DivergenceError& e) {
        failures[i].push_back(cells[i].label + ": " + e.what());
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = cells.size();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t workers = worker_count(cfg, cells.size());
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) {
    fs::remove_all(parts, ec);
    std::rethrow_exception(error);
  }

  RunArtifact art;
  art.dir = dir;
  for (const auto& schema : table_schemas(cfg.experiment)) {
    merge_table(dir, parts, cells.size(), schema);
    art.tables.push_back(dir / schema.file);
  }
  std::string failure_text = csv_line({"cell", "message"});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (const auto& f : failures[i]) {
      art.failures.push_back(f);
      failure_text += csv_line({std::to_string(i), f});
    }
    for (auto& a : archives[i]) art.archives.push_back(std::move(a));
  }
  write_text(dir / kFailuresFile, failure_text);
  art.tables.push_back(dir / kFailuresFile);
  fs::remove_all(parts, ec);

  art.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ostringstream manifest;
  manifest << "# cnf run manifest\n"
           << "# version = " << kVersion << '\n'
           << "# wall_time_seconds = " << art.wall_seconds << '\n'
           << "# status = " << (art.ok() ? "ok" : "failed") << '\n'
           << to_settings_text(cfg);
  art.manifest = dir / kManifestFile;
  write_text(art.manifest, manifest.str());
  art.plot_script = dir / kPlotFile;
  write_text(art.plot_script, plot_script(cfg));
  return art;
}

RunArtifact replay(const fs::path& manifest, const std::string& output) {
  Settings s = Settings::load(manifest.string());
  if (!output.empty()) s.set("output", output, "--out");
  return run_experiment(resolve(s));
}

namespace {

std::string quoted(const std::string& s) { return "'" + s + "'"; }

// Filter expression selecting one variant/order/init group of a table.
std::string group_filter(const CellKey& k) {
  return "(strcol('variant') eq '" + to_string(k.variant) + "' && column('m') == " + std::to_string(k.m) +
         " && strcol('init') eq '" + to_string(k.init) + "')";
}

std::string series(const std::string& file, const CellKey& k, const std::string& x, const std::string& y,
                   const std::string& title) {
  return quoted(file) + " using (" + group_filter(k) + " ? column('" + x + "') : NaN):'" + y +
         "' with lines title '" + title + "'";
}

std::string plot_lines(const ExperimentConfig& cfg, const std::string& file, const std::string& x,
                       const std::string& y, const std::string& suffix = "") {
  std::string cmd = "plot ";
  bool first = true;
  for (const CellKey& k : cell_keys(cfg)) {
    if (!first) cmd += ", \\\n     ";
    first = false;
    cmd += series(file, k, x, y, k.label() + suffix);
  }
  return cmd + "\n";
}

std::string plot_script(const ExperimentConfig& cfg) {
  std::ostringstream o;
  o << "# Plot commands for the " << to_string(cfg.experiment) << " artifact.\n"
    << "# No terminal is set; choose one before loading, e.g.\n"
    << "#   gnuplot -e \"set terminal pngcairo; set output 'fig.png'\" plot.gp\n"
    << "set datafile separator ','\n"
    << "set key outside right\n";
  auto figure = [&](const std::string& title, const std::string& xlabel, const std::string& ylabel,
                    bool logy, bool logx = false) {
    o << "\n# " << title << "\nreset session\nset datafile separator ','\n"
      << "set title " << quoted(title) << "\nset xlabel " << quoted(xlabel) << "\nset ylabel " << quoted(ylabel)
      << '\n';
    if (logy) o << "set logscale y\n";
    if (logx) o << "set logscale x\n";
  };
  switch (cfg.experiment) {
    case Experiment::EpochsSweep:
      figure("error vs epoch", "epoch", "delta_u", true);
      o << plot_lines(cfg, "epochs_sweep.csv", "epoch", "delta_u");
      figure("pointwise error", "t", "abs_error", true);
      o << plot_lines(cfg, "grid_errors.csv", "t", "abs_error");
      break;
    case Experiment::DomainSweep:
      figure("error vs domain size", "t_end", "delta_u", true);
      o << plot_lines(cfg, "domain_sweep.csv", "t_end", "delta_u");
      break;
    case Experiment::PointsSweep:
      figure("error vs training points", "points", "delta_u", true);
      o << plot_lines(cfg, "points_sweep.csv", "points", "delta_u");
      break;
    case Experiment::ScalingTable:
      figure("scaling table: mean error vs domain size", "t_end", "mean_delta_u", true);
      o << plot_lines(cfg, "scaling_summary.csv", "t_end", "mean_delta_u");
      break;
    case Experiment::CnfVsScnf:
      figure("CNF vs SCNF", "t", "u", false);
      o << "plot 'cnf_vs_scnf.csv' using 't':'exact' with lines title 'exact'";
      for (const CellKey& k : cell_keys(cfg)) {
        o << ", \\\n     " << series("cnf_vs_scnf.csv", k, "t", "cnf", k.label() + " cnf");
        o << ", \\\n     " << series("cnf_vs_scnf.csv", k, "t", "scnf", k.label() + " scnf");
      }
      o << '\n';
      break;
    case Experiment::OrderSweep:
      figure("SCNF solutions by order", "t", "u", false);
      o << "plot 'order_sweep_solution.csv' using 't':'exact' with lines title 'exact'";
      for (const CellKey& k : cell_keys(cfg)) {
        o << ", \\\n     " << series("order_sweep_solution.csv", k, "t", "approx", k.label());
      }
      o << '\n';
      figure("interface error by order", "m", "interface_linf", true);
      o << "plot 'order_sweep_summary.csv' using 'm':'interface_linf' with points title 'interface_linf'\n";
      break;
    case Experiment::SubdomainSweep:
      figure("error vs number of subdomains", "subdomains", "delta_u", true);
      o << plot_lines(cfg, "subdomain_sweep.csv", "subdomains", "delta_u");
      break;
    case Experiment::SubdomainError:
      figure("error per subdomain", "subdomain", "delta_u_l", true);
      o << plot_lines(cfg, "subdomain_error.csv", "subdomain", "delta_u_l");
      break;
    case Experiment::RigidBody: {
      figure("rigid body trajectories", "u", "v", false);
      o << "set zlabel 'w'\nsplot ";
      bool first = true;
      for (std::size_t iv : iv_indices(cfg)) {
        for (const CellKey& k : cell_keys(cfg)) {
          if (!first) o << ", \\\n      ";
          first = false;
          o << "'rigid_body_trajectory.csv' using (" << group_filter(k) << " && column('iv') == " << iv
            << " ? column('u') : NaN):'v':'w' with lines title '" << k.label() << " iv=" << iv << "'";
        }
      }
      o << '\n';
      figure("training error per subdomain", "subdomain", "final_cost", true);
      o << "plot 'rigid_body_training.csv' using 'subdomain':'final_cost' with points title 'final_cost'\n";
      break;
    }
    case Experiment::Single:
      figure("solution", "t", "u", false);
      o << "plot 'solution.csv' using 't':'approx' with lines title 'approx', \\\n"
        << "     'solution.csv' using 't':'exact' with lines title 'exact'\n";
      figure("training cost", "epoch", "cost", true);
      o << plot_lines(cfg, "loss_trace.csv", "epoch", "cost");
      break;
  }
  return o.str();
}

}  // namespace

fs::path emit_plot_script(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("artifact directory '" + dir.string() + "' does not exist");
  if (fs::is_empty(dir)) throw IoError("artifact directory '" + dir.string() + "' is empty");
  const fs::path manifest = dir / kManifestFile;
  if (!fs::exists(manifest)) throw IoError("no " + std::string(kManifestFile) + " in '" + dir.string() + "'");
  const ExperimentConfig cfg = resolve(Settings::load(manifest.string()));
  std::vector<std::string> missing;
  for (const auto& schema : table_schemas(cfg.experiment)) {
    if (!fs::exists(dir / schema.file)) missing.push_back(schema.file);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw IoError("missing CSV files in '" + dir.string() + "': " + list);
  }
  const fs::path out = dir / kPlotFile;
  write_text(out, plot_script(cfg));
  return out;
}

}  // namespace cnf::experiments

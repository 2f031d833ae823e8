#include "cnf/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "cnf/errors.hpp"

namespace cnf {

State rk4_step(const IvpSystem& problem, double t, const State& u, double h) {
  const std::size_t d = problem.dim;
  State k1(d), k2(d), k3(d), k4(d), tmp(d);
  problem.rhs(t, u, k1);
  for (std::size_t i = 0; i < d; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
  problem.rhs(t + 0.5 * h, tmp, k2);
  for (std::size_t i = 0; i < d; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
  problem.rhs(t + 0.5 * h, tmp, k3);
  for (std::size_t i = 0; i < d; ++i) tmp[i] = u[i] + h * k3[i];
  problem.rhs(t + h, tmp, k4);
  State out(d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

std::vector<State> rk4_solve(const IvpSystem& problem, std::span<const double> grid,
                             std::size_t substeps) {
  if (!problem.rhs) throw ConfigError("problem has no explicit right-hand side");
  if (grid.empty()) throw ConfigError("rk4 grid is empty");
  if (substeps < 1) throw ConfigError("rk4 needs at least one substep per interval");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("rk4 grid must be strictly increasing");
  }
  std::vector<State> out;
  out.reserve(grid.size());
  State u = problem.u0;
  out.push_back(u);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double h = (grid[i] - grid[i - 1]) / static_cast<double>(substeps);
    for (std::size_t s = 0; s < substeps; ++s) {
      u = rk4_step(problem, grid[i - 1] + static_cast<double>(s) * h, u, h);
    }
    out.push_back(u);
  }
  return out;
}

double delta_u(std::span<const double> exact, std::span<const double> approx) {
  if (exact.size() != approx.size()) throw ConfigError("delta_u: length mismatch");
  if (exact.empty()) throw ConfigError("delta_u: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) sum += std::abs(exact[i] - approx[i]);
  return sum / static_cast<double>(exact.size());
}

namespace {

double state_error(const State& a, const State& b) {
  double e = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) e += std::abs(a[c] - b[c]);
  return e;
}

}  // namespace

ErrorReport delta_u_fragmented(const FragmentedSolution& sol, const AnalyticFn& exact) {
  ErrorReport r;
  const std::size_t h = sol.subdomains.size();
  if (h == 0) throw ConfigError("solution has no trained subdomains");
  for (std::size_t l = 0; l < h; ++l) {
    const auto grid = sol.frag.subdomain(l);
    double sum = 0.0;
    for (double t : grid) {
      const double e = state_error(exact(t), sol.evaluate_in(l, t));
      r.pointwise.push_back(e);
      sum += e;
    }
    r.delta_u_l.push_back(sum / static_cast<double>(grid.size()));
    if (l > 0) {
      const double t = grid.front();
      const State u = exact(t);
      r.interface_linf_end = std::max(r.interface_linf_end, state_error(u, sol.evaluate_in(l - 1, t)));
      r.interface_linf_start = std::max(r.interface_linf_start, state_error(u, sol.evaluate_in(l, t)));
    }
  }
  double total = 0.0;
  for (double d : r.delta_u_l) total += d;
  r.delta_u = total / static_cast<double>(h);
  r.interface_linf = std::max(r.interface_linf_end, r.interface_linf_start);
  return r;
}

ErrorReport delta_u_fragmented(const FragmentedSolution& sol, const IvpSystem& problem) {
  if (!problem.analytic) throw ConfigError("problem '" + problem.name + "' has no closed form");
  return delta_u_fragmented(sol, *problem.analytic);
}

}  // namespace cnf

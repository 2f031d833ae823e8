#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cnf/fragmentation.hpp"
#include "cnf/ode_problem.hpp"

namespace cnf {

/// One classical four-stage Runge-Kutta step of size h from (t, u).
State rk4_step(const IvpSystem& problem, double t, const State& u, double h);

/// Fixed-step RK4 from problem.u0 at grid[0] through every grid point, with
/// `substeps` equal steps per interval. grid[0] need not equal problem.t0.
std::vector<State> rk4_solve(const IvpSystem& problem, std::span<const double> grid,
                             std::size_t substeps = 1);

/// Mean absolute deviation (1/(n+1)) * |exact - approx|_1.
double delta_u(std::span<const double> exact, std::span<const double> approx);

struct ErrorReport {
  /// Mean of delta_u_l.
  double delta_u = 0.0;
  std::vector<double> delta_u_l;
  /// max over interfaces of the two one-sided errors below.
  double interface_linf = 0.0;
  /// Error at t_{n,l-1} evaluated with subdomain l-1.
  double interface_linf_end = 0.0;
  /// Error at t_{0,l} evaluated with subdomain l.
  double interface_linf_start = 0.0;
  /// |u - u~| at every subdomain grid point, subdomain-major (interface
  /// points appear once per adjacent subdomain). Summed over components.
  std::vector<double> pointwise;
};

/// Per-subdomain and global errors of a trained fragmentation against the
/// problem's closed-form solution. Throws ConfigError without one.
ErrorReport delta_u_fragmented(const FragmentedSolution& sol, const IvpSystem& problem);

/// Same, against an arbitrary reference evaluator.
ErrorReport delta_u_fragmented(const FragmentedSolution& sol, const AnalyticFn& exact);

}  // namespace cnf

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cnf {

using State = std::vector<double>;

/// G(t, u, du) -> out, all spans of length dim.
using ResidualFn = std::function<void(double t, std::span<const double> u,
                                      std::span<const double> du, std::span<double> out)>;

/// Partial derivative of G with respect to u or du, written row-major
/// (out[r * dim + c] = dG_r / dx_c).
using ResidualJacobianFn = std::function<void(double t, std::span<const double> u,
                                              std::span<const double> du, std::span<double> out)>;

/// Explicit right-hand side f(t, u) for problems of the form du = f(t, u).
using RhsFn = std::function<void(double t, std::span<const double> u, std::span<double> out)>;

using AnalyticFn = std::function<State(double t)>;

/// Conserved quantities of a system together with their state gradients.
struct Invariants {
  std::size_t count = 0;
  std::function<void(std::span<const double> u, std::span<double> out)> values;
  /// out[q * dim + c] = dI_q / du_c
  std::function<void(std::span<const double> u, std::span<double> out)> gradient;
};

/// An initial value problem G(t, u, du) = 0, u(t0) = u0 on [t0, domain_end].
///
/// The residual carries du explicitly so the same callable serves neural-form
/// training and oracle checks. Values are immutable once built.
struct IvpSystem {
  std::string name;
  std::size_t dim = 1;
  ResidualFn residual;
  ResidualJacobianFn residual_du;   // dG/du
  ResidualJacobianFn residual_ddu;  // dG/d(du)
  RhsFn rhs;
  double t0 = 0.0;
  State u0;
  double domain_end = 1.0;
  std::optional<AnalyticFn> analytic;
  std::optional<Invariants> invariants;

  State eval_residual(double t, std::span<const double> u, std::span<const double> du) const;
  State eval_invariants(std::span<const double> u) const;
};

/// du + 5u = 0, u(0) = 1 on [0, 2]; u(t) = exp(-5t).
IvpSystem dahlquist_problem();

/// du - t sin(10t) + u = 0, u(0) = -1 on [0, 15].
IvpSystem oscillating_problem();

/// Closed-form solution of the oscillating problem.
double oscillating_solution(double t);

struct RigidBodyMoments {
  double iu = 2.0;
  double iv = 1.0;
  double iw = 2.0 / 3.0;
};

/// Euler equation coefficients (a_u, a_v, a_w) for the given principal moments.
std::array<double, 3> rigid_body_coefficients(const RigidBodyMoments& moments);

/// Free rigid body angular momentum on [0, 30] with invariants (R^2, H).
IvpSystem rigid_body_problem(std::span<const double> iv, RigidBodyMoments moments = {});

/// Problem lookup by name ("dahlquist", "oscillating", "rigid_body").
/// Rigid body uses `iv` when non-empty, otherwise the first initial condition set.
IvpSystem problem_by_name(const std::string& name, std::span<const double> iv = {});

/// The three initial condition sets used for the rigid body trajectories.
std::array<State, 3> rigid_body_initial_values();

}  // namespace cnf

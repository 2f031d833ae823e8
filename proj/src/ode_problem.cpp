#include "cnf/ode_problem.hpp"

#include <cmath>

#include "cnf/errors.hpp"

namespace cnf {

State IvpSystem::eval_residual(double t, std::span<const double> u,
                               std::span<const double> du) const {
  State out(dim);
  residual(t, u, du, out);
  return out;
}

State IvpSystem::eval_invariants(std::span<const double> u) const {
  if (!invariants) return {};
  State out(invariants->count);
  invariants->values(u, out);
  return out;
}

IvpSystem dahlquist_problem() {
  IvpSystem p;
  p.name = "dahlquist";
  p.dim = 1;
  p.residual = [](double, std::span<const double> u, std::span<const double> du,
                  std::span<double> out) { out[0] = du[0] + 5.0 * u[0]; };
  p.residual_du = [](double, std::span<const double>, std::span<const double>,
                     std::span<double> out) { out[0] = 5.0; };
  p.residual_ddu = [](double, std::span<const double>, std::span<const double>,
                      std::span<double> out) { out[0] = 1.0; };
  p.rhs = [](double, std::span<const double> u, std::span<double> out) { out[0] = -5.0 * u[0]; };
  p.t0 = 0.0;
  p.u0 = {1.0};
  p.domain_end = 2.0;
  p.analytic = [](double t) { return State{std::exp(-5.0 * t)}; };
  return p;
}

double oscillating_solution(double t) {
  const double s = std::sin(10.0 * t);
  const double c = std::cos(10.0 * t);
  return s * (99.0 / 10201.0 + t / 101.0) + c * (20.0 / 10201.0 - 10.0 * t / 101.0) -
         10221.0 / 10201.0 * std::exp(-t);
}

IvpSystem oscillating_problem() {
  IvpSystem p;
  p.name = "oscillating";
  p.dim = 1;
  p.residual = [](double t, std::span<const double> u, std::span<const double> du,
                  std::span<double> out) { out[0] = du[0] - t * std::sin(10.0 * t) + u[0]; };
  p.residual_du = [](double, std::span<const double>, std::span<const double>,
                     std::span<double> out) { out[0] = 1.0; };
  p.residual_ddu = [](double, std::span<const double>, std::span<const double>,
                      std::span<double> out) { out[0] = 1.0; };
  p.rhs = [](double t, std::span<const double> u, std::span<double> out) {
    out[0] = t * std::sin(10.0 * t) - u[0];
  };
  p.t0 = 0.0;
  p.u0 = {-1.0};
  p.domain_end = 15.0;
  p.analytic = [](double t) { return State{oscillating_solution(t)}; };
  return p;
}

std::array<double, 3> rigid_body_coefficients(const RigidBodyMoments& m) {
  return {(m.iv - m.iw) / (m.iv * m.iw), (m.iw - m.iu) / (m.iw * m.iu),
          (m.iu - m.iv) / (m.iu * m.iv)};
}

IvpSystem rigid_body_problem(std::span<const double> iv, RigidBodyMoments moments) {
  if (iv.size() != 3) throw ConfigError("rigid body needs 3 initial values");
  for (double x : iv) {
    if (!std::isfinite(x)) throw ConfigError("rigid body initial values must be finite");
  }
  const auto [au, av, aw] = rigid_body_coefficients(moments);

  IvpSystem p;
  p.name = "rigid_body";
  p.dim = 3;
  p.residual = [au, av, aw](double, std::span<const double> u, std::span<const double> du,
                            std::span<double> out) {
    out[0] = du[0] - au * u[1] * u[2];
    out[1] = du[1] - av * u[2] * u[0];
    out[2] = du[2] - aw * u[0] * u[1];
  };
  p.residual_du = [au, av, aw](double, std::span<const double> u, std::span<const double>,
                               std::span<double> out) {
    out[0] = 0.0;
    out[1] = -au * u[2];
    out[2] = -au * u[1];
    out[3] = -av * u[2];
    out[4] = 0.0;
    out[5] = -av * u[0];
    out[6] = -aw * u[1];
    out[7] = -aw * u[0];
    out[8] = 0.0;
  };
  p.residual_ddu = [](double, std::span<const double>, std::span<const double>,
                      std::span<double> out) {
    for (std::size_t i = 0; i < 9; ++i) out[i] = (i % 4 == 0) ? 1.0 : 0.0;
  };
  p.rhs = [au, av, aw](double, std::span<const double> u, std::span<double> out) {
    out[0] = au * u[1] * u[2];
    out[1] = av * u[2] * u[0];
    out[2] = aw * u[0] * u[1];
  };
  p.t0 = 0.0;
  p.u0.assign(iv.begin(), iv.end());
  p.domain_end = 30.0;

  const double iu = moments.iu, ivm = moments.iv, iw = moments.iw;
  Invariants inv;
  inv.count = 2;
  // (R^2, H)
  inv.values = [iu, ivm, iw](std::span<const double> u, std::span<double> out) {
    out[0] = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    out[1] = 0.5 * (u[0] * u[0] / iu + u[1] * u[1] / ivm + u[2] * u[2] / iw);
  };
  inv.gradient = [iu, ivm, iw](std::span<const double> u, std::span<double> out) {
    out[0] = 2.0 * u[0];
    out[1] = 2.0 * u[1];
    out[2] = 2.0 * u[2];
    out[3] = u[0] / iu;
    out[4] = u[1] / ivm;
    out[5] = u[2] / iw;
  };
  p.invariants = std::move(inv);
  return p;
}

std::array<State, 3> rigid_body_initial_values() {
  return {State{std::cos(1.1), 0.6, std::sin(1.1)}, State{std::cos(1.0), 0.7, std::sin(1.0)},
          State{std::cos(1.2), 0.5, std::sin(1.2)}};
}

IvpSystem problem_by_name(const std::string& name, std::span<const double> iv) {
  if (name == "dahlquist") return dahlquist_problem();
  if (name == "oscillating") return oscillating_problem();
  if (name == "rigid_body") {
    if (iv.empty()) return rigid_body_problem(rigid_body_initial_values()[0]);
    return rigid_body_problem(iv);
  }
  throw ConfigError("unknown problem '" + name + "'");
}

}  // namespace cnf

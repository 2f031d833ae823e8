#include <doctest.h>

#include <cmath>

#include "cnf/errors.hpp"
#include "cnf/oracle.hpp"
#include "test_support.hpp"

using namespace cnf;

namespace {

IvpSystem constant_problem(double c) {
  IvpSystem p;
  p.name = "constant";
  p.dim = 1;
  p.residual = [](double, std::span<const double>, std::span<const double> du, std::span<double> out) {
    out[0] = du[0];
  };
  p.rhs = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  p.u0 = {c};
  p.domain_end = 10.0;
  return p;
}

TrainingConfig quick(long epochs) {
  TrainingConfig c;
  c.epochs = epochs;
  c.init = UniformInit{-0.5, 0.5, 3};
  return c;
}

}  // namespace

TEST_CASE("rk4 keeps a constant solution") {
  const auto out = rk4_solve(constant_problem(2.5), std::vector<double>{0.0, 0.3, 1.0, 7.0}, 3);
  REQUIRE(out.size() == 4);
  for (const State& u : out) CHECK(u[0] == 2.5);
}

TEST_CASE("rk4 on Dahlquist is the degree four amplification polynomial") {
  const IvpSystem p = dahlquist_problem();
  const Fragmentation f(0.0, 2.0, 1, 9);
  const auto out = rk4_solve(p, f.points());
  const double z = -10.0 / 9.0;
  const double r = 1 + z + z * z / 2 + z * z * z / 6 + z * z * z * z / 24;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double expected = std::pow(r, static_cast<double>(i));
    CHECK(std::abs(out[i][0] - expected) <= 1e-14 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("rk4 converges at fourth order") {
  const IvpSystem p = oscillating_problem();
  const std::vector<double> grid{0.0, 2.0};
  const double exact = oscillating_solution(2.0);
  const double e1 = std::abs(rk4_solve(p, grid, 100)[1][0] - exact);
  const double e2 = std::abs(rk4_solve(p, grid, 200)[1][0] - exact);
  const double order = std::log2(e1 / e2);
  CHECK(order >= 3.8);
  CHECK(order <= 4.2);
}

TEST_CASE("rk4 input validation") {
  const IvpSystem p = dahlquist_problem();
  CHECK_THROWS_AS(rk4_solve(p, std::vector<double>{0.0, 1.0, 0.5}), ConfigError);
  CHECK_THROWS_AS(rk4_solve(p, std::vector<double>{0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(rk4_solve(p, std::vector<double>{}), ConfigError);
  CHECK_THROWS_AS(rk4_solve(p, std::vector<double>{0.0, 1.0}, 0), ConfigError);
}

TEST_CASE("delta_u identities") {
  const std::vector<double> a{1.0, 1.0}, b{0.0, 2.0};
  CHECK(delta_u(a, a) == 0.0);
  CHECK(delta_u(a, b) == 1.0);
  CHECK(delta_u(b, a) == 1.0);
  CHECK_THROWS_AS(delta_u(a, std::vector<double>{1.0}), ConfigError);
  CHECK_THROWS_AS(delta_u(std::vector<double>{}, std::vector<double>{}), ConfigError);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(7), y(7), xs(7), ys(7);
    const double shift = testing::uniform(-10, 10);
    for (int i = 0; i < 7; ++i) {
      x[i] = testing::uniform(-1, 1);
      y[i] = testing::uniform(-1, 1);
      xs[i] = x[i] + shift;
      ys[i] = y[i] + shift;
    }
    CHECK(delta_u(xs, ys) == doctest::Approx(delta_u(x, y)).epsilon(1e-12));
    CHECK(delta_u(x, y) >= 0.0);
  }
}

TEST_CASE("fragmented errors against the solution itself vanish") {
  const IvpSystem p = oscillating_problem();
  const auto sol = solve_scnf(p, Variant::TSM, 2, 3, quick(50), Fragmentation(0.0, 1.0, 5, 4));
  REQUIRE(sol.complete());
  const auto r = delta_u_fragmented(sol, [&](double t) { return sol.evaluate(t); });
  CHECK(r.delta_u == 0.0);
  CHECK(r.interface_linf == 0.0);
  for (double d : r.delta_u_l) CHECK(d == 0.0);
  CHECK(r.pointwise.size() == 25);
}

TEST_CASE("fragmented error aggregates") {
  const IvpSystem p = dahlquist_problem();
  const Fragmentation f(0.0, 2.0, 4, 6);
  const auto sol = solve_scnf(p, Variant::mTSM, 2, 4, quick(100), f);
  const auto r = delta_u_fragmented(sol, p);
  REQUIRE(r.delta_u_l.size() == 4);
  double mean = 0.0;
  for (std::size_t l = 0; l < 4; ++l) {
    std::vector<double> exact, approx;
    for (double t : f.subdomain(l)) {
      exact.push_back((*p.analytic)(t)[0]);
      approx.push_back(sol.evaluate_in(l, t)[0]);
    }
    CHECK(std::abs(r.delta_u_l[l] - delta_u(exact, approx)) <= 1e-15);
    CHECK(std::abs(r.delta_u_l[l] - *sol.subdomains[l].delta_u) <= 1e-15);
    mean += r.delta_u_l[l] / 4;
  }
  CHECK(std::abs(r.delta_u - mean) <= 1e-14);
  double end = 0.0, start = 0.0;
  for (std::size_t l = 1; l < 4; ++l) {
    const double t = f.start(l);
    end = std::max(end, std::abs((*p.analytic)(t)[0] - sol.evaluate_in(l - 1, t)[0]));
    start = std::max(start, std::abs((*p.analytic)(t)[0] - sol.evaluate_in(l, t)[0]));
  }
  CHECK(r.interface_linf_end == end);
  CHECK(r.interface_linf_start == start);
  CHECK(r.interface_linf == std::max(end, start));
}

TEST_CASE("one subdomain reduces to plain delta_u") {
  const IvpSystem p = dahlquist_problem();
  const Fragmentation f(0.0, 2.0, 1, 9);
  const auto sol = solve_scnf(p, Variant::TSM, 1, 5, quick(30), f);
  const auto r = delta_u_fragmented(sol, p);
  std::vector<double> exact, approx;
  for (double t : f.points()) {
    exact.push_back((*p.analytic)(t)[0]);
    approx.push_back(sol.evaluate(t)[0]);
  }
  CHECK(r.delta_u == delta_u(exact, approx));
  CHECK(r.interface_linf == 0.0);
}

TEST_CASE("errors need a reference") {
  const IvpSystem rb = rigid_body_problem(rigid_body_initial_values()[0]);
  const auto sol = solve_scnf(rb, Variant::TSM, 1, 2, quick(2), Fragmentation(0.0, 1.0, 2, 2));
  CHECK_THROWS_AS(delta_u_fragmented(sol, rb), ConfigError);
  FragmentedSolution empty;
  CHECK_THROWS_AS(delta_u_fragmented(empty, dahlquist_problem()), ConfigError);
}

#include <doctest.h>

#include <cmath>
#include <limits>

#include "cnf/errors.hpp"
#include "cnf/fragmentation.hpp"
#include "test_support.hpp"

using namespace cnf;

namespace {

TrainingConfig quick(long epochs, InitMode init = ConstantInit{0.0}) {
  TrainingConfig c;
  c.epochs = epochs;
  c.batch = BatchMode::FB;
  c.init = init;
  return c;
}

// u' = f(t) where f turns NaN past t = 0.5.
IvpSystem poisoned_problem() {
  IvpSystem p;
  p.name = "poisoned";
  p.dim = 1;
  p.residual = [](double t, std::span<const double>, std::span<const double> du, std::span<double> out) {
    out[0] = du[0] - (t > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 1.0);
  };
  p.residual_du = [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
    out[0] = 0.0;
  };
  p.residual_ddu = [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
    out[0] = 1.0;
  };
  p.u0 = {0.0};
  p.domain_end = 1.0;
  return p;
}

}  // namespace

TEST_CASE("fragmentation point counts") {
  const Fragmentation f(0.0, 15.0, 60, 6);
  CHECK(f.subdomain_count() == 60);
  CHECK(f.points().size() == 361);
  for (std::size_t l = 0; l < 60; ++l) {
    CHECK(f.subdomain(l).size() == 7);
    CHECK(f.end(l) - f.start(l) == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK(f.start(0) == 0.0);
  CHECK(f.end(59) == 15.0);

  const Fragmentation one(0.0, 2.0, 1, 9);
  CHECK(one.points().size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(one.points()[i] == doctest::Approx(2.0 * i / 9).epsilon(1e-15));
}

TEST_CASE("unique points are h * n + 1 for random layouts") {
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 1 + static_cast<std::size_t>(testing::uniform(0, 40));
    const std::size_t n = 1 + static_cast<std::size_t>(testing::uniform(0, 20));
    const double t0 = testing::uniform(-5, 5);
    const Fragmentation f(t0, t0 + testing::uniform(0.1, 20), h, n);
    CHECK(f.points().size() == h * n + 1);
    for (std::size_t l = 1; l < h; ++l) CHECK(f.start(l) == f.end(l - 1));
    for (std::size_t i = 1; i < f.points().size(); ++i) CHECK(f.points()[i] > f.points()[i - 1]);
  }
}

TEST_CASE("interface points belong to the earlier subdomain") {
  const Fragmentation f(0.0, 15.0, 60, 6);
  CHECK(f.locate(0.0) == 0);
  CHECK(f.locate(f.end(0)) == 0);
  CHECK(f.locate(f.end(10)) == 10);
  CHECK(f.locate(std::nextafter(f.end(10), 20.0)) == 11);
  CHECK(f.locate(15.0) == 59);
  for (int trial = 0; trial < 200; ++trial) {
    const double t = testing::uniform(0, 15);
    const std::size_t l = f.locate(t);
    CHECK(t >= f.start(l));
    CHECK(t <= f.end(l));
  }
  CHECK_THROWS_AS(f.locate(-1e-12), RangeError);
  CHECK_THROWS_AS(f.locate(15.0 + 1e-12), RangeError);
  CHECK_THROWS_AS(f.subdomain(60), RangeError);
}

TEST_CASE("invalid fragmentations") {
  CHECK_THROWS_AS(Fragmentation(0.0, 1.0, 0, 5), ConfigError);
  CHECK_THROWS_AS(Fragmentation(0.0, 1.0, 3, 0), ConfigError);
  CHECK_THROWS_AS(Fragmentation(1.0, 1.0, 3, 2), ConfigError);
  CHECK_THROWS_AS(Fragmentation(0.0, NAN, 3, 2), ConfigError);
  CHECK_THROWS_AS(Fragmentation(1.0, std::nextafter(1.0, 2.0), 4, 4), ConfigError);
}

TEST_CASE("one subdomain is plain training") {
  const IvpSystem p = dahlquist_problem();
  const Fragmentation f(0.0, 2.0, 1, 9);
  for (BatchMode b : {BatchMode::SB, BatchMode::FB}) {
    auto cfg = quick(300, ConstantInit{-10.0});
    cfg.batch = b;
    const auto sol = solve_scnf(p, Variant::mTSM, 2, 5, cfg, f);
    const std::vector<NeuralFormSpec> specs{{Variant::mTSM, 0.0, 1.0}};
    const auto tr = train(p, specs, {init_weight_matrix(ConstantInit{-10.0}, 2, 5)}, f.points(), cfg);
    REQUIRE(sol.complete());
    CHECK(sol.subdomains[0].loss_trace == tr.loss_trace);
    CHECK(sol.subdomains[0].Ps == tr.Ps);
    CHECK(sol.subdomains[0].final_cost == tr.loss_trace.back());
  }
}

TEST_CASE("handoff chain") {
  const IvpSystem p = oscillating_problem();
  const Fragmentation f(0.0, 1.0, 4, 5);
  for (Variant v : {Variant::TSM, Variant::mTSM}) {
    const auto sol = solve_scnf(p, v, 2, 4, quick(200), f);
    REQUIRE(sol.complete());
    if (v == Variant::TSM) CHECK(sol.evaluate(0.0) == State{-1.0});
    for (std::size_t l = 0; l < 4; ++l) {
      CHECK(sol.subdomains[l].handoff == sol.evaluate_in(l, f.end(l)));
      if (l > 0) CHECK(sol.anchor(l) == sol.subdomains[l - 1].handoff);
    }
    if (v == Variant::TSM) {
      for (std::size_t l = 1; l < 4; ++l) {
        const double t = f.start(l);
        CHECK(std::abs(sol.evaluate_in(l, t)[0] - sol.evaluate_in(l - 1, t)[0]) <= 1e-14);
      }
    }
  }
}

TEST_CASE("evaluate range checks") {
  const IvpSystem p = dahlquist_problem();
  const auto sol = solve_scnf(p, Variant::TSM, 1, 3, quick(5), Fragmentation(0.0, 2.0, 3, 4));
  CHECK(sol.evaluate(0.0)[0] == 1.0);
  CHECK_THROWS_AS(sol.evaluate(-0.01), RangeError);
  CHECK_THROWS_AS(sol.evaluate(2.01), RangeError);
  CHECK_THROWS_AS(sol.evaluate_in(3, 1.0), RangeError);
  CHECK_THROWS_AS(solve_scnf(p, Variant::TSM, 1, 3, quick(5), Fragmentation(0.0, 3.0, 3, 4)), ConfigError);
  CHECK_THROWS_AS(solve_scnf(p, Variant::TSM, 0, 3, quick(5), Fragmentation(0.0, 2.0, 3, 4)), ConfigError);
}

TEST_CASE("retraining a subdomain from its anchor reproduces it bitwise") {
  const IvpSystem p = oscillating_problem();
  const Fragmentation f(0.0, 1.5, 6, 5);
  const auto cfg = quick(150, UniformInit{-0.5, 0.5, 11});
  const auto sol = solve_scnf(p, Variant::mTSM, 3, 4, cfg, f);
  REQUIRE(sol.complete());
  for (std::size_t l : {0u, 2u, 5u}) {
    const auto again = solve_subdomain(p, Variant::mTSM, 3, 4, cfg, f.subdomain(l), sol.anchor(l), 0);
    CHECK(again.Ps == sol.subdomains[l].Ps);
    CHECK(again.loss_trace == sol.subdomains[l].loss_trace);
    CHECK(again.handoff == sol.subdomains[l].handoff);
  }
}

TEST_CASE("initial weights per subdomain") {
  const IvpSystem p = dahlquist_problem();
  const Fragmentation f(0.0, 2.0, 3, 3);
  const UniformInit mode{-1.0, 1.0, 5};
  const auto shared = solve_scnf(p, Variant::TSM, 2, 3, quick(0, mode), f);
  ScnfOptions opts;
  opts.independent_init = true;
  const auto fresh = solve_scnf(p, Variant::TSM, 2, 3, quick(0, mode), f, opts);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(shared.subdomains[l].Ps[0] == init_weight_matrix(mode, 2, 3, 0, 0));
    CHECK(fresh.subdomains[l].Ps[0] == init_weight_matrix(mode, 2, 3, 0, l));
  }
  CHECK(fresh.subdomains[1].Ps[0] != fresh.subdomains[0].Ps[0]);
}

TEST_CASE("traces can be dropped") {
  ScnfOptions opts;
  opts.keep_traces = false;
  const auto sol = solve_scnf(dahlquist_problem(), Variant::TSM, 1, 3, quick(20), Fragmentation(0.0, 2.0, 2, 3), opts);
  CHECK(sol.subdomains[1].loss_trace.empty());
  CHECK(sol.subdomains[1].final_cost > 0.0);
}

TEST_CASE("divergence leaves a partial solution") {
  const IvpSystem p = poisoned_problem();
  const Fragmentation f(0.0, 1.0, 4, 3);
  const auto sol = solve_scnf(p, Variant::TSM, 1, 3, quick(10), f);
  CHECK_FALSE(sol.complete());
  REQUIRE(sol.failed_at);
  CHECK(*sol.failed_at == 2);
  CHECK(sol.subdomains.size() == 2);
  CHECK_FALSE(sol.failure.empty());
  CHECK(std::isfinite(sol.evaluate(0.4)[0]));
  CHECK_THROWS_AS(sol.evaluate(0.8), RangeError);
}

TEST_CASE("rigid body system is solved component-wise with a joint cost") {
  const IvpSystem p = rigid_body_problem(rigid_body_initial_values()[0]);
  auto cfg = quick(100);
  cfg.penalise_invariants = true;
  const auto sol = solve_scnf_system(p, Variant::mTSM, 2, 3, cfg, Fragmentation(0.0, 1.0, 2, 4));
  REQUIRE(sol.complete());
  CHECK(sol.subdomains[0].Ps.size() == 3);
  CHECK(sol.evaluate(0.7).size() == 3);
  CHECK_FALSE(sol.subdomains[0].delta_u);
}

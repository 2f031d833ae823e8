#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "cnf/errors.hpp"
#include "cnf/ffnn.hpp"
#include "cnf/neural_form.hpp"
#include "test_support.hpp"

using namespace cnf;

namespace {

// sigma(-10) to 17 significant digits (mpmath).
constexpr double kSigmaMinus10 = 4.5397868702434395e-05;

double plain_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Counter hash rebuilt from its written description.
std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t reference_hash(std::uint64_t seed, std::uint64_t sub, std::uint64_t comp,
                             std::uint64_t net, std::uint64_t idx) {
  const std::uint64_t g = 0x9E3779B97F4A7C15ULL;
  std::uint64_t h = mix(seed + g);
  for (std::uint64_t x : {sub, comp, net, idx}) h = mix(h + g * (x + 1));
  return h;
}

}  // namespace

TEST_CASE("sigmoid reference values") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(std::abs(sigmoid(-10.0) - kSigmaMinus10) < 1e-9);
}

TEST_CASE("sigmoid is stable and symmetric") {
  for (double z : {-700.0, -100.0, 100.0, 700.0}) {
    const double s = sigmoid(z);
    CHECK(std::isfinite(s));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  CHECK(sigmoid(-700.0) > 0.0);
  for (int i = 0; i <= 600; ++i) {
    const double z = -30.0 + 0.1 * i;
    CHECK(std::abs(sigmoid(z) + sigmoid(-z) - 1.0) <= 1e-15);
  }
}

TEST_CASE("network_eval examples") {
  SUBCASE("zero weights") {
    const NetworkWeights w(4);
    for (double t : {-3.0, 0.0, 2.5}) {
      const auto n = network_eval(w, t);
      CHECK(n.value == 0.0);
      CHECK(n.dvalue_dt == 0.0);
    }
  }
  SUBCASE("all weights -10, H = 5, t = 0") {
    const NetworkWeights w(5, -10.0);
    const double s = 1.0 / (1.0 + std::exp(10.0));
    const auto n = network_eval(w, 0.0);
    CHECK(n.value == doctest::Approx(5 * (-10.0) * s + (-10.0)).epsilon(1e-14));
    CHECK(n.dvalue_dt == doctest::Approx(5 * (-10.0) * s * (1 - s) * (-10.0)).epsilon(1e-14));
  }
  SUBCASE("single neuron") {
    NetworkWeights w(1);
    w.nu()[0] = 1.0;
    w.rho()[0] = 1.0;
    const auto n = network_eval(w, 0.0);
    CHECK(n.value == 0.5);
    CHECK(n.dvalue_dt == 0.25);
  }
}

TEST_CASE("flat layout is nu, eta, rho, gamma") {
  NetworkWeights w(3);
  CHECK(w.size() == 10);
  CHECK(NetworkWeights::size_for(5) == 16);
  for (std::size_t i = 0; i < w.size(); ++i) w.flat()[i] = static_cast<double>(i);
  CHECK(w.nu()[0] == 0.0);
  CHECK(w.eta()[0] == 3.0);
  CHECK(w.rho()[0] == 6.0);
  CHECK(w.gamma() == 9.0);
}

TEST_CASE("network_eval matches a direct sum") {
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkWeights w = testing::random_weights(6, -2, 2);
    const double t = testing::uniform(-5, 5);
    double value = w.gamma(), dvalue = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      const double s = plain_sigmoid(w.nu()[j] * t + w.eta()[j]);
      value += w.rho()[j] * s;
      dvalue += w.rho()[j] * s * (1 - s) * w.nu()[j];
    }
    const auto n = network_eval(w, t);
    CHECK(n.value == doctest::Approx(value).epsilon(1e-13));
    CHECK(n.dvalue_dt == doctest::Approx(dvalue).epsilon(1e-13));
  }
}

TEST_CASE("network gradient closed forms at zero weights") {
  const NetworkWeights w(3);
  const auto g = network_gradients(w, 1.0);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(g.value.rho()[j] == 0.5);
    CHECK(g.value.nu()[j] == 0.0);
    CHECK(g.value.eta()[j] == 0.0);
  }
  CHECK(g.value.gamma() == 1.0);
  CHECK(g.dvalue_dt.gamma() == 0.0);
}

TEST_CASE("network gradients agree with central differences") {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t hidden = 1 + static_cast<std::size_t>(trial % 6);
    const NetworkWeights w = testing::random_weights(hidden);
    const double t = trial == 0 ? 0.3 : testing::uniform(-2, 2);
    const auto g = network_gradients(w, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      auto value_at = [&](double x) {
        NetworkWeights v = w;
        v.flat()[i] = x;
        return network_eval(v, t).value;
      };
      auto deriv_at = [&](double x) {
        NetworkWeights v = w;
        v.flat()[i] = x;
        return network_eval(v, t).dvalue_dt;
      };
      const double p = w.flat()[i];
      CHECK(testing::close(g.value.flat()[i], testing::central(value_at, p), 1e-6, 1e-9));
      CHECK(testing::close(g.dvalue_dt.flat()[i], testing::central(deriv_at, p), 1e-6, 1e-9));
    }
  }
}

TEST_CASE("dN/dt agrees with a finite difference in t") {
  for (int trial = 0; trial < 100; ++trial) {
    const NetworkWeights w = testing::random_weights(5);
    const double t = testing::uniform(-15, 15);
    const double fd = testing::central4([&](double s) { return network_eval(w, s).value; }, t);
    CHECK(testing::close(network_eval(w, t).dvalue_dt, fd, 1e-8, 1e-12));
  }
}

TEST_CASE("constant initialisation") {
  const NetworkWeights w = init_weights(ConstantInit{-10.0}, 5);
  CHECK(w.size() == 16);
  for (double x : w.flat()) CHECK(x == -10.0);
}

TEST_CASE("uniform initialisation") {
  const UniformInit mode{-10.5, -9.5, 7};
  const NetworkWeights w = init_weights(mode, 5, StreamIndex{2, 0, 0});
  for (double x : w.flat()) {
    CHECK(x >= -10.5);
    CHECK(x < -9.5);
  }
  SUBCASE("bit reproducible") {
    CHECK(init_weights(mode, 5, StreamIndex{2, 0, 0}) == w);
  }
  SUBCASE("network k is independent of the order m") {
    const WeightMatrix m1 = init_weight_matrix(mode, 1, 5);
    const WeightMatrix m3 = init_weight_matrix(mode, 3, 5);
    CHECK(m1.networks[0] == m3.networks[0]);
    CHECK(m3.networks[1] != m3.networks[0]);
  }
  SUBCASE("streams differ by seed and position") {
    CHECK(init_weights(UniformInit{-10.5, -9.5, 8}, 5, StreamIndex{2, 0, 0}) != w);
    CHECK(init_weights(mode, 5, StreamIndex{2, 1, 0}) != w);
    CHECK(init_weights(mode, 5, StreamIndex{2, 0, 1}) != w);
  }
  SUBCASE("invalid range") {
    CHECK_THROWS_AS(init_weights(UniformInit{1.0, 1.0, 0}, 5), ConfigError);
    CHECK_THROWS_AS(init_weights(UniformInit{2.0, 1.0, 0}, 5), ConfigError);
    CHECK_THROWS_AS(init_weights(ConstantInit{0.0}, 0), ConfigError);
  }
}

TEST_CASE("counter hash follows the documented construction") {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xFFFFFFFFFFFFFFFFULL}) {
    for (std::uint64_t idx = 0; idx < 20; ++idx) {
      const StreamIndex where{idx % 3, idx % 2, idx % 5};
      CHECK(counter_hash(seed, where, idx) ==
            reference_hash(seed, where.subdomain, where.component, where.network, idx));
    }
  }
  CHECK(unit_interval(0) == 0.0);
  CHECK(unit_interval(~0ULL) == 1.0 - 0x1.0p-53);
  CHECK(unit_interval(1ULL << 63) == 0.5);
}

TEST_CASE("uniform draws are spread over the range") {
  const UniformInit mode{0.0, 1.0, 3};
  double sum = 0.0;
  int n = 0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const NetworkWeights w = init_weights(mode, 10, StreamIndex{k, 0, 0});
    for (double x : w.flat()) {
      sum += x;
      ++n;
    }
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

#include "cnf/ffnn.hpp"

#include <cmath>

#include "cnf/errors.hpp"

namespace cnf {

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void compute_activations(const NetworkWeights& w, double t, std::span<double> activations) {
  const auto nu = w.nu();
  const auto eta = w.eta();
  for (std::size_t j = 0; j < w.hidden(); ++j) activations[j] = sigmoid(nu[j] * t + eta[j]);
}

NetworkOutput network_eval(const NetworkWeights& w, std::span<const double> activations) {
  const auto nu = w.nu();
  const auto rho = w.rho();
  NetworkOutput out;
  for (std::size_t j = 0; j < w.hidden(); ++j) {
    const double s = activations[j];
    out.value += rho[j] * s;
    out.dvalue_dt += rho[j] * s * (1.0 - s) * nu[j];
  }
  out.value += w.gamma();
  return out;
}

NetworkOutput network_eval(const NetworkWeights& w, double t) {
  std::vector<double> act(w.hidden());
  compute_activations(w, t, act);
  return network_eval(w, act);
}

void accumulate_network_gradients(const NetworkWeights& w, double t,
                                  std::span<const double> activations, double c_value,
                                  double c_dvalue, std::span<double> out) {
  const std::size_t h = w.hidden();
  const auto nu = w.nu();
  const auto rho = w.rho();
  double* d_nu = out.data();
  double* d_eta = out.data() + h;
  double* d_rho = out.data() + 2 * h;
  for (std::size_t j = 0; j < h; ++j) {
    const double s = activations[j];
    const double s1 = s * (1.0 - s);
    const double s2 = s1 * (1.0 - 2.0 * s);
    d_nu[j] += c_value * rho[j] * s1 * t + c_dvalue * rho[j] * (s1 + s2 * nu[j] * t);
    d_eta[j] += c_value * rho[j] * s1 + c_dvalue * rho[j] * s2 * nu[j];
    d_rho[j] += c_value * s + c_dvalue * s1 * nu[j];
  }
  out[3 * h] += c_value;
}

NetworkGradients network_gradients(const NetworkWeights& w, double t) {
  std::vector<double> act(w.hidden());
  compute_activations(w, t, act);
  NetworkGradients g{WeightGradient(w.hidden()), WeightGradient(w.hidden())};
  accumulate_network_gradients(w, t, act, 1.0, 0.0, g.value.flat());
  accumulate_network_gradients(w, t, act, 0.0, 1.0, g.dvalue_dt.flat());
  return g;
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix_finalise(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t absorb(std::uint64_t h, std::uint64_t x) noexcept {
  return splitmix_finalise(h + kGolden * (x + 1));
}

}  // namespace

std::uint64_t counter_hash(std::uint64_t seed, const StreamIndex& where,
                           std::uint64_t weight_index) {
  std::uint64_t h = splitmix_finalise(seed + kGolden);
  h = absorb(h, where.subdomain);
  h = absorb(h, where.component);
  h = absorb(h, where.network);
  return absorb(h, weight_index);
}

double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

NetworkWeights init_weights(const InitMode& mode, std::size_t hidden, StreamIndex where) {
  if (hidden < 1) throw ConfigError("hidden neuron count must be at least 1");
  if (const auto* c = std::get_if<ConstantInit>(&mode)) {
    if (!std::isfinite(c->value)) throw ConfigError("constant initial weight must be finite");
    return NetworkWeights(hidden, c->value);
  }
  const auto& u = std::get<UniformInit>(mode);
  if (!(u.lo < u.hi) || !std::isfinite(u.lo) || !std::isfinite(u.hi)) {
    throw ConfigError("uniform initialisation needs finite lo < hi");
  }
  NetworkWeights w(hidden);
  auto flat = w.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    flat[i] = u.lo + (u.hi - u.lo) * unit_interval(counter_hash(u.seed, where, i));
  }
  return w;
}

}  // namespace cnf

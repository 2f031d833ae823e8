#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace cnf {

/// Parameters of a one-hidden-layer sigmoid network stored flat as
/// [nu_1..nu_H, eta_1..eta_H, rho_1..rho_H, gamma]. The tag separates
/// weights from gradients of the same shape.
template <class Tag>
class ParameterBlock {
 public:
  ParameterBlock() = default;
  explicit ParameterBlock(std::size_t hidden, double fill = 0.0)
      : hidden_(hidden), values_(3 * hidden + 1, fill) {}

  static std::size_t size_for(std::size_t hidden) { return 3 * hidden + 1; }

  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> nu() noexcept { return {values_.data(), hidden_}; }
  std::span<double> eta() noexcept { return {values_.data() + hidden_, hidden_}; }
  std::span<double> rho() noexcept { return {values_.data() + 2 * hidden_, hidden_}; }
  double& gamma() noexcept { return values_.back(); }

  std::span<const double> nu() const noexcept { return {values_.data(), hidden_}; }
  std::span<const double> eta() const noexcept { return {values_.data() + hidden_, hidden_}; }
  std::span<const double> rho() const noexcept { return {values_.data() + 2 * hidden_, hidden_}; }
  double gamma() const noexcept { return values_.back(); }

  std::span<double> flat() noexcept { return values_; }
  std::span<const double> flat() const noexcept { return values_; }

  bool operator==(const ParameterBlock&) const = default;

 private:
  std::size_t hidden_ = 0;
  std::vector<double> values_;
};

using NetworkWeights = ParameterBlock<struct NetworkWeightsTag>;
using WeightGradient = ParameterBlock<struct WeightGradientTag>;

double sigmoid(double z) noexcept;

struct NetworkOutput {
  double value = 0.0;
  double dvalue_dt = 0.0;
};

/// N(t) = sum_j rho_j sigma(nu_j t + eta_j) + gamma, and its time derivative.
NetworkOutput network_eval(const NetworkWeights& w, double t);

struct NetworkGradients {
  WeightGradient value;
  WeightGradient dvalue_dt;
};

/// Weight gradients of N and dN/dt at t.
NetworkGradients network_gradients(const NetworkWeights& w, double t);

/// Writes sigma(nu_j t + eta_j) for every hidden neuron into `activations`.
void compute_activations(const NetworkWeights& w, double t, std::span<double> activations);

/// network_eval given precomputed activations.
NetworkOutput network_eval(const NetworkWeights& w, std::span<const double> activations);

/// out += c_value * dN/dp + c_dvalue * d(dN/dt)/dp, using precomputed activations.
void accumulate_network_gradients(const NetworkWeights& w, double t,
                                  std::span<const double> activations, double c_value,
                                  double c_dvalue, std::span<double> out);

struct ConstantInit {
  double value = 0.0;
};

struct UniformInit {
  double lo = -0.5;
  double hi = 0.5;
  std::uint64_t seed = 0;
};

using InitMode = std::variant<ConstantInit, UniformInit>;

/// Position of one network in a weight stream. Network k of component c in
/// subdomain l always receives the same draw, independent of the order m.
struct StreamIndex {
  std::uint64_t network = 0;
  std::uint64_t component = 0;
  std::uint64_t subdomain = 0;
};

/// Counter-based generator: splitmix64 finaliser over a key built from
/// (seed, subdomain, component, network, weight index); README.md has the
/// exact constants.
std::uint64_t counter_hash(std::uint64_t seed, const StreamIndex& where, std::uint64_t weight_index);

/// Maps a 64-bit draw to [0, 1) using its top 53 bits.
double unit_interval(std::uint64_t bits) noexcept;

NetworkWeights init_weights(const InitMode& mode, std::size_t hidden, StreamIndex where = {});

}  // namespace cnf

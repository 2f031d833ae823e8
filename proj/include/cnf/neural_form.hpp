#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cnf/ffnn.hpp"

namespace cnf {

enum class Variant { TSM, mTSM };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// The m networks of one neural form, network k multiplying the k-th power
/// of the shifted time (k-1 for mTSM).
struct WeightMatrix {
  std::vector<NetworkWeights> networks;

  WeightMatrix() = default;
  explicit WeightMatrix(std::vector<NetworkWeights> nets);

  std::size_t order() const noexcept { return networks.size(); }
  std::size_t hidden() const noexcept { return networks.empty() ? 0 : networks.front().hidden(); }
  /// Total number of weights, m * (3H + 1).
  std::size_t parameter_count() const noexcept;

  bool operator==(const WeightMatrix&) const = default;
};

/// m networks initialised per `mode`, network k drawn from stream k.
WeightMatrix init_weight_matrix(const InitMode& mode, std::size_t order, std::size_t hidden,
                                std::size_t component = 0, std::size_t subdomain = 0);

struct NeuralFormSpec {
  Variant variant = Variant::TSM;
  double t0 = 0.0;
  /// Enforced initial value for TSM; the target of network 1 for mTSM.
  double u0 = 0.0;
};

struct NeuralFormValue {
  double value = 0.0;
  double dvalue_dt = 0.0;
};

/// Collocation neural form in the shifted time s = t - t0, which is also the
/// network input:
///   TSM:  u0 + sum_{k=1}^m N_k(s) s^k
///   mTSM: N_1(s) + sum_{k=2}^m N_k(s) s^{k-1}
NeuralFormValue nf_eval(const NeuralFormSpec& spec, const WeightMatrix& P, double t);

struct NeuralFormGradients {
  std::vector<WeightGradient> value;
  std::vector<WeightGradient> dvalue_dt;
};

NeuralFormGradients nf_weight_grads(const NeuralFormSpec& spec, const WeightMatrix& P, double t);

/// Per-network activations of a whole weight matrix at one shifted time.
/// Buffers are reused across calls.
class FormActivations {
 public:
  void compute(const NeuralFormSpec& spec, const WeightMatrix& P, double t);
  std::span<const double> network(std::size_t k) const {
    return {act_.data() + k * hidden_, hidden_};
  }
  /// s = t - t0
  double shifted_time() const noexcept { return s_; }

 private:
  std::vector<double> act_;
  std::size_t hidden_ = 0;
  double s_ = 0.0;
};

NeuralFormValue nf_eval(const NeuralFormSpec& spec, const WeightMatrix& P,
                        const FormActivations& act);

/// out (flattened over the m networks) += c_value * d(value)/dp + c_dvalue * d(dvalue_dt)/dp.
void accumulate_nf_gradients(const NeuralFormSpec& spec, const WeightMatrix& P,
                             const FormActivations& act, double c_value, double c_dvalue,
                             std::span<double> out);

}  // namespace cnf

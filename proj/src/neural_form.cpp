#include "cnf/neural_form.hpp"

#include "cnf/errors.hpp"

namespace cnf {

std::string to_string(Variant v) { return v == Variant::TSM ? "TSM" : "mTSM"; }

Variant parse_variant(const std::string& s) {
  if (s == "TSM" || s == "tsm") return Variant::TSM;
  if (s == "mTSM" || s == "mtsm" || s == "MTSM") return Variant::mTSM;
  throw ConfigError("unknown variant '" + s + "' (expected TSM or mTSM)");
}

WeightMatrix::WeightMatrix(std::vector<NetworkWeights> nets) : networks(std::move(nets)) {
  if (networks.empty()) throw ConfigError("weight matrix needs at least one network");
  for (const auto& n : networks) {
    if (n.hidden() != networks.front().hidden()) {
      throw ConfigError("all networks of a weight matrix must share the hidden width");
    }
  }
}

std::size_t WeightMatrix::parameter_count() const noexcept {
  return networks.size() * NetworkWeights::size_for(hidden());
}

WeightMatrix init_weight_matrix(const InitMode& mode, std::size_t order, std::size_t hidden,
                                std::size_t component, std::size_t subdomain) {
  if (order < 1) throw ConfigError("neural form order must be at least 1");
  std::vector<NetworkWeights> nets;
  nets.reserve(order);
  for (std::size_t k = 0; k < order; ++k) {
    nets.push_back(init_weights(mode, hidden, StreamIndex{k, component, subdomain}));
  }
  return WeightMatrix(std::move(nets));
}

void FormActivations::compute(const NeuralFormSpec& spec, const WeightMatrix& P, double t) {
  hidden_ = P.hidden();
  s_ = t - spec.t0;
  act_.resize(P.order() * hidden_);
  for (std::size_t k = 0; k < P.order(); ++k) {
    compute_activations(P.networks[k], s_, {act_.data() + k * hidden_, hidden_});
  }
}

// Network index k (0-based) multiplies s^(k + 1 - offset), offset 0 for TSM
// and 1 for mTSM. Powers are built by repeated multiplication so s^0 = 1
// holds at s = 0.
namespace {

struct PowerTerm {
  double power;       // s^e
  double dpower;      // e * s^(e-1), zero when e = 0
};

PowerTerm power_term(double s, std::size_t e) {
  double p = 1.0;
  double p_prev = 1.0;  // s^(e-1) for e >= 1
  for (std::size_t i = 0; i < e; ++i) {
    p_prev = p;
    p *= s;
  }
  return {p, e == 0 ? 0.0 : static_cast<double>(e) * p_prev};
}

std::size_t exponent(Variant v, std::size_t k) { return v == Variant::TSM ? k + 1 : k; }

}  // namespace

NeuralFormValue nf_eval(const NeuralFormSpec& spec, const WeightMatrix& P,
                        const FormActivations& act) {
  const double s = act.shifted_time();
  NeuralFormValue out;
  if (spec.variant == Variant::TSM) out.value = spec.u0;
  for (std::size_t k = 0; k < P.order(); ++k) {
    const NetworkOutput n = network_eval(P.networks[k], act.network(k));
    const PowerTerm pt = power_term(s, exponent(spec.variant, k));
    out.value += n.value * pt.power;
    out.dvalue_dt += n.dvalue_dt * pt.power + n.value * pt.dpower;
  }
  return out;
}

NeuralFormValue nf_eval(const NeuralFormSpec& spec, const WeightMatrix& P, double t) {
  FormActivations act;
  act.compute(spec, P, t);
  return nf_eval(spec, P, act);
}

void accumulate_nf_gradients(const NeuralFormSpec& spec, const WeightMatrix& P,
                             const FormActivations& act, double c_value, double c_dvalue,
                             std::span<double> out) {
  const double s = act.shifted_time();
  const std::size_t block = NetworkWeights::size_for(P.hidden());
  for (std::size_t k = 0; k < P.order(); ++k) {
    const PowerTerm pt = power_term(s, exponent(spec.variant, k));
    // value_k = N_k s^e, dvalue_k = N'_k s^e + N_k e s^(e-1)
    const double cn = c_value * pt.power + c_dvalue * pt.dpower;
    const double cd = c_dvalue * pt.power;
    if (cn == 0.0 && cd == 0.0) continue;
    accumulate_network_gradients(P.networks[k], s, act.network(k), cn, cd,
                                 out.subspan(k * block, block));
  }
}

NeuralFormGradients nf_weight_grads(const NeuralFormSpec& spec, const WeightMatrix& P, double t) {
  FormActivations act;
  act.compute(spec, P, t);
  const std::size_t block = NetworkWeights::size_for(P.hidden());
  std::vector<double> gv(P.parameter_count(), 0.0), gd(P.parameter_count(), 0.0);
  accumulate_nf_gradients(spec, P, act, 1.0, 0.0, gv);
  accumulate_nf_gradients(spec, P, act, 0.0, 1.0, gd);
  NeuralFormGradients out;
  for (std::size_t k = 0; k < P.order(); ++k) {
    WeightGradient a(P.hidden()), b(P.hidden());
    std::copy_n(gv.begin() + k * block, block, a.flat().begin());
    std::copy_n(gd.begin() + k * block, block, b.flat().begin());
    out.value.push_back(std::move(a));
    out.dvalue_dt.push_back(std::move(b));
  }
  return out;
}

}  // namespace cnf

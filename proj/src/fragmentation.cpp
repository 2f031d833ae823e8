#include "cnf/fragmentation.hpp"

#include <algorithm>
#include <cmath>

#include "cnf/errors.hpp"

namespace cnf {

Fragmentation::Fragmentation(double t0, double t_end, std::size_t h, std::size_t n)
    : t0_(t0), t_end_(t_end), h_(h), n_(n) {
  if (!std::isfinite(t0) || !std::isfinite(t_end) || !(t_end > t0)) {
    throw ConfigError("fragmentation needs finite t0 < t_end");
  }
  if (h < 1) throw ConfigError("fragmentation needs at least one subdomain");
  if (n < 1) throw ConfigError("subdomains need at least two points");
  const std::size_t total = h * n;
  points_.resize(total + 1);
  const double span = t_end - t0;
  for (std::size_t i = 0; i <= total; ++i) {
    points_[i] = t0 + span * static_cast<double>(i) / static_cast<double>(total);
  }
  points_.back() = t_end;
  for (std::size_t i = 1; i <= total; ++i) {
    if (!(points_[i] > points_[i - 1])) throw ConfigError("subdomain width is not positive");
  }
}

std::span<const double> Fragmentation::subdomain(std::size_t l) const {
  if (l >= h_) throw RangeError("subdomain index " + std::to_string(l) + " out of range");
  return std::span<const double>(points_).subspan(l * n_, n_ + 1);
}

std::size_t Fragmentation::locate(double t) const {
  if (!(t >= t0_ && t <= t_end_)) {
    throw RangeError("t = " + std::to_string(t) + " outside [" + std::to_string(t0_) + ", " +
                     std::to_string(t_end_) + "]");
  }
  // First subdomain whose end point is >= t.
  std::size_t lo = 0, hi = h_ - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (points_[(mid + 1) * n_] >= t) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

Fragmentation make_fragmentation(double t0, double t_end, std::size_t h, std::size_t n) {
  return Fragmentation(t0, t_end, h, n);
}

const State& FragmentedSolution::anchor(std::size_t l) const {
  if (l == 0) return initial;
  if (l > subdomains.size()) throw RangeError("anchor of untrained subdomain");
  return subdomains[l - 1].handoff;
}

std::vector<NeuralFormSpec> FragmentedSolution::specs(std::size_t l) const {
  const State& a = anchor(l);
  const double t_start = frag.start(l);
  std::vector<NeuralFormSpec> out;
  out.reserve(dim);
  for (std::size_t c = 0; c < dim; ++c) out.push_back({variant, t_start, a[c]});
  return out;
}

State FragmentedSolution::evaluate_in(std::size_t l, double t) const {
  if (l >= subdomains.size()) throw RangeError("subdomain " + std::to_string(l) + " not trained");
  const auto sp = specs(l);
  State out(dim);
  for (std::size_t c = 0; c < dim; ++c) out[c] = nf_eval(sp[c], subdomains[l].Ps[c], t).value;
  return out;
}

State FragmentedSolution::evaluate(double t) const { return evaluate_in(frag.locate(t), t); }

SubdomainSolution solve_subdomain(const IvpSystem& problem, Variant variant, std::size_t order,
                                  std::size_t hidden, const TrainingConfig& cfg,
                                  std::span<const double> grid, const State& anchor,
                                  std::size_t init_stream, bool keep_trace) {
  if (anchor.size() != problem.dim) throw ConfigError("anchor has wrong dimension");
  std::vector<NeuralFormSpec> specs;
  std::vector<WeightMatrix> Ps;
  for (std::size_t c = 0; c < problem.dim; ++c) {
    specs.push_back({variant, grid.front(), anchor[c]});
    Ps.push_back(init_weight_matrix(cfg.init, order, hidden, c, init_stream));
  }
  TrainResult tr = run_training(problem, specs, std::move(Ps), grid, cfg);

  SubdomainSolution sub;
  sub.final_cost = tr.loss_trace.empty() ? tr.initial_cost : tr.loss_trace.back();
  sub.handoff.resize(problem.dim);
  for (std::size_t c = 0; c < problem.dim; ++c) {
    sub.handoff[c] = nf_eval(specs[c], tr.Ps[c], grid.back()).value;
  }
  if (keep_trace) sub.loss_trace = std::move(tr.loss_trace);
  sub.Ps = std::move(tr.Ps);
  if (problem.analytic && problem.dim == 1) {
    double sum = 0.0;
    for (double t : grid) {
      sum += std::abs((*problem.analytic)(t)[0] - nf_eval(specs[0], sub.Ps[0], t).value);
    }
    sub.delta_u = sum / static_cast<double>(grid.size());
  }
  return sub;
}

FragmentedSolution solve_scnf(const IvpSystem& problem, Variant variant, std::size_t order,
                              std::size_t hidden, const TrainingConfig& cfg,
                              const Fragmentation& frag, const ScnfOptions& options) {
  cfg.validate();
  if (order < 1 || hidden < 1) throw ConfigError("order and hidden width must be positive");
  if (problem.u0.size() != problem.dim) throw ConfigError("u0 has wrong dimension");
  if (frag.t0() != problem.t0 || frag.t_end() > problem.domain_end) {
    throw ConfigError("fragmentation does not match the problem domain");
  }

  FragmentedSolution sol;
  sol.variant = variant;
  sol.order = order;
  sol.hidden = hidden;
  sol.dim = problem.dim;
  sol.frag = frag;
  sol.initial = problem.u0;
  sol.subdomains.reserve(frag.subdomain_count());

  for (std::size_t l = 0; l < frag.subdomain_count(); ++l) {
    const std::size_t stream = options.independent_init ? l : 0;
    try {
      sol.subdomains.push_back(solve_subdomain(problem, variant, order, hidden, cfg,
                                               frag.subdomain(l), sol.anchor(l), stream,
                                               options.keep_traces));
    } catch (const DivergenceError& e) {
      sol.failed_at = l;
      sol.failure = e.what();
      break;
    }
    for (double v : sol.subdomains.back().handoff) {
      if (!std::isfinite(v)) {
        sol.failed_at = l;
        sol.failure = "non-finite handoff value";
        sol.subdomains.pop_back();
        return sol;
      }
    }
  }
  return sol;
}

FragmentedSolution solve_scnf_system(const IvpSystem& problem, Variant variant,
                                     std::size_t order, std::size_t hidden,
                                     const TrainingConfig& cfg, const Fragmentation& frag,
                                     const ScnfOptions& options) {
  return solve_scnf(problem, variant, order, hidden, cfg, frag, options);
}

}  // namespace cnf

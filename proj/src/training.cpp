#include "cnf/training.hpp"

#include <cmath>
#include <limits>

#include "cnf/errors.hpp"

namespace cnf {

std::string to_string(BatchMode b) { return b == BatchMode::SB ? "SB" : "FB"; }

BatchMode parse_batch_mode(const std::string& s) {
  if (s == "SB" || s == "sb") return BatchMode::SB;
  if (s == "FB" || s == "fb") return BatchMode::FB;
  throw ConfigError("unknown batch mode '" + s + "' (expected SB or FB)");
}

void TrainingConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(adam.alpha > 0.0)) throw ConfigError("adam alpha must be positive");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0)) throw ConfigError("adam beta1 must lie in (0,1)");
  if (!(adam.beta2 > 0.0 && adam.beta2 < 1.0)) throw ConfigError("adam beta2 must lie in (0,1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (const auto* u = std::get_if<UniformInit>(&init); u && !(u->lo < u->hi)) {
    throw ConfigError("uniform initialisation needs lo < hi");
  }
}

void adam_step(AdamState& state, std::span<double> weights, std::span<const double> grad,
               const AdamParams& p) {
  if (weights.size() != grad.size() || state.m1.size() != grad.size() ||
      state.m2.size() != grad.size()) {
    throw ConfigError("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw DivergenceError("non-finite gradient entry " + std::to_string(i), state.step);
    }
  }
  const long t = ++state.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    state.m1[i] = p.beta1 * state.m1[i] + (1.0 - p.beta1) * g;
    state.m2[i] = p.beta2 * state.m2[i] + (1.0 - p.beta2) * g * g;
    const double mhat = state.m1[i] / c1;
    const double vhat = state.m2[i] / c2;
    weights[i] -= p.alpha * mhat / (std::sqrt(vhat) + p.epsilon);
  }
}

std::vector<double> flatten(std::span<const WeightMatrix> Ps) {
  std::vector<double> out;
  for (const auto& P : Ps) {
    for (const auto& net : P.networks) out.insert(out.end(), net.flat().begin(), net.flat().end());
  }
  return out;
}

void unflatten(std::span<const double> flat, std::span<WeightMatrix> Ps) {
  std::size_t pos = 0;
  for (auto& P : Ps) {
    for (auto& net : P.networks) {
      auto dst = net.flat();
      if (pos + dst.size() > flat.size()) throw ConfigError("unflatten: vector too short");
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), dst.size(), dst.begin());
      pos += dst.size();
    }
  }
  if (pos != flat.size()) throw ConfigError("unflatten: vector too long");
}

namespace {

void check_shapes(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                  std::span<const WeightMatrix> Ps) {
  if (specs.size() != problem.dim || Ps.size() != problem.dim) {
    throw ConfigError("expected " + std::to_string(problem.dim) + " neural forms, got " +
                      std::to_string(specs.size()) + " specs and " + std::to_string(Ps.size()) +
                      " weight matrices");
  }
  for (const auto& P : Ps) {
    if (P.order() < 1) throw ConfigError("empty weight matrix");
  }
}

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("training grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("training grid must be strictly increasing");
  }
}

/// Per-point cost terms and their gradients for a fixed problem and form layout.
class CostModel {
 public:
  CostModel(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
            std::span<const WeightMatrix> Ps, bool penalise_invariants)
      : problem_(problem), specs_(specs), d_(problem.dim) {
    check_shapes(problem, specs, Ps);
    penalise_ = penalise_invariants && problem.invariants.has_value();
    act_.resize(d_);
    ic_act_.resize(problem.dim);
    u_.resize(d_);
    du_.resize(d_);
    g_.resize(d_);
    ju_.resize(d_ * d_);
    jdu_.resize(d_ * d_);
    cu_.resize(d_);
    cdu_.resize(d_);
    std::size_t off = 0;
    for (const auto& P : Ps) {
      offsets_.push_back(off);
      sizes_.push_back(P.parameter_count());
      off += P.parameter_count();
    }
    total_ = off;
    if (penalise_) {
      const std::size_t q = problem.invariants->count;
      inv_.resize(q);
      inv_ref_.resize(q);
      inv_grad_.resize(q * d_);
      problem.invariants->values(problem.u0, inv_ref_);
    }
  }

  std::size_t parameter_count() const noexcept { return total_; }

  /// Cost contribution of grid point t; the initial-condition penalty is
  /// attached when with_ic is set. When grad is non-empty, adds
  /// scale * d(contribution)/dp into it.
  CostReport point(std::span<const WeightMatrix> Ps, double t, bool with_ic, double scale,
                   std::span<double> grad) {
    CostReport r;
    for (std::size_t c = 0; c < d_; ++c) {
      act_[c].compute(specs_[c], Ps[c], t);
      const NeuralFormValue v = nf_eval(specs_[c], Ps[c], act_[c]);
      u_[c] = v.value;
      du_[c] = v.dvalue_dt;
    }
    problem_.residual(t, u_, du_, g_);
    for (std::size_t c = 0; c < d_; ++c) r.residual_part += 0.5 * g_[c] * g_[c];

    if (penalise_) {
      problem_.invariants->values(u_, inv_);
      for (std::size_t q = 0; q < inv_.size(); ++q) {
        const double diff = inv_[q] - inv_ref_[q];
        r.invariant_part += 0.5 * diff * diff;
      }
    }

    if (!grad.empty()) {
      problem_.residual_du(t, u_, du_, ju_);
      problem_.residual_ddu(t, u_, du_, jdu_);
      for (std::size_t c = 0; c < d_; ++c) {
        double a = 0.0, b = 0.0;
        for (std::size_t row = 0; row < d_; ++row) {
          a += g_[row] * ju_[row * d_ + c];
          b += g_[row] * jdu_[row * d_ + c];
        }
        cu_[c] = a;
        cdu_[c] = b;
      }
      if (penalise_) {
        problem_.invariants->gradient(u_, inv_grad_);
        for (std::size_t q = 0; q < inv_.size(); ++q) {
          const double diff = inv_[q] - inv_ref_[q];
          for (std::size_t c = 0; c < d_; ++c) cu_[c] += diff * inv_grad_[q * d_ + c];
        }
      }
      for (std::size_t c = 0; c < d_; ++c) {
        accumulate_nf_gradients(specs_[c], Ps[c], act_[c], scale * cu_[c], scale * cdu_[c],
                                grad.subspan(offsets_[c], sizes_[c]));
      }
    }

    if (with_ic) {
      for (std::size_t c = 0; c < d_; ++c) {
        if (specs_[c].variant != Variant::mTSM) continue;
        const NeuralFormSpec& spec = specs_[c];
        const NetworkWeights& first = Ps[c].networks.front();
        std::span<const double> a1;
        if (t == spec.t0) {
          a1 = act_[c].network(0);
        } else {
          ic_act_[c].resize(first.hidden());
          compute_activations(first, 0.0, ic_act_[c]);
          a1 = ic_act_[c];
        }
        const double diff = network_eval(first, a1).value - spec.u0;
        r.ic_part += 0.5 * diff * diff;
        if (!grad.empty()) {
          accumulate_network_gradients(first, 0.0, a1, scale * diff, 0.0,
                                       grad.subspan(offsets_[c], first.size()));
        }
      }
    }
    r.value = r.residual_part + r.ic_part + r.invariant_part;
    return r;
  }

  /// Sum of point() over a grid, IC attached to grid[0].
  CostReport total(std::span<const WeightMatrix> Ps, std::span<const double> grid, double scale,
                   std::span<double> grad) {
    CostReport r;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const CostReport p = point(Ps, grid[i], i == 0, scale, grad);
      r.residual_part += p.residual_part;
      r.ic_part += p.ic_part;
      r.invariant_part += p.invariant_part;
    }
    r.value = r.residual_part + r.ic_part + r.invariant_part;
    return r;
  }

 private:
  const IvpSystem& problem_;
  std::span<const NeuralFormSpec> specs_;
  std::size_t d_;
  bool penalise_ = false;
  std::vector<FormActivations> act_;
  std::vector<std::vector<double>> ic_act_;
  std::vector<double> u_, du_, g_, ju_, jdu_, cu_, cdu_;
  std::vector<double> inv_, inv_ref_, inv_grad_;
  std::vector<std::size_t> offsets_, sizes_;
  std::size_t total_ = 0;
};

void require_finite(double value, long epoch) {
  if (!std::isfinite(value)) throw DivergenceError("non-finite cost", epoch);
}

void require_finite(std::span<const double> grad, long epoch) {
  for (double g : grad) {
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient", epoch);
  }
}

/// Shared state of a training run: weights, their flat mirror and Adam moments.
class Trainer {
 public:
  Trainer(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
          std::vector<WeightMatrix> Ps, const TrainingConfig& cfg)
      : Ps_(std::move(Ps)), model_(problem, specs, Ps_, cfg.penalise_invariants), cfg_(cfg),
        flat_(flatten(Ps_)), grad_(flat_.size()), adam_(flat_.size()) {}

  double full_cost(std::span<const double> grid) {
    return model_.total(Ps_, grid, 1.0, {}).value;
  }

  /// One SB epoch over `grid`.
  void sb_epoch(std::span<const double> grid, long epoch) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::fill(grad_.begin(), grad_.end(), 0.0);
      const CostReport r = model_.point(Ps_, grid[i], i == 0, 1.0, grad_);
      require_finite(r.value, epoch);
      apply(epoch);
    }
  }

  /// One FB step over `grid`; returns the cost before the update.
  double fb_epoch(std::span<const double> grid, long epoch) {
    std::fill(grad_.begin(), grad_.end(), 0.0);
    const double scale = 1.0 / static_cast<double>(grid.size());
    const CostReport r = model_.total(Ps_, grid, scale, grad_);
    require_finite(r.value, epoch);
    apply(epoch);
    return r.value;
  }

  void reset_adam() { adam_ = AdamState(flat_.size()); }

  std::vector<WeightMatrix>& weights() { return Ps_; }

 private:
  void apply(long epoch) {
    require_finite(grad_, epoch);
    adam_step(adam_, flat_, grad_, cfg_.adam);
    unflatten(flat_, Ps_);
  }

  std::vector<WeightMatrix> Ps_;
  CostModel model_;
  const TrainingConfig& cfg_;
  std::vector<double> flat_;
  std::vector<double> grad_;
  AdamState adam_;
};

/// Runs `epochs` epochs over `active`, recording the full-grid cost after each.
/// `next_cost` caches the full-grid cost of the current weights when known.
void run_epochs(Trainer& tr, std::span<const double> active, std::span<const double> grid,
                BatchMode mode, long epochs, long& epoch_counter, TrainResult& result,
                const EpochObserver& observer) {
  const bool active_is_full = active.size() == grid.size();
  for (long e = 0; e < epochs; ++e) {
    const long epoch = epoch_counter++;
    if (mode == BatchMode::SB) {
      tr.sb_epoch(active, epoch);
    } else {
      const double before = tr.fb_epoch(active, epoch);
      // The FB cost is evaluated before the update, so it is the trace entry
      // of the previous epoch when the active set is the full grid.
      if (active_is_full && !result.loss_trace.empty() &&
          std::isnan(result.loss_trace.back())) {
        result.loss_trace.back() = before;
      }
    }
    if (mode == BatchMode::FB && active_is_full) {
      result.loss_trace.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      const double c = tr.full_cost(grid);
      require_finite(c, epoch);
      result.loss_trace.push_back(c);
    }
    if (observer) observer(epoch, tr.weights());
  }
}

void finish_trace(Trainer& tr, std::span<const double> grid, TrainResult& result, long epoch) {
  if (!result.loss_trace.empty() && std::isnan(result.loss_trace.back())) {
    const double c = tr.full_cost(grid);
    require_finite(c, epoch);
    result.loss_trace.back() = c;
  }
}

}  // namespace

CostReport cost(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                std::span<const WeightMatrix> Ps, std::span<const double> grid,
                bool penalise_invariants) {
  check_grid(grid);
  CostModel model(problem, specs, Ps, penalise_invariants);
  return model.total(Ps, grid, 1.0, {});
}

std::vector<double> cost_gradient(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                                  std::span<const WeightMatrix> Ps, std::span<const double> grid,
                                  bool penalise_invariants) {
  check_grid(grid);
  CostModel model(problem, specs, Ps, penalise_invariants);
  std::vector<double> grad(model.parameter_count(), 0.0);
  model.total(Ps, grid, 1.0, grad);
  return grad;
}

TrainResult train(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                  std::vector<WeightMatrix> Ps, std::span<const double> grid,
                  const TrainingConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  check_grid(grid);
  Trainer tr(problem, specs, std::move(Ps), cfg);
  TrainResult result;
  result.initial_cost = tr.full_cost(grid);
  require_finite(result.initial_cost, 0);
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs));
  long epoch = 0;
  run_epochs(tr, grid, grid, cfg.batch, cfg.epochs, epoch, result, observer);
  finish_trace(tr, grid, result, epoch);
  result.Ps = std::move(tr.weights());
  return result;
}

std::vector<long> incremental_stage_epochs(long epochs, std::size_t stages) {
  if (stages == 0) throw ConfigError("incremental training needs at least one stage");
  const long n = static_cast<long>(stages);
  std::vector<long> out(stages, epochs / n);
  out.back() += epochs % n;
  return out;
}

TrainResult train_incremental(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                              std::vector<WeightMatrix> Ps, std::span<const double> grid,
                              const TrainingConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  check_grid(grid);
  Trainer tr(problem, specs, std::move(Ps), cfg);
  TrainResult result;
  result.initial_cost = tr.full_cost(grid);
  require_finite(result.initial_cost, 0);
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto budget = incremental_stage_epochs(cfg.epochs, grid.size());
  long epoch = 0;
  for (std::size_t stage = 0; stage < grid.size(); ++stage) {
    if (stage > 0 && cfg.adam_reset_per_stage) tr.reset_adam();
    // A pending FB trace entry must be resolved before the active set changes.
    finish_trace(tr, grid, result, epoch);
    run_epochs(tr, grid.first(stage + 1), grid, BatchMode::FB, budget[stage], epoch, result,
               observer);
  }
  finish_trace(tr, grid, result, epoch);
  result.Ps = std::move(tr.weights());
  return result;
}

TrainResult run_training(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                         std::vector<WeightMatrix> Ps, std::span<const double> grid,
                         const TrainingConfig& cfg, const EpochObserver& observer) {
  if (cfg.incremental) return train_incremental(problem, specs, std::move(Ps), grid, cfg, observer);
  return train(problem, specs, std::move(Ps), grid, cfg, observer);
}

}  // namespace cnf

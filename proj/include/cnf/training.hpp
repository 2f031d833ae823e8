#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cnf/ffnn.hpp"
#include "cnf/neural_form.hpp"
#include "cnf/ode_problem.hpp"

namespace cnf {

struct AdamParams {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class BatchMode { SB, FB };

std::string to_string(BatchMode b);
BatchMode parse_batch_mode(const std::string& s);

struct TrainingConfig {
  long epochs = 1000;
  BatchMode batch = BatchMode::FB;
  bool incremental = false;
  AdamParams adam;
  InitMode init = ConstantInit{0.0};
  bool adam_reset_per_stage = false;
  bool penalise_invariants = false;

  /// Throws ConfigError on out-of-range hyperparameters.
  void validate() const;
};

struct AdamState {
  std::vector<double> m1;
  std::vector<double> m2;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m1(n, 0.0), m2(n, 0.0) {}
};

/// Bias-corrected Adam update in place. Throws DivergenceError on a
/// non-finite gradient entry, leaving state and weights untouched.
void adam_step(AdamState& state, std::span<double> weights, std::span<const double> grad,
               const AdamParams& params);

struct CostReport {
  double value = 0.0;
  double residual_part = 0.0;
  double ic_part = 0.0;
  double invariant_part = 0.0;
};

/// Full cost over `grid` for per-component neural forms:
/// 1/2 sum_i |G(t_i, u~, u~')|^2, plus 1/2 |N_1(t0) - u0|^2 per mTSM component,
/// plus 1/2 sum_i |I(u~(t_i)) - I(u0)|^2 when invariants are penalised.
CostReport cost(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                std::span<const WeightMatrix> Ps, std::span<const double> grid,
                bool penalise_invariants);

/// Gradient of cost().value, flattened component-major then network-major.
std::vector<double> cost_gradient(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                                  std::span<const WeightMatrix> Ps, std::span<const double> grid,
                                  bool penalise_invariants);

std::vector<double> flatten(std::span<const WeightMatrix> Ps);
void unflatten(std::span<const double> flat, std::span<WeightMatrix> Ps);

struct TrainResult {
  std::vector<WeightMatrix> Ps;
  double initial_cost = 0.0;
  /// Full-grid cost after each epoch.
  std::vector<double> loss_trace;
};

/// Called after every epoch with the 0-based epoch index and current weights.
using EpochObserver = std::function<void(long epoch, std::span<const WeightMatrix> Ps)>;

/// SB: one Adam step per grid point in ascending order; FB: one step per
/// epoch with gradient averaged over the grid.
TrainResult train(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                  std::vector<WeightMatrix> Ps, std::span<const double> grid,
                  const TrainingConfig& cfg, const EpochObserver& observer = {});

/// Curriculum over growing grid prefixes, each stage full batch.
TrainResult train_incremental(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                              std::vector<WeightMatrix> Ps, std::span<const double> grid,
                              const TrainingConfig& cfg, const EpochObserver& observer = {});

/// Epoch budget per incremental stage: epochs / stages, remainder on the last.
std::vector<long> incremental_stage_epochs(long epochs, std::size_t stages);

/// Dispatches to train or train_incremental according to cfg.incremental.
TrainResult run_training(const IvpSystem& problem, std::span<const NeuralFormSpec> specs,
                         std::vector<WeightMatrix> Ps, std::span<const double> grid,
                         const TrainingConfig& cfg, const EpochObserver& observer = {});

}  // namespace cnf

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnf/neural_form.hpp"
#include "cnf/ode_problem.hpp"
#include "cnf/training.hpp"

namespace cnf {

/// h uniform subdomains of [t0, t_end], each carrying n + 1 equidistant
/// points. Neighbouring subdomains share their interface point, so the
/// unique point set has h * n + 1 entries.
class Fragmentation {
 public:
  Fragmentation() = default;
  Fragmentation(double t0, double t_end, std::size_t h, std::size_t n);

  double t0() const noexcept { return t0_; }
  double t_end() const noexcept { return t_end_; }
  std::size_t subdomain_count() const noexcept { return h_; }
  std::size_t points_per_interval() const noexcept { return n_; }

  /// All unique points in ascending order.
  std::span<const double> points() const noexcept { return points_; }

  /// The n + 1 points of subdomain l.
  std::span<const double> subdomain(std::size_t l) const;
  double start(std::size_t l) const { return subdomain(l).front(); }
  double end(std::size_t l) const { return subdomain(l).back(); }

  /// Subdomain holding t; an interface point belongs to the earlier subdomain.
  std::size_t locate(double t) const;

 private:
  double t0_ = 0.0;
  double t_end_ = 1.0;
  std::size_t h_ = 1;
  std::size_t n_ = 1;
  std::vector<double> points_;
};

Fragmentation make_fragmentation(double t0, double t_end, std::size_t h, std::size_t n);

struct SubdomainSolution {
  /// One weight matrix per solution component.
  std::vector<WeightMatrix> Ps;
  /// Neural form value at the subdomain's last point; the next anchor.
  State handoff;
  double final_cost = 0.0;
  std::vector<double> loss_trace;
  std::optional<double> delta_u;
};

struct ScnfOptions {
  /// Draw fresh random weights per subdomain instead of reusing one draw.
  bool independent_init = false;
  /// Keep per-subdomain loss traces (memory heavy for long runs).
  bool keep_traces = true;
};

/// Trained subdomain neural forms stitched over a fragmentation.
struct FragmentedSolution {
  Variant variant = Variant::TSM;
  std::size_t order = 1;
  std::size_t hidden = 1;
  std::size_t dim = 1;
  Fragmentation frag;
  State initial;
  std::vector<SubdomainSolution> subdomains;
  /// Index of the subdomain whose training diverged, if any.
  std::optional<std::size_t> failed_at;
  std::string failure;

  bool complete() const noexcept {
    return !failed_at && subdomains.size() == frag.subdomain_count();
  }

  /// Anchor values of subdomain l: the initial state for l = 0, otherwise
  /// the previous subdomain's handoff.
  const State& anchor(std::size_t l) const;
  std::vector<NeuralFormSpec> specs(std::size_t l) const;

  /// Neural form of subdomain l evaluated at t (no domain check).
  State evaluate_in(std::size_t l, double t) const;

  /// Throws RangeError outside [t0, t_end] or beyond the trained subdomains.
  State evaluate(double t) const;
};

/// Trains one subdomain: specs anchored at grid.front() with `anchor` values.
SubdomainSolution solve_subdomain(const IvpSystem& problem, Variant variant, std::size_t order,
                                  std::size_t hidden, const TrainingConfig& cfg,
                                  std::span<const double> grid, const State& anchor,
                                  std::size_t init_stream, bool keep_trace = true);

/// Sequential subdomain solve with initial-value handoff. A diverged
/// subdomain stops the sweep; the partial solution carries failed_at.
FragmentedSolution solve_scnf(const IvpSystem& problem, Variant variant, std::size_t order,
                              std::size_t hidden, const TrainingConfig& cfg,
                              const Fragmentation& frag, const ScnfOptions& options = {});

/// Coupled systems: one neural form per component trained on the joint cost.
FragmentedSolution solve_scnf_system(const IvpSystem& problem, Variant variant,
                                     std::size_t order, std::size_t hidden,
                                     const TrainingConfig& cfg, const Fragmentation& frag,
                                     const ScnfOptions& options = {});

}  // namespace cnf

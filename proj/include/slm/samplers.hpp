#pragma once

// Path generators for the local-martingale families: Brownian motion, exact
// squared Bessel transitions and their negative powers, inverse Bessel-3 (two
// exact routes), Euler-Maruyama for dM = a(M) dW, left-point Ito integrals of
// g(W), and the time-changed inverse Bessel-3 with a prescribed mean.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "slm/core.hpp"
#include "slm/expr.hpp"

namespace slm {

enum class PositivityPolicy { Reflect, Absorb };

enum class InverseBes3Method { Besq, Gaussian3d };

struct BrownianModel {
  double x0 = 0.0;
};

// Squared Bessel process itself (a submartingale for delta > 0, simulated
// for its own sake and as the base of the power family).
struct BesqModel {
  double delta = 3.0;
  double x0 = 1.0;
};

// (R_t)^(2 - delta) for a delta-dimensional Bessel process started at x0.
struct BesselPowerModel {
  double delta = 3.0;
  double x0 = 1.0;
};

// 1 / R_t for a 3-dimensional Bessel process started at x0.
struct InverseBes3Model {
  double x0 = 1.0;
  InverseBes3Method method = InverseBes3Method::Besq;
};

struct DiffusionModel {
  Expr a;
  double x0 = 1.0;
  PositivityPolicy policy = PositivityPolicy::Reflect;
};

struct ItoIntegralModel {
  Expr g;
  // Starting point of the driving Brownian motion; the integral starts at 0.
  double x0 = 0.0;
};

// Inverse Bessel-3 from 1, run on the clock tau(t) = r^{-1}(m(t)).
struct PrescribedMeanModel {
  Expr m;
};

using ProcessModel = std::variant<BrownianModel, BesqModel, BesselPowerModel, InverseBes3Model, DiffusionModel,
                                  ItoIntegralModel, PrescribedMeanModel>;

std::string model_name(const ProcessModel& model);
double initial_value(const ProcessModel& model);
bool is_positive_model(const ProcessModel& model);

// Throws ModelError when the model parameters are invalid for the grid.
void validate_model(const ProcessModel& model, const TimeGrid& grid);

// Raised when a coefficient hits a domain error along a path.
class PathError : public ModelError {
 public:
  PathError(const std::string& what, std::size_t node) : ModelError(what), node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

SamplePath sample_brownian_path(const TimeGrid& grid, double x0, const RandomSource& rs);

// Fills a finer grid (factor sub-steps per step) by Brownian-bridge
// interpolation; the original nodes are kept exactly.
SamplePath brownian_bridge_refine(const SamplePath& path, std::size_t factor, const RandomSource& rs);

// X_{s+h} | X_s = x  is  Gamma(delta/2 + N, scale 2h),  N ~ Poisson(x / 2h).
double besq_transition(double delta, double x, double h, CounterRng& rng);

SamplePath sample_besq_exact(double delta, double x0, const TimeGrid& grid, const RandomSource& rs);

// BESQ on an arbitrary nondecreasing set of inner times (tau_0 = 0).
std::vector<double> sample_besq_on_times(double delta, double x0, const std::vector<double>& times,
                                         const RandomSource& rs);

SamplePath sample_bessel_power_path(double delta, double x0, const TimeGrid& grid, const RandomSource& rs);

SamplePath sample_inverse_bes3_path(double x0, const TimeGrid& grid, const RandomSource& rs,
                                    InverseBes3Method method = InverseBes3Method::Besq);

SamplePath euler_maruyama_path(const Expr& a, double x0, const TimeGrid& grid, const RandomSource& rs,
                               PositivityPolicy policy = PositivityPolicy::Reflect);

SamplePath ito_integral_path(const Expr& g, const TimeGrid& grid, const RandomSource& rs, double w0 = 0.0);

// E[1/R_t] for BES(3) from x0: erf(x0 / sqrt(2t)) / x0.
double inverse_bes3_mean(double t, double x0);

// Checks m(0) = 1 and m nonincreasing on [0, t_end] (1024 points); throws
// ModelError otherwise.
void validate_mean_function(const Expr& m, double t_end);

// Solves r(tau) = m(t) for the inverse Bessel-3 from 1.
double prescribed_mean_time_change(const Expr& m, double t);

// tau(t_i) for every grid node (validation done once).
std::vector<double> prescribed_mean_inner_times(const Expr& m, const TimeGrid& grid);

SamplePath sample_prescribed_mean_path(const Expr& m, const TimeGrid& grid, const RandomSource& rs);

enum class SupMode { Grid, BridgeRefined };

struct SupResult {
  double grid_sup = 0.0;
  // Equal to grid_sup unless a bridge-refined supremum was computed.
  double refined_sup = 0.0;
  // Grid maximum over every stride-th node only (the coarser grid of the same
  // path); equal to grid_sup for stride 1.
  double coarse_sup = 0.0;
  bool overflowed = false;
  bool refined = false;
};

// Adaptive bisection parameters of the bridge-refined supremum: a step of
// length h is split while either endpoint lies within kappa * sqrt(h) of the
// singularity, up to max_levels halvings.
struct BridgeRefinement {
  double kappa = 6.0;
  int max_levels = 8;
};

// A model bound to a grid with its one-off preparation done (validation,
// prescribed-mean clock). Immutable and safe to share across threads.
class PathSampler {
 public:
  PathSampler(ProcessModel model, TimeGrid grid);

  SamplePath sample(const RandomSource& rs) const;

  // Supremum of |M| over [0, t_end]. BridgeRefined is honoured for models that
  // are exact Brownian functionals (inverse Bessel-3 via Gaussian3d); other
  // models fall back to the grid maximum.
  SupResult supremum(const RandomSource& rs, SupMode mode, BridgeRefinement refinement = {},
                     std::size_t coarse_stride = 1) const;

  bool supports_bridge() const;

  const ProcessModel& model() const { return model_; }
  const TimeGrid& grid() const { return grid_; }

 private:
  SupResult inverse_bes3_gaussian_sup(const RandomSource& rs, bool refine, BridgeRefinement refinement,
                                      std::size_t stride) const;

  ProcessModel model_;
  TimeGrid grid_;
  std::vector<double> inner_times_;
};

}  // namespace slm

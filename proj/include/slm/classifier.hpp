#pragma once

// Analytic decision engine: convergence/divergence of improper integrals on
// dyadic blocks, and the martingale criteria built on it.

#include <stdexcept>
#include <string>
#include <vector>

#include "slm/core.hpp"
#include "slm/expr.hpp"
#include "slm/samplers.hpp"

namespace slm {

class ClassifierError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Decision constants for the dyadic block scan over [2^k eps, 2^{k+1} eps].
struct BlockScheme {
  int k_max = 60;
  int window = 10;
  // Upper bound on the fitted block ratio for a Convergent verdict.
  double ratio_threshold = 0.95;
  // Relative tolerance on the (extrapolated) tail: tol = rel * (S + 1).
  double tail_rel_tol = 1e-9;
  double divergence_threshold = 1e12;
  // Geometric tail extrapolation is only trusted after this many blocks.
  int min_blocks_for_extrapolation = 20;
  int spot_checks = 512;
  double log_fast_path = 700.0;
};

enum class IntegralStatus { Convergent, Divergent, Inconclusive };

struct IntegralVerdict {
  IntegralStatus status = IntegralStatus::Inconclusive;
  // Only meaningful when Convergent.
  double value = 0.0;
  std::vector<BlockRecord> blocks;
  double ratio_fit = 0.0;
  // Which rule decided: tail-bound, geometric-tail, nondecreasing,
  // partial-sum, log-fast-path or exhausted.
  std::string rule;
};

const char* integral_status_word(IntegralStatus s);

// Integral of h over [eps, inf). Requires h >= 0 on 512 log-spaced spot
// checks; throws ClassifierError on a negative integrand, a domain error, or
// a non-finite block not caught by the log fast path.
IntegralVerdict improper_integral_verdict(const Expr& h, double eps, const BlockScheme& scheme = {});

// dM = a(M) dW is a true martingale iff the integral of x / a(x)^2 diverges
// at infinity; convergence means strict local.
Verdict kotani_classify(const Expr& a, double eps, const BlockScheme& scheme = {});

enum class L2Status { L2Martingale, NotL2, Inconclusive };

const char* l2_status_word(L2Status s);

struct L2Result {
  L2Status status = L2Status::Inconclusive;
  // Integral over [0, t] of E g(W_s)^2 when L2Martingale.
  double quadratic_variation_mean = 0.0;
  Evidence evidence;
};

// Checks E int_0^t g(W_s)^2 ds < inf on a 64-point s-grid (W_0 = 0).
L2Result l2_test(const Expr& g, double t, const BlockScheme& scheme = {});

// Strictness of int g(W) dW from divergence of E int |g(W_s)|^alpha ds,
// tested through the inner Gaussian integral at s = t/2; Martingale needs
// every alpha convergent and the L2 test to pass.
Verdict integrand_small_moment_classify(const Expr& g, double t, const std::vector<double>& alphas,
                                        const BlockScheme& scheme = {});

enum class MomentStatus { Finite, Infinite, Inconclusive };

const char* moment_status_word(MomentStatus s);

struct MomentVerdict {
  MomentStatus status = MomentStatus::Inconclusive;
  IntegralVerdict integral;
};

// E F(sup M) < inf  iff  the integral of F'(y) / y over [eps, inf) converges.
MomentVerdict dichotomy_f_moment(const Expr& fprime, double eps, const BlockScheme& scheme = {});

// The classifier's statement about a sampled model on [0, t].
Verdict analytic_verdict(const ProcessModel& model, double t);

// Default alphas used by the small-moment criterion.
std::vector<double> default_alphas();

}  // namespace slm

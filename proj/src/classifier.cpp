#include "slm/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace slm {

namespace {

constexpr int kGaussPoints = 61;
constexpr int kL2TimePoints = 64;
constexpr double kInnerEps = 1.0;

struct GaussLegendre {
  std::array<double, kGaussPoints> x{};
  std::array<double, kGaussPoints> w{};

  GaussLegendre() {
    const int n = kGaussPoints;
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0;
        double p1 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      x[i] = -z;
      x[n - 1 - i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
      w[n - 1 - i] = w[i];
    }
  }
};

const GaussLegendre& gauss_legendre() {
  static const GaussLegendre rule;
  return rule;
}

double block_integral(const Expr& h, double a, double b) {
  const auto& gl = gauss_legendre();
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  KahanSum sum;
  for (int i = 0; i < kGaussPoints; ++i) {
    const double x = mid + half * gl.x[i];
    const EvalResult v = h.eval(x);
    if (v.ok()) {
      sum.add(gl.w[i] * v.value);
      continue;
    }
    // inf * 0 and friends: overflowing factors multiplied by underflowing ones.
    const LogEvalResult lv = h.eval_log(x);
    if (!lv.ok()) throw ClassifierError("integrand domain error at x=" + format_double(x));
    sum.add(gl.w[i] * lv.sign * std::exp(lv.log_abs));
  }
  return half * sum.value();
}

// Ratio of consecutive blocks with 0/0 treated as 0.
double block_ratio(double prev, double next) {
  if (next == 0.0) return 0.0;
  if (prev == 0.0) return std::numeric_limits<double>::infinity();
  return next / prev;
}

Expr gaussian_weighted(const Expr& body, double s) {
  const std::string& v = body.var_name();
  const Expr x = Expr::variable(v);
  const Expr density = Expr::call(Op::Exp, -(pow(x, Expr::number(2.0, v)) / Expr::number(2.0 * s, v))) /
                       Expr::number(std::sqrt(2.0 * std::numbers::pi * s), v);
  return body * density;
}

Expr reflected(const Expr& g) { return g.compose(-Expr::variable(g.var_name())); }

void append_blocks(Evidence& ev, const IntegralVerdict& iv) {
  ev.blocks = iv.blocks;
  ev.values.emplace_back("ratio_fit", iv.ratio_fit);
  if (iv.status == IntegralStatus::Convergent) ev.values.emplace_back("value", iv.value);
  ev.outcome = std::string(integral_status_word(iv.status)) + " (" + iv.rule + ")";
  ev.conclusive = iv.status != IntegralStatus::Inconclusive;
}

}  // namespace

const char* integral_status_word(IntegralStatus s) {
  switch (s) {
    case IntegralStatus::Convergent: return "CONVERGENT";
    case IntegralStatus::Divergent: return "DIVERGENT";
    case IntegralStatus::Inconclusive: return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

const char* l2_status_word(L2Status s) {
  switch (s) {
    case L2Status::L2Martingale: return "L2_MARTINGALE";
    case L2Status::NotL2: return "NOT_L2";
    case L2Status::Inconclusive: return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

const char* moment_status_word(MomentStatus s) {
  switch (s) {
    case MomentStatus::Finite: return "FINITE";
    case MomentStatus::Infinite: return "INFINITE";
    case MomentStatus::Inconclusive: return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

IntegralVerdict improper_integral_verdict(const Expr& h, double eps, const BlockScheme& scheme) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("eps must be positive");
  IntegralVerdict out;

  // Spot checks double as the log fast path samples.
  const double span = static_cast<double>(scheme.k_max + 1);
  std::vector<double> logs(scheme.spot_checks);
  for (int j = 0; j < scheme.spot_checks; ++j) {
    const double x = eps * std::exp2(span * j / (scheme.spot_checks - 1));
    const LogEvalResult lv = h.eval_log(x);
    if (!lv.ok()) throw ClassifierError("integrand domain error at x=" + format_double(x));
    if (lv.sign < 0) throw ClassifierError("integrand negative at x=" + format_double(x));
    logs[j] = lv.sign == 0 ? -std::numeric_limits<double>::infinity() : lv.log_abs;
  }
  int suffix = scheme.spot_checks - 1;
  while (suffix > 0 && logs[suffix - 1] < logs[suffix]) --suffix;
  const int suffix_len = scheme.spot_checks - suffix;
  if (logs.back() > scheme.log_fast_path && suffix_len >= scheme.spot_checks / 10) {
    out.status = IntegralStatus::Divergent;
    out.rule = "log-fast-path";
    return out;
  }

  KahanSum partial;
  for (int k = 0; k <= scheme.k_max; ++k) {
    const double lo = eps * std::exp2(k);
    const double hi = 2.0 * lo;
    const double ik = block_integral(h, lo, hi);
    if (!std::isfinite(ik)) throw ClassifierError("non-finite block integral on [" + format_double(lo) + ", " +
                                                  format_double(hi) + "]");
    out.blocks.push_back({k, lo, hi, ik});
    partial.add(ik);
    const double s = partial.value();
    if (s > scheme.divergence_threshold) {
      out.status = IntegralStatus::Divergent;
      out.rule = "partial-sum";
      return out;
    }
    if (k + 1 < scheme.window) continue;

    const auto first = out.blocks.end() - scheme.window;
    bool nondecreasing = ik > 0.0;
    double ratio_max = 0.0;
    std::vector<double> ratios;
    for (auto it = first; it + 1 != out.blocks.end(); ++it) {
      if (!((it + 1)->integral >= it->integral * (1.0 - 1e-9))) nondecreasing = false;
      const double r = block_ratio(it->integral, (it + 1)->integral);
      ratios.push_back(r);
      ratio_max = std::max(ratio_max, r);
    }
    if (nondecreasing) {
      out.status = IntegralStatus::Divergent;
      out.rule = "nondecreasing";
      out.ratio_fit = ratios.back();
      return out;
    }

    const double oldest = first->integral;
    const double rho = (ik == 0.0 || oldest == 0.0) ? 0.0 : std::pow(ik / oldest, 1.0 / (scheme.window - 1));
    out.ratio_fit = rho;
    const double tol = scheme.tail_rel_tol * (s + 1.0);
    const double tail = rho < 1.0 ? ik * rho / (1.0 - rho) : std::numeric_limits<double>::infinity();

    if (ratio_max < scheme.ratio_threshold && ik * ratio_max / (1.0 - ratio_max) < tol) {
      out.status = IntegralStatus::Convergent;
      out.rule = "tail-bound";
      out.value = s + tail;
      return out;
    }
    if (k + 1 >= scheme.min_blocks_for_extrapolation && rho < scheme.ratio_threshold && std::isfinite(ratio_max)) {
      double spread = 0.0;
      for (double r : ratios) spread = std::max(spread, std::abs(r - rho));
      const double uncertainty = ik * spread / ((1.0 - rho) * (1.0 - rho));
      if (uncertainty < tol) {
        out.status = IntegralStatus::Convergent;
        out.rule = "geometric-tail";
        out.value = s + tail;
        return out;
      }
    }
  }
  out.status = IntegralStatus::Inconclusive;
  out.rule = "exhausted";
  return out;
}

Verdict kotani_classify(const Expr& a, double eps, const BlockScheme& scheme) {
  const double span = static_cast<double>(scheme.k_max + 1);
  for (int j = 0; j < scheme.spot_checks; ++j) {
    const double x = eps * std::exp2(span * j / (scheme.spot_checks - 1));
    const LogEvalResult lv = a.eval_log(x);
    if (!lv.ok() || lv.sign <= 0) {
      throw ClassifierError("coefficient a(x) must be positive on [eps, inf); fails at x=" + format_double(x));
    }
  }
  const Expr x = Expr::variable(a.var_name());
  const Expr h = x / pow(a, Expr::number(2.0, a.var_name()));
  const IntegralVerdict iv = improper_integral_verdict(h, eps, scheme);

  Verdict v;
  Evidence ev;
  ev.criterion = "kotani: integral of x/a(x)^2 on [eps, inf)";
  ev.values.emplace_back("eps", eps);
  append_blocks(ev, iv);
  v.evidence.push_back(std::move(ev));
  switch (iv.status) {
    case IntegralStatus::Convergent:
      v.status = Status::StrictLocal;
      v.notes = "integral converges: strict local martingale";
      break;
    case IntegralStatus::Divergent:
      v.status = Status::Martingale;
      v.notes = "integral diverges: true martingale";
      break;
    case IntegralStatus::Inconclusive:
      v.status = Status::Inconclusive;
      v.notes = "block scan undecided";
      break;
  }
  return v;
}

L2Result l2_test(const Expr& g, double t, const BlockScheme& scheme) {
  if (!(t > 0.0)) throw std::invalid_argument("l2_test: t must be positive");
  const std::string& var = g.var_name();
  const Expr g2 = pow(g, Expr::number(2.0, var));
  const Expr g2_neg = reflected(g2);

  L2Result out;
  out.evidence.criterion = "l2: E int_0^t g(W_s)^2 ds";
  bool all_convergent = true;
  std::vector<double> second_moment(kL2TimePoints + 1, 0.0);
  {
    const EvalResult g0 = g2.eval(0.0);
    second_moment[0] = g0.ok() ? g0.value : std::numeric_limits<double>::infinity();
  }
  // Worst time first: the inner integrals grow with s.
  for (int j = kL2TimePoints; j >= 1; --j) {
    const double s = t * j / kL2TimePoints;
    const Expr pos = gaussian_weighted(g2, s);
    const Expr neg = gaussian_weighted(g2_neg, s);
    const IntegralVerdict right = improper_integral_verdict(pos, kInnerEps, scheme);
    const IntegralVerdict left = improper_integral_verdict(neg, kInnerEps, scheme);
    if (j == kL2TimePoints) {
      out.evidence.blocks = right.blocks;
      out.evidence.values.emplace_back("s", s);
    }
    if (right.status == IntegralStatus::Divergent || left.status == IntegralStatus::Divergent) {
      out.status = L2Status::NotL2;
      out.evidence.outcome = "inner integral diverges at s=" + format_double(s);
      out.evidence.values.emplace_back("divergent_s", s);
      out.evidence.conclusive = true;
      return out;
    }
    if (right.status != IntegralStatus::Convergent || left.status != IntegralStatus::Convergent) {
      all_convergent = false;
      continue;
    }
    // Central part on [-1, 1] in 32 panels; tails from the block scans.
    double centre = 0.0;
    constexpr int kPanels = 32;
    const auto& gl = gauss_legendre();
    for (int p = 0; p < kPanels; ++p) {
      const double a = -kInnerEps + 2.0 * kInnerEps * p / kPanels;
      const double b = a + 2.0 * kInnerEps / kPanels;
      for (int i = 0; i < kGaussPoints; ++i) {
        const double x = 0.5 * (a + b) + 0.5 * (b - a) * gl.x[i];
        centre += 0.5 * (b - a) * gl.w[i] * pos.eval(x).value;
      }
    }
    second_moment[j] = centre + right.value + left.value;
  }
  if (!all_convergent) {
    out.status = L2Status::Inconclusive;
    out.evidence.outcome = "inner integral undecided for some s";
    return out;
  }
  double integral = 0.0;
  for (int j = 0; j < kL2TimePoints; ++j) {
    integral += 0.5 * (second_moment[j] + second_moment[j + 1]) * (t / kL2TimePoints);
  }
  out.status = L2Status::L2Martingale;
  out.quadratic_variation_mean = integral;
  out.evidence.outcome = "finite for all sampled s <= t";
  out.evidence.values.emplace_back("E<M,M>_t", integral);
  out.evidence.conclusive = true;
  return out;
}

Verdict integrand_small_moment_classify(const Expr& g, double t, const std::vector<double>& alphas,
                                        const BlockScheme& scheme) {
  if (!(t > 0.0)) throw std::invalid_argument("small-moment: t must be positive");
  if (alphas.empty()) throw std::invalid_argument("small-moment: alphas must be nonempty");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("small-moment: alpha must lie in (0, 1)");
  }
  const std::string& var = g.var_name();
  const double s = 0.5 * t;
  const Expr abs_g = Expr::call(Op::Abs, g);
  const Expr abs_g_neg = reflected(abs_g);

  Verdict v;
  bool any_divergent = false;
  bool all_convergent = true;
  for (double alpha : alphas) {
    const Expr side[2] = {pow(abs_g, Expr::number(alpha, var)), pow(abs_g_neg, Expr::number(alpha, var))};
    for (int k = 0; k < 2; ++k) {
      const IntegralVerdict iv = improper_integral_verdict(gaussian_weighted(side[k], s), kInnerEps, scheme);
      Evidence ev;
      ev.criterion = std::string("small-moment: int |g(x)|^alpha phi_s(x) dx, ") + (k == 0 ? "x > 0" : "x < 0");
      ev.values.emplace_back("alpha", alpha);
      ev.values.emplace_back("s", s);
      append_blocks(ev, iv);
      v.evidence.push_back(std::move(ev));
      if (iv.status == IntegralStatus::Divergent) any_divergent = true;
      if (iv.status != IntegralStatus::Convergent) all_convergent = false;
    }
  }

  L2Result l2 = l2_test(g, t, scheme);
  l2.evidence.outcome = std::string(l2_status_word(l2.status)) + ": " + l2.evidence.outcome;
  v.evidence.push_back(l2.evidence);

  if (any_divergent && l2.status == L2Status::L2Martingale) {
    // An L2 martingale has every small moment finite, so this is numerical noise.
    v.status = Status::Inconclusive;
    v.notes = "small-moment divergence contradicts the L2 test";
  } else if (any_divergent) {
    v.status = Status::StrictLocal;
    v.notes = "E int |g(W_s)|^alpha ds diverges for some alpha in (0,1)";
  } else if (all_convergent && l2.status == L2Status::L2Martingale) {
    v.status = Status::Martingale;
    v.notes = "L2 martingale";
  } else {
    v.status = Status::Inconclusive;
    v.notes = std::string("small moments finite, L2 test ") + l2_status_word(l2.status);
  }
  return v;
}

MomentVerdict dichotomy_f_moment(const Expr& fprime, double eps, const BlockScheme& scheme) {
  const Expr y = Expr::variable(fprime.var_name());
  MomentVerdict out;
  out.integral = improper_integral_verdict(fprime / y, eps, scheme);
  switch (out.integral.status) {
    case IntegralStatus::Convergent: out.status = MomentStatus::Finite; break;
    case IntegralStatus::Divergent: out.status = MomentStatus::Infinite; break;
    case IntegralStatus::Inconclusive: out.status = MomentStatus::Inconclusive; break;
  }
  return out;
}

std::vector<double> default_alphas() { return {0.25, 0.5, 0.75}; }

Verdict analytic_verdict(const ProcessModel& model, double t) {
  if (const auto* m = std::get_if<BrownianModel>(&model)) {
    (void)m;
    return kotani_classify(Expr::number(1.0), 1.0);
  }
  if (const auto* m = std::get_if<BesselPowerModel>(&model)) {
    // M = R^(2-delta) solves dM = (2-delta) M^((delta-1)/(delta-2)) dB.
    const Expr x = Expr::variable();
    const Expr a = Expr::number(m->delta - 2.0) * pow(x, Expr::number((m->delta - 1.0) / (m->delta - 2.0)));
    return kotani_classify(a, 1.0);
  }
  if (std::holds_alternative<InverseBes3Model>(model)) {
    return kotani_classify(pow(Expr::variable(), Expr::number(2.0)), 1.0);
  }
  if (const auto* m = std::get_if<DiffusionModel>(&model)) {
    return kotani_classify(m->a, 1.0);
  }
  if (const auto* m = std::get_if<ItoIntegralModel>(&model)) {
    const Expr shifted = m->g.compose(Expr::variable(m->g.var_name()) + Expr::number(m->x0, m->g.var_name()));
    return integrand_small_moment_classify(m->x0 == 0.0 ? m->g : shifted, t, default_alphas());
  }
  if (const auto* m = std::get_if<PrescribedMeanModel>(&model)) {
    // Positive local martingale: martingale iff the mean stays at m(0) = 1.
    const EvalResult mt = m->m.eval(t);
    Verdict v;
    Evidence ev;
    ev.criterion = "mean function m(t) of a positive local martingale";
    ev.values.emplace_back("t", t);
    ev.values.emplace_back("m(t)", mt.value);
    ev.conclusive = mt.ok();
    ev.outcome = mt.ok() && mt.value < 1.0 - 1e-12 ? "mean decreases" : "mean constant";
    v.evidence.push_back(ev);
    v.status = !mt.ok() ? Status::Inconclusive
                        : (mt.value < 1.0 - 1e-12 ? Status::StrictLocal : Status::Martingale);
    v.notes = "defect 1 - m(t)";
    return v;
  }
  Verdict v;
  Evidence ev;
  ev.criterion = "squared Bessel process";
  ev.outcome = "drift delta dt: not a local martingale";
  v.evidence.push_back(ev);
  v.status = Status::Inconclusive;
  v.notes = "no martingale criterion applies to BESQ";
  return v;
}

}  // namespace slm

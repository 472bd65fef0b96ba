#include "slm/samplers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace slm {

namespace {

constexpr double kAbsorbLevel = 1e-12;
constexpr std::size_t kMeanCheckPoints = 1024;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

SamplePath make_path(const TimeGrid& grid) {
  SamplePath p{grid, std::vector<double>(grid.n_nodes(), 0.0)};
  return p;
}

void mark_overflow(SamplePath& p, std::size_t from) {
  p.overflow_index = from;
  for (std::size_t i = from; i < p.values.size(); ++i) p.values[i] = kOverflowSentinel;
}

}  // namespace

std::string model_name(const ProcessModel& model) {
  return std::visit(Overloaded{[](const BrownianModel&) { return std::string("brownian"); },
                               [](const BesqModel&) { return std::string("besq"); },
                               [](const BesselPowerModel&) { return std::string("bessel-power"); },
                               [](const InverseBes3Model&) { return std::string("inverse-bes3"); },
                               [](const DiffusionModel&) { return std::string("diffusion"); },
                               [](const ItoIntegralModel&) { return std::string("integral"); },
                               [](const PrescribedMeanModel&) { return std::string("prescribed-mean"); }},
                    model);
}

double initial_value(const ProcessModel& model) {
  return std::visit(Overloaded{[](const BrownianModel& m) { return m.x0; },
                               [](const BesqModel& m) { return m.x0; },
                               [](const BesselPowerModel& m) { return std::pow(m.x0, 2.0 - m.delta); },
                               [](const InverseBes3Model& m) { return 1.0 / m.x0; },
                               [](const DiffusionModel& m) { return m.x0; },
                               [](const ItoIntegralModel&) { return 0.0; },
                               [](const PrescribedMeanModel&) { return 1.0; }},
                    model);
}

bool is_positive_model(const ProcessModel& model) {
  return std::holds_alternative<BesselPowerModel>(model) || std::holds_alternative<InverseBes3Model>(model) ||
         std::holds_alternative<DiffusionModel>(model) || std::holds_alternative<PrescribedMeanModel>(model);
}

void validate_model(const ProcessModel& model, const TimeGrid& grid) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ModelError(msg);
  };
  std::visit(Overloaded{
                 [&](const BrownianModel& m) { require(std::isfinite(m.x0), "brownian: x0 must be finite"); },
                 [&](const BesqModel& m) {
                   require(m.delta > 0.0 && std::isfinite(m.delta), "besq: delta must be > 0");
                   require(m.x0 >= 0.0 && std::isfinite(m.x0), "besq: x0 must be >= 0");
                 },
                 [&](const BesselPowerModel& m) {
                   require(m.delta > 2.0 && std::isfinite(m.delta), "bessel-power: delta must be > 2");
                   require(m.x0 > 0.0 && std::isfinite(m.x0), "bessel-power: x0 must be > 0");
                 },
                 [&](const InverseBes3Model& m) {
                   require(m.x0 > 0.0 && std::isfinite(m.x0), "inverse-bes3: x0 must be > 0");
                 },
                 [&](const DiffusionModel& m) {
                   require(m.x0 > 0.0 && std::isfinite(m.x0), "diffusion: x0 must be > 0");
                   require(m.a.eval(m.x0).ok(), "diffusion: a(x0) must be finite");
                 },
                 [&](const ItoIntegralModel& m) {
                   require(std::isfinite(m.x0), "integral: x0 must be finite");
                 },
                 [&](const PrescribedMeanModel& m) {
                   validate_mean_function(m.m, grid.t_end());
                   for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
                     const auto v = m.m.eval(grid.node(i));
                     require(v.ok() && v.value > 0.0, "prescribed-mean: m(t) must be in (0, 1] on the grid");
                   }
                 }},
             model);
}

SamplePath sample_brownian_path(const TimeGrid& grid, double x0, const RandomSource& rs) {
  SamplePath p = make_path(grid);
  CounterRng rng = rs.engine();
  const double sq = std::sqrt(grid.dt());
  double w = x0;
  p.values[0] = w;
  for (std::size_t i = 1; i < p.values.size(); ++i) {
    w += sq * rng.normal();
    p.values[i] = w;
  }
  return p;
}

SamplePath brownian_bridge_refine(const SamplePath& path, std::size_t factor, const RandomSource& rs) {
  if (factor == 0) throw std::invalid_argument("refinement factor must be >= 1");
  const TimeGrid fine(path.grid.t_start(), path.grid.t_end(), path.grid.n_steps() * factor);
  SamplePath out = make_path(fine);
  CounterRng rng = rs.engine(1);
  const double h = fine.dt();
  for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
    const double end = path.values[i + 1];
    double y = path.values[i];
    out.values[i * factor] = y;
    for (std::size_t j = 1; j < factor; ++j) {
      const double remaining = static_cast<double>(factor - j + 1) * h;
      const double mean = y + (end - y) * h / remaining;
      const double var = h * (remaining - h) / remaining;
      y = mean + std::sqrt(var) * rng.normal();
      out.values[i * factor + j] = y;
    }
  }
  out.values.back() = path.values.back();
  return out;
}

double besq_transition(double delta, double x, double h, CounterRng& rng) {
  if (h <= 0.0) return x;
  double shape = 0.5 * delta;
  if (x > 0.0) {
    std::poisson_distribution<long long> poisson(x / (2.0 * h));
    shape += static_cast<double>(poisson(rng));
  }
  std::gamma_distribution<double> gamma(shape, 2.0 * h);
  return gamma(rng);
}

std::vector<double> sample_besq_on_times(double delta, double x0, const std::vector<double>& times,
                                         const RandomSource& rs) {
  std::vector<double> out(times.size());
  if (times.empty()) return out;
  CounterRng rng = rs.engine();
  double x = x0;
  out[0] = x;
  for (std::size_t i = 1; i < times.size(); ++i) {
    x = besq_transition(delta, x, times[i] - times[i - 1], rng);
    out[i] = x;
  }
  return out;
}

SamplePath sample_besq_exact(double delta, double x0, const TimeGrid& grid, const RandomSource& rs) {
  SamplePath p = make_path(grid);
  p.values = sample_besq_on_times(delta, x0, grid.nodes(), rs);
  return p;
}

SamplePath sample_bessel_power_path(double delta, double x0, const TimeGrid& grid, const RandomSource& rs) {
  SamplePath p = sample_besq_exact(delta, x0 * x0, grid, rs);
  const double expo = 0.5 * (2.0 - delta);
  for (double& v : p.values) v = std::pow(v, expo);
  p.values[0] = std::pow(x0, 2.0 - delta);
  return p;
}

SamplePath sample_inverse_bes3_path(double x0, const TimeGrid& grid, const RandomSource& rs,
                                    InverseBes3Method method) {
  if (method == InverseBes3Method::Besq) return sample_bessel_power_path(3.0, x0, grid, rs);
  SamplePath p = make_path(grid);
  CounterRng rng = rs.engine();
  const double sq = std::sqrt(grid.dt());
  double pos[3] = {x0, 0.0, 0.0};
  p.values[0] = 1.0 / x0;
  for (std::size_t i = 1; i < p.values.size(); ++i) {
    pos[0] += sq * rng.normal();
    pos[1] += sq * rng.normal();
    pos[2] += sq * rng.normal();
    p.values[i] = 1.0 / std::sqrt(pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]);
  }
  return p;
}

SamplePath euler_maruyama_path(const Expr& a, double x0, const TimeGrid& grid, const RandomSource& rs,
                               PositivityPolicy policy) {
  SamplePath p = make_path(grid);
  CounterRng rng = rs.engine();
  const double sq = std::sqrt(grid.dt());
  double x = x0;
  bool absorbed = false;
  p.values[0] = x;
  for (std::size_t i = 1; i < p.values.size(); ++i) {
    const double dw = sq * rng.normal();
    if (!absorbed) {
      const EvalResult coef = a.eval(x);
      if (coef.status == EvalStatus::DomainError) {
        throw PathError("diffusion coefficient domain error at x=" + format_double(x), i - 1);
      }
      const double next = x + coef.value * dw;
      if (!std::isfinite(next) || std::abs(next) >= kOverflowThreshold) {
        mark_overflow(p, i);
        return p;
      }
      x = next;
      if (x <= 0.0) {
        ++p.positivity_triggers;
        if (policy == PositivityPolicy::Reflect && x < 0.0) {
          x = -x;
        } else {
          x = kAbsorbLevel;
          absorbed = policy == PositivityPolicy::Absorb;
        }
      }
    }
    p.values[i] = x;
  }
  return p;
}

SamplePath ito_integral_path(const Expr& g, const TimeGrid& grid, const RandomSource& rs, double w0) {
  SamplePath p = make_path(grid);
  CounterRng rng = rs.engine();
  const double sq = std::sqrt(grid.dt());
  double w = w0;
  double m = 0.0;
  p.values[0] = 0.0;
  for (std::size_t i = 1; i < p.values.size(); ++i) {
    const double dw = sq * rng.normal();
    const EvalResult gw = g.eval(w);
    if (gw.status == EvalStatus::DomainError) {
      throw PathError("integrand domain error at W=" + format_double(w), i - 1);
    }
    const double next = m + gw.value * dw;
    if (gw.status == EvalStatus::Overflow || !std::isfinite(next) || std::abs(next) >= kOverflowThreshold) {
      mark_overflow(p, i);
      return p;
    }
    m = next;
    w += dw;
    p.values[i] = m;
  }
  return p;
}

double inverse_bes3_mean(double t, double x0) {
  if (!(t >= 0.0)) throw std::invalid_argument("inverse_bes3_mean: t must be >= 0");
  if (!(x0 > 0.0)) throw std::invalid_argument("inverse_bes3_mean: x0 must be > 0");
  if (t == 0.0) return 1.0 / x0;
  // 2 Phi(u) - 1 == erf(u / sqrt 2), which keeps precision in the far tail.
  return std::erf(x0 / std::sqrt(2.0 * t)) / x0;
}

void validate_mean_function(const Expr& m, double t_end) {
  const auto m0 = m.eval(0.0);
  if (!m0.ok() || std::abs(m0.value - 1.0) > 1e-9) {
    throw ModelError("prescribed-mean: m(0) must equal 1");
  }
  double prev = m0.value;
  for (std::size_t j = 1; j <= kMeanCheckPoints; ++j) {
    const double s = t_end * static_cast<double>(j) / static_cast<double>(kMeanCheckPoints);
    const auto v = m.eval(s);
    if (!v.ok()) throw ModelError("prescribed-mean: m(t) not finite at t=" + format_double(s));
    if (v.value > prev + 1e-12) {
      throw ModelError("prescribed-mean: m must be nonincreasing (increase at t=" + format_double(s) + ")");
    }
    prev = v.value;
  }
}

namespace {

double solve_time_change(double target) {
  if (target >= 1.0) return 0.0;
  double hi = 1.0;
  while (inverse_bes3_mean(hi, 1.0) >= target) {
    hi *= 2.0;
    if (!std::isfinite(hi)) throw ModelError("prescribed-mean: time change diverged");
  }
  double lo = 0.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = inverse_bes3_mean(mid, 1.0);
    if (std::abs(r - target) < 1e-10 || mid == lo || mid == hi) return mid;
    if (r > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double mean_target(const Expr& m, double t) {
  const auto v = m.eval(t);
  if (!v.ok()) throw ModelError("prescribed-mean: m(t) not finite at t=" + format_double(t));
  if (!(v.value > 0.0)) throw ModelError("prescribed-mean: m(t) must be > 0 (out of range at t=" + format_double(t) + ")");
  if (v.value > 1.0 + 1e-9) throw ModelError("prescribed-mean: m(t) must be <= 1");
  return v.value;
}

}  // namespace

double prescribed_mean_time_change(const Expr& m, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("time change: t must be >= 0");
  validate_mean_function(m, t > 0.0 ? t : 1.0);
  if (t == 0.0) return 0.0;
  return solve_time_change(mean_target(m, t));
}

std::vector<double> prescribed_mean_inner_times(const Expr& m, const TimeGrid& grid) {
  validate_mean_function(m, grid.t_end());
  std::vector<double> tau(grid.n_nodes());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double t = grid.node(i);
    tau[i] = t == 0.0 ? 0.0 : solve_time_change(mean_target(m, t));
  }
  // Bisection tolerance can leave ulp-level inversions on flat stretches of m.
  for (std::size_t i = 1; i < tau.size(); ++i) tau[i] = std::max(tau[i], tau[i - 1]);
  return tau;
}

namespace {

SamplePath prescribed_path_from_inner(const TimeGrid& grid, const std::vector<double>& tau, const RandomSource& rs) {
  SamplePath p = make_path(grid);
  p.values = sample_besq_on_times(3.0, 1.0, tau, rs);
  for (double& v : p.values) v = 1.0 / std::sqrt(v);
  return p;
}

}  // namespace

SamplePath sample_prescribed_mean_path(const Expr& m, const TimeGrid& grid, const RandomSource& rs) {
  return prescribed_path_from_inner(grid, prescribed_mean_inner_times(m, grid), rs);
}

PathSampler::PathSampler(ProcessModel model, TimeGrid grid) : model_(std::move(model)), grid_(grid) {
  validate_model(model_, grid_);
  if (const auto* pm = std::get_if<PrescribedMeanModel>(&model_)) {
    inner_times_ = prescribed_mean_inner_times(pm->m, grid_);
  }
}

SamplePath PathSampler::sample(const RandomSource& rs) const {
  return std::visit(
      Overloaded{[&](const BrownianModel& m) { return sample_brownian_path(grid_, m.x0, rs); },
                 [&](const BesqModel& m) { return sample_besq_exact(m.delta, m.x0, grid_, rs); },
                 [&](const BesselPowerModel& m) { return sample_bessel_power_path(m.delta, m.x0, grid_, rs); },
                 [&](const InverseBes3Model& m) { return sample_inverse_bes3_path(m.x0, grid_, rs, m.method); },
                 [&](const DiffusionModel& m) { return euler_maruyama_path(m.a, m.x0, grid_, rs, m.policy); },
                 [&](const ItoIntegralModel& m) { return ito_integral_path(m.g, grid_, rs, m.x0); },
                 [&](const PrescribedMeanModel&) { return prescribed_path_from_inner(grid_, inner_times_, rs); }},
      model_);
}

bool PathSampler::supports_bridge() const {
  const auto* m = std::get_if<InverseBes3Model>(&model_);
  return m != nullptr && m->method == InverseBes3Method::Gaussian3d;
}

SupResult PathSampler::supremum(const RandomSource& rs, SupMode mode, BridgeRefinement refinement,
                                std::size_t coarse_stride) const {
  const std::size_t stride = coarse_stride == 0 ? 1 : coarse_stride;
  if (supports_bridge()) return inverse_bes3_gaussian_sup(rs, mode == SupMode::BridgeRefined, refinement, stride);
  const SamplePath p = sample(rs);
  double sup = 0.0;
  double coarse = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double v = std::abs(p.values[i]);
    sup = std::max(sup, v);
    if (i % stride == 0) coarse = std::max(coarse, v);
  }
  return SupResult{sup, sup, coarse, p.overflowed(), false};
}

namespace {

using Vec3 = std::array<double, 3>;

inline double norm2(const Vec3& v) { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; }

// Brownian-bridge bisection of one step; records the smallest squared radius.
void refine_step(const Vec3& a, const Vec3& b, double h, int level, const BridgeRefinement& cfg, CounterRng& rng,
                 double& min_r2) {
  if (level >= cfg.max_levels) return;
  if (std::min(norm2(a), norm2(b)) >= cfg.kappa * cfg.kappa * h) return;
  const double sd = std::sqrt(0.25 * h);
  Vec3 mid;
  for (int k = 0; k < 3; ++k) mid[k] = 0.5 * (a[k] + b[k]) + sd * rng.normal();
  min_r2 = std::min(min_r2, norm2(mid));
  refine_step(a, mid, 0.5 * h, level + 1, cfg, rng, min_r2);
  refine_step(mid, b, 0.5 * h, level + 1, cfg, rng, min_r2);
}

}  // namespace

SupResult PathSampler::inverse_bes3_gaussian_sup(const RandomSource& rs, bool refine, BridgeRefinement refinement,
                                                 std::size_t stride) const {
  const auto& m = std::get<InverseBes3Model>(model_);
  CounterRng rng = rs.engine();
  CounterRng aux = rs.engine(1);
  const double h = grid_.dt();
  const double sq = std::sqrt(h);
  const double near2 = refinement.kappa * refinement.kappa * h;
  Vec3 pos = {m.x0, 0.0, 0.0};
  // 1/sqrt is monotone and correctly rounded, so 1/sqrt(min r^2) is bit for
  // bit the maximum of the sampled path.
  double min_r2 = norm2(pos);
  double coarse_min_r2 = min_r2;
  double refined_min_r2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < grid_.n_nodes(); ++i) {
    const Vec3 prev = pos;
    pos[0] += sq * rng.normal();
    pos[1] += sq * rng.normal();
    pos[2] += sq * rng.normal();
    const double r2 = norm2(pos);
    min_r2 = std::min(min_r2, r2);
    if (i % stride == 0) coarse_min_r2 = std::min(coarse_min_r2, r2);
    if (refine && std::min(norm2(prev), r2) < near2) refine_step(prev, pos, h, 0, refinement, aux, refined_min_r2);
  }
  const double grid_sup = 1.0 / std::sqrt(min_r2);
  const double refined_sup = std::max(grid_sup, 1.0 / std::sqrt(refined_min_r2));
  return SupResult{grid_sup, refine ? refined_sup : grid_sup, 1.0 / std::sqrt(coarse_min_r2), false, refine};
}

}  // namespace slm

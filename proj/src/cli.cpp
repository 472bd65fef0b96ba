#include "slm/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "slm/classifier.hpp"
#include "slm/core.hpp"
#include "slm/estimators.hpp"
#include "slm/expr.hpp"
#include "slm/samplers.hpp"

namespace slm {

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Flags {
  std::string model;
  std::string a, g, m, F, Fprime;
  std::string kotani, integrand;
  std::optional<double> x0;
  std::optional<double> delta;
  double t = 1.0;
  std::size_t steps = 1000;
  std::size_t paths = 1000;
  std::uint64_t seed = 42;
  int threads = 0;
  double eps = 1.0;
  std::vector<double> alphas;
  std::vector<double> lambdas;
  std::vector<std::size_t> sizes;
  std::vector<double> times;
  std::string out;
  std::string sup = "grid";
  std::string sampler = "besq";
  std::string policy = "reflect";
};

void add_model_flags(CLI::App* app, Flags& f) {
  app->add_option("--model", f.model, "brownian|besq|bessel-power|inverse-bes3|diffusion|integral|prescribed-mean");
  app->add_option("--a", f.a, "diffusion coefficient a(x)");
  app->add_option("--g", f.g, "integrand g(x)");
  app->add_option("--m", f.m, "prescribed mean m(t)");
  app->add_option("--x0", f.x0, "initial value");
  app->add_option("--delta", f.delta, "Bessel dimension");
  app->add_option("--t", f.t, "horizon");
  app->add_option("--steps", f.steps, "grid steps");
  app->add_option("--paths", f.paths, "number of paths");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--threads", f.threads, "worker threads (0 = default)");
  app->add_option("--out", f.out, "output CSV (stdout when absent)");
  app->add_option("--sampler", f.sampler, "inverse-bes3 sampler: besq|gauss3d");
  app->add_option("--policy", f.policy, "diffusion positivity policy: reflect|absorb");
}

double x0_or(const Flags& f, double fallback) { return f.x0 ? *f.x0 : fallback; }

ProcessModel build_model(const Flags& f) {
  const std::string& n = f.model;
  if (n.empty()) throw UsageError("--model is required");
  if (n == "brownian") return BrownianModel{x0_or(f, 0.0)};
  if (n == "besq") return BesqModel{f.delta.value_or(3.0), x0_or(f, 1.0)};
  if (n == "bessel-power") return BesselPowerModel{f.delta.value_or(3.0), x0_or(f, 1.0)};
  if (n == "inverse-bes3") {
    InverseBes3Method method;
    if (f.sampler == "besq") {
      method = InverseBes3Method::Besq;
    } else if (f.sampler == "gauss3d") {
      method = InverseBes3Method::Gaussian3d;
    } else {
      throw UsageError("--sampler must be besq or gauss3d");
    }
    return InverseBes3Model{x0_or(f, 1.0), method};
  }
  if (n == "diffusion") {
    if (f.a.empty()) throw UsageError("--model diffusion needs --a");
    PositivityPolicy policy;
    if (f.policy == "reflect") {
      policy = PositivityPolicy::Reflect;
    } else if (f.policy == "absorb") {
      policy = PositivityPolicy::Absorb;
    } else {
      throw UsageError("--policy must be reflect or absorb");
    }
    return DiffusionModel{parse_expr(f.a, "x"), x0_or(f, 1.0), policy};
  }
  if (n == "integral") {
    if (f.g.empty()) throw UsageError("--model integral needs --g");
    return ItoIntegralModel{parse_expr(f.g, "x"), x0_or(f, 0.0)};
  }
  if (n == "prescribed-mean") {
    if (f.m.empty()) throw UsageError("--model prescribed-mean needs --m");
    return PrescribedMeanModel{parse_expr(f.m, "t")};
  }
  throw UsageError("unknown model '" + n + "'");
}

TimeGrid build_grid(const Flags& f) {
  if (!(f.t > 0.0) || !std::isfinite(f.t)) throw UsageError("--t must be positive");
  if (f.steps == 0) throw UsageError("--steps must be positive");
  return uniform_grid(f.t, f.steps);
}

void emit(const Flags& f, const std::string& csv, std::ostream& out) {
  if (f.out.empty()) {
    out << csv;
    return;
  }
  std::ofstream file(f.out, std::ios::binary | std::ios::trunc);
  if (!file) throw UsageError("cannot open '" + f.out + "' for writing");
  file << csv;
  if (!file) throw UsageError("write to '" + f.out + "' failed");
}

void print_evidence(const Verdict& v, std::ostream& out) {
  for (const Evidence& e : v.evidence) {
    out << "criterion," << e.criterion << "," << e.outcome << "\n";
    for (const BlockRecord& b : e.blocks) {
      out << "block," << b.k << "," << format_double(b.lower) << "," << format_double(b.upper) << ","
          << format_double(b.integral) << "\n";
    }
    for (const auto& [name, value] : e.values) out << "value," << name << "," << format_double(value) << "\n";
  }
  if (!v.notes.empty()) out << "note," << v.notes << "\n";
}

void print_integral(const std::string& name, const IntegralVerdict& iv, std::ostream& out) {
  out << "criterion," << name << "," << integral_status_word(iv.status) << "\n";
  for (const BlockRecord& b : iv.blocks) {
    out << "block," << b.k << "," << format_double(b.lower) << "," << format_double(b.upper) << ","
        << format_double(b.integral) << "\n";
  }
  out << "value,ratio_fit," << format_double(iv.ratio_fit) << "\n";
  if (iv.status == IntegralStatus::Convergent) out << "value,integral," << format_double(iv.value) << "\n";
  out << "rule," << iv.rule << "\n";
}

std::vector<double> all_nodes(const TimeGrid& grid) {
  std::vector<double> times;
  for (std::size_t i = 1; i < grid.n_nodes(); ++i) times.push_back(grid.node(i));
  return times;
}

std::string defect_csv(const DefectCurve& curve) {
  std::string s = "t,mean_est,stderr,defect_est,ci_low,ci_high,n_paths,n_overflowed\n";
  for (const DefectRow& r : curve.rows) {
    s += format_double(r.t) + "," + format_double(r.mean_est) + "," + format_double(r.stderr_est) + "," +
         format_double(r.defect_est) + "," + format_double(r.ci_low) + "," + format_double(r.ci_high) + "," +
         std::to_string(r.n_paths) + "," + std::to_string(r.n_overflowed) + "\n";
  }
  return s;
}

int cmd_simulate(const Flags& f, std::ostream& out) {
  const ProcessModel model = build_model(f);
  const TimeGrid grid = build_grid(f);
  const PathSampler sampler(model, grid);
  std::string s = "path_id,t,value\n";
  for (std::size_t i = 0; i < f.paths; ++i) {
    const SamplePath p = sampler.sample(derive_stream(f.seed, i));
    const std::string id = std::to_string(i);
    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
      s += id + "," + format_double(grid.node(j)) + "," + format_double(p.values[j]) + "\n";
    }
  }
  emit(f, s, out);
  return kExitOk;
}

int cmd_classify(const Flags& f, std::ostream& out) {
  const std::string kotani = !f.kotani.empty() ? f.kotani : f.a;
  const std::string integrand = !f.integrand.empty() ? f.integrand : f.g;
  const int chosen = !kotani.empty() + !integrand.empty() + !f.Fprime.empty() + !f.model.empty();
  if (chosen != 1) throw UsageError("classify needs exactly one of --kotani/--a, --integrand/--g, --Fprime, --model");
  if (!(f.eps > 0.0)) throw UsageError("--eps must be positive");

  if (!f.Fprime.empty()) {
    const Expr fprime = parse_expr(f.Fprime, "x");
    if (!f.F.empty()) {
      // Central-difference check that --Fprime is the derivative of --F.
      const Expr F = parse_expr(f.F, "x");
      for (double y : {f.eps, 2.0 * f.eps, 10.0 * f.eps}) {
        const double h = 1e-5 * y;
        const EvalResult hi = F.eval(y + h), lo = F.eval(y - h), d = fprime.eval(y);
        if (!hi.ok() || !lo.ok() || !d.ok()) throw ModelError("--F or --Fprime not evaluable near eps");
        const double fd = (hi.value - lo.value) / (2.0 * h);
        if (std::abs(fd - d.value) > 1e-5 * (1.0 + std::abs(d.value))) {
          throw ModelError("--Fprime does not match the derivative of --F at y=" + format_double(y));
        }
      }
    }
    const MomentVerdict mv = dichotomy_f_moment(fprime, f.eps);
    print_integral("dichotomy", mv.integral, out);
    out << moment_status_word(mv.status) << "\n";
    return kExitOk;
  }

  Verdict v;
  if (!kotani.empty()) {
    v = kotani_classify(parse_expr(kotani, "x"), f.eps);
  } else if (!integrand.empty()) {
    const Expr g = parse_expr(integrand, "x");
    const std::vector<double> alphas = f.alphas.empty() ? default_alphas() : f.alphas;
    v = integrand_small_moment_classify(g, f.t, alphas);
  } else {
    v = analytic_verdict(build_model(f), f.t);
  }
  print_evidence(v, out);
  out << status_word(v.status) << "\n";
  return kExitOk;
}

int cmd_defect(const Flags& f, std::ostream& out) {
  const ProcessModel model = build_model(f);
  const TimeGrid grid = build_grid(f);
  const std::vector<double> times = f.times.empty() ? all_nodes(grid) : f.times;
  const DefectCurve curve = mean_curve(model, grid, times, f.paths, f.seed, RunOptions{f.threads});
  emit(f, defect_csv(curve), out);
  if (!f.out.empty()) {
    const DefectRow& last = curve.rows.back();
    out << "defect," << format_double(last.t) << "," << format_double(last.defect_est) << ","
        << format_double(last.stderr_est) << "\n";
    out << "positivity_triggers," << curve.positivity_triggers << "\n";
  }
  return kExitOk;
}

int cmd_tail(const Flags& f, std::ostream& out) {
  const ProcessModel model = build_model(f);
  const TimeGrid grid = build_grid(f);
  if (f.lambdas.empty()) throw UsageError("tail needs --lambdas");
  TailOptions opts;
  if (f.sup == "bridge") {
    opts.sup_mode = SupMode::BridgeRefined;
  } else if (f.sup != "grid") {
    throw UsageError("--sup must be grid or bridge");
  }
  const TailScan scan = tail_scan(model, grid, f.t, f.lambdas, f.paths, f.seed, opts, RunOptions{f.threads});
  std::string s = "lambda,prob_est,stderr,lambda_prob\n";
  for (const TailRow& r : scan.rows) {
    s += format_double(r.lambda) + "," + format_double(r.prob_est) + "," + format_double(r.stderr_est) + "," +
         format_double(r.lambda_prob) + "\n";
  }
  emit(f, s, out);
  if (!f.out.empty()) {
    out << "steps," << scan.n_steps << "\n";
    out << "bridge_refined," << (scan.bridge_refined ? 1 : 0) << "\n";
    out << "n_overflowed," << scan.n_overflowed << "\n";
    for (const TailRow& r : scan.rows) {
      out << "grid_lambda_prob," << format_double(r.lambda) << "," << format_double(r.lambda * r.grid_prob_est)
          << "\n";
    }
  }
  return kExitOk;
}

int cmd_moment_scan(const Flags& f, std::ostream& out) {
  const ProcessModel model = build_model(f);
  const TimeGrid grid = build_grid(f);
  if (f.alphas.empty()) throw UsageError("moment-scan needs --alphas");
  const std::vector<std::size_t> sizes =
      f.sizes.empty() ? std::vector<std::size_t>{1000, 4000, 16000, 64000} : f.sizes;
  std::string s = "alpha,n_paths,estimate\n";
  std::vector<MomentScan> scans;
  for (double alpha : f.alphas) {
    scans.push_back(small_moment_scan(model, grid, f.t, alpha, sizes, f.seed, RunOptions{f.threads}));
    const MomentScan& m = scans.back();
    for (std::size_t k = 0; k < m.sample_sizes.size(); ++k) {
      s += format_double(alpha) + "," + std::to_string(m.sample_sizes[k]) + "," + format_double(m.estimates[k]) +
           "\n";
    }
  }
  emit(f, s, out);
  for (const MomentScan& m : scans) {
    out << "trend," << format_double(m.alpha) << "," << moment_trend_word(m.verdict) << "\n";
  }
  // The sampled trend is a diagnostic; the analytic verdict is the statement.
  const Verdict v = analytic_verdict(model, f.t);
  print_evidence(v, out);
  out << status_word(v.status) << "\n";
  return kExitOk;
}

int cmd_mean_match(const Flags& f, std::ostream& out) {
  if (f.model.empty() || f.model == "prescribed-mean") {
    if (f.m.empty()) throw UsageError("mean-match needs --m");
  } else {
    throw UsageError("mean-match runs the prescribed-mean model");
  }
  Flags g = f;
  g.model = "prescribed-mean";
  const ProcessModel model = build_model(g);
  const TimeGrid grid = build_grid(g);
  const Expr m = std::get<PrescribedMeanModel>(model).m;
  const std::vector<double> checks = f.times.empty() ? std::vector<double>{f.t} : f.times;
  const std::vector<double> times = f.times.empty() ? all_nodes(grid) : f.times;
  const DefectCurve curve = mean_curve(model, grid, times, f.paths, f.seed, RunOptions{f.threads});
  emit(g, defect_csv(curve), out);
  bool all_match = true;
  for (const DefectRow& r : curve.rows) {
    bool checked = false;
    for (double c : checks) checked = checked || std::abs(c - r.t) <= 1e-9 * std::max(1.0, std::abs(c));
    if (!checked) continue;
    const double target = m.eval(r.t).value;
    const bool ok = std::abs(r.mean_est - target) <= 3.0 * r.stderr_est;
    all_match = all_match && ok;
    out << "target," << format_double(r.t) << "," << format_double(target) << "," << format_double(r.mean_est)
        << "," << format_double(r.stderr_est) << "," << (ok ? "within_3se" : "outside_3se") << "\n";
  }
  out << (all_match ? "MATCH" : "MISMATCH") << "\n";
  return kExitOk;
}

int fail(std::ostream& err, int code, const char* word, const std::string& msg) {
  err << "error: " << word << ": " << msg << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"simulate and classify local martingales", "slm"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* simulate = app.add_subcommand("simulate", "write sample paths (path_id,t,value)");
  add_model_flags(simulate, f);

  CLI::App* classify = app.add_subcommand("classify", "analytic martingale verdict");
  add_model_flags(classify, f);
  classify->add_option("--kotani", f.kotani, "coefficient a(x) of dM = a(M) dW");
  classify->add_option("--integrand", f.integrand, "integrand g(x) of int g(W) dW");
  classify->add_option("--F", f.F, "F(y), checked against --Fprime");
  classify->add_option("--Fprime", f.Fprime, "F'(y) for the sup-moment dichotomy");
  classify->add_option("--eps", f.eps, "lower integration limit");
  classify->add_option("--alphas", f.alphas, "small-moment exponents")->delimiter(',');

  CLI::App* defect = app.add_subcommand("defect", "mean and defect curve (defect.csv)");
  add_model_flags(defect, f);
  defect->add_option("--times", f.times, "report times (grid nodes)")->delimiter(',');

  CLI::App* tail = app.add_subcommand("tail", "lambda * P(sup >= lambda) scan (tail.csv)");
  add_model_flags(tail, f);
  tail->add_option("--lambdas", f.lambdas, "increasing thresholds")->delimiter(',');
  tail->add_option("--sup", f.sup, "supremum: grid|bridge");

  CLI::App* moment = app.add_subcommand("moment-scan", "E sup^alpha over nested sample sizes (moment.csv)");
  add_model_flags(moment, f);
  moment->add_option("--alphas", f.alphas, "exponents in (0,1)")->delimiter(',');
  moment->add_option("--sizes", f.sizes, "increasing sample sizes")->delimiter(',');

  CLI::App* match = app.add_subcommand("mean-match", "prescribed-mean model against its target m(t)");
  add_model_flags(match, f);
  match->add_option("--times", f.times, "check times (grid nodes)")->delimiter(',');

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kExitUsage, "usage", e.what());
  }

  try {
    if (simulate->parsed()) return cmd_simulate(f, out);
    if (classify->parsed()) return cmd_classify(f, out);
    if (defect->parsed()) return cmd_defect(f, out);
    if (tail->parsed()) return cmd_tail(f, out);
    if (moment->parsed()) return cmd_moment_scan(f, out);
    return cmd_mean_match(f, out);
  } catch (const UsageError& e) {
    return fail(err, kExitUsage, "usage", e.what());
  } catch (const ParseError& e) {
    return fail(err, kExitModelInvalid, "model-invalid", e.what());
  } catch (const ModelError& e) {
    return fail(err, kExitModelInvalid, "model-invalid", e.what());
  } catch (const ClassifierError& e) {
    return fail(err, kExitModelInvalid, "model-invalid", e.what());
  } catch (const EstimationError& e) {
    return fail(err, kExitEstimation, "estimation-failed", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(err, kExitUsage, "usage", e.what());
  } catch (const std::exception& e) {
    return fail(err, kExitEstimation, "estimation-failed", e.what());
  }
}

}  // namespace slm

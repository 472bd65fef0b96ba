#include "slm/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "estimators_detail.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slm {

namespace {

int thread_count(const RunOptions& run) {
#ifdef _OPENMP
  return run.threads > 0 ? run.threads : omp_get_max_threads();
#else
  (void)run;
  return 1;
#endif
}

}  // namespace

const char* moment_trend_word(MomentTrend t) {
  return t == MomentTrend::SuspectedDivergent ? "suspected-divergent" : "stabilizing";
}

MomentTrend moment_trend(const std::vector<double>& estimates) {
  const std::size_t n = estimates.size();
  if (n < 3) return MomentTrend::Stabilizing;
  const bool last = estimates[n - 1] >= 1.2 * estimates[n - 2];
  const bool before = estimates[n - 2] >= 1.2 * estimates[n - 3];
  return last && before ? MomentTrend::SuspectedDivergent : MomentTrend::Stabilizing;
}

double path_sup(const SamplePath& path) {
  double sup = 0.0;
  for (double v : path.values) sup = std::max(sup, std::abs(v));
  return sup;
}

DefectCurve mean_curve(const ProcessModel& model, const TimeGrid& grid, const std::vector<double>& times,
                       std::size_t n_paths, std::uint64_t seed, const RunOptions& run) {
  detail::check_mean_curve_args(n_paths, times);
  const PathSampler sampler(model, grid);
  const std::vector<std::size_t> idx = detail::time_indices(grid, times);
  const std::size_t n_times = idx.size();
  const std::size_t n_blocks = (n_paths + kReductionBlock - 1) / kReductionBlock;

  std::vector<detail::MomentAccumulator> acc(n_blocks * n_times);
  std::vector<std::size_t> triggers(n_blocks, 0);
  const double m0 = initial_value(model);

  // Exceptions cannot cross the parallel region; keep the first one.
  std::exception_ptr failure;
  const long long blocks = static_cast<long long>(n_blocks);
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count(run))
  for (long long b = 0; b < blocks; ++b) {
    try {
      const std::size_t begin = static_cast<std::size_t>(b) * kReductionBlock;
      const std::size_t end = std::min(n_paths, begin + kReductionBlock);
      for (std::size_t i = begin; i < end; ++i) {
        const SamplePath p = sampler.sample(derive_stream(seed, i));
        triggers[b] += p.positivity_triggers;
        for (std::size_t k = 0; k < n_times; ++k) {
          if (p.overflowed_at(idx[k])) continue;
          acc[b * n_times + k].add(p.values[0] - p.values[idx[k]]);
        }
      }
    } catch (...) {
#pragma omp critical(slm_mean_curve_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  DefectCurve curve;
  curve.n_paths = n_paths;
  for (std::size_t b = 0; b < n_blocks; ++b) curve.positivity_triggers += triggers[b];
  for (std::size_t k = 0; k < n_times; ++k) {
    KahanSum sum;
    KahanSum sum_sq;
    std::size_t count = 0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const auto& a = acc[b * n_times + k];
      sum.add(a.sum.value());
      sum_sq.add(a.sum_sq.value());
      count += a.count;
    }
    curve.rows.push_back(detail::finish_row(grid.node(idx[k]), m0, sum.value(), sum_sq.value(), count, n_paths));
    curve.n_overflowed = std::max(curve.n_overflowed, curve.rows.back().n_overflowed);
  }
  return curve;
}

TailScan tail_scan(const ProcessModel& model, const TimeGrid& grid, double t, const std::vector<double>& lambdas,
                   std::size_t n_paths, std::uint64_t seed, const TailOptions& opts, const RunOptions& run) {
  const TimeGrid sub = detail::prefix_grid(grid, t);
  detail::check_tail_args(lambdas, n_paths, sub, opts);
  const PathSampler sampler(model, sub);
  std::vector<double> sups(n_paths);
  std::vector<double> grid_sups(n_paths);
  std::vector<double> coarse_sups(n_paths);
  std::vector<unsigned char> overflowed(n_paths);

  std::exception_ptr failure;
  const long long n = static_cast<long long>(n_paths);
#pragma omp parallel for schedule(dynamic, 256) num_threads(thread_count(run))
  for (long long i = 0; i < n; ++i) {
    try {
      const SupResult r = sampler.supremum(derive_stream(seed, static_cast<std::uint64_t>(i)), opts.sup_mode,
                                           opts.refinement, opts.coarse_stride);
      sups[i] = r.refined_sup;
      grid_sups[i] = r.grid_sup;
      coarse_sups[i] = r.coarse_sup;
      overflowed[i] = r.overflowed ? 1 : 0;
    } catch (...) {
#pragma omp critical(slm_tail_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  const bool refined = opts.sup_mode == SupMode::BridgeRefined && sampler.supports_bridge();
  return detail::finish_tail(lambdas, sups, grid_sups, coarse_sups, overflowed, sub.n_steps(), opts.coarse_stride,
                             refined);
}

MomentScan small_moment_scan(const ProcessModel& model, const TimeGrid& grid, double t, double alpha,
                             const std::vector<std::size_t>& sample_sizes, std::uint64_t seed,
                             const RunOptions& run) {
  detail::check_moment_args(alpha, sample_sizes);
  const TimeGrid sub = detail::prefix_grid(grid, t);
  const PathSampler sampler(model, sub);
  const std::size_t n_max = sample_sizes.back();
  std::vector<double> powered(n_max);
  std::vector<unsigned char> overflowed(n_max);

  std::exception_ptr failure;
  const long long n = static_cast<long long>(n_max);
#pragma omp parallel for schedule(dynamic, 64) num_threads(thread_count(run))
  for (long long i = 0; i < n; ++i) {
    try {
      const SupResult r = sampler.supremum(derive_stream(seed, static_cast<std::uint64_t>(i)), SupMode::Grid);
      powered[i] = std::pow(r.grid_sup, alpha);
      overflowed[i] = r.overflowed ? 1 : 0;
    } catch (...) {
#pragma omp critical(slm_moment_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::size_t n_over = 0;
  for (unsigned char o : overflowed) n_over += o;
  return detail::finish_moment(alpha, sample_sizes, powered, n_over);
}

}  // namespace slm

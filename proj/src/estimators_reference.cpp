#include <algorithm>
#include <cmath>

#include "estimators_detail.hpp"
#include "slm/estimators.hpp"

namespace slm::reference {

DefectCurve mean_curve(const ProcessModel& model, const TimeGrid& grid, const std::vector<double>& times,
                       std::size_t n_paths, std::uint64_t seed) {
  detail::check_mean_curve_args(n_paths, times);
  const PathSampler sampler(model, grid);
  const std::vector<std::size_t> idx = detail::time_indices(grid, times);
  DefectCurve curve;
  curve.n_paths = n_paths;
  std::vector<KahanSum> sum(idx.size());
  std::vector<KahanSum> sum_sq(idx.size());
  std::vector<std::size_t> count(idx.size(), 0);
  // Same summation order as the parallel kernel: per block of paths, then blocks in order.
  for (std::size_t begin = 0; begin < n_paths; begin += kReductionBlock) {
    std::vector<detail::MomentAccumulator> acc(idx.size());
    for (std::size_t i = begin; i < std::min(n_paths, begin + kReductionBlock); ++i) {
      const SamplePath p = sampler.sample(derive_stream(seed, i));
      curve.positivity_triggers += p.positivity_triggers;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (!p.overflowed_at(idx[k])) acc[k].add(p.values[0] - p.values[idx[k]]);
      }
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      sum[k].add(acc[k].sum.value());
      sum_sq[k].add(acc[k].sum_sq.value());
      count[k] += acc[k].count;
    }
  }
  const double m0 = initial_value(model);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    curve.rows.push_back(
        detail::finish_row(grid.node(idx[k]), m0, sum[k].value(), sum_sq[k].value(), count[k], n_paths));
    curve.n_overflowed = std::max(curve.n_overflowed, curve.rows.back().n_overflowed);
  }
  return curve;
}

TailScan tail_scan(const ProcessModel& model, const TimeGrid& grid, double t, const std::vector<double>& lambdas,
                   std::size_t n_paths, std::uint64_t seed, const TailOptions& opts) {
  const TimeGrid sub = detail::prefix_grid(grid, t);
  detail::check_tail_args(lambdas, n_paths, sub, opts);
  const PathSampler sampler(model, sub);
  std::vector<double> sups(n_paths);
  std::vector<double> grid_sups(n_paths);
  std::vector<double> coarse_sups(n_paths);
  std::vector<unsigned char> overflowed(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (opts.sup_mode == SupMode::BridgeRefined && sampler.supports_bridge()) {
      const SupResult r = sampler.supremum(derive_stream(seed, i), opts.sup_mode, opts.refinement, opts.coarse_stride);
      sups[i] = r.refined_sup;
      grid_sups[i] = r.grid_sup;
      coarse_sups[i] = r.coarse_sup;
      overflowed[i] = r.overflowed ? 1 : 0;
      continue;
    }
    // Grid maxima straight from the sampled path.
    const SamplePath p = sampler.sample(derive_stream(seed, i));
    double coarse = 0.0;
    for (std::size_t j = 0; j < p.values.size(); j += opts.coarse_stride) coarse = std::max(coarse, std::abs(p.values[j]));
    sups[i] = grid_sups[i] = path_sup(p);
    coarse_sups[i] = coarse;
    overflowed[i] = p.overflowed() ? 1 : 0;
  }
  const bool refined = opts.sup_mode == SupMode::BridgeRefined && sampler.supports_bridge();
  return detail::finish_tail(lambdas, sups, grid_sups, coarse_sups, overflowed, sub.n_steps(), opts.coarse_stride,
                             refined);
}

MomentScan small_moment_scan(const ProcessModel& model, const TimeGrid& grid, double t, double alpha,
                             const std::vector<std::size_t>& sample_sizes, std::uint64_t seed) {
  detail::check_moment_args(alpha, sample_sizes);
  const TimeGrid sub = detail::prefix_grid(grid, t);
  const PathSampler sampler(model, sub);
  std::vector<double> powered(sample_sizes.back());
  std::size_t n_over = 0;
  for (std::size_t i = 0; i < powered.size(); ++i) {
    // Straight from the sampled path rather than the supremum kernel.
    const SamplePath p = sampler.sample(derive_stream(seed, i));
    powered[i] = std::pow(path_sup(p), alpha);
    if (p.overflowed()) ++n_over;
  }
  return detail::finish_moment(alpha, sample_sizes, powered, n_over);
}

}  // namespace slm::reference

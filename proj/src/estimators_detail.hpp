#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "slm/estimators.hpp"

namespace slm::detail {

struct MomentAccumulator {
  KahanSum sum;
  KahanSum sum_sq;
  std::size_t count = 0;

  void add(double d) {
    sum.add(d);
    sum_sq.add(d * d);
    ++count;
  }
};

inline std::vector<std::size_t> time_indices(const TimeGrid& grid, const std::vector<double>& times) {
  std::vector<std::size_t> idx;
  idx.reserve(times.size());
  for (double t : times) idx.push_back(grid.index_of(t));
  return idx;
}

inline void check_mean_curve_args(std::size_t n_paths, const std::vector<double>& times) {
  if (n_paths < 100) throw std::invalid_argument("mean_curve needs at least 100 paths");
  if (times.empty()) throw std::invalid_argument("mean_curve needs at least one time");
}

inline DefectRow finish_row(double t, double m0, double sum, double sum_sq, std::size_t count,
                            std::size_t n_paths) {
  DefectRow row;
  row.t = t;
  row.n_paths = n_paths;
  row.n_overflowed = n_paths - count;
  if (count == 0) throw EstimationError("all paths overflowed by t=" + format_double(t));
  const double n = static_cast<double>(count);
  const double mean_d = sum / n;
  double var = count > 1 ? (sum_sq - sum * mean_d) / (n - 1.0) : 0.0;
  if (var < 0.0) var = 0.0;
  row.defect_est = mean_d;
  row.mean_est = m0 - mean_d;
  row.stderr_est = std::sqrt(var / n);
  row.ci_low = row.defect_est - kZ99 * row.stderr_est;
  row.ci_high = row.defect_est + kZ99 * row.stderr_est;
  return row;
}

// Grid on [0, t] with the same step as `grid`; paths on it are prefixes of
// paths on `grid`.
inline TimeGrid prefix_grid(const TimeGrid& grid, double t) {
  const std::size_t idx = grid.index_of(t);
  if (idx == 0) throw std::invalid_argument("horizon t must be a positive grid node");
  if (idx == grid.n_steps()) return grid;
  return TimeGrid(grid.t_start(), grid.node(idx), idx);
}

inline void check_tail_args(const std::vector<double>& lambdas, std::size_t n_paths, const TimeGrid& sub,
                            const TailOptions& opts) {
  if (opts.coarse_stride == 0 || sub.n_steps() % opts.coarse_stride != 0) {
    throw std::invalid_argument("tail_scan coarse_stride must divide the step count");
  }
  if (lambdas.size() < 3) throw std::invalid_argument("tail_scan needs at least 3 lambdas");
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > lambdas[i - 1])) throw std::invalid_argument("tail_scan lambdas must be increasing");
  }
  if (n_paths < 10000) throw std::invalid_argument("tail_scan needs at least 10^4 paths");
}

inline TailScan finish_tail(const std::vector<double>& lambdas, const std::vector<double>& sups,
                            const std::vector<double>& grid_sups, const std::vector<double>& coarse_sups,
                            const std::vector<unsigned char>& overflowed, std::size_t n_steps,
                            std::size_t coarse_stride, bool refined) {
  TailScan scan;
  scan.n_paths = sups.size();
  scan.n_steps = n_steps;
  scan.coarse_steps = n_steps / coarse_stride;
  scan.bridge_refined = refined;
  for (unsigned char o : overflowed) scan.n_overflowed += o;
  const double n = static_cast<double>(sups.size());
  for (double lambda : lambdas) {
    std::size_t hits = 0;
    std::size_t grid_hits = 0;
    std::size_t coarse_hits = 0;
    for (std::size_t i = 0; i < sups.size(); ++i) {
      if (overflowed[i] || sups[i] >= lambda) ++hits;
      if (overflowed[i] || grid_sups[i] >= lambda) ++grid_hits;
      if (overflowed[i] || coarse_sups[i] >= lambda) ++coarse_hits;
    }
    TailRow row;
    row.lambda = lambda;
    row.prob_est = static_cast<double>(hits) / n;
    row.stderr_est = std::sqrt(row.prob_est * (1.0 - row.prob_est) / n);
    row.lambda_prob = lambda * row.prob_est;
    row.grid_prob_est = static_cast<double>(grid_hits) / n;
    row.coarse_prob_est = static_cast<double>(coarse_hits) / n;
    scan.rows.push_back(row);
  }
  return scan;
}

inline void check_moment_args(double alpha, const std::vector<std::size_t>& sizes) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("small_moment_scan: alpha must lie in (0, 1)");
  if (sizes.size() < 4) throw std::invalid_argument("small_moment_scan needs at least 4 sample sizes");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) throw std::invalid_argument("small_moment_scan sizes must be increasing");
  }
  if (sizes.front() == 0) throw std::invalid_argument("small_moment_scan sizes must be positive");
}

inline MomentScan finish_moment(double alpha, const std::vector<std::size_t>& sizes,
                                const std::vector<double>& powered, std::size_t n_overflowed) {
  MomentScan scan;
  scan.alpha = alpha;
  scan.sample_sizes = sizes;
  scan.n_overflowed = n_overflowed;
  KahanSum sum;
  std::size_t next = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    for (; next < sizes[k]; ++next) sum.add(powered[next]);
    scan.estimates.push_back(sum.value() / static_cast<double>(sizes[k]));
  }
  scan.verdict = moment_trend(scan.estimates);
  return scan;
}

}  // namespace slm::detail

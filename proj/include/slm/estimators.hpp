#pragma once

// Monte Carlo estimators of the strictness signatures: mean/defect curves,
// survival scans lambda * P(sup |M| >= lambda), and small-moment scans.
//
// Path i always uses stream (seed, i). The parallel kernels spread paths over
// OpenMP threads and reduce in a fixed block order, so results do not depend
// on the thread count. The reference:: versions are plain serial loops kept
// to test the kernels against.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "slm/core.hpp"
#include "slm/samplers.hpp"

namespace slm {

struct RunOptions {
  // 0 = OpenMP default.
  int threads = 0;
};

// Paths per reduction block in the parallel kernels.
inline constexpr std::size_t kReductionBlock = 1024;

// z for a two-sided 99% normal interval.
inline constexpr double kZ99 = 2.5758293035489004;

struct DefectRow {
  double t = 0.0;
  double mean_est = 0.0;
  double stderr_est = 0.0;
  double defect_est = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_overflowed = 0;
};

struct DefectCurve {
  std::vector<DefectRow> rows;
  std::size_t n_paths = 0;
  std::size_t n_overflowed = 0;
  std::size_t positivity_triggers = 0;
};

struct TailRow {
  double lambda = 0.0;
  double prob_est = 0.0;
  double stderr_est = 0.0;
  double lambda_prob = 0.0;
  // Same probability from the plain grid maximum (equal to prob_est unless a
  // bridge-refined supremum was used).
  double grid_prob_est = 0.0;
  // From the grid maximum over every coarse_stride-th node of the same paths.
  double coarse_prob_est = 0.0;
};

struct TailScan {
  std::vector<TailRow> rows;
  std::size_t n_paths = 0;
  std::size_t n_overflowed = 0;
  std::size_t n_steps = 0;
  std::size_t coarse_steps = 0;
  bool bridge_refined = false;
};

struct TailOptions {
  SupMode sup_mode = SupMode::Grid;
  BridgeRefinement refinement{};
  // Also report the scan on the grid coarsened by this factor (must divide the
  // step count up to t).
  std::size_t coarse_stride = 1;
};

enum class MomentTrend { Stabilizing, SuspectedDivergent };

const char* moment_trend_word(MomentTrend t);

struct MomentScan {
  double alpha = 0.0;
  std::vector<std::size_t> sample_sizes;
  std::vector<double> estimates;
  MomentTrend verdict = MomentTrend::Stabilizing;
  std::size_t n_overflowed = 0;
};

// max |value| over the grid nodes.
double path_sup(const SamplePath& path);

// Per-time sample mean of M_t, its standard error and the defect
// mean(M_0) - mean(M_t) with a 99% normal interval. Overflowed paths are
// excluded from the mean and counted.
DefectCurve mean_curve(const ProcessModel& model, const TimeGrid& grid, const std::vector<double>& times,
                       std::size_t n_paths, std::uint64_t seed, const RunOptions& run = {});

// Empirical P(sup_{s<=t} |M_s| >= lambda); overflowed paths exceed every lambda.
TailScan tail_scan(const ProcessModel& model, const TimeGrid& grid, double t, const std::vector<double>& lambdas,
                   std::size_t n_paths, std::uint64_t seed, const TailOptions& opts = {}, const RunOptions& run = {});

// E[sup^alpha] on nested samples (size n_k uses streams 0..n_k-1). The
// verdict is a diagnostic: suspected-divergent iff each of the last two
// consecutive estimates grew by at least 20%.
MomentScan small_moment_scan(const ProcessModel& model, const TimeGrid& grid, double t, double alpha,
                             const std::vector<std::size_t>& sample_sizes, std::uint64_t seed,
                             const RunOptions& run = {});

MomentTrend moment_trend(const std::vector<double>& estimates);

namespace reference {

DefectCurve mean_curve(const ProcessModel& model, const TimeGrid& grid, const std::vector<double>& times,
                       std::size_t n_paths, std::uint64_t seed);

TailScan tail_scan(const ProcessModel& model, const TimeGrid& grid, double t, const std::vector<double>& lambdas,
                   std::size_t n_paths, std::uint64_t seed, const TailOptions& opts = {});

MomentScan small_moment_scan(const ProcessModel& model, const TimeGrid& grid, double t, double alpha,
                             const std::vector<std::size_t>& sample_sizes, std::uint64_t seed);

}  // namespace reference

}  // namespace slm

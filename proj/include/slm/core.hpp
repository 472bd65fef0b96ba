#pragma once

// Shared domain types: time grids, sample paths, counter-based random
// streams, verdicts.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace slm {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Uniform grid t_i = t_start + i * (t_end - t_start) / n_steps.
class TimeGrid {
 public:
  TimeGrid(double t_start, double t_end, std::size_t n_steps);

  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }
  std::size_t n_steps() const { return n_steps_; }
  std::size_t n_nodes() const { return n_steps_ + 1; }
  double dt() const { return (t_end_ - t_start_) / static_cast<double>(n_steps_); }

  // Node n_steps is exactly t_end.
  double node(std::size_t i) const;
  std::vector<double> nodes() const;

  // Index of the node equal to t (within 1e-12 relative), or throws.
  std::size_t index_of(double t) const;

 private:
  double t_start_;
  double t_end_;
  std::size_t n_steps_;
};

TimeGrid uniform_grid(double t_end, std::size_t n_steps);

inline constexpr std::size_t kNoOverflow = std::numeric_limits<std::size_t>::max();

// Values clamped to this magnitude once a path overflows.
inline constexpr double kOverflowSentinel = 1e300;

// A simulated value at or beyond this magnitude counts as an overflow; kept
// well below the double range so sums of squares stay finite.
inline constexpr double kOverflowThreshold = 1e100;

struct SamplePath {
  TimeGrid grid;
  std::vector<double> values;
  // First node whose value is the overflow sentinel, or kNoOverflow.
  std::size_t overflow_index = kNoOverflow;
  // Number of Euler steps where the positivity policy fired.
  std::size_t positivity_triggers = 0;

  bool overflowed() const { return overflow_index != kNoOverflow; }
  bool overflowed_at(std::size_t i) const { return overflow_index <= i; }
};

// Inverse standard normal CDF (Wichura AS241, about 1e-16 relative).
double normal_quantile(double p);

// Philox4x32-10 keyed by a hash of the master seed; the 128-bit counter holds
// (draw index, stream id). A stream is therefore a pure function of
// (master_seed, stream_id, lane) and can be replayed from any position.

class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t master_seed, std::uint64_t stream_id, std::uint32_t lane = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (next_ == 2 * kBatch) refill();
    return buffer_[next_++];
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    // 52 random bits centred in their cell: result lies in [2^-53, 1 - 2^-53].
    return (static_cast<double>((*this)() >> 12) + 0.5) * 0x1.0p-52;
  }
  // Standard normal by inverse CDF of uniform().
  double normal() { return normal_quantile(uniform()); }

 private:
  static constexpr int kBatch = 8;

  void refill();

  std::uint32_t key_[2];
  std::uint64_t block_ = 0;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
  std::uint64_t buffer_[2 * kBatch] = {};
  int next_ = 2 * kBatch;
};

// Immutable handle naming one per-path stream.
struct RandomSource {
  std::uint64_t master_seed = 42;
  std::uint64_t stream_id = 0;

  // Lane 0 is the main sequence; other lanes are auxiliary sequences for the
  // same path (bridge refinement draws).
  CounterRng engine(std::uint32_t lane = 0) const { return CounterRng(master_seed, stream_id, lane); }
};

RandomSource derive_stream(std::uint64_t master_seed, std::uint64_t stream_id);

std::uint64_t splitmix64(std::uint64_t x);

// One Philox4x32-10 block: ctr is replaced by the output words.
void philox4x32_10(std::uint32_t ctr[4], const std::uint32_t key[2]);

double normal_cdf(double x);

enum class Status { Martingale, StrictLocal, Inconclusive };

const char* status_word(Status s);

// One block of an improper-integral scan: integral of h over [lower, upper].
struct BlockRecord {
  int k = 0;
  double lower = 0.0;
  double upper = 0.0;
  double integral = 0.0;
};

struct Evidence {
  std::string criterion;
  std::string outcome;
  std::vector<BlockRecord> blocks;
  std::vector<std::pair<std::string, double>> values;
  bool conclusive = false;
};

struct Verdict {
  Status status = Status::Inconclusive;
  std::vector<Evidence> evidence;
  std::string notes;
};

struct TailQuantities {
  double ell = 0.0;
  double gamma = 0.0;
  double t = 0.0;
};

// Compensated summation in call order.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

// Fixed-width formatting (17 significant digits, '.' separator).
std::string format_double(double v);

}  // namespace slm

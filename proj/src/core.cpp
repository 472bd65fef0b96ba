#include "slm/core.hpp"

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include <charconv>
#include <cmath>
#include <system_error>

namespace slm {

TimeGrid::TimeGrid(double t_start, double t_end, std::size_t n_steps)
    : t_start_(t_start), t_end_(t_end), n_steps_(n_steps) {
  if (!(t_start >= 0.0) || !std::isfinite(t_end) || !(t_end > t_start)) {
    throw std::invalid_argument("time grid requires 0 <= t_start < t_end");
  }
  if (n_steps == 0) {
    throw std::invalid_argument("time grid requires at least one step");
  }
}

double TimeGrid::node(std::size_t i) const {
  if (i == n_steps_) return t_end_;
  if (i > n_steps_) throw std::out_of_range("grid node index");
  return t_start_ + static_cast<double>(i) * (t_end_ - t_start_) / static_cast<double>(n_steps_);
}

std::vector<double> TimeGrid::nodes() const {
  std::vector<double> out(n_nodes());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = node(i);
  return out;
}

std::size_t TimeGrid::index_of(double t) const {
  const double pos = (t - t_start_) / dt();
  const double rounded = std::round(pos);
  if (rounded < 0.0 || rounded > static_cast<double>(n_steps_) ||
      std::abs(pos - rounded) > 1e-9 * std::max(1.0, rounded)) {
    throw std::invalid_argument("time " + format_double(t) + " is not a grid node");
  }
  return static_cast<std::size_t>(rounded);
}

TimeGrid uniform_grid(double t_end, std::size_t n_steps) {
  if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  return TimeGrid(0.0, t_end, n_steps);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::uint32_t ctr[4], const std::uint32_t key[2]) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  ctr[0] = hi1 ^ ctr[1] ^ key[0];
  ctr[1] = lo1;
  ctr[2] = hi0 ^ ctr[3] ^ key[1];
  ctr[3] = lo0;
}

}  // namespace

void philox4x32_10(std::uint32_t ctr[4], const std::uint32_t key_in[2]) {
  std::uint32_t key[2] = {key_in[0], key_in[1]};
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    philox_round(ctr, key);
  }
}

CounterRng::CounterRng(std::uint64_t master_seed, std::uint64_t stream_id, std::uint32_t lane)
    : stream_lo_(static_cast<std::uint32_t>(stream_id)),
      stream_hi_(static_cast<std::uint32_t>(stream_id >> 32)) {
  const std::uint64_t k = splitmix64(master_seed ^ splitmix64(0xA0761D6478BD642FULL + lane));
  key_[0] = static_cast<std::uint32_t>(k);
  key_[1] = static_cast<std::uint32_t>(k >> 32);
}

#if defined(__SSE2__)

namespace {

struct MulHiLo {
  __m128i hi;
  __m128i lo;
};

// Lane-wise 32x32 -> 64 products of four words.
inline MulHiLo mulhilo4(__m128i x, __m128i m) {
  const __m128i low_mask = _mm_set1_epi64x(0xFFFFFFFFLL);
  const __m128i even = _mm_mul_epu32(x, m);
  const __m128i odd = _mm_mul_epu32(_mm_srli_epi64(x, 32), m);
  return {_mm_or_si128(_mm_srli_epi64(even, 32), _mm_andnot_si128(low_mask, odd)),
          _mm_or_si128(_mm_and_si128(even, low_mask), _mm_slli_epi64(odd, 32))};
}

}  // namespace

void CounterRng::refill() {
  // Eight blocks as two groups of four SSE lanes; the groups are independent,
  // which hides the multiply latency. Same words as eight scalar
  // philox4x32_10 calls.
  static_assert(kBatch == 8);
  const std::uint32_t b0 = static_cast<std::uint32_t>(block_);
  const std::uint32_t h = static_cast<std::uint32_t>(block_ >> 32);
  // block_ is a multiple of 8, so the low word does not wrap inside a batch.
  __m128i x0[2], x1[2], x2[2], x3[2];
  for (int g = 0; g < 2; ++g) {
    const std::uint32_t b = b0 + 4u * static_cast<std::uint32_t>(g);
    x0[g] = _mm_set_epi32(static_cast<int>(b + 3), static_cast<int>(b + 2), static_cast<int>(b + 1),
                          static_cast<int>(b));
    x1[g] = _mm_set1_epi32(static_cast<int>(h));
    x2[g] = _mm_set1_epi32(static_cast<int>(stream_lo_));
    x3[g] = _mm_set1_epi32(static_cast<int>(stream_hi_));
  }
  const __m128i m0 = _mm_set1_epi32(static_cast<int>(kPhiloxM0));
  const __m128i m1 = _mm_set1_epi32(static_cast<int>(kPhiloxM1));
  std::uint32_t key[2] = {key_[0], key_[1]};
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    const __m128i k0 = _mm_set1_epi32(static_cast<int>(key[0]));
    const __m128i k1 = _mm_set1_epi32(static_cast<int>(key[1]));
    for (int g = 0; g < 2; ++g) {
      const MulHiLo p0 = mulhilo4(x0[g], m0);
      const MulHiLo p1 = mulhilo4(x2[g], m1);
      x0[g] = _mm_xor_si128(_mm_xor_si128(p1.hi, x1[g]), k0);
      x1[g] = p1.lo;
      x2[g] = _mm_xor_si128(_mm_xor_si128(p0.hi, x3[g]), k1);
      x3[g] = p0.lo;
    }
  }
  block_ += kBatch;
  alignas(16) std::uint32_t w[4][4];
  for (int g = 0; g < 2; ++g) {
    _mm_store_si128(reinterpret_cast<__m128i*>(w[0]), x0[g]);
    _mm_store_si128(reinterpret_cast<__m128i*>(w[1]), x1[g]);
    _mm_store_si128(reinterpret_cast<__m128i*>(w[2]), x2[g]);
    _mm_store_si128(reinterpret_cast<__m128i*>(w[3]), x3[g]);
    for (int j = 0; j < 4; ++j) {
      buffer_[8 * g + 2 * j] = (static_cast<std::uint64_t>(w[1][j]) << 32) | w[0][j];
      buffer_[8 * g + 2 * j + 1] = (static_cast<std::uint64_t>(w[3][j]) << 32) | w[2][j];
    }
  }
  next_ = 0;
}

#else

void CounterRng::refill() {
  std::uint32_t c[kBatch][4];
  for (int j = 0; j < kBatch; ++j) {
    const std::uint64_t b = block_ + static_cast<std::uint64_t>(j);
    c[j][0] = static_cast<std::uint32_t>(b);
    c[j][1] = static_cast<std::uint32_t>(b >> 32);
    c[j][2] = stream_lo_;
    c[j][3] = stream_hi_;
    philox4x32_10(c[j], key_);
  }
  block_ += kBatch;
  for (int j = 0; j < kBatch; ++j) {
    buffer_[2 * j] = (static_cast<std::uint64_t>(c[j][1]) << 32) | c[j][0];
    buffer_[2 * j + 1] = (static_cast<std::uint64_t>(c[j][3]) << 32) | c[j][2];
  }
  next_ = 0;
}

#endif

RandomSource derive_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
  return RandomSource{master_seed, stream_id};
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r + 6.7265770927008700853e+4) * r +
                4.5921953931549871457e+4) * r + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r + 3.9307895800092710610e+4) * r +
                2.1213794301586595867e+4) * r + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
               1.27045825245236838258e+0) * r + 3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
               1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
               2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
               7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

const char* status_word(Status s) {
  switch (s) {
    case Status::Martingale:
      return "MARTINGALE";
    case Status::StrictLocal:
      return "STRICT_LOCAL";
    case Status::Inconclusive:
      return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace slm

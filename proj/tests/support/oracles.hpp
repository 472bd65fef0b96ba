#pragma once

// Independent reference computations for the tests. Nothing here touches the
// library's RNG: draws come from std::mt19937_64 and std::normal_distribution.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

// E[1 / |(x0, 0, 0) + sqrt(t) Z|] with Z standard normal in R^3.
McEstimate inverse_bes3_mean(double t, double x0, std::size_t n, std::uint64_t seed);

// E[1 / |e1 + sqrt(t) Z|^2] with Z standard normal in R^4 (BESQ(4) from 1).
McEstimate besq4_inverse_mean(double t, std::size_t n, std::uint64_t seed);

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

// Critical value at level 1%: c(0.01) sqrt((n + m) / (n m)).
double ks_critical_1pct(std::size_t n, std::size_t m);

// Bisection on a monotone function.
template <class F>
double bisect(F f, double lo, double hi, double tol = 1e-13) {
  double flo = f(lo);
  for (int i = 0; i < 300 && hi - lo > tol * (1.0 + hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Random expression in the parser grammar over variable `var`.
std::string random_expression(std::mt19937_64& rng, const std::string& var, int depth);

std::string random_bytes(std::mt19937_64& rng, std::size_t max_len);

}  // namespace oracle

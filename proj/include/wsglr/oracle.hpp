#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"

// Direct (non-recursive) evaluations of the likelihood-ratio statistics.
// They cost O(t^2) per time index and exist to cross-check the streaming
// detectors and to evaluate short records exactly.

namespace wsglr::oracle {

namespace detail {

inline std::vector<LogDensities> log_densities(const Quad& quad, std::span<const double> xs, std::size_t t) {
  require(t <= xs.size(), Errc::invalid_argument, "t exceeds the observation count");
  std::vector<LogDensities> out;
  out.reserve(t);
  for (std::size_t i = 0; i < t; ++i) out.push_back(evaluate(quad, xs[i]));
  return out;
}

// max over j in [k, t+1] of sum_{i=k}^{j-1} a_i + sum_{i=j}^{t} b_i, with
// 1-based k and t and the data in ld[0..t).
template <typename A, typename B>
double best_split(std::span<const LogDensities> ld, std::size_t k, std::size_t t, A a, B b) {
  // suffix[j-k] = sum_{i=j}^{t} b_i
  std::vector<double> suffix(t - k + 2, 0.0);
  for (std::size_t j = t; j >= k; --j) {
    suffix[j - k] = suffix[j - k + 1] + b(ld[j - 1]);
    if (j == k) break;
  }
  double prefix = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = k; j <= t + 1; ++j) {
    best = std::max(best, prefix + suffix[j - k]);
    if (j <= t) prefix += a(ld[j - 1]);
  }
  return best;
}

inline double sum_over(std::span<const LogDensities> ld, std::size_t k, std::size_t t, double LogDensities::*field) {
  double acc = 0.0;
  for (std::size_t i = k; i <= t; ++i) acc += ld[i - 1].*field;
  return acc;
}

inline double denominator(std::span<const LogDensities> ld, std::size_t k, std::size_t t) {
  return best_split(ld, k, t, [](const LogDensities& v) { return v.f; },
                    [](const LogDensities& v) { return v.fn; });
}

}  // namespace detail

/// ln Lambda(k,t): all-g numerator over the best nuisance-only denominator.
inline double log_lambda(const Quad& quad, std::span<const double> xs, std::size_t k, std::size_t t) {
  require(k >= 1 && k <= t, Errc::invalid_argument, "need 1 <= k <= t");
  const auto ld = detail::log_densities(quad, xs, t);
  return detail::sum_over(ld, k, t, &LogDensities::g) - detail::denominator(ld, k, t);
}

/// ln Lambda_n(k,t): all-g_n numerator over the same denominator.
inline double log_lambda_n(const Quad& quad, std::span<const double> xs, std::size_t k, std::size_t t) {
  require(k >= 1 && k <= t, Errc::invalid_argument, "need 1 <= k <= t");
  const auto ld = detail::log_densities(quad, xs, t);
  return detail::sum_over(ld, k, t, &LogDensities::gn) - detail::denominator(ld, k, t);
}

/// ln Lambda_SGLR(k,t).
inline double log_lambda_sglr(const Quad& quad, std::span<const double> xs, std::size_t k, std::size_t t) {
  require(k >= 1 && k <= t, Errc::invalid_argument, "need 1 <= k <= t");
  const auto ld = detail::log_densities(quad, xs, t);
  const double num = std::max(detail::sum_over(ld, k, t, &LogDensities::g),
                              detail::sum_over(ld, k, t, &LogDensities::gn));
  return num - detail::denominator(ld, k, t);
}

/// S_SGLR(t) by exhaustive search over k in [lo, t+1] and j in [k, t+1], where
/// lo = max(1, t - m_b) when a window is given and 1 otherwise. With a window
/// this is the W-SGLR statistic.
inline double sglr_bruteforce(const Quad& quad, std::span<const double> xs, std::size_t t,
                              std::optional<std::size_t> m_b = std::nullopt) {
  const auto ld = detail::log_densities(quad, xs, t);
  double best = 0.0;  // k = t+1
  const std::size_t lo = (m_b && t > *m_b) ? t - *m_b : 1;
  for (std::size_t k = lo; k <= t; ++k) {
    const double num = std::max(detail::sum_over(ld, k, t, &LogDensities::g),
                                detail::sum_over(ld, k, t, &LogDensities::gn));
    best = std::max(best, num - detail::denominator(ld, k, t));
  }
  return best;
}

/// S_GLR(t): the numerator also maximizes over the nuisance split j.
inline double glr_bruteforce(const Quad& quad, std::span<const double> xs, std::size_t t,
                             std::optional<std::size_t> m_b = std::nullopt) {
  const auto ld = detail::log_densities(quad, xs, t);
  double best = 0.0;
  const std::size_t lo = (m_b && t > *m_b) ? t - *m_b : 1;
  for (std::size_t k = lo; k <= t; ++k) {
    const double num = detail::best_split(ld, k, t, [](const LogDensities& v) { return v.g; },
                                          [](const LogDensities& v) { return v.gn; });
    best = std::max(best, num - detail::denominator(ld, k, t));
  }
  return best;
}

/// The FMA statistic: the single full-window term ln Lambda_SGLR(t - m_b, t),
/// or 0 while t <= m_b.
inline double fma_bruteforce(const Quad& quad, std::span<const double> xs, std::size_t t, std::size_t m_b) {
  if (t <= m_b) return 0.0;
  return log_lambda_sglr(quad, xs, t - m_b, t);
}

/// Page's CuSum as max over k of the trailing log-likelihood-ratio sums.
inline double cusum_bruteforce(std::span<const double> llr, std::size_t t) {
  require(t <= llr.size(), Errc::invalid_argument, "t exceeds the observation count");
  double best = 0.0;
  for (std::size_t k = 1; k <= t; ++k) {
    double acc = 0.0;
    for (std::size_t i = k; i <= t; ++i) acc += llr[i - 1];
    best = std::max(best, acc);
  }
  return best;
}

}  // namespace wsglr::oracle

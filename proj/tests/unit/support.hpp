#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "wsglr/distribution.hpp"

// Reference implementations used only by the tests. They evaluate the
// statistics straight from their definitions (explicit loops over the start
// index k and the split j); only the log-densities come from the library.

namespace testing_support {

using wsglr::Distribution;
using wsglr::Quad;

inline Quad reference_quad() {
  return Quad{Distribution::gaussian(0, 1), Distribution::gaussian(2, 1), Distribution::gaussian(0, 10),
              Distribution::gaussian(2, 10)};
}

inline Quad small_shift_quad() {
  return Quad{Distribution::gaussian(0, 1), Distribution::gaussian(0, 2), Distribution::gaussian(0.5, 1),
              Distribution::gaussian(0.5, 2)};
}

inline Quad equal_quad() {
  const auto d = Distribution::gaussian(0.3, 1.7);
  return Quad{d, d, d, d};
}

/// Four Gaussians with means in [-2, 2] and variances in [0.5, 4].
inline Quad random_quad(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mean(-2.0, 2.0);
  std::uniform_real_distribution<double> var(0.5, 4.0);
  auto draw = [&] {
    const double m = mean(rng);
    return Distribution::gaussian(m, var(rng));
  };
  Distribution f = draw();
  Distribution fn = draw();
  Distribution g = draw();
  Distribution gn = draw();
  return Quad{f, fn, g, gn};
}

/// ln N(x; m, v) written out independently of the library.
inline double gauss_logpdf(double x, double m, double v) {
  const double pi = 3.14159265358979323846;
  return -0.5 * std::log(2.0 * pi * v) - (x - m) * (x - m) / (2.0 * v);
}

struct Logs {
  std::vector<double> f, fn, g, gn;
};

inline Logs logs_of(const Quad& q, const std::vector<double>& xs) {
  Logs l;
  for (double x : xs) {
    l.f.push_back(q.f.log_density(x));
    l.fn.push_back(q.fn.log_density(x));
    l.g.push_back(q.g.log_density(x));
    l.gn.push_back(q.gn.log_density(x));
  }
  return l;
}

// sum_{i=lo}^{hi} v_i with 1-based, inclusive bounds (empty when lo > hi).
inline double range_sum(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) s += v[i - 1];
  return s;
}

/// max_{k <= j <= t+1} sum_{i=k}^{j-1} a_i + sum_{i=j}^{t} b_i. Each candidate
/// is accumulated left to right in a single sum.
inline double split_max(const std::vector<double>& a, const std::vector<double>& b, std::size_t k, std::size_t t) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = k; j <= t + 1; ++j) {
    double acc = 0.0;
    for (std::size_t i = k; i < j; ++i) acc += a[i - 1];
    for (std::size_t i = j; i <= t; ++i) acc += b[i - 1];
    best = std::max(best, acc);
  }
  return best;
}

/// Every candidate sum for every (k, j), kept for the whole stream. cand[k][j]
/// holds sum_{i=k}^{j-1} a_i + sum_{i=j}^{t} b_i, accumulated left to right.
class SplitTable {
 public:
  SplitTable(const std::vector<double>& a, const std::vector<double>& b) : a_(a), b_(b) {}

  void advance() {
    ++t_;
    cand_.emplace_back();
    prefix_.push_back(0.0);
    for (std::size_t k = 1; k <= t_; ++k) {
      auto& c = cand_[k - 1];
      for (double& v : c) v += b_[t_ - 1];       // splits j <= t already open
      c.push_back(prefix_[k - 1] + b_[t_ - 1]);  // j = t
      prefix_[k - 1] += a_[t_ - 1];
    }
  }

  /// max over j in [k, t+1]; the j = t+1 candidate is the all-a prefix.
  double best(std::size_t k) const {
    double m = prefix_[k - 1];
    for (double v : cand_[k - 1]) m = std::max(m, v);
    return m;
  }

  double prefix(std::size_t k) const { return prefix_[k - 1]; }
  std::size_t t() const { return t_; }

 private:
  const std::vector<double>& a_;
  const std::vector<double>& b_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> cand_;
  std::vector<double> prefix_;
};

enum class Statistic { sglr, glr, fma };

/// Statistic at t = 1..n by exhaustive search over k and j. For sglr the start
/// index is limited to t - m_b .. t when a window is given; fma uses only
/// k = t - m_b.
inline std::vector<double> reference_trace(const Quad& q, const std::vector<double>& xs, Statistic which,
                                           std::optional<std::size_t> m_b = std::nullopt) {
  const Logs l = logs_of(q, xs);
  SplitTable denom(l.f, l.fn);
  SplitTable num_full(l.g, l.gn);
  SplitTable num_gn(l.gn, l.gn);  // prefix() is the all-g_n sum
  std::vector<double> out;
  for (std::size_t t = 1; t <= xs.size(); ++t) {
    denom.advance();
    num_full.advance();
    num_gn.advance();
    auto term = [&](std::size_t k) {
      const double num =
          which == Statistic::glr ? num_full.best(k) : std::max(num_full.prefix(k), num_gn.prefix(k));
      return num - denom.best(k);
    };
    if (which == Statistic::fma) {
      out.push_back(t <= *m_b ? 0.0 : term(t - *m_b));
      continue;
    }
    const std::size_t lo = (m_b && t > *m_b) ? t - *m_b : 1;
    double best = 0.0;
    for (std::size_t k = lo; k <= t; ++k) best = std::max(best, term(k));
    out.push_back(best);
  }
  return out;
}

inline std::vector<double> normal_stream(std::size_t n, std::uint64_t seed, double m = 0.0, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(m, sd);
  std::vector<double> xs(n);
  for (double& x : xs) x = d(rng);
  return xs;
}

/// Relative closeness with an absolute floor of 1.
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace testing_support

#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>

#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"
#include "wsglr/ring_buffer.hpp"

namespace wsglr {

/// Running quantities for one candidate start index k at the current time t.
///
/// denom_max is D(k,t) = max over k <= j <= t+1 of
///   sum_{i=k}^{j-1} ln f(X_i) + sum_{i=j}^{t} ln f_n(X_i),
/// the log-likelihood of the best single nuisance split without a critical
/// change. num_max is the same maximum with (g, g_n) in place of (f, f_n) and
/// is only needed by the full GLR numerator.
struct WindowEntry {
  std::size_t k = 0;
  double sum_log_g = 0.0;
  double sum_log_gn = 0.0;
  double sum_log_f = 0.0;
  double denom_max = 0.0;
  double num_max = 0.0;
};

/// One step of the D(k,t) recursion. Either the nuisance split lies at or
/// before t (extend the previous best by ln f_n(X_t)) or it is j = t+1 (all f).
inline double denom_step(double d_prev, double f_sum_new, double lfn_x) {
  return std::max(d_prev + lfn_x, f_sum_new);
}

enum class Numerator {
  simplified,  // max{prod g, prod g_n}: only the splits j = k and j = t+1
  full,        // max over every split j of prod g * prod g_n
};

struct WindowOptions {
  // Longest window t-k+1 kept; 0 keeps every k (unwindowed statistic).
  std::size_t max_length = 0;
  // Shortest window t-k+1 that competes in the maximum.
  std::size_t min_length = 1;
  // Whether the empty window k = t+1 (log-ratio 0) competes.
  bool empty_term = true;
  Numerator numerator = Numerator::simplified;
};

/// Incremental evaluation of
///   S(t) = max over live k of [ln numerator(k,t) - D(k,t)]
/// in O(#live k) per sample. With max_length = m_b + 1 and the empty term this
/// is the window-limited SGLR statistic (k ranges over t-m_b .. t+1); with
/// max_length = 0 it is the unwindowed SGLR, or the GLR with Numerator::full.
///
/// Ties in the maximum resolve toward the smaller k.
class SglrWindow {
 public:
  SglrWindow(Quad quad, WindowOptions options)
      : quad_(std::move(quad)),
        options_(options),
        entries_(options.max_length == 0 ? 64 : options.max_length + 1, options.max_length != 0) {
    require(options_.min_length >= 1, Errc::invalid_argument, "min_length must be >= 1");
    require(options_.max_length == 0 || options_.max_length >= options_.min_length, Errc::invalid_argument,
            "max_length must be >= min_length");
  }

  /// The W-SGLR statistic with window parameter m_b.
  static SglrWindow wsglr(Quad quad, std::size_t m_b) {
    require(m_b >= 1, Errc::invalid_argument, "window m_b must be >= 1");
    return SglrWindow(std::move(quad), WindowOptions{m_b + 1, 1, true, Numerator::simplified});
  }

  double step(double x) { return step(evaluate(quad_, x)); }

  double step(const LogDensities& ld) {
    ++t_;
    // Fresh entry for k = t; its D(k,k-1) and F(k,k-1) are the empty sums.
    entries_.push_back(WindowEntry{t_, 0.0, 0.0, 0.0, 0.0, 0.0});
    const bool full = options_.numerator == Numerator::full;
    entries_.for_each([&](WindowEntry& e) {
      e.sum_log_g += ld.g;
      e.sum_log_gn += ld.gn;
      e.sum_log_f += ld.f;
      e.denom_max = denom_step(e.denom_max, e.sum_log_f, ld.fn);
      if (full) e.num_max = std::max(e.num_max + ld.gn, e.sum_log_g);
    });
    if (options_.max_length != 0) {
      while (!entries_.empty() && t_ - entries_.front().k + 1 > options_.max_length) entries_.pop_front();
    }
    recompute();
    return statistic_;
  }

  double statistic() const noexcept { return statistic_; }
  std::size_t t() const noexcept { return t_; }

  /// Start index attaining the maximum; t+1 for the empty window, nullopt when
  /// nothing competes.
  std::optional<std::size_t> argmax_k() const noexcept { return argmax_; }

  double term(const WindowEntry& e) const noexcept {
    const double num = options_.numerator == Numerator::full ? e.num_max : std::max(e.sum_log_g, e.sum_log_gn);
    return num - e.denom_max;
  }

  /// ln Lambda_SGLR(k,t) for the oldest live k when its window has exactly
  /// `length` samples; nullopt otherwise.
  std::optional<double> term_of_length(std::size_t length) const noexcept {
    if (entries_.empty()) return std::nullopt;
    const auto& e = entries_.front();
    if (t_ - e.k + 1 != length) return std::nullopt;
    return term(e);
  }

  const RingBuffer<WindowEntry>& entries() const noexcept { return entries_; }
  const Quad& quad() const noexcept { return quad_; }
  const WindowOptions& options() const noexcept { return options_; }

  void reset() {
    entries_.clear();
    t_ = 0;
    statistic_ = 0.0;
    argmax_.reset();
  }

 private:
  void recompute() {
    double best = -std::numeric_limits<double>::infinity();
    std::optional<std::size_t> arg;
    entries_.for_each([&](const WindowEntry& e) {
      if (t_ - e.k + 1 < options_.min_length) return;
      const double v = term(e);
      if (v > best) {
        best = v;
        arg = e.k;
      }
    });
    if (options_.empty_term && 0.0 > best) {
      best = 0.0;
      arg = t_ + 1;
    }
    statistic_ = best;
    argmax_ = arg;
  }

  Quad quad_;
  WindowOptions options_;
  RingBuffer<WindowEntry> entries_;
  std::size_t t_ = 0;
  double statistic_ = 0.0;
  std::optional<std::size_t> argmax_;
};

}  // namespace wsglr

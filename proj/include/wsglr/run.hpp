#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "wsglr/detector.hpp"
#include "wsglr/error.hpp"
#include "wsglr/scenario.hpp"

namespace wsglr {

inline constexpr std::size_t kDefaultHorizon = std::size_t{1} << 16;

/// Result of one monitored stream.
struct RunOutcome {
  std::optional<std::size_t> tau;  // stopping sample; empty when censored at the horizon
  double b = 0.0;
  std::size_t horizon = 0;
  ChangePoint nu_c;
  ChangePoint nu_n;
  std::optional<std::size_t> detection_delay;  // tau - nu_c + 1 when tau >= nu_c
  bool false_alarm = false;                    // stopped before nu_c

  bool censored() const noexcept { return !tau.has_value(); }
};

inline RunOutcome make_outcome(std::optional<std::size_t> tau, double b, std::size_t horizon, ChangePoint nu_c,
                               ChangePoint nu_n) {
  RunOutcome out;
  out.tau = tau;
  out.b = b;
  out.horizon = horizon;
  out.nu_c = nu_c;
  out.nu_n = nu_n;
  if (tau) {
    if (nu_c && *tau >= *nu_c) {
      out.detection_delay = *tau - *nu_c + 1;
    } else {
      out.false_alarm = true;
    }
  }
  return out;
}

template <typename S>
concept SampleSource = requires(S s) {
  { s.next() } -> std::convertible_to<double>;
};

/// Adapts an in-memory record to a SampleSource.
class SpanSource {
 public:
  explicit SpanSource(std::span<const double> xs) : xs_(xs) {}
  double next() {
    require(pos_ < xs_.size(), Errc::invalid_argument, "stream exhausted");
    return xs_[pos_++];
  }
  std::size_t remaining() const noexcept { return xs_.size() - pos_; }

 private:
  std::span<const double> xs_;
  std::size_t pos_ = 0;
};

/// Feeds samples until the statistic reaches b or `horizon` samples were seen.
template <SampleSource Source>
RunOutcome run_until_stop(Detector& det, Source& source, double b, std::size_t horizon, ChangePoint nu_c = {},
                          ChangePoint nu_n = {}) {
  require(std::isfinite(b), Errc::invalid_argument, "threshold b must be finite");
  require(horizon >= 1, Errc::invalid_argument, "horizon must be >= 1");
  for (std::size_t t = 1; t <= horizon; ++t) {
    if (det.step(source.next()) >= b) return make_outcome(t, b, horizon, nu_c, nu_n);
  }
  return make_outcome(std::nullopt, b, horizon, nu_c, nu_n);
}

inline RunOutcome run_until_stop(Detector& det, std::span<const double> xs, double b, ChangePoint nu_c = {},
                                 ChangePoint nu_n = {}) {
  SpanSource src(xs);
  return run_until_stop(det, src, b, xs.size(), nu_c, nu_n);
}

/// Stopping time for every threshold from a single pass (valid for
/// threshold-free detectors). Entry i is the first t with statistic >= b[i],
/// or empty when that never happens within the horizon.
template <SampleSource Source>
std::vector<std::optional<std::size_t>> first_passage_times(Detector& det, Source& source,
                                                            std::span<const double> thresholds,
                                                            std::size_t horizon) {
  require(horizon >= 1, Errc::invalid_argument, "horizon must be >= 1");
  std::vector<std::size_t> order(thresholds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return thresholds[a] < thresholds[c]; });
  std::vector<std::optional<std::size_t>> out(thresholds.size());
  std::size_t next = 0;
  for (std::size_t t = 1; t <= horizon && next < order.size(); ++t) {
    const double s = det.step(source.next());
    while (next < order.size() && s >= thresholds[order[next]]) out[order[next++]] = t;
  }
  return out;
}

/// (t, statistic) for every sample of a record.
inline std::vector<double> statistic_trace(Detector& det, std::span<const double> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(det.step(x));
  return out;
}

}  // namespace wsglr

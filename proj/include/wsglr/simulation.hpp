#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "wsglr/detector.hpp"
#include "wsglr/divergence.hpp"
#include "wsglr/error.hpp"
#include "wsglr/run.hpp"
#include "wsglr/scenario.hpp"

namespace wsglr {

inline constexpr std::size_t kDeskHorizon = std::size_t{1} << 13;
inline constexpr std::size_t kDeskTrials = 512;
inline constexpr std::size_t kFullHorizon = std::size_t{1} << 16;
inline constexpr std::size_t kFullTrials = 4096;

// ADD trials draw from base_seed ^ (i | kAddSeedBit), disjoint from the ARL
// trials' base_seed ^ i while n_trials < 2^62.
inline constexpr std::uint64_t kAddSeedBit = std::uint64_t{1} << 62;

struct ChangePolicy {
  enum class Kind { fixed, uniform, none };
  Kind kind = Kind::none;
  std::size_t at = 0;

  static ChangePolicy fixed(std::size_t t) {
    require(t >= 1, Errc::invalid_argument, "fixed change point must be >= 1");
    return {Kind::fixed, t};
  }
  static ChangePolicy uniform() { return {Kind::uniform, 0}; }
  static ChangePolicy none() { return {Kind::none, 0}; }

  /// Uniform draws cover [1, horizon].
  ChangePoint draw(Rng& rng, std::size_t horizon) const {
    switch (kind) {
      case Kind::fixed: return at;
      case Kind::uniform: return std::uniform_int_distribution<std::size_t>(1, horizon)(rng);
      case Kind::none: break;
    }
    return std::nullopt;
  }
};

struct TrialPlan {
  explicit TrialPlan(Quad q) : quad(std::move(q)) {}

  Quad quad;
  ChangePolicy arl_nuisance = ChangePolicy::none();
  ChangePolicy add_nuisance = ChangePolicy::none();
  ChangePolicy add_critical = ChangePolicy::fixed(1);
  std::size_t n_trials = kDeskTrials;
  std::size_t horizon = kDeskHorizon;
  std::size_t add_horizon = 0;  // 0: same as horizon
  std::uint64_t base_seed = 1;
  DetectorConfig detector;
  std::vector<double> thresholds;
  unsigned threads = 0;  // 0: hardware concurrency

  std::size_t effective_add_horizon() const { return add_horizon ? add_horizon : horizon; }

  void validate() const {
    require(n_trials >= 1, Errc::invalid_argument, "n_trials must be >= 1");
    require(horizon >= 1, Errc::invalid_argument, "horizon must be >= 1");
    if (detector.m_b) require(horizon >= *detector.m_b + 1, Errc::invalid_argument, "horizon must be >= m_b + 1");
    for (double b : thresholds) require(std::isfinite(b), Errc::invalid_argument, "thresholds must be finite");
  }
};

inline std::uint64_t arl_seed(std::uint64_t base, std::size_t i) { return base ^ static_cast<std::uint64_t>(i); }
inline std::uint64_t add_seed(std::uint64_t base, std::size_t i) {
  return base ^ (static_cast<std::uint64_t>(i) | kAddSeedBit);
}

struct ArlEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_censored = 0;
  std::size_t n_trials = 0;
  bool unreliable = false;  // every trial censored
};

struct AddEstimate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_false_alarm = 0;
  std::size_t n_valid = 0;
  std::size_t n_censored = 0;
  std::size_t n_trials = 0;
};

struct TradeoffPoint {
  double b = 0.0;
  ArlEstimate arl;
  AddEstimate add;
};

struct TradeoffCurve {
  std::string detector;
  std::vector<TradeoffPoint> points;  // sorted by b
};

namespace detail {

inline unsigned worker_count(unsigned requested, std::size_t tasks) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(tasks, 1)));
}

/// Runs body(i) for i in [0, n) on a few threads. Each index writes only its
/// own result slot, so the outcome does not depend on the schedule.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  const unsigned workers = worker_count(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(v.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

// One trial's stopping times for every threshold (empty when censored).
using TrialTimes = std::vector<std::optional<std::size_t>>;

struct TrialSetup {
  std::uint64_t seed;
  ChangePoint nu_n;
  ChangePoint nu_c;
};

/// Stopping times of every trial at every threshold. Threshold-free rules
/// share a single pass per trial for all thresholds using the same window.
inline std::vector<TrialTimes> run_trials(const TrialPlan& plan, const std::vector<double>& thresholds,
                                          std::size_t horizon, bool add_phase) {
  const DetectorConfig& cfg = plan.detector;
  const bool windowed = cfg.kind == DetectorKind::wsglr || cfg.kind == DetectorKind::fma;

  // Group thresholds by the window they resolve to.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  std::optional<double> I;
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    std::size_t w = 0;
    if (windowed && !cfg.m_b) {
      if (!I) I = growth_rates(plan.quad).I;
      w = choose_window(thresholds[j], *I);
    } else if (cfg.m_b) {
      w = *cfg.m_b;
    }
    if (windowed) require(horizon >= w + 1, Errc::invalid_argument, "horizon must be >= m_b + 1");
    groups[cfg.threshold_free() ? w : j].push_back(j);
  }

  std::vector<TrialTimes> out(plan.n_trials, TrialTimes(thresholds.size()));
  parallel_for(plan.n_trials, plan.threads, [&](std::size_t i) {
    const std::uint64_t seed = add_phase ? add_seed(plan.base_seed, i) : arl_seed(plan.base_seed, i);
    for (const auto& [key, members] : groups) {
      Rng rng(seed);
      const ChangePoint nu_n =
          add_phase ? plan.add_nuisance.draw(rng, horizon) : plan.arl_nuisance.draw(rng, horizon);
      const ChangePoint nu_c = add_phase ? plan.add_critical.draw(rng, horizon) : ChangePoint{};
      const QuadScenario scenario(plan.quad, nu_n, nu_c);
      ScenarioStream stream(scenario, rng);
      DetectorConfig local = cfg;
      if (windowed) local.m_b = key;
      if (cfg.threshold_free()) {
        auto det = make_detector(local, plan.quad, thresholds[members.front()]);
        std::vector<double> bs;
        for (std::size_t j : members) bs.push_back(thresholds[j]);
        const auto times = first_passage_times(*det, stream, bs, horizon);
        for (std::size_t m = 0; m < members.size(); ++m) out[i][members[m]] = times[m];
      } else {
        const double b = thresholds[members.front()];
        auto det = make_detector(local, plan.quad, b);
        out[i][members.front()] = run_until_stop(*det, stream, b, horizon).tau;
      }
    }
  });
  return out;
}

// Change points of trial i, replayed from its seed (they are the first draws).
inline TrialSetup replay_setup(const TrialPlan& plan, std::size_t i, std::size_t horizon, bool add_phase) {
  const std::uint64_t seed = add_phase ? add_seed(plan.base_seed, i) : arl_seed(plan.base_seed, i);
  Rng rng(seed);
  TrialSetup s{seed, {}, {}};
  s.nu_n = add_phase ? plan.add_nuisance.draw(rng, horizon) : plan.arl_nuisance.draw(rng, horizon);
  s.nu_c = add_phase ? plan.add_critical.draw(rng, horizon) : ChangePoint{};
  return s;
}

inline ArlEstimate summarize_arl(const std::vector<TrialTimes>& trials, std::size_t j, std::size_t horizon) {
  ArlEstimate est;
  est.n_trials = trials.size();
  std::vector<double> v;
  v.reserve(trials.size());
  for (const auto& tr : trials) {
    if (tr[j]) {
      v.push_back(static_cast<double>(*tr[j]));
    } else {
      v.push_back(static_cast<double>(horizon));
      ++est.n_censored;
    }
  }
  std::tie(est.mean, est.std_error) = mean_and_se(v);
  est.unreliable = est.n_censored == est.n_trials;
  return est;
}

inline AddEstimate summarize_add(const TrialPlan& plan, const std::vector<TrialTimes>& trials, std::size_t j,
                                 std::size_t horizon) {
  AddEstimate est;
  est.n_trials = trials.size();
  std::vector<double> delays;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto setup = replay_setup(plan, i, horizon, true);
    const auto outcome = make_outcome(trials[i][j], 0.0, horizon, setup.nu_c, setup.nu_n);
    if (outcome.censored()) {
      ++est.n_censored;
    } else if (outcome.false_alarm) {
      ++est.n_false_alarm;
    } else {
      delays.push_back(static_cast<double>(*outcome.detection_delay));
    }
  }
  est.n_valid = delays.size();
  std::tie(est.mean, est.std_error) = mean_and_se(delays);
  return est;
}

}  // namespace detail

/// Empirical ARL: critical change never occurs; censored trials contribute
/// the horizon.
inline ArlEstimate estimate_arl(const TrialPlan& plan, double b) {
  plan.validate();
  const std::vector<double> bs{b};
  return detail::summarize_arl(detail::run_trials(plan, bs, plan.horizon, false), 0, plan.horizon);
}

/// Empirical ADD over trials with tau >= nu_c; earlier stops are false alarms.
inline AddEstimate estimate_add(const TrialPlan& plan, double b) {
  plan.validate();
  require(plan.add_critical.kind != ChangePolicy::Kind::none, Errc::invalid_argument,
          "ADD needs a critical change point");
  const std::size_t h = plan.effective_add_horizon();
  const std::vector<double> bs{b};
  auto est = detail::summarize_add(plan, detail::run_trials(plan, bs, h, true), 0, h);
  require(est.n_valid > 0, Errc::no_valid_trials, "no trial stopped at or after the critical change");
  return est;
}

inline TradeoffCurve tradeoff_sweep(const TrialPlan& plan) {
  plan.validate();
  require(plan.thresholds.size() >= 2, Errc::invalid_argument, "a sweep needs at least 2 thresholds");
  require(plan.add_critical.kind != ChangePolicy::Kind::none, Errc::invalid_argument,
          "ADD needs a critical change point");
  std::vector<double> bs = plan.thresholds;
  std::sort(bs.begin(), bs.end());
  const std::size_t h_add = plan.effective_add_horizon();
  const auto arl_trials = detail::run_trials(plan, bs, plan.horizon, false);
  const auto add_trials = detail::run_trials(plan, bs, h_add, true);
  TradeoffCurve curve;
  curve.detector = std::string(to_string(plan.detector.kind));
  for (std::size_t j = 0; j < bs.size(); ++j) {
    TradeoffPoint p;
    p.b = bs[j];
    p.arl = detail::summarize_arl(arl_trials, j, plan.horizon);
    p.add = detail::summarize_add(plan, add_trials, j, h_add);
    require(p.add.n_valid > 0, Errc::no_valid_trials,
            "no trial stopped at or after the critical change at b = " + std::to_string(p.b));
    curve.points.push_back(p);
  }
  return curve;
}

/// ARL nondecreasing in b, allowing 2x the combined standard error.
inline std::vector<std::string> check_curve(const TradeoffCurve& curve) {
  std::vector<std::string> violations;
  for (std::size_t j = 1; j < curve.points.size(); ++j) {
    const auto& a = curve.points[j - 1];
    const auto& c = curve.points[j];
    const double slack = 2.0 * std::hypot(a.arl.std_error, c.arl.std_error);
    if (c.arl.mean + slack < a.arl.mean) {
      violations.push_back(curve.detector + ": ARL decreases from b=" + std::to_string(a.b) + " to b=" +
                           std::to_string(c.b));
    }
  }
  return violations;
}

struct MatchedAdd {
  double arl = 0.0;
  double add = 0.0;
  double std_error = 0.0;
};

/// ADD at a target ARL, interpolated linearly in log ARL between the two
/// bracketing points (clamped to the ends of the curve). Among points with
/// equal ARL, as on a censored plateau, the smallest threshold is used.
inline MatchedAdd add_at_arl(const TradeoffCurve& curve, double arl) {
  require(!curve.points.empty(), Errc::invalid_argument, "empty curve");
  std::vector<const TradeoffPoint*> pts;
  for (const auto& p : curve.points) pts.push_back(&p);
  std::stable_sort(pts.begin(), pts.end(), [](auto* a, auto* c) {
    return a->arl.mean < c->arl.mean || (a->arl.mean == c->arl.mean && a->b < c->b);
  });
  pts.erase(std::unique(pts.begin(), pts.end(), [](auto* a, auto* c) { return a->arl.mean == c->arl.mean; }),
            pts.end());
  if (arl <= pts.front()->arl.mean) return {arl, pts.front()->add.mean, pts.front()->add.std_error};
  if (arl >= pts.back()->arl.mean) return {arl, pts.back()->add.mean, pts.back()->add.std_error};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto* lo = pts[i - 1];
    const auto* hi = pts[i];
    if (arl <= hi->arl.mean) {
      const double span = std::log(hi->arl.mean) - std::log(lo->arl.mean);
      const double w = span > 0.0 ? (std::log(arl) - std::log(lo->arl.mean)) / span : 1.0;
      return {arl, lo->add.mean + w * (hi->add.mean - lo->add.mean),
              (1.0 - w) * lo->add.std_error + w * hi->add.std_error};
    }
  }
  return {arl, pts.back()->add.mean, pts.back()->add.std_error};
}

/// Largest ARL reached by every curve.
inline double largest_common_arl(const std::vector<TradeoffCurve>& curves) {
  require(!curves.empty(), Errc::invalid_argument, "no curves");
  double common = std::numeric_limits<double>::infinity();
  for (const auto& c : curves) {
    require(!c.points.empty(), Errc::invalid_argument, "empty curve");
    double best = 0.0;
    for (const auto& p : c.points) best = std::max(best, p.arl.mean);
    common = std::min(common, best);
  }
  return common;
}

struct ComparisonTable {
  std::vector<double> thresholds;
  std::vector<TradeoffCurve> curves;  // one per plan, in input order
  double common_arl = 0.0;
  std::vector<MatchedAdd> matched;  // ADD of each curve at common_arl
};

inline ComparisonTable compare_detectors(const std::vector<TrialPlan>& plans) {
  require(!plans.empty(), Errc::invalid_argument, "no plans to compare");
  const TrialPlan& ref = plans.front();
  for (const auto& p : plans) {
    require(p.quad == ref.quad, Errc::invalid_argument, "plans must share the scenario");
    require(p.thresholds == ref.thresholds, Errc::invalid_argument, "plans must share the thresholds");
    require(p.n_trials == ref.n_trials && p.horizon == ref.horizon &&
                p.effective_add_horizon() == ref.effective_add_horizon(),
            Errc::invalid_argument, "plans must share trial counts and horizons");
  }
  ComparisonTable table;
  table.thresholds = ref.thresholds;
  std::sort(table.thresholds.begin(), table.thresholds.end());
  for (const auto& p : plans) table.curves.push_back(tradeoff_sweep(p));
  table.common_arl = largest_common_arl(table.curves);
  for (const auto& c : table.curves) table.matched.push_back(add_at_arl(c, table.common_arl));
  return table;
}

}  // namespace wsglr

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"

namespace wsglr {

/// 1-based sample index; an empty optional is "never" (infinity).
using ChangePoint = std::optional<std::size_t>;

enum class Regime { pre, nuisance, critical, both };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::pre: return "f";
    case Regime::nuisance: return "fn";
    case Regime::critical: return "g";
    case Regime::both: return "gn";
  }
  return "?";
}

/// The four regime models together with the nuisance and critical change
/// points. Sample t is drawn from
///   f   for t < min(nu_c, nu_n)
///   f_n for nu_n <= t < nu_c
///   g   for nu_c <= t < nu_n
///   g_n for t >= max(nu_c, nu_n).
struct QuadScenario {
  Quad quad;
  ChangePoint nu_n;
  ChangePoint nu_c;

  QuadScenario(Quad q, ChangePoint nuisance, ChangePoint critical)
      : quad(std::move(q)), nu_n(nuisance), nu_c(critical) {
    require(!nu_n || *nu_n >= 1, Errc::invalid_argument, "nu_n must be >= 1");
    require(!nu_c || *nu_c >= 1, Errc::invalid_argument, "nu_c must be >= 1");
  }
};

inline Regime regime_at(const ChangePoint& nu_n, const ChangePoint& nu_c, std::size_t t) {
  const bool after_n = nu_n && t >= *nu_n;
  const bool after_c = nu_c && t >= *nu_c;
  if (after_n && after_c) return Regime::both;
  if (after_c) return Regime::critical;
  if (after_n) return Regime::nuisance;
  return Regime::pre;
}

inline const Distribution& model_for(const Quad& quad, Regime r) {
  switch (r) {
    case Regime::nuisance: return quad.fn;
    case Regime::critical: return quad.g;
    case Regime::both: return quad.gn;
    case Regime::pre: break;
  }
  return quad.f;
}

inline const Distribution& distribution_at(const QuadScenario& s, std::size_t t) {
  require(t >= 1, Errc::invalid_argument, "time index is 1-based");
  return model_for(s.quad, regime_at(s.nu_n, s.nu_c, t));
}

/// Pull-style observation source over a scenario; draws lazily so that runs
/// which stop early never pay for the rest of the horizon.
class ScenarioStream {
 public:
  ScenarioStream(const QuadScenario& scenario, Rng& rng) : scenario_(&scenario), rng_(&rng) {}

  double next() {
    ++t_;
    return distribution_at(*scenario_, t_).sample(*rng_);
  }

  std::size_t t() const noexcept { return t_; }

 private:
  const QuadScenario* scenario_;
  Rng* rng_;
  std::size_t t_ = 0;
};

inline std::vector<double> generate(const QuadScenario& s, std::size_t length, Rng& rng) {
  require(length >= 1, Errc::invalid_argument, "stream length must be >= 1");
  std::vector<double> xs;
  xs.reserve(length);
  ScenarioStream stream(s, rng);
  for (std::size_t i = 0; i < length; ++i) xs.push_back(stream.next());
  return xs;
}

}  // namespace wsglr

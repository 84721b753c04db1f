#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"

namespace wsglr {

inline constexpr std::size_t kDefaultMonteCarloSamples = 1'000'000;
inline constexpr double kDegenerateDriftTolerance = 1e-9;

enum class KlMethod { analytic, monte_carlo };

struct KlEstimate {
  double value = 0.0;
  double std_error = 0.0;  // zero for closed-form values
  bool analytic = false;
};

inline double kl_gaussian(const Gaussian& p, const Gaussian& q) {
  const double d = p.mean() - q.mean();
  return 0.5 * std::log(q.variance() / p.variance()) + (p.variance() + d * d) / (2.0 * q.variance()) - 0.5;
}

/// Sample mean of ln p(X) - ln q(X) with X ~ p, plus its standard error.
inline KlEstimate kl_monte_carlo(const Distribution& p, const Distribution& q, Rng& rng,
                                 std::size_t n_samples = kDefaultMonteCarloSamples) {
  require(n_samples >= 2, Errc::invalid_argument, "monte-carlo KL needs at least 2 samples");
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double x = p.sample(rng);
    const double lp = p.log_density(x);
    const double lq = q.log_density(x);
    require(!std::isinf(lq) || std::isinf(lp), Errc::support_mismatch,
            "q vanishes where p has mass");
    const double r = lp - lq;
    require(std::isfinite(r), Errc::non_finite, "non-finite log-ratio in monte-carlo KL");
    const double delta = r - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (r - mean);
  }
  const double var = m2 / static_cast<double>(n_samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_samples)), false};
}

/// D(p || q). Gaussian pairs use the closed form when asked; every other pair
/// falls back to Monte Carlo.
inline KlEstimate kl_divergence(const Distribution& p, const Distribution& q, KlMethod method, Rng& rng,
                                std::size_t n_samples = kDefaultMonteCarloSamples) {
  if (method == KlMethod::analytic) {
    const auto* gp = p.as_gaussian();
    const auto* gq = q.as_gaussian();
    if (gp && gq) return {kl_gaussian(*gp, *gq), 0.0, true};
  }
  return kl_monte_carlo(p, q, rng, n_samples);
}

inline KlEstimate kl_divergence(const Distribution& p, const Distribution& q) {
  Rng rng(0x6b6c5f6d63ULL);
  return kl_divergence(p, q, KlMethod::analytic, rng);
}

struct DriftMoments {
  // Moments of L(X) = ln f_n(X) - ln f(X) under g ...
  double rho_g = 0.0;
  double sigma2_g = 0.0;
  double omega4_g = 0.0;
  // ... and under g_n.
  double rho_gn = 0.0;
  double sigma2_gn = 0.0;
  double omega4_gn = 0.0;
  bool analytic = false;
};

namespace detail {

// Raw moments E[X^k], k = 0..order, for X ~ N(mean, var).
inline std::vector<double> gaussian_raw_moments(double mean, double var, std::size_t order) {
  std::vector<double> m(order + 1, 0.0);
  m[0] = 1.0;
  if (order >= 1) m[1] = mean;
  for (std::size_t k = 2; k <= order; ++k) {
    m[k] = mean * m[k - 1] + static_cast<double>(k - 1) * var * m[k - 2];
  }
  return m;
}

inline std::vector<double> poly_mul(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline double poly_expectation(std::span<const double> coeffs, std::span<const double> raw) {
  double acc = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) acc += coeffs[k] * raw[k];
  return acc;
}

// For Gaussian f, f_n the log-ratio is the quadratic c0 + c1 x + c2 x^2.
inline std::array<double, 3> gaussian_log_ratio(const Gaussian& num, const Gaussian& den) {
  const double vn = num.variance();
  const double vd = den.variance();
  const double c2 = -0.5 / vn + 0.5 / vd;
  const double c1 = num.mean() / vn - den.mean() / vd;
  const double c0 = -0.5 * std::log(vn) + 0.5 * std::log(vd) - num.mean() * num.mean() / (2.0 * vn) +
                    den.mean() * den.mean() / (2.0 * vd);
  return {c0, c1, c2};
}

// Mean, second and fourth central moments of a quadratic in X ~ N(mean, var).
inline std::array<double, 3> quadratic_moments(const std::array<double, 3>& q, const Gaussian& law) {
  const auto raw = gaussian_raw_moments(law.mean(), law.variance(), 8);
  const double rho = poly_expectation(q, raw);
  const std::array<double, 3> centered{q[0] - rho, q[1], q[2]};
  const auto sq = poly_mul(centered, centered);
  const auto fourth = poly_mul(sq, sq);
  return {rho, poly_expectation(sq, raw), poly_expectation(fourth, raw)};
}

inline std::array<double, 3> monte_carlo_moments(const Distribution& f, const Distribution& fn,
                                                 const Distribution& law, Rng& rng, std::size_t n) {
  std::vector<double> values(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = law.sample(rng);
    values[i] = fn.log_density(x) - f.log_density(x);
    require(std::isfinite(values[i]), Errc::non_finite, "non-finite log-ratio in drift moments");
    mean += values[i];
  }
  mean /= static_cast<double>(n);
  double s2 = 0.0;
  double s4 = 0.0;
  for (double v : values) {
    const double d = (v - mean) * (v - mean);
    s2 += d;
    s4 += d * d;
  }
  return {mean, s2 / static_cast<double>(n), s4 / static_cast<double>(n)};
}

}  // namespace detail

/// Moments of ln(f_n/f) under g and g_n. Exact when all four models are
/// Gaussian (the log-ratio is then a quadratic in x), Monte Carlo otherwise.
/// Throws Errc::degenerate_drift when either mean is zero within 1e-9.
inline DriftMoments drift_moments(const Quad& quad, Rng& rng, std::size_t n_mc = kDefaultMonteCarloSamples) {
  DriftMoments out;
  const auto* f = quad.f.as_gaussian();
  const auto* fn = quad.fn.as_gaussian();
  const auto* g = quad.g.as_gaussian();
  const auto* gn = quad.gn.as_gaussian();
  std::array<double, 3> mg{};
  std::array<double, 3> mgn{};
  if (f && fn && g && gn) {
    const auto q = detail::gaussian_log_ratio(*fn, *f);
    mg = detail::quadratic_moments(q, *g);
    mgn = detail::quadratic_moments(q, *gn);
    out.analytic = true;
  } else {
    require(n_mc >= 10'000, Errc::invalid_argument, "drift moments need n_mc >= 1e4");
    mg = detail::monte_carlo_moments(quad.f, quad.fn, quad.g, rng, n_mc);
    mgn = detail::monte_carlo_moments(quad.f, quad.fn, quad.gn, rng, n_mc);
  }
  out.rho_g = mg[0];
  out.sigma2_g = std::max(0.0, mg[1]);
  out.omega4_g = std::max(0.0, mg[2]);
  out.rho_gn = mgn[0];
  out.sigma2_gn = std::max(0.0, mgn[1]);
  out.omega4_gn = std::max(0.0, mgn[2]);
  for (double v : {out.rho_g, out.sigma2_g, out.omega4_g, out.rho_gn, out.sigma2_gn, out.omega4_gn}) {
    require(std::isfinite(v), Errc::non_finite, "non-finite drift moment");
  }
  require(std::abs(out.rho_g) >= kDegenerateDriftTolerance, Errc::degenerate_drift,
          "E_g[ln f_n/f] is zero");
  require(std::abs(out.rho_gn) >= kDegenerateDriftTolerance, Errc::degenerate_drift,
          "E_gn[ln f_n/f] is zero");
  return out;
}

inline DriftMoments drift_moments(const Quad& quad) {
  Rng rng(0x6472696674ULL);
  return drift_moments(quad, rng);
}

struct GrowthRates {
  double kl_g_f = 0.0;
  double kl_g_fn = 0.0;
  double kl_gn_f = 0.0;
  double kl_gn_fn = 0.0;
  double I = 0.0;  // slowest post-change growth rate: min of the four divergences
  bool separable = false;
};

inline GrowthRates growth_rates(const Quad& quad, Rng& rng, std::size_t n_mc = kDefaultMonteCarloSamples) {
  GrowthRates r;
  r.kl_g_f = kl_divergence(quad.g, quad.f, KlMethod::analytic, rng, n_mc).value;
  r.kl_g_fn = kl_divergence(quad.g, quad.fn, KlMethod::analytic, rng, n_mc).value;
  r.kl_gn_f = kl_divergence(quad.gn, quad.f, KlMethod::analytic, rng, n_mc).value;
  r.kl_gn_fn = kl_divergence(quad.gn, quad.fn, KlMethod::analytic, rng, n_mc).value;
  r.I = std::min({r.kl_g_f, r.kl_g_fn, r.kl_gn_f, r.kl_gn_fn});
  r.separable = r.kl_g_fn > std::min({r.kl_g_f, r.kl_gn_f, r.kl_gn_fn});
  return r;
}

inline GrowthRates growth_rates(const Quad& quad) {
  Rng rng(0x67726f77ULL);
  return growth_rates(quad, rng);
}

/// Parameters of the four regimes within one exponential family.
struct FamilyQuad {
  std::vector<double> f;
  std::vector<double> fn;
  std::vector<double> g;
  std::vector<double> gn;
};

/// Sufficient conditions for "g is not too similar to f_n" written in natural
/// parameters. Each left/right side is a KL-type quantity:
///   lhs1 = -E_g[ln f_n/f]                      (condition: > 0)
///   lhs2 = D(g||f_n) vs rhs2 = D(g_n||f)      (condition: lhs > rhs)
///   lhs3 = D(g||f_n) vs rhs3 = D(g_n||f_n)    (condition: lhs > rhs)
struct ExpFamilyConditions {
  double lhs1 = 0.0;
  double lhs2 = 0.0;
  double rhs2 = 0.0;
  double lhs3 = 0.0;
  double rhs3 = 0.0;
  bool cond1 = false;
  bool cond2 = false;
  bool cond3 = false;
  bool separable_implied = false;
};

namespace detail {

inline std::vector<double> expected_stats(const ExponentialFamily& fam, std::span<const double> theta,
                                          Rng& rng, std::size_t n_mc) {
  if (fam.expected_stats) return fam.expected_stats(theta);
  require(static_cast<bool>(fam.sampler), Errc::invalid_argument,
          fam.name + ": need expected_stats or a sampler");
  std::vector<double> acc(fam.num_stats, 0.0);
  for (std::size_t i = 0; i < n_mc; ++i) {
    const auto t = fam.sufficient(fam.sampler(theta, rng));
    for (std::size_t s = 0; s < acc.size(); ++s) acc[s] += t[s];
  }
  for (double& v : acc) v /= static_cast<double>(n_mc);
  return acc;
}

// A(a) - A(b) - sum_i (B_i(a) - B_i(b)) E[T_i]  ==  E[ln p_b(X) - ln p_a(X)].
inline double natural_gap(const ExponentialFamily& fam, std::span<const double> a, std::span<const double> b,
                          std::span<const double> et) {
  const auto ba = fam.natural(a);
  const auto bb = fam.natural(b);
  double acc = fam.log_partition(a) - fam.log_partition(b);
  for (std::size_t i = 0; i < et.size(); ++i) acc -= (ba[i] - bb[i]) * et[i];
  return acc;
}

}  // namespace detail

inline ExpFamilyConditions check_exp_family_conditions(const ExponentialFamily& fam, const FamilyQuad& th,
                                                       Rng& rng,
                                                       std::size_t n_mc = kDefaultMonteCarloSamples) {
  for (const auto* p : {&th.f, &th.fn, &th.g, &th.gn}) fam.check(*p);
  const auto eg = detail::expected_stats(fam, th.g, rng, n_mc);
  const auto egn = detail::expected_stats(fam, th.gn, rng, n_mc);

  ExpFamilyConditions c;
  c.lhs1 = detail::natural_gap(fam, th.fn, th.f, eg);
  c.lhs2 = detail::natural_gap(fam, th.fn, th.g, eg);
  c.rhs2 = detail::natural_gap(fam, th.f, th.gn, egn);
  c.lhs3 = c.lhs2;
  c.rhs3 = detail::natural_gap(fam, th.fn, th.gn, egn);
  c.cond1 = c.lhs1 > 0.0;
  c.cond2 = c.lhs2 > c.rhs2;
  c.cond3 = c.lhs3 > c.rhs3;
  c.separable_implied = c.cond1 || c.cond2 || c.cond3;
  return c;
}

inline ExpFamilyConditions check_exp_family_conditions(const ExponentialFamily& fam, const FamilyQuad& th) {
  Rng rng(0x65787066ULL);
  return check_exp_family_conditions(fam, th, rng);
}

}  // namespace wsglr

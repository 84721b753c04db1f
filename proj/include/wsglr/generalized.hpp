#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"
#include "wsglr/ring_buffer.hpp"
#include "wsglr/sglr_window.hpp"

namespace wsglr {

inline constexpr int kMaxParamDim = 4;
inline constexpr std::size_t kMaxSuffStats = 4;

using ParamVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxParamDim, 1>;
using ParamMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxParamDim, kMaxParamDim>;

/// Axis-aligned parameter box. A coordinate with lo == hi is fixed.
class ParamBox {
 public:
  ParamBox() = default;
  explicit ParamBox(std::vector<std::pair<double, double>> bounds) : bounds_(std::move(bounds)) {
    require(!bounds_.empty() && bounds_.size() <= static_cast<std::size_t>(kMaxParamDim), Errc::invalid_argument,
            "parameter box dimension must be in [1, 4]");
    for (const auto& [lo, hi] : bounds_) {
      require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, Errc::invalid_argument,
              "parameter box needs finite lo <= hi");
    }
  }

  int dim() const noexcept { return static_cast<int>(bounds_.size()); }
  double lo(int i) const { return bounds_[static_cast<std::size_t>(i)].first; }
  double hi(int i) const { return bounds_[static_cast<std::size_t>(i)].second; }
  double width(int i) const { return hi(i) - lo(i); }
  bool fixed(int i) const { return width(i) == 0.0; }
  const std::vector<std::pair<double, double>>& bounds() const noexcept { return bounds_; }

  int free_dim() const {
    int n = 0;
    for (int i = 0; i < dim(); ++i) n += fixed(i) ? 0 : 1;
    return n;
  }

  ParamVector center() const {
    ParamVector c(dim());
    for (int i = 0; i < dim(); ++i) c[i] = 0.5 * (lo(i) + hi(i));
    return c;
  }

  ParamVector clip(ParamVector v) const {
    for (int i = 0; i < dim(); ++i) v[i] = std::clamp(v[i], lo(i), hi(i));
    return v;
  }

  /// Every free coordinate at least `rel_margin * width` inside the box.
  bool interior(const ParamVector& v, double rel_margin = 1e-6) const {
    for (int i = 0; i < dim(); ++i) {
      if (fixed(i)) continue;
      const double m = rel_margin * width(i);
      if (!(v[i] > lo(i) + m && v[i] < hi(i) - m)) return false;
    }
    return true;
  }

 private:
  std::vector<std::pair<double, double>> bounds_;
};

/// Sufficient statistics of a window: count plus sums of T(x).
struct WindowStats {
  std::size_t n = 0;
  std::array<double, kMaxSuffStats> sums{};
};

/// Post-change family g(.; theta) over a parameter box, with the window
/// log-likelihood and its derivatives expressed through sufficient statistics.
class ParamFamily {
 public:
  explicit ParamFamily(ParamBox box) : box_(std::move(box)) {}
  virtual ~ParamFamily() = default;

  virtual std::string_view name() const = 0;
  virtual void accumulate(WindowStats& s, double x) const = 0;
  virtual double loglik(const ParamVector& theta, const WindowStats& s) const = 0;
  virtual ParamVector gradient(const ParamVector& theta, const WindowStats& s) const = 0;
  virtual ParamMatrix hessian(const ParamVector& theta, const WindowStats& s) const = 0;
  virtual Distribution member(const ParamVector& theta) const = 0;

  // Unconstrained maximizer when one exists in closed form and the
  // log-likelihood is unimodal per coordinate, so clipping gives the box MLE.
  virtual std::optional<ParamVector> closed_form_mle(const WindowStats&) const { return std::nullopt; }

  int dim() const noexcept { return box_.dim(); }
  const ParamBox& box() const noexcept { return box_; }

  WindowStats stats_of(std::span<const double> window) const {
    WindowStats s;
    for (double x : window) accumulate(s, x);
    return s;
  }

 private:
  ParamBox box_;
};

/// g(x; theta) = N(mean, theta^2) with known mean; theta is the standard deviation.
class GaussianVarianceFamily final : public ParamFamily {
 public:
  GaussianVarianceFamily(double mean, ParamBox box) : ParamFamily(std::move(box)), mean_(mean) {
    require(dim() == 1, Errc::invalid_argument, "gaussian_variance has one parameter");
    require(this->box().lo(0) > 0.0, Errc::invalid_argument, "standard-deviation box must be positive");
  }

  std::string_view name() const override { return "gaussian_variance"; }
  double mean() const noexcept { return mean_; }

  void accumulate(WindowStats& s, double x) const override {
    ++s.n;
    s.sums[0] += x;
    s.sums[1] += x * x;
  }

  // sum (x_i - mean)^2
  double scatter(const WindowStats& s) const {
    const double n = static_cast<double>(s.n);
    return std::max(0.0, s.sums[1] - 2.0 * mean_ * s.sums[0] + n * mean_ * mean_);
  }

  double loglik(const ParamVector& theta, const WindowStats& s) const override {
    const double n = static_cast<double>(s.n);
    const double th = theta[0];
    return -0.5 * n * kLogTwoPi - n * std::log(th) - scatter(s) / (2.0 * th * th);
  }

  ParamVector gradient(const ParamVector& theta, const WindowStats& s) const override {
    const double th = theta[0];
    ParamVector g(1);
    g[0] = -static_cast<double>(s.n) / th + scatter(s) / (th * th * th);
    return g;
  }

  ParamMatrix hessian(const ParamVector& theta, const WindowStats& s) const override {
    const double th2 = theta[0] * theta[0];
    ParamMatrix h(1, 1);
    h(0, 0) = static_cast<double>(s.n) / th2 - 3.0 * scatter(s) / (th2 * th2);
    return h;
  }

  std::optional<ParamVector> closed_form_mle(const WindowStats& s) const override {
    if (s.n == 0) return std::nullopt;
    ParamVector v(1);
    v[0] = std::sqrt(scatter(s) / static_cast<double>(s.n));
    return v;
  }

  Distribution member(const ParamVector& theta) const override {
    return Gaussian(mean_, theta[0] * theta[0]);
  }

 private:
  double mean_;
};

/// g(x; theta) = N(theta, variance) with known variance.
class GaussianMeanFamily final : public ParamFamily {
 public:
  GaussianMeanFamily(double variance, ParamBox box) : ParamFamily(std::move(box)), variance_(variance) {
    require(dim() == 1, Errc::invalid_argument, "gaussian_mean has one parameter");
    require(std::isfinite(variance) && variance > 0.0, Errc::invalid_argument, "variance must be > 0");
  }

  std::string_view name() const override { return "gaussian_mean"; }
  double variance() const noexcept { return variance_; }

  void accumulate(WindowStats& s, double x) const override {
    ++s.n;
    s.sums[0] += x;
    s.sums[1] += x * x;
  }

  double loglik(const ParamVector& theta, const WindowStats& s) const override {
    const double n = static_cast<double>(s.n);
    const double th = theta[0];
    const double scatter = std::max(0.0, s.sums[1] - 2.0 * th * s.sums[0] + n * th * th);
    return -0.5 * n * (kLogTwoPi + std::log(variance_)) - scatter / (2.0 * variance_);
  }

  ParamVector gradient(const ParamVector& theta, const WindowStats& s) const override {
    ParamVector g(1);
    g[0] = (s.sums[0] - static_cast<double>(s.n) * theta[0]) / variance_;
    return g;
  }

  ParamMatrix hessian(const ParamVector&, const WindowStats& s) const override {
    ParamMatrix h(1, 1);
    h(0, 0) = -static_cast<double>(s.n) / variance_;
    return h;
  }

  std::optional<ParamVector> closed_form_mle(const WindowStats& s) const override {
    if (s.n == 0) return std::nullopt;
    ParamVector v(1);
    v[0] = s.sums[0] / static_cast<double>(s.n);
    return v;
  }

  Distribution member(const ParamVector& theta) const override { return Gaussian(theta[0], variance_); }

 private:
  double variance_;
};

/// Default minimal window: max(2, d + 1) samples.
inline std::size_t default_min_delay(int dim) { return std::max<std::size_t>(2, static_cast<std::size_t>(dim) + 1); }

inline constexpr int kMaxAscentIterations = 200;

/// Box-constrained maximizer of the window log-likelihood by projected ascent
/// from the box center: Newton steps where the Hessian is negative definite,
/// gradient steps otherwise, Armijo backtracking in both cases.
inline ParamVector projected_ascent(const ParamFamily& fam, const WindowStats& s) {
  const auto& box = fam.box();
  ParamVector theta = box.center();
  double value = fam.loglik(theta, s);
  double step_scale = 1.0;
  for (int iter = 0; iter < kMaxAscentIterations; ++iter) {
    ParamVector grad = fam.gradient(theta, s);
    for (int i = 0; i < box.dim(); ++i)
      if (box.fixed(i)) grad[i] = 0.0;
    require(grad.allFinite(), Errc::non_finite, "gradient at " + std::to_string(theta[0]));

    ParamVector dir = grad;
    bool newton = false;
    if (box.free_dim() > 0) {
      ParamMatrix h = fam.hessian(theta, s);
      for (int i = 0; i < box.dim(); ++i) {
        if (!box.fixed(i)) continue;
        h.row(i).setZero();
        h.col(i).setZero();
        h(i, i) = -1.0;
      }
      Eigen::LLT<ParamMatrix> llt(-h);
      if (llt.info() == Eigen::Success) {
        dir = llt.solve(grad);
        newton = true;
      }
    }

    double alpha = newton ? 1.0 : step_scale;
    bool moved = false;
    ParamVector next = theta;
    double next_value = value;
    for (int ls = 0; ls < 60; ++ls) {
      next = box.clip(theta + alpha * dir);
      next_value = fam.loglik(next, s);
      if (std::isfinite(next_value) && next_value >= value + 1e-4 * grad.dot(next - theta)) {
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) {
      // No ascent direction inside the box: a constrained stationary point.
      return theta;
    }
    const double change = (next - theta).norm();
    theta = next;
    const double prev_value = value;
    value = next_value;
    if (!newton) step_scale = alpha * 2.0;
    if (change <= 1e-12 * (1.0 + theta.norm()) || std::abs(value - prev_value) <= 1e-14 * (1.0 + std::abs(value))) {
      return theta;
    }
  }
  throw Error(Errc::non_convergence, "projected ascent did not converge in 200 iterations");
}

inline ParamVector box_mle(const ParamFamily& fam, const WindowStats& s) {
  require(s.n >= 1, Errc::window_too_short, "empty window");
  if (auto cf = fam.closed_form_mle(s)) return fam.box().clip(*cf);
  return projected_ascent(fam, s);
}

struct MleResult {
  ParamVector theta_hat;
  double llr_at_mle = 0.0;
};

namespace detail {

inline double window_denominator(const Distribution& f, const Distribution& fn, std::span<const double> window) {
  double d = 0.0;
  double fsum = 0.0;
  for (double x : window) {
    fsum += f.log_density(x);
    d = denom_step(d, fsum, fn.log_density(x));
  }
  return d;
}

}  // namespace detail

/// Maximizes ln Lambda-hat(theta) = sum ln g(x_i; theta) - D over the box for
/// one window. The denominator D uses the known f, f_n and does not depend on theta.
inline MleResult mle_over_window(const ParamFamily& fam, std::span<const double> window, const Distribution& f,
                                 const Distribution& fn, std::size_t min_length = 0) {
  const std::size_t need = min_length == 0 ? default_min_delay(fam.dim()) : min_length;
  require(window.size() >= need, Errc::window_too_short,
          "window of " + std::to_string(window.size()) + " samples, need " + std::to_string(need));
  const auto s = fam.stats_of(window);
  MleResult r;
  r.theta_hat = box_mle(fam, s);
  r.llr_at_mle = fam.loglik(r.theta_hat, s) - detail::window_denominator(f, fn, window);
  return r;
}

struct HessianCheck {
  bool ok = false;
  double max_eigenvalue = 0.0;  // largest lambda_max(-Hessian) over the probes
};

namespace detail {

inline double lambda_max_neg_hessian(const ParamFamily& fam, const ParamVector& theta, const WindowStats& s) {
  const auto& box = fam.box();
  const ParamMatrix h = fam.hessian(theta, s);
  require(h.allFinite(), Errc::non_finite, "non-finite Hessian");
  std::array<int, kMaxParamDim> idx{};
  int m = 0;
  for (int i = 0; i < box.dim(); ++i)
    if (!box.fixed(i)) idx[static_cast<std::size_t>(m++)] = i;
  if (m == 0) return -std::numeric_limits<double>::infinity();
  if (m == 1) return -h(idx[0], idx[0]);
  ParamMatrix sub(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) sub(a, b) = -h(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  Eigen::SelfAdjointEigenSolver<ParamMatrix> eig(sub, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

}  // namespace detail

/// Approximates sup over ||theta - theta_hat|| < 1/sqrt(b) of
/// lambda_max(-Hessian) by probing theta_hat, the 2d axis points and the 2^d
/// diagonal points on the ball (clipped to the box). Fixed coordinates are not
/// part of the manifold and are excluded from the Hessian.
inline HessianCheck hessian_ball_check(const ParamFamily& fam, const WindowStats& s, const ParamVector& theta_hat,
                                       double b) {
  require(s.n >= 1, Errc::window_too_short, "hessian check on an empty window");
  require(std::isfinite(b) && b > 0.0, Errc::invalid_argument, "threshold b must be > 0");
  const auto& box = fam.box();
  const int d = box.dim();
  const double r = 1.0 / std::sqrt(b);
  double worst = detail::lambda_max_neg_hessian(fam, theta_hat, s);
  auto probe = [&](const ParamVector& p) {
    worst = std::max(worst, detail::lambda_max_neg_hessian(fam, box.clip(p), s));
  };
  for (int i = 0; i < d; ++i) {
    if (box.fixed(i)) continue;
    ParamVector p = theta_hat;
    p[i] += r;
    probe(p);
    p[i] = theta_hat[i] - r;
    probe(p);
  }
  if (d > 1) {
    const double diag = r / std::sqrt(static_cast<double>(d));
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
      ParamVector p = theta_hat;
      for (int i = 0; i < d; ++i) p[i] += ((mask >> i) & 1u) ? diag : -diag;
      probe(p);
    }
  }
  return {worst <= b, worst};
}

inline HessianCheck hessian_ball_check(const ParamFamily& fam, std::span<const double> window,
                                       const ParamVector& theta_hat, double b) {
  require(!window.empty(), Errc::window_too_short, "hessian check on an empty window");
  return hessian_ball_check(fam, fam.stats_of(window), theta_hat, b);
}

enum class Branch { g, gn };

struct GenWindowVerdict {
  std::size_t t = 0;
  std::size_t length = 0;
  Branch branch = Branch::g;
  ParamVector theta_hat;
  double llr_at_mle = -std::numeric_limits<double>::infinity();
  bool hessian_ok = false;
  bool interior_ok = false;
  bool fired = false;
  bool failed = false;  // MLE or Hessian evaluation raised; never fires
};

struct GeneralizedOptions {
  std::size_t m_b = 64;
  std::size_t m_b_prime = 0;  // 0: default_min_delay(d)
  bool check_interior = true;
};

/// Window-limited generalized SGLR for unknown post-change parameters. At
/// time t every window length l in [m_b', m_b] is tested on both branches:
/// the g-branch fires when ln Lambda-hat at the window MLE reaches b, the
/// Hessian ball condition holds and the MLE is interior; likewise for g_n.
/// The rule stops at the first t where any (l, branch) fires.
class GeneralizedWsglr {
 public:
  struct StepResult {
    bool fired = false;
    GenWindowVerdict best;
    // Largest llr among verdicts that pass both side conditions; stopping
    // at "eligible_max >= b" is the same event as `fired`.
    double eligible_max = -std::numeric_limits<double>::infinity();
  };

  GeneralizedWsglr(Distribution f, Distribution fn, std::shared_ptr<const ParamFamily> g_family,
                   std::shared_ptr<const ParamFamily> gn_family, GeneralizedOptions options)
      : f_(std::move(f)),
        fn_(std::move(fn)),
        g_fam_(std::move(g_family)),
        gn_fam_(std::move(gn_family)),
        options_(options),
        entries_(options.m_b + 1, true) {
    require(g_fam_ && gn_fam_, Errc::invalid_argument, "both parameter families are required");
    if (options_.m_b_prime == 0) {
      options_.m_b_prime = std::max(default_min_delay(g_fam_->dim()), default_min_delay(gn_fam_->dim()));
    }
    require(options_.m_b >= options_.m_b_prime, Errc::invalid_argument, "need m_b' <= m_b");
  }

  StepResult step(double x, double b) {
    require(std::isfinite(b) && b > 0.0, Errc::invalid_argument, "threshold b must be > 0");
    require(std::isfinite(x), Errc::non_finite, "observation is not finite");
    ++t_;
    const double lf = f_.log_density(x);
    const double lfn = fn_.log_density(x);
    entries_.push_back(Entry{t_, {}, {}, 0.0, 0.0});
    entries_.for_each([&](Entry& e) {
      g_fam_->accumulate(e.stats_g, x);
      gn_fam_->accumulate(e.stats_gn, x);
      e.sum_log_f += lf;
      e.denom = denom_step(e.denom, e.sum_log_f, lfn);
    });
    while (!entries_.empty() && t_ - entries_.front().k + 1 > options_.m_b) entries_.pop_front();

    StepResult out;
    bool have_best = false;
    entries_.for_each([&](const Entry& e) {
      const std::size_t len = t_ - e.k + 1;
      if (len < options_.m_b_prime) return;
      for (Branch br : {Branch::g, Branch::gn}) {
        GenWindowVerdict v = evaluate_window(br == Branch::g ? *g_fam_ : *gn_fam_,
                                             br == Branch::g ? e.stats_g : e.stats_gn, e.denom, b);
        v.length = len;
        v.branch = br;
        if (!v.failed && v.hessian_ok && v.interior_ok) out.eligible_max = std::max(out.eligible_max, v.llr_at_mle);
        if (v.failed) continue;
        const bool better = !have_best || (v.fired && !out.best.fired) ||
                            (v.fired == out.best.fired && v.llr_at_mle > out.best.llr_at_mle);
        if (better) {
          out.best = v;
          have_best = true;
        }
        out.fired = out.fired || v.fired;
      }
    });
    out.best.t = t_;
    last_ = out;
    return out;
  }

  /// Verdict for a single (window, branch) at threshold b.
  GenWindowVerdict evaluate_window(const ParamFamily& fam, const WindowStats& s, double denom, double b) const {
    GenWindowVerdict v;
    v.t = t_;
    try {
      v.theta_hat = box_mle(fam, s);
      v.llr_at_mle = fam.loglik(v.theta_hat, s) - denom;
      require(std::isfinite(v.llr_at_mle), Errc::non_finite, "log-likelihood ratio at the MLE");
      v.interior_ok = !options_.check_interior || fam.box().interior(v.theta_hat);
      v.hessian_ok = hessian_ball_check(fam, s, v.theta_hat, b).ok;
      v.fired = v.llr_at_mle >= b && v.hessian_ok && v.interior_ok;
    } catch (const Error&) {
      v.failed = true;
      v.fired = false;
    }
    return v;
  }

  std::size_t t() const noexcept { return t_; }
  const GeneralizedOptions& options() const noexcept { return options_; }
  const StepResult& last() const noexcept { return last_; }

  void reset() {
    entries_.clear();
    t_ = 0;
    last_ = StepResult{};
  }

 private:
  struct Entry {
    std::size_t k = 0;
    WindowStats stats_g;
    WindowStats stats_gn;
    double sum_log_f = 0.0;
    double denom = 0.0;
  };

  Distribution f_;
  Distribution fn_;
  std::shared_ptr<const ParamFamily> g_fam_;
  std::shared_ptr<const ParamFamily> gn_fam_;
  GeneralizedOptions options_;
  RingBuffer<Entry> entries_;
  std::size_t t_ = 0;
  StepResult last_;
};

}  // namespace wsglr

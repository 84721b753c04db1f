#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wsglr/error.hpp"

namespace wsglr {

using Rng = std::mt19937_64;

inline constexpr double kLogTwoPi = 1.8378770664093454836;  // ln(2*pi)

class Gaussian {
 public:
  Gaussian(double mean, double variance) : mean_(mean), variance_(variance) {
    require(std::isfinite(mean), Errc::invalid_argument, "gaussian mean must be finite");
    require(std::isfinite(variance) && variance > 0.0, Errc::invalid_argument,
            "gaussian variance must be finite and > 0");
    inv_two_var_ = 0.5 / variance;
    log_norm_ = -0.5 * (kLogTwoPi + std::log(variance));
  }

  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return variance_; }
  double stddev() const noexcept { return std::sqrt(variance_); }

  double log_density(double x) const noexcept {
    const double d = x - mean_;
    return log_norm_ - d * d * inv_two_var_;
  }

  double sample(Rng& rng) const { return std::normal_distribution<double>(mean_, stddev())(rng); }

  friend bool operator==(const Gaussian& a, const Gaussian& b) {
    return a.mean_ == b.mean_ && a.variance_ == b.variance_;
  }

 private:
  double mean_;
  double variance_;
  double inv_two_var_;
  double log_norm_;
};

/// Piecewise-constant density on [lo, hi) with a density floor everywhere
/// (including outside the range), so its support is the whole real line.
class Histogram {
 public:
  Histogram(double lo, double hi, std::vector<double> density, double floor = 1e-12)
      : lo_(lo), hi_(hi), density_(std::move(density)), floor_(floor) {
    require(std::isfinite(lo) && std::isfinite(hi) && hi > lo, Errc::invalid_argument,
            "histogram range must be finite with hi > lo");
    require(!density_.empty(), Errc::invalid_argument, "histogram needs at least one bin");
    require(floor > 0.0, Errc::invalid_argument, "histogram floor must be > 0");
    width_ = (hi_ - lo_) / static_cast<double>(density_.size());
    log_density_.reserve(density_.size());
    cumulative_.reserve(density_.size());
    double mass = 0.0;
    for (double d : density_) {
      require(std::isfinite(d) && d >= 0.0, Errc::invalid_argument, "histogram density must be >= 0");
      log_density_.push_back(std::log(std::max(d, floor_)));
      mass += d * width_;
      cumulative_.push_back(mass);
    }
    require(mass > 0.0, Errc::invalid_argument, "histogram has zero mass");
    log_floor_ = std::log(floor_);
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double floor() const noexcept { return floor_; }
  const std::vector<double>& density() const noexcept { return density_; }

  double log_density(double x) const noexcept {
    if (!(x >= lo_ && x < hi_)) return log_floor_;
    auto bin = static_cast<std::size_t>((x - lo_) / width_);
    if (bin >= log_density_.size()) bin = log_density_.size() - 1;
    return log_density_[bin];
  }

  // Draws from the in-range bins only; the floor mass is ignored.
  double sample(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, cumulative_.back())(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    auto bin = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cumulative_.begin(), static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
    const double within = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return lo_ + (static_cast<double>(bin) + within) * width_;
  }

  friend bool operator==(const Histogram& a, const Histogram& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_ && a.density_ == b.density_ && a.floor_ == b.floor_;
  }

 private:
  double lo_;
  double hi_;
  std::vector<double> density_;
  double floor_;
  double width_ = 1.0;
  double log_floor_ = 0.0;
  std::vector<double> log_density_;
  std::vector<double> cumulative_;
};

/// Natural-statistics description of a univariate exponential family
///   p(x; theta) = h(x) exp(sum_i B_i(theta) T_i(x) - A(theta)).
/// `expected_stats` and `sampler` are optional; when `expected_stats` is
/// absent, expectations of T are estimated by Monte Carlo through `sampler`.
struct ExponentialFamily {
  std::string name;
  std::size_t num_params = 0;
  std::size_t num_stats = 0;
  std::function<std::vector<double>(std::span<const double>)> natural;
  std::function<double(std::span<const double>)> log_partition;
  std::function<std::vector<double>(double)> sufficient;
  std::function<double(double)> log_base;
  std::function<bool(std::span<const double>)> valid;
  std::function<std::vector<double>(std::span<const double>)> expected_stats;
  std::function<double(std::span<const double>, Rng&)> sampler;

  void check(std::span<const double> theta) const {
    require(theta.size() == num_params, Errc::invalid_argument,
            name + ": expected " + std::to_string(num_params) + " parameters");
    for (double v : theta) require(std::isfinite(v), Errc::invalid_argument, name + ": non-finite parameter");
    require(!valid || valid(theta), Errc::invalid_argument, name + ": parameter outside the valid set");
  }
};

/// Gaussian as an exponential family with theta = (mean, variance):
/// B = (mu/s2, -1/(2 s2)), T = (x, x^2), A = mu^2/(2 s2) + ln sqrt(s2).
inline std::shared_ptr<const ExponentialFamily> gaussian_family() {
  static const auto family = [] {
    auto fam = std::make_shared<ExponentialFamily>();
    fam->name = "gaussian";
    fam->num_params = 2;
    fam->num_stats = 2;
    fam->natural = [](std::span<const double> th) {
      return std::vector<double>{th[0] / th[1], -0.5 / th[1]};
    };
    fam->log_partition = [](std::span<const double> th) {
      return th[0] * th[0] / (2.0 * th[1]) + 0.5 * std::log(th[1]);
    };
    fam->sufficient = [](double x) { return std::vector<double>{x, x * x}; };
    fam->log_base = [](double) { return -0.5 * kLogTwoPi; };
    fam->valid = [](std::span<const double> th) { return th[1] > 0.0; };
    fam->expected_stats = [](std::span<const double> th) {
      return std::vector<double>{th[0], th[0] * th[0] + th[1]};
    };
    fam->sampler = [](std::span<const double> th, Rng& rng) {
      return std::normal_distribution<double>(th[0], std::sqrt(th[1]))(rng);
    };
    return std::shared_ptr<const ExponentialFamily>(std::move(fam));
  }();
  return family;
}

struct ExpFamilyMember {
  std::shared_ptr<const ExponentialFamily> family;
  std::vector<double> theta;

  ExpFamilyMember(std::shared_ptr<const ExponentialFamily> fam, std::vector<double> th)
      : family(std::move(fam)), theta(std::move(th)) {
    require(family != nullptr, Errc::invalid_argument, "null exponential family");
    family->check(theta);
    natural_ = family->natural(theta);
    log_partition_ = family->log_partition(theta);
  }

  double log_density(double x) const {
    const auto stats = family->sufficient(x);
    double acc = family->log_base(x) - log_partition_;
    for (std::size_t i = 0; i < stats.size(); ++i) acc += natural_[i] * stats[i];
    return acc;
  }

  double sample(Rng& rng) const {
    require(static_cast<bool>(family->sampler), Errc::invalid_argument,
            family->name + ": family has no sampler");
    return family->sampler(theta, rng);
  }

  friend bool operator==(const ExpFamilyMember& a, const ExpFamilyMember& b) {
    return a.family == b.family && a.theta == b.theta;
  }

 private:
  std::vector<double> natural_;
  double log_partition_ = 0.0;
};

/// A univariate density model: Gaussian, floored histogram, or a member of a
/// user-described exponential family.
class Distribution {
 public:
  using Model = std::variant<Gaussian, Histogram, ExpFamilyMember>;

  Distribution(Gaussian g) : model_(std::move(g)) {}  // NOLINT(google-explicit-constructor)
  Distribution(Histogram h) : model_(std::move(h)) {}  // NOLINT(google-explicit-constructor)
  Distribution(ExpFamilyMember e) : model_(std::move(e)) {}  // NOLINT(google-explicit-constructor)

  static Distribution gaussian(double mean, double variance) { return Gaussian(mean, variance); }

  const Model& model() const noexcept { return model_; }
  const Gaussian* as_gaussian() const noexcept { return std::get_if<Gaussian>(&model_); }

  double log_density(double x) const {
    require(std::isfinite(x), Errc::non_finite, "log_density at non-finite x");
    return log_density_unchecked(x);
  }

  double log_density_unchecked(double x) const {
    if (const auto* g = std::get_if<Gaussian>(&model_)) return g->log_density(x);
    return std::visit([x](const auto& m) { return m.log_density(x); }, model_);
  }

  double sample(Rng& rng) const {
    return std::visit([&rng](const auto& m) { return m.sample(rng); }, model_);
  }

  std::string describe() const;

  friend bool operator==(const Distribution& a, const Distribution& b) { return a.model_ == b.model_; }

 private:
  Model model_;
};

inline std::string Distribution::describe() const {
  if (const auto* g = as_gaussian()) {
    return "N(" + std::to_string(g->mean()) + ", " + std::to_string(g->variance()) + ")";
  }
  if (std::holds_alternative<Histogram>(model_)) return "histogram";
  return std::get<ExpFamilyMember>(model_).family->name;
}

// Free-function spellings used throughout the tests and the CLI.
inline double log_density(const Distribution& model, double x) { return model.log_density(x); }
inline double sample(const Distribution& model, Rng& rng) { return model.sample(rng); }

/// The four regime densities: pre-change f, nuisance-only f_n, critical-only g,
/// and both-changes g_n.
struct Quad {
  Distribution f;
  Distribution fn;
  Distribution g;
  Distribution gn;

  friend bool operator==(const Quad&, const Quad&) = default;
};

/// Log-densities of one observation under the four regimes.
struct LogDensities {
  double f;
  double fn;
  double g;
  double gn;
};

inline LogDensities evaluate(const Quad& quad, double x) {
  require(std::isfinite(x), Errc::non_finite, "observation is not finite");
  LogDensities ld{quad.f.log_density_unchecked(x), quad.fn.log_density_unchecked(x),
                  quad.g.log_density_unchecked(x), quad.gn.log_density_unchecked(x)};
  require(std::isfinite(ld.f) && std::isfinite(ld.fn) && std::isfinite(ld.g) && std::isfinite(ld.gn),
          Errc::non_finite, "non-finite log-density");
  return ld;
}

}  // namespace wsglr

#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "wsglr/cusum.hpp"
#include "wsglr/distribution.hpp"
#include "wsglr/divergence.hpp"
#include "wsglr/error.hpp"
#include "wsglr/generalized.hpp"
#include "wsglr/sglr_window.hpp"
#include "wsglr/two_stage.hpp"

namespace wsglr {

/// A streaming stopping rule: each sample yields a statistic, and the rule
/// stops at the first sample whose statistic reaches the threshold.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual double step(double x) = 0;
  virtual void reset() = 0;
  virtual std::string_view name() const = 0;
};

enum class DetectorKind { wsglr, sglr, glr, fma, two_stage, cusum, generalized };

inline std::string_view to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::wsglr: return "wsglr";
    case DetectorKind::sglr: return "sglr";
    case DetectorKind::glr: return "glr";
    case DetectorKind::fma: return "fma";
    case DetectorKind::two_stage: return "two_stage";
    case DetectorKind::cusum: return "cusum";
    case DetectorKind::generalized: return "generalized";
  }
  return "?";
}

inline DetectorKind parse_detector_kind(std::string_view s) {
  if (s == "wsglr") return DetectorKind::wsglr;
  if (s == "sglr") return DetectorKind::sglr;
  if (s == "glr") return DetectorKind::glr;
  if (s == "fma") return DetectorKind::fma;
  if (s == "two_stage" || s == "2-stage" || s == "two-stage") return DetectorKind::two_stage;
  if (s == "cusum") return DetectorKind::cusum;
  if (s == "generalized" || s == "gen_wsglr") return DetectorKind::generalized;
  throw Error(Errc::invalid_argument, "unknown detector '" + std::string(s) + "'");
}

/// Smallest power of two >= 2b/I, or the override when given.
inline std::size_t choose_window(double b, double I, std::optional<std::size_t> override_m_b = std::nullopt) {
  if (override_m_b) {
    require(*override_m_b >= 1, Errc::invalid_argument, "window override must be >= 1");
    return *override_m_b;
  }
  require(std::isfinite(b) && b > 0.0, Errc::invalid_argument, "threshold b must be > 0");
  require(std::isfinite(I) && I > 0.0, Errc::invalid_argument, "growth rate I must be > 0");
  const double target = 2.0 * b / I;
  std::size_t m = 1;
  while (static_cast<double>(m) < target) m <<= 1;
  return m;
}

struct DetectorConfig {
  DetectorKind kind = DetectorKind::wsglr;
  std::optional<double> b;              // threshold
  std::optional<std::size_t> m_b;       // window; derived from b and I when absent (wsglr/fma)
  double b_n = 5.0;                     // two-stage nuisance threshold
  std::optional<std::size_t> m_b_prime; // generalized minimal window
  std::shared_ptr<const ParamFamily> g_family;
  std::shared_ptr<const ParamFamily> gn_family;
  bool check_interior = true;

  /// True when the statistic path does not depend on the threshold, so one
  /// pass over a stream yields the stopping time for every threshold.
  bool threshold_free() const { return kind != DetectorKind::generalized; }
};

class WsglrDetector final : public Detector {
 public:
  WsglrDetector(Quad quad, std::size_t m_b) : window_(SglrWindow::wsglr(std::move(quad), m_b)) {}
  double step(double x) override { return window_.step(x); }
  void reset() override { window_.reset(); }
  std::string_view name() const override { return "wsglr"; }
  const SglrWindow& window() const noexcept { return window_; }

 private:
  SglrWindow window_;
};

/// Unwindowed SGLR or GLR; an optional window limits the look-back like W-SGLR.
class SglrDetector final : public Detector {
 public:
  SglrDetector(Quad quad, Numerator numerator, std::optional<std::size_t> m_b)
      : window_(std::move(quad), WindowOptions{m_b ? *m_b + 1 : 0, 1, true, numerator}) {}
  double step(double x) override { return window_.step(x); }
  void reset() override { window_.reset(); }
  std::string_view name() const override {
    return window_.options().numerator == Numerator::full ? "glr" : "sglr";
  }

 private:
  SglrWindow window_;
};

/// Finite moving average: only the full-window term k = t - m_b.
class FmaDetector final : public Detector {
 public:
  FmaDetector(Quad quad, std::size_t m_b) : window_(SglrWindow::wsglr(std::move(quad), m_b)), m_b_(m_b) {}
  double step(double x) override {
    window_.step(x);
    return window_.term_of_length(m_b_ + 1).value_or(0.0);
  }
  void reset() override { window_.reset(); }
  std::string_view name() const override { return "fma"; }

 private:
  SglrWindow window_;
  std::size_t m_b_;
};

class CusumDetector final : public Detector {
 public:
  CusumDetector(Distribution pre, Distribution post) : cusum_(std::move(pre), std::move(post)) {}
  double step(double x) override { return cusum_.step(x); }
  void reset() override { cusum_.reset(); }
  std::string_view name() const override { return "cusum"; }

 private:
  Cusum cusum_;
};

class TwoStageDetector final : public Detector {
 public:
  TwoStageDetector(Quad quad, double b_n) : rule_(std::move(quad), b_n) {}
  double step(double x) override { return rule_.step(x); }
  void reset() override { rule_.reset(); }
  std::string_view name() const override { return "two_stage"; }
  const TwoStage& rule() const noexcept { return rule_; }

 private:
  TwoStage rule_;
};

/// Generalized W-SGLR bound to one threshold. The statistic is the largest
/// llr among windows passing the Hessian and interior conditions (-inf when
/// none does), so "statistic >= b" is exactly the generalized firing event.
class GeneralizedDetector final : public Detector {
 public:
  GeneralizedDetector(GeneralizedWsglr rule, double b) : rule_(std::move(rule)), b_(b) {}
  double step(double x) override { return rule_.step(x, b_).eligible_max; }
  void reset() override { rule_.reset(); }
  std::string_view name() const override { return "generalized"; }
  const GeneralizedWsglr& rule() const noexcept { return rule_; }
  double b() const noexcept { return b_; }

 private:
  GeneralizedWsglr rule_;
  double b_;
};

/// Window for a config: the explicit m_b, else choose_window(b, I).
inline std::size_t resolve_window(const DetectorConfig& cfg, const Quad& quad, double b) {
  if (cfg.m_b) return choose_window(b, 1.0, cfg.m_b);
  return choose_window(b, growth_rates(quad).I);
}

inline std::unique_ptr<Detector> make_detector(const DetectorConfig& cfg, const Quad& quad, double b) {
  switch (cfg.kind) {
    case DetectorKind::wsglr: return std::make_unique<WsglrDetector>(quad, resolve_window(cfg, quad, b));
    case DetectorKind::fma: return std::make_unique<FmaDetector>(quad, resolve_window(cfg, quad, b));
    case DetectorKind::sglr: return std::make_unique<SglrDetector>(quad, Numerator::simplified, cfg.m_b);
    case DetectorKind::glr: return std::make_unique<SglrDetector>(quad, Numerator::full, cfg.m_b);
    case DetectorKind::cusum: return std::make_unique<CusumDetector>(quad.f, quad.g);
    case DetectorKind::two_stage: return std::make_unique<TwoStageDetector>(quad, cfg.b_n);
    case DetectorKind::generalized: {
      require(cfg.g_family && cfg.gn_family, Errc::invalid_argument,
              "generalized detector needs g_family and gn_family");
      GeneralizedOptions opt;
      opt.m_b = cfg.m_b.value_or(64);
      opt.m_b_prime = cfg.m_b_prime.value_or(0);
      opt.check_interior = cfg.check_interior;
      return std::make_unique<GeneralizedDetector>(
          GeneralizedWsglr(quad.f, quad.fn, cfg.g_family, cfg.gn_family, opt), b);
    }
  }
  throw Error(Errc::invalid_argument, "unknown detector kind");
}

}  // namespace wsglr

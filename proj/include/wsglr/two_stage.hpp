#pragma once

#include <algorithm>
#include <cmath>

#include "wsglr/cusum.hpp"
#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"

namespace wsglr {

/// Naive two-stage CuSum baseline.
///
/// Stage 1 runs CuSums for f->g and f->g_n (critical, threshold b_c) and
/// f->f_n (nuisance, threshold b_n). A critical crossing stops. A nuisance
/// crossing without a critical crossing at the same sample switches to
/// stage 2, which runs a fresh f_n->g_n CuSum on the following samples.
///
/// The reported statistic is max(f->g, f->g_n) in stage 1 and the f_n->g_n
/// CuSum in stage 2. Stopping at "statistic >= b_c" reproduces the rule
/// above for every b_c, since the stage switch depends on b_n only.
class TwoStage {
 public:
  struct Verdict {
    bool stopped = false;
    int stage = 1;
  };

  TwoStage(Quad quad, double b_n) : quad_(std::move(quad)), b_n_(b_n) {
    require(std::isfinite(b_n) && b_n >= 0.0, Errc::invalid_argument, "nuisance threshold b_n must be >= 0");
  }

  double step(double x) {
    const auto ld = evaluate(quad_, x);
    if (stage_ == 1) {
      fg_ = cusum_step(fg_, ld.g - ld.f);
      fgn_ = cusum_step(fgn_, ld.gn - ld.f);
      ffn_ = cusum_step(ffn_, ld.fn - ld.f);
      statistic_ = std::max(fg_, fgn_);
      if (ffn_ >= b_n_) {
        stage_ = 2;
        fngn_ = 0.0;
      }
      return statistic_;
    }
    fngn_ = cusum_step(fngn_, ld.gn - ld.fn);
    statistic_ = fngn_;
    return statistic_;
  }

  /// One sample of the rule with critical threshold b_c. A simultaneous
  /// critical and nuisance crossing is reported as a stage-1 critical stop.
  Verdict advance(double x, double b_c) {
    const int before = stage_;
    const double s = step(x);
    if (s >= b_c) return {true, before};
    return {false, stage_};
  }

  int stage() const noexcept { return stage_; }
  double statistic() const noexcept { return statistic_; }
  double nuisance_statistic() const noexcept { return ffn_; }
  double b_n() const noexcept { return b_n_; }

  void reset() noexcept {
    stage_ = 1;
    fg_ = fgn_ = ffn_ = fngn_ = statistic_ = 0.0;
  }

 private:
  Quad quad_;
  double b_n_;
  int stage_ = 1;
  double fg_ = 0.0;
  double fgn_ = 0.0;
  double ffn_ = 0.0;
  double fngn_ = 0.0;
  double statistic_ = 0.0;
};

}  // namespace wsglr

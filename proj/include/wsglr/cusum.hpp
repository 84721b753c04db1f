#pragma once

#include <algorithm>
#include <cmath>

#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"

namespace wsglr {

/// Page's recursion: max{prev + llr, 0}.
inline double cusum_step(double prev, double llr) {
  require(std::isfinite(llr), Errc::non_finite, "cusum log-likelihood ratio");
  return std::max(prev + llr, 0.0);
}

/// CuSum for a change from `pre` to `post`.
class Cusum {
 public:
  Cusum(Distribution pre, Distribution post) : pre_(std::move(pre)), post_(std::move(post)) {}

  double step(double x) {
    statistic_ = cusum_step(statistic_, post_.log_density(x) - pre_.log_density(x));
    return statistic_;
  }

  double statistic() const noexcept { return statistic_; }
  void reset() noexcept { statistic_ = 0.0; }

 private:
  Distribution pre_;
  Distribution post_;
  double statistic_ = 0.0;
};

}  // namespace wsglr

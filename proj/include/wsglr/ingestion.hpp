#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "wsglr/detector.hpp"
#include "wsglr/distribution.hpp"
#include "wsglr/error.hpp"
#include "wsglr/run.hpp"
#include "wsglr/scenario.hpp"

namespace wsglr {

inline constexpr std::size_t kDefaultTrainingSamples = 12000;
inline constexpr std::size_t kHistogramBins = 64;
inline constexpr double kVarianceFloor = 1e-12;

// ---------------------------------------------------------------- CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::optional<double> parse_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Single-column reals, one per line. The first line may be a header; blank
/// lines are skipped; LF and CRLF endings are accepted.
inline std::vector<double> parse_csv_column(std::istream& in, std::string_view source = "<stream>") {
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = detail::trim(line);
    if (lineno == 1 && s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF &&
        static_cast<unsigned char>(s[1]) == 0xBB && static_cast<unsigned char>(s[2]) == 0xBF) {
      s = detail::trim(s.substr(3));
    }
    if (s.empty()) continue;
    if (auto v = detail::parse_real(s)) {
      out.push_back(*v);
    } else if (lineno == 1) {
      continue;  // header
    } else {
      throw Error(Errc::parse_error, std::string(source) + ":" + std::to_string(lineno) + ": not a finite real: '" +
                                         std::string(s) + "'");
    }
  }
  require(!out.empty(), Errc::parse_error, std::string(source) + ": no samples");
  return out;
}

inline std::vector<double> read_csv_column(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot open '" + path + "'");
  return parse_csv_column(in, path);
}

/// Shortest representation that reads back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, ptr);
}

inline void write_csv_column(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) out << format_real(x) << '\n';
}

inline void write_csv_column(const std::string& path, std::span<const double> xs) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::io_error, "cannot write '" + path + "'");
  write_csv_column(out, xs);
  require(static_cast<bool>(out), Errc::io_error, "write failed for '" + path + "'");
}

/// (t, statistic) rows with t starting at 1.
inline void write_trace_csv(std::ostream& out, std::span<const double> trace) {
  out << "t,statistic\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << (i + 1) << ',' << format_real(trace[i]) << '\n';
}

// ------------------------------------------------------------ transforms

/// X_t = Y_t - Y_{t-1}.
inline std::vector<double> detrend(std::span<const double> raw) {
  require(raw.size() >= 2, Errc::invalid_argument, "detrend needs at least 2 samples");
  std::vector<double> out(raw.size() - 1);
  for (std::size_t i = 1; i < raw.size(); ++i) out[i - 1] = raw[i] - raw[i - 1];
  return out;
}

/// Running sum starting from `origin`; the inverse of detrend.
inline std::vector<double> cumulative_sum(std::span<const double> xs, double origin = 0.0) {
  std::vector<double> out;
  out.reserve(xs.size() + 1);
  out.push_back(origin);
  for (double x : xs) out.push_back(out.back() + x);
  return out;
}

enum class ModelKind { gaussian, histogram };

/// Gaussian with the MLE mean and population variance.
inline Distribution fit_gaussian(std::span<const double> xs) {
  require(xs.size() >= 2, Errc::invalid_argument, "fit needs at least 2 samples");
  double mean = 0.0;
  for (double x : xs) {
    require(std::isfinite(x), Errc::non_finite, "fit data must be finite");
    mean += x;
  }
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size());
  require(var > 0.0, Errc::invalid_argument, "degenerate (zero) variance");
  return Distribution::gaussian(mean, std::max(var, kVarianceFloor));
}

/// 64 equal bins over the data range, densities floored at 1e-12.
inline Distribution fit_histogram(std::span<const double> xs, std::size_t bins = kHistogramBins) {
  require(xs.size() >= 2, Errc::invalid_argument, "fit needs at least 2 samples");
  require(bins >= 1, Errc::invalid_argument, "need at least one bin");
  const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  require(std::isfinite(*mn) && std::isfinite(*mx), Errc::non_finite, "fit data must be finite");
  require(*mx > *mn, Errc::invalid_argument, "degenerate (constant) data");
  const double lo = *mn;
  const double hi = std::nextafter(*mx, std::numeric_limits<double>::infinity());
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> counts(bins, 0.0);
  for (double x : xs) {
    auto bin = static_cast<std::size_t>((x - lo) / width);
    counts[std::min(bin, bins - 1)] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(xs.size()) * width;
  return Histogram(lo, hi, std::move(counts), kVarianceFloor);
}

inline Distribution fit_model(std::span<const double> xs, ModelKind kind = ModelKind::gaussian) {
  return kind == ModelKind::gaussian ? fit_gaussian(xs) : fit_histogram(xs);
}

// ------------------------------------------------------------- segments

struct LabeledSegment {
  std::vector<double> samples;  // de-trended
  std::string label;
  double sample_rate = 12000.0;

  void validate() const {
    require(!samples.empty(), Errc::invalid_argument, "segment '" + label + "' is empty");
    require(!label.empty(), Errc::invalid_argument, "segment label is empty");
  }
};

enum class Role { f, fn, g, gn };

inline Role parse_role(std::string_view s) {
  if (s == "f") return Role::f;
  if (s == "fn" || s == "f_n") return Role::fn;
  if (s == "g") return Role::g;
  if (s == "gn" || s == "g_n") return Role::gn;
  throw Error(Errc::invalid_argument, "unknown role '" + std::string(s) + "'");
}

struct FitOptions {
  ModelKind kind = ModelKind::gaussian;
  std::size_t training_samples = kDefaultTrainingSamples;  // leading samples used; all when shorter
};

/// Fits one model per role from the leading training samples of each segment.
inline Quad build_quad_from_segments(std::span<const LabeledSegment> segments,
                                     const std::map<std::string, std::string>& label_to_role,
                                     const FitOptions& opt = {}) {
  std::map<Role, const LabeledSegment*> by_role;
  for (const auto& [label, role_name] : label_to_role) {
    const Role role = parse_role(role_name);
    require(!by_role.contains(role), Errc::invalid_argument, "role '" + role_name + "' mapped more than once");
    const auto it = std::find_if(segments.begin(), segments.end(),
                                 [&](const LabeledSegment& s) { return s.label == label; });
    require(it != segments.end(), Errc::invalid_argument, "no segment labelled '" + label + "'");
    it->validate();
    by_role[role] = &*it;
  }
  auto fit = [&](Role r, const char* name) {
    const auto it = by_role.find(r);
    require(it != by_role.end(), Errc::missing_role, std::string("no segment for role '") + name + "'");
    const auto& xs = it->second->samples;
    const std::size_t n = std::min(opt.training_samples, xs.size());
    return fit_model(std::span<const double>(xs.data(), n), opt.kind);
  };
  return Quad{fit(Role::f, "f"), fit(Role::fn, "fn"), fit(Role::g, "g"), fit(Role::gn, "gn")};
}

// ------------------------------------------------------- three-phase test

inline constexpr std::size_t kPhaseLength = 1200;

/// Order of the two changes in a three-phase test signal.
enum class PhaseOrder {
  nuisance_first,  // f -> f_n -> g_n
  critical_first,  // f -> g -> g_n
};

struct SplicedSignal {
  std::vector<double> samples;
  std::vector<std::size_t> boundaries;  // sample offsets where a new phase starts
  ChangePoint nu_n;
  ChangePoint nu_c;
};

/// Concatenates phase_length samples from each phase.
inline SplicedSignal splice_phases(std::span<const std::span<const double>> phases,
                                   std::size_t phase_length = kPhaseLength) {
  require(!phases.empty(), Errc::invalid_argument, "no phases to splice");
  require(phase_length >= 1, Errc::invalid_argument, "phase length must be >= 1");
  SplicedSignal out;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    require(phases[p].size() >= phase_length, Errc::invalid_argument,
            "phase " + std::to_string(p) + " has fewer than " + std::to_string(phase_length) + " samples");
    if (p > 0) out.boundaries.push_back(out.samples.size());
    out.samples.insert(out.samples.end(), phases[p].begin(), phases[p].begin() + static_cast<std::ptrdiff_t>(phase_length));
  }
  return out;
}

/// Three-phase test signal with change points at offsets phase_length and
/// 2 * phase_length (1-based samples phase_length + 1 and 2 * phase_length + 1).
inline SplicedSignal splice_three_phase(std::span<const double> first, std::span<const double> second,
                                        std::span<const double> third, PhaseOrder order,
                                        std::size_t phase_length = kPhaseLength) {
  const std::span<const double> phases[] = {first, second, third};
  SplicedSignal out = splice_phases(phases, phase_length);
  const ChangePoint early = out.boundaries[0] + 1;
  const ChangePoint late = out.boundaries[1] + 1;
  if (order == PhaseOrder::nuisance_first) {
    out.nu_n = early;
    out.nu_c = late;
  } else {
    out.nu_c = early;
    out.nu_n = late;
  }
  return out;
}

/// Draws a three-phase signal from the models of a quad.
inline SplicedSignal synthesize_three_phase(const Quad& quad, PhaseOrder order, Rng& rng,
                                            std::size_t phase_length = kPhaseLength) {
  const Distribution& middle = order == PhaseOrder::nuisance_first ? quad.fn : quad.g;
  auto draw = [&](const Distribution& d) {
    std::vector<double> xs(phase_length);
    for (double& x : xs) x = d.sample(rng);
    return xs;
  };
  const auto a = draw(quad.f);
  const auto b = draw(middle);
  const auto c = draw(quad.gn);
  return splice_three_phase(a, b, c, order, phase_length);
}

// -------------------------------------------------------------- detection

struct FileDetection {
  RunOutcome outcome;
  std::vector<double> trace;  // statistic at t = 1 .. file length - 1
};

/// De-trends a record and streams it through the detector. The trace covers
/// the whole record; the outcome is the first crossing of b.
inline FileDetection detect_on_record(std::span<const double> raw, const Quad& quad, const DetectorConfig& cfg,
                                      ChangePoint nu_c = {}, ChangePoint nu_n = {}) {
  require(cfg.b.has_value(), Errc::invalid_argument, "detection needs a threshold b");
  const double b = *cfg.b;
  const auto xs = detrend(raw);
  auto det = make_detector(cfg, quad, b);
  FileDetection out;
  out.trace.reserve(xs.size());
  std::optional<std::size_t> tau;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double s = det->step(xs[i]);
    out.trace.push_back(s);
    if (!tau && s >= b) tau = i + 1;
  }
  out.outcome = make_outcome(tau, b, xs.size(), nu_c, nu_n);
  return out;
}

inline FileDetection detect_on_file(const std::string& path, const Quad& quad, const DetectorConfig& cfg,
                                    ChangePoint nu_c = {}, ChangePoint nu_n = {}) {
  const auto raw = read_csv_column(path);
  require(raw.size() >= 2, Errc::parse_error, path + ": need at least 2 samples");
  return detect_on_record(raw, quad, cfg, nu_c, nu_n);
}

}  // namespace wsglr

#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsglr/detector.hpp"
#include "wsglr/distribution.hpp"
#include "wsglr/divergence.hpp"
#include "wsglr/error.hpp"
#include "wsglr/generalized.hpp"
#include "wsglr/ingestion.hpp"
#include "wsglr/scenario.hpp"
#include "wsglr/simulation.hpp"

// JSON bindings for scenarios, detectors, parameter families and plans.

namespace wsglr::config {

using Json = nlohmann::json;

namespace detail {

inline void only_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  require(j.is_object(), Errc::parse_error, std::string(what) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, Errc::parse_error, std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get(const Json& j, const char* key, const char* what) {
  require(j.contains(key), Errc::parse_error, std::string(what) + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string(what) + ": bad '" + key + "': " + e.what());
  }
}

template <typename T>
std::optional<T> get_opt(const Json& j, const char* key, const char* what) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, what);
}

inline const Json& first_of(const Json& j, const char* a, const char* b, const char* what) {
  if (j.contains(a)) return j.at(a);
  require(j.contains(b), Errc::parse_error, std::string(what) + ": missing '" + a + "'");
  return j.at(b);
}

}  // namespace detail

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, path + ": " + e.what());
  }
}

// --------------------------------------------------------------- models

inline Distribution distribution_from_json(const Json& j) {
  const std::string kind = j.is_object() && j.contains("kind") ? detail::get<std::string>(j, "kind", "model")
                                                               : std::string("gaussian");
  if (kind == "gaussian") {
    detail::only_keys(j, {"kind", "mean", "variance"}, "gaussian model");
    return Distribution::gaussian(detail::get<double>(j, "mean", "gaussian model"),
                                  detail::get<double>(j, "variance", "gaussian model"));
  }
  if (kind == "histogram") {
    detail::only_keys(j, {"kind", "lo", "hi", "density", "floor"}, "histogram model");
    return Histogram(detail::get<double>(j, "lo", "histogram model"), detail::get<double>(j, "hi", "histogram model"),
                     detail::get<std::vector<double>>(j, "density", "histogram model"),
                     detail::get_opt<double>(j, "floor", "histogram model").value_or(1e-12));
  }
  throw Error(Errc::parse_error, "unknown model kind '" + kind + "'");
}

inline Json to_json(const Distribution& d) {
  if (const auto* g = d.as_gaussian()) return {{"kind", "gaussian"}, {"mean", g->mean()}, {"variance", g->variance()}};
  if (const auto* h = std::get_if<Histogram>(&d.model())) {
    return {{"kind", "histogram"}, {"lo", h->lo()}, {"hi", h->hi()}, {"density", h->density()}, {"floor", h->floor()}};
  }
  throw Error(Errc::invalid_argument, "model has no JSON form");
}

inline Quad quad_from_json(const Json& j) {
  return Quad{distribution_from_json(j.at("f")), distribution_from_json(detail::first_of(j, "fn", "f_n", "scenario")),
              distribution_from_json(j.at("g")), distribution_from_json(detail::first_of(j, "gn", "g_n", "scenario"))};
}

inline Json to_json(const Quad& q) {
  return {{"f", to_json(q.f)}, {"fn", to_json(q.fn)}, {"g", to_json(q.g)}, {"gn", to_json(q.gn)}};
}

inline QuadScenario scenario_from_json(const Json& j) {
  detail::only_keys(j, {"f", "fn", "f_n", "g", "gn", "g_n", "nu_n", "nu_c"}, "scenario");
  for (const char* k : {"f", "g"}) require(j.contains(k), Errc::parse_error, std::string("scenario: missing '") + k + "'");
  return QuadScenario(quad_from_json(j), detail::get_opt<std::size_t>(j, "nu_n", "scenario"),
                      detail::get_opt<std::size_t>(j, "nu_c", "scenario"));
}

inline Json to_json(const QuadScenario& s) {
  Json j = to_json(s.quad);
  j["nu_n"] = s.nu_n ? Json(*s.nu_n) : Json(nullptr);
  j["nu_c"] = s.nu_c ? Json(*s.nu_c) : Json(nullptr);
  return j;
}

// ------------------------------------------------------------- families

inline std::shared_ptr<const ParamFamily> family_from_json(const Json& j) {
  detail::only_keys(j, {"family", "mean", "variance", "theta_box"}, "family");
  const auto name = detail::get<std::string>(j, "family", "family");
  const auto raw_box = detail::get<std::vector<std::vector<double>>>(j, "theta_box", "family");
  std::vector<std::pair<double, double>> bounds;
  for (const auto& row : raw_box) {
    require(row.size() == 2, Errc::parse_error, "family: theta_box rows must be [lo, hi]");
    bounds.emplace_back(row[0], row[1]);
  }
  ParamBox box(std::move(bounds));
  if (name == "gaussian_variance") {
    return std::make_shared<GaussianVarianceFamily>(detail::get_opt<double>(j, "mean", "family").value_or(0.0),
                                                    std::move(box));
  }
  if (name == "gaussian_mean") {
    return std::make_shared<GaussianMeanFamily>(detail::get_opt<double>(j, "variance", "family").value_or(1.0),
                                                std::move(box));
  }
  throw Error(Errc::parse_error, "unknown family '" + name + "'");
}

// ------------------------------------------------------------ detectors

inline DetectorConfig detector_from_json(const Json& j) {
  detail::only_keys(j, {"detector", "b", "m_b", "b_n", "m_b_prime", "g_family", "gn_family", "check_interior"},
                    "detector");
  DetectorConfig cfg;
  cfg.kind = parse_detector_kind(detail::get<std::string>(j, "detector", "detector"));
  cfg.b = detail::get_opt<double>(j, "b", "detector");
  cfg.m_b = detail::get_opt<std::size_t>(j, "m_b", "detector");
  cfg.b_n = detail::get_opt<double>(j, "b_n", "detector").value_or(cfg.b_n);
  cfg.m_b_prime = detail::get_opt<std::size_t>(j, "m_b_prime", "detector");
  if (j.contains("g_family")) cfg.g_family = family_from_json(j.at("g_family"));
  if (j.contains("gn_family")) cfg.gn_family = family_from_json(j.at("gn_family"));
  cfg.check_interior = detail::get_opt<bool>(j, "check_interior", "detector").value_or(true);
  return cfg;
}

// ----------------------------------------------------------------- plans

inline ChangePolicy policy_from_json(const Json& j, const char* what) {
  if (j.is_null()) return ChangePolicy::none();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "none") return ChangePolicy::none();
    if (s == "uniform") return ChangePolicy::uniform();
    throw Error(Errc::parse_error, std::string(what) + ": expected \"none\", \"uniform\" or an index");
  }
  require(j.is_number_unsigned(), Errc::parse_error, std::string(what) + ": expected \"none\", \"uniform\" or an index");
  return ChangePolicy::fixed(j.get<std::size_t>());
}

inline Json to_json(const ChangePolicy& p) {
  switch (p.kind) {
    case ChangePolicy::Kind::fixed: return p.at;
    case ChangePolicy::Kind::uniform: return "uniform";
    case ChangePolicy::Kind::none: break;
  }
  return "none";
}

/// A plan file holds one scenario, thresholds and trial settings, plus either
/// a single "detector" object or a "detectors" list (one plan each).
inline std::vector<TrialPlan> plans_from_json(const Json& j) {
  detail::only_keys(j,
                    {"scenario", "detector", "detectors", "thresholds", "n_trials", "horizon", "add_horizon",
                     "base_seed", "arl_nuisance", "add_nuisance", "add_critical", "threads"},
                    "plan");
  TrialPlan base(quad_from_json(detail::get<Json>(j, "scenario", "plan")));
  base.thresholds = detail::get<std::vector<double>>(j, "thresholds", "plan");
  base.n_trials = detail::get_opt<std::size_t>(j, "n_trials", "plan").value_or(base.n_trials);
  base.horizon = detail::get_opt<std::size_t>(j, "horizon", "plan").value_or(base.horizon);
  base.add_horizon = detail::get_opt<std::size_t>(j, "add_horizon", "plan").value_or(0);
  base.base_seed = detail::get_opt<std::uint64_t>(j, "base_seed", "plan").value_or(base.base_seed);
  base.threads = detail::get_opt<unsigned>(j, "threads", "plan").value_or(0);
  if (j.contains("arl_nuisance")) base.arl_nuisance = policy_from_json(j.at("arl_nuisance"), "arl_nuisance");
  if (j.contains("add_nuisance")) base.add_nuisance = policy_from_json(j.at("add_nuisance"), "add_nuisance");
  if (j.contains("add_critical")) base.add_critical = policy_from_json(j.at("add_critical"), "add_critical");

  std::vector<TrialPlan> plans;
  const bool one = j.contains("detector");
  const bool many = j.contains("detectors");
  require(one != many, Errc::parse_error, "plan: give exactly one of 'detector' or 'detectors'");
  if (one) {
    plans.push_back(base);
    plans.back().detector = detector_from_json(j.at("detector"));
  } else {
    require(j.at("detectors").is_array() && !j.at("detectors").empty(), Errc::parse_error,
            "plan: 'detectors' must be a nonempty list");
    for (const auto& d : j.at("detectors")) {
      plans.push_back(base);
      plans.back().detector = detector_from_json(d);
    }
  }
  return plans;
}

// -------------------------------------------------------------- results

inline Json to_json(const RunOutcome& o) {
  auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"tau", opt(o.tau)},       {"b", o.b},
          {"horizon", o.horizon},    {"nu_c", opt(o.nu_c)},
          {"nu_n", opt(o.nu_n)},     {"detection_delay", opt(o.detection_delay)},
          {"false_alarm", o.false_alarm}, {"censored", o.censored()}};
}

inline Json to_json(const ArlEstimate& e) {
  return {{"mean", e.mean}, {"stderr", e.std_error}, {"n_censored", e.n_censored}, {"n_trials", e.n_trials},
          {"unreliable", e.unreliable}};
}

inline Json to_json(const AddEstimate& e) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  return {{"mean", num(e.mean)},         {"stderr", num(e.std_error)}, {"n_false_alarm", e.n_false_alarm},
          {"n_valid", e.n_valid},         {"n_censored", e.n_censored}, {"n_trials", e.n_trials}};
}

inline Json to_json(const TradeoffCurve& c) {
  Json pts = Json::array();
  for (const auto& p : c.points) pts.push_back({{"b", p.b}, {"arl", to_json(p.arl)}, {"add", to_json(p.add)}});
  return {{"detector", c.detector}, {"points", pts}};
}

inline Json to_json(const GrowthRates& g) {
  return {{"kl_g_f", g.kl_g_f}, {"kl_g_fn", g.kl_g_fn}, {"kl_gn_f", g.kl_gn_f}, {"kl_gn_fn", g.kl_gn_fn},
          {"I", g.I},           {"separable", g.separable}};
}

inline Json to_json(const DriftMoments& m) {
  return {{"rho_g", m.rho_g},   {"sigma2_g", m.sigma2_g},   {"omega4_g", m.omega4_g}, {"rho_gn", m.rho_gn},
          {"sigma2_gn", m.sigma2_gn}, {"omega4_gn", m.omega4_gn}, {"analytic", m.analytic}};
}

}  // namespace wsglr::config

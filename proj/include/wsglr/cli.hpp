#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wsglr/config.hpp"
#include "wsglr/detector.hpp"
#include "wsglr/divergence.hpp"
#include "wsglr/ingestion.hpp"
#include "wsglr/run.hpp"
#include "wsglr/scenario.hpp"
#include "wsglr/simulation.hpp"

namespace wsglr::cli {

enum ExitCode : int { ok = 0, runtime_error = 1, usage_error = 2, check_failed = 3 };

// ----------------------------------------------------------- writers

inline void write_curve_csv(std::ostream& out, const TradeoffCurve& curve) {
  out << "b,arl,arl_se,add,add_se,censored\n";
  for (const auto& p : curve.points) {
    out << format_real(p.b) << ',' << format_real(p.arl.mean) << ',' << format_real(p.arl.std_error) << ','
        << format_real(p.add.mean) << ',' << format_real(p.add.std_error) << ',' << p.arl.n_censored << '\n';
  }
}

inline void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
  out << "detector,b,arl,arl_se,add,add_se,censored\n";
  for (const auto& c : table.curves) {
    for (const auto& p : c.points) {
      out << c.detector << ',' << format_real(p.b) << ',' << format_real(p.arl.mean) << ','
          << format_real(p.arl.std_error) << ',' << format_real(p.add.mean) << ',' << format_real(p.add.std_error)
          << ',' << p.arl.n_censored << '\n';
    }
  }
}

inline config::Json comparison_json(const ComparisonTable& table) {
  config::Json curves = config::Json::array();
  for (std::size_t i = 0; i < table.curves.size(); ++i) {
    auto c = config::to_json(table.curves[i]);
    c["matched_add"] = {{"add", table.matched[i].add}, {"stderr", table.matched[i].std_error}};
    curves.push_back(std::move(c));
  }
  return {{"common_arl", table.common_arl}, {"curves", curves}};
}

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Writes through `emit` to the --out path, or to `fallback` when no path.
template <typename F>
void emit_to(const std::string& path, std::ostream& fallback, F emit) {
  if (path.empty()) {
    emit(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), Errc::io_error, "cannot write '" + path + "'");
  emit(f);
  require(static_cast<bool>(f), Errc::io_error, "write failed for '" + path + "'");
}

struct DetectorFlags {
  std::string detector = "wsglr";
  double b = 0.0;
  double b_n = 5.0;
  std::size_t m_b = 0;
  std::size_t m_b_prime = 0;
  CLI::Option* b_opt = nullptr;
  CLI::Option* b_n_opt = nullptr;
  CLI::Option* m_b_opt = nullptr;
  CLI::Option* m_b_prime_opt = nullptr;

  void attach(CLI::App& app, bool with_b = true) {
    app.add_option("--detector", detector,
                   "wsglr|sglr|glr|fma|two_stage|cusum, or a detector JSON file (needed for generalized)")
        ->capture_default_str();
    if (with_b) b_opt = app.add_option("--b", b, "threshold b");
    b_n_opt = app.add_option("--b-n", b_n, "two-stage nuisance threshold")->capture_default_str();
    m_b_opt = app.add_option("--m-b", m_b, "window size m_b (default: smallest power of two >= 2b/I)")
                  ->check(CLI::PositiveNumber);
    m_b_prime_opt = app.add_option("--m-b-prime", m_b_prime, "generalized minimal window m_b'")
                        ->check(CLI::PositiveNumber);
  }

  DetectorConfig resolve() const {
    DetectorConfig cfg;
    if (ends_with(detector, ".json")) {
      cfg = config::detector_from_json(config::load_json(detector));
    } else {
      cfg.kind = parse_detector_kind(detector);
    }
    if (b_opt && b_opt->count()) cfg.b = b;
    if (b_n_opt->count()) cfg.b_n = b_n;
    if (m_b_opt->count()) cfg.m_b = m_b;
    if (m_b_prime_opt->count()) cfg.m_b_prime = m_b_prime;
    return cfg;
  }
};

inline void check_out_path(const std::string& path) {
  if (path.empty()) return;
  const auto parent = std::filesystem::path(path).parent_path();
  require(parent.empty() || std::filesystem::is_directory(parent), Errc::io_error,
          "output directory does not exist: '" + parent.string() + "'");
}

inline std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

}  // namespace detail

// --------------------------------------------------------- subcommands

inline int check_assumptions(const std::string& scenario_path, const std::string& out_path, bool check,
                             std::ostream& out) {
  const auto scenario = config::scenario_from_json(config::load_json(scenario_path));
  const auto& q = scenario.quad;
  const auto rates = growth_rates(q);
  const auto moments = drift_moments(q);
  config::Json report = {{"growth", config::to_json(rates)}, {"drift", config::to_json(moments)}};

  out << "D(g||f)   = " << detail::num(rates.kl_g_f) << '\n';
  out << "D(g||fn)  = " << detail::num(rates.kl_g_fn) << '\n';
  out << "D(gn||f)  = " << detail::num(rates.kl_gn_f) << '\n';
  out << "D(gn||fn) = " << detail::num(rates.kl_gn_fn) << '\n';
  out << "I = " << detail::num(rates.I) << '\n';
  out << "rho_g = " << detail::num(moments.rho_g) << '\n';
  out << "rho_gn = " << detail::num(moments.rho_gn) << '\n';
  out << "separable = " << (rates.separable ? "yes" : "no") << '\n';

  const auto* f = q.f.as_gaussian();
  const auto* fn = q.fn.as_gaussian();
  const auto* g = q.g.as_gaussian();
  const auto* gn = q.gn.as_gaussian();
  if (f && fn && g && gn) {
    const FamilyQuad th{{f->mean(), f->variance()},
                        {fn->mean(), fn->variance()},
                        {g->mean(), g->variance()},
                        {gn->mean(), gn->variance()}};
    const auto c = check_exp_family_conditions(*gaussian_family(), th);
    out << "exp-family conditions: c1 " << (c.cond1 ? "true" : "false") << ", c2 " << (c.cond2 ? "true" : "false")
        << ", c3 " << (c.cond3 ? "true" : "false") << '\n';
    report["exp_family"] = {{"cond1", c.cond1}, {"cond2", c.cond2}, {"cond3", c.cond3}};
    if (check && c.separable_implied && !rates.separable) {
      out << "check failed: exp-family conditions imply separability but the divergences disagree\n";
      return check_failed;
    }
  }
  if (!out_path.empty()) detail::emit_to(out_path, out, [&](std::ostream& o) { o << report.dump(2) << '\n'; });
  if (check && !rates.separable) {
    out << "check failed: not separable\n";
    return check_failed;
  }
  return ok;
}

struct SimFlags {
  std::string scenario;
  std::string plan;
  std::uint64_t seed = 1;
  std::size_t trials = kDeskTrials;
  std::size_t horizon = kDeskHorizon;
  std::string out;
  bool check = false;
  bool full_scale = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* trials_opt = nullptr;
  CLI::Option* horizon_opt = nullptr;
};

/// Plans from --plan, or a single plan assembled from --scenario and the
/// detector flags. Command-line values override the plan file.
inline std::vector<TrialPlan> build_plans(const SimFlags& s, const detail::DetectorFlags& d, bool need_many) {
  std::vector<TrialPlan> plans;
  if (!s.plan.empty()) {
    plans = config::plans_from_json(config::load_json(s.plan));
  } else {
    require(!s.scenario.empty(), Errc::invalid_argument, "need --plan or --scenario");
    const auto sc = config::scenario_from_json(config::load_json(s.scenario));
    TrialPlan p(sc.quad);
    p.detector = d.resolve();
    if (sc.nu_n) {
      p.arl_nuisance = ChangePolicy::fixed(*sc.nu_n);
      p.add_nuisance = ChangePolicy::fixed(*sc.nu_n);
    }
    if (sc.nu_c) p.add_critical = ChangePolicy::fixed(*sc.nu_c);
    if (p.detector.b) p.thresholds = {*p.detector.b};
    plans.push_back(std::move(p));
  }
  for (auto& p : plans) {
    if (s.full_scale) {
      p.horizon = kFullHorizon;
      p.n_trials = kFullTrials;
    }
    if (s.seed_opt->count()) p.base_seed = s.seed;
    if (s.trials_opt->count()) p.n_trials = s.trials;
    if (s.horizon_opt->count()) p.horizon = s.horizon;
    if (d.b_opt && d.b_opt->count()) p.thresholds = {d.b};
    if (d.b_n_opt->count()) p.detector.b_n = d.b_n;
    if (d.m_b_opt->count()) p.detector.m_b = d.m_b;
    if (d.m_b_prime_opt->count()) p.detector.m_b_prime = d.m_b_prime;
    require(!need_many || p.thresholds.size() >= 2, Errc::invalid_argument, "a sweep needs at least 2 thresholds");
    require(!p.thresholds.empty(), Errc::invalid_argument, "no threshold given (--b or plan thresholds)");
  }
  return plans;
}

// ------------------------------------------------------------------- run

/// Parses and runs one command line (without the program name).
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quickest change detection under nuisance changes", "wsglr"};
  app.require_subcommand(1);

  struct Command {
    CLI::App* app = nullptr;
    detail::DetectorFlags det;
    SimFlags sim;
    std::string input;
    std::string trace_path;
    bool cumulative = false;
  };
  std::deque<Command> commands;
  auto add = [&](const char* name, const char* help) -> Command& {
    auto& c = commands.emplace_back();
    c.app = app.add_subcommand(name, help);
    return c;
  };
  auto scenario_option = [](Command& c, bool required) {
    auto* o = c.app->add_option("--scenario", c.sim.scenario, "scenario JSON")->check(CLI::ExistingFile);
    if (required) o->required();
    return o;
  };
  auto seed_option = [](Command& c) {
    c.sim.seed_opt = c.app->add_option("--seed", c.sim.seed, "random seed")->capture_default_str();
  };
  auto horizon_option = [](Command& c) {
    c.sim.horizon_opt =
        c.app->add_option("--horizon", c.sim.horizon, "number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  };

  auto& ca = add("check-assumptions", "growth rate I, drift moments and the separability condition");
  scenario_option(ca, true);
  ca.app->add_option("--out", ca.sim.out, "report JSON");
  ca.app->add_flag("--check", ca.sim.check, "exit 3 when the separability condition fails");

  auto& gen = add("generate", "draw one stream from a scenario");
  scenario_option(gen, true);
  seed_option(gen);
  horizon_option(gen);
  gen.app->add_flag("--cumulative", gen.cumulative, "write the running sum (raw form; detect de-trends it)");
  gen.app->add_option("--out", gen.sim.out, "samples CSV");

  auto& dt = add("detect", "run a detector over a CSV record");
  dt.app->add_option("--input", dt.input, "single-column CSV of raw samples")->required()->check(CLI::ExistingFile);
  scenario_option(dt, true);
  dt.det.attach(*dt.app);
  dt.app->add_option("--trace", dt.trace_path, "trace CSV (t, statistic)");
  dt.app->add_option("--out", dt.sim.out, "outcome JSON");

  auto& tr = add("trace", "statistic trace on a simulated stream");
  scenario_option(tr, true);
  tr.det.attach(*tr.app);
  seed_option(tr);
  horizon_option(tr);
  tr.app->add_option("--out", tr.sim.out, "trace CSV (t, statistic)");

  const std::pair<const char*, const char*> mc_names[] = {{"arl", "empirical ARL"},
                                                          {"add", "empirical ADD"},
                                                          {"tradeoff", "ARL-ADD trade-off sweep"},
                                                          {"compare", "trade-off curves of several detectors"}};
  for (const auto& [name, help] : mc_names) {
    auto& c = add(name, help);
    auto* plan_opt = c.app->add_option("--plan", c.sim.plan, "plan JSON")->check(CLI::ExistingFile);
    plan_opt->excludes(scenario_option(c, false));
    c.det.attach(*c.app);
    seed_option(c);
    c.sim.trials_opt = c.app->add_option("--trials", c.sim.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
    c.sim.horizon_opt = c.app->add_option("--horizon", c.sim.horizon, "censoring horizon")->check(CLI::PositiveNumber);
    c.app->add_flag("--full-scale", c.sim.full_scale, "horizon 2^16 and 4096 trials");
    c.app->add_option("--out", c.sim.out, "results (CSV when the path ends in .csv, JSON otherwise)");
    c.app->add_flag("--check", c.sim.check, "exit 3 when an invariant check fails");
  }

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return usage_error;
  }

  Command* active = nullptr;
  for (auto& c : commands) {
    if (c.app->parsed()) active = &c;
  }
  if (!active) return usage_error;
  auto& det = active->det;
  auto& sim = active->sim;
  const std::string& input = active->input;
  const std::string& trace_path = active->trace_path;
  const std::string command = active->app->get_name();

  try {
    detail::check_out_path(sim.out);
    detail::check_out_path(trace_path);

    if (command == "check-assumptions") return check_assumptions(sim.scenario, sim.out, sim.check, out);

    if (command == "generate") {
      const auto sc = config::scenario_from_json(config::load_json(sim.scenario));
      Rng rng(sim.seed);
      auto xs = generate(sc, sim.horizon, rng);
      if (active->cumulative) xs = cumulative_sum(xs);
      detail::emit_to(sim.out, out, [&](std::ostream& o) { write_csv_column(o, xs); });
      return ok;
    }

    if (command == "detect") {
      const auto sc = config::scenario_from_json(config::load_json(sim.scenario));
      const auto cfg = det.resolve();
      require(cfg.b.has_value(), Errc::invalid_argument, "detect needs --b");
      const auto res = detect_on_file(input, sc.quad, cfg, sc.nu_c, sc.nu_n);
      if (!trace_path.empty()) detail::emit_to(trace_path, out, [&](std::ostream& o) { write_trace_csv(o, res.trace); });
      if (!sim.out.empty()) {
        detail::emit_to(sim.out, out, [&](std::ostream& o) { o << config::to_json(res.outcome).dump(2) << '\n'; });
      }
      out << to_string(cfg.kind) << ": ";
      if (res.outcome.censored()) {
        out << "no alarm in " << res.trace.size() << " samples\n";
      } else {
        out << "alarm at t = " << *res.outcome.tau;
        if (res.outcome.detection_delay) out << " (delay " << *res.outcome.detection_delay << ")";
        if (res.outcome.false_alarm && res.outcome.nu_c) out << " (false alarm)";
        out << '\n';
      }
      return ok;
    }

    if (command == "trace") {
      const auto sc = config::scenario_from_json(config::load_json(sim.scenario));
      const auto cfg = det.resolve();
      require(cfg.b.has_value() || cfg.m_b.has_value() || !(cfg.kind == DetectorKind::wsglr ||
                                                            cfg.kind == DetectorKind::fma ||
                                                            cfg.kind == DetectorKind::generalized),
              Errc::invalid_argument, "trace needs --b or --m-b for this detector");
      Rng rng(sim.seed);
      const auto xs = generate(sc, sim.horizon, rng);
      auto d = make_detector(cfg, sc.quad, cfg.b.value_or(1.0));
      const auto trace = statistic_trace(*d, xs);
      detail::emit_to(sim.out, out, [&](std::ostream& o) { write_trace_csv(o, trace); });
      return ok;
    }

    const bool is_arl = command == "arl";
    const bool is_add = command == "add";
    const bool is_tradeoff = command == "tradeoff";
    auto plans = build_plans(sim, det, is_tradeoff || command == "compare");
    const bool as_csv = detail::ends_with(sim.out, ".csv");

    if (is_arl || is_add) {
      config::Json results = config::Json::array();
      for (const auto& p : plans) {
        for (double b : p.thresholds) {
          if (is_arl) {
            const auto e = estimate_arl(p, b);
            results.push_back({{"detector", to_string(p.detector.kind)}, {"b", b}, {"arl", config::to_json(e)}});
            out << to_string(p.detector.kind) << " b=" << detail::num(b) << ": ARL = " << detail::num(e.mean)
                << " +- " << detail::num(e.std_error) << " (" << e.n_censored << " censored of " << e.n_trials
                << (e.unreliable ? ", unreliable" : "") << ")\n";
          } else {
            const auto e = estimate_add(p, b);
            results.push_back({{"detector", to_string(p.detector.kind)}, {"b", b}, {"add", config::to_json(e)}});
            out << to_string(p.detector.kind) << " b=" << detail::num(b) << ": ADD = " << detail::num(e.mean)
                << " +- " << detail::num(e.std_error) << " (" << e.n_valid << " valid, " << e.n_false_alarm
                << " false alarms, " << e.n_censored << " censored)\n";
          }
        }
      }
      if (!sim.out.empty()) detail::emit_to(sim.out, out, [&](std::ostream& o) { o << results.dump(2) << '\n'; });
      return ok;
    }

    if (is_tradeoff) {
      require(plans.size() == 1, Errc::invalid_argument, "tradeoff takes a single detector; use compare");
      const auto curve = tradeoff_sweep(plans.front());
      detail::emit_to(sim.out, out, [&](std::ostream& o) {
        if (as_csv || sim.out.empty()) {
          write_curve_csv(o, curve);
        } else {
          o << config::to_json(curve).dump(2) << '\n';
        }
      });
      if (!sim.out.empty()) out << curve.detector << ": " << curve.points.size() << " points\n";
      if (sim.check) {
        const auto v = check_curve(curve);
        for (const auto& msg : v) err << "check failed: " << msg << '\n';
        if (!v.empty()) return check_failed;
      }
      return ok;
    }

    const auto table = compare_detectors(plans);
    detail::emit_to(sim.out, out, [&](std::ostream& o) {
      if (as_csv || sim.out.empty()) {
        write_comparison_csv(o, table);
      } else {
        o << comparison_json(table).dump(2) << '\n';
      }
    });
    out << "ADD at common ARL " << detail::num(table.common_arl) << ":\n";
    for (std::size_t i = 0; i < table.curves.size(); ++i) {
      out << "  " << table.curves[i].detector << ": " << detail::num(table.matched[i].add) << " +- "
          << detail::num(table.matched[i].std_error) << '\n';
    }
    if (sim.check) {
      bool failed = false;
      for (const auto& c : table.curves) {
        for (const auto& msg : check_curve(c)) {
          err << "check failed: " << msg << '\n';
          failed = true;
        }
      }
      if (failed) return check_failed;
    }
    return ok;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return runtime_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return runtime_error;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args), out, err);
}

}  // namespace wsglr::cli

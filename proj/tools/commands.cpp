#include "commands.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "idapbc/idapbc.hpp"

namespace idapbc::cli {

namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("idapbc");
    const char* env = std::getenv("IDAPBC_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
    l->set_pattern("[%l] %v");
    return l;
  }();
  return log;
}

/// Loads a configuration, mapping failures to a usage exit code.
std::optional<Config> load(const fs::path& path) {
  try {
    return load_config(path);
  } catch (const std::exception& e) {
    logger()->error("{}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

void write_trajectory(const Trajectory& tr, const fs::path& dir) {
  io::write_atomic(dir / (tr.id + ".csv"), io::trajectory_csv(tr));
  io::write_atomic(dir / (tr.id + ".svg"), io::timeseries_svg(tr));
}

ControllerSpec spec_for(const Scenario& sc) {
  return ControllerSpec::unchecked(sc.plant_at(0.0), sc.k, sc.references.front().x2_star);
}

}  // namespace

int cmd_simulate(const fs::path& config, const Options& opt) {
  auto cfg = load(config);
  if (!cfg) return exit_usage;
  Scenario sc = cfg->scenario;
  if (opt.seed) sc.seed = *opt.seed;
  try {
    const Trajectory tr = run(sc);
    write_trajectory(tr, opt.out_dir);
    const auto& last = tr.rows.back();
    logger()->info("{}: {} rows, x(T) = ({:.6g}, {:.6g}), x2_ref = {:.6g}", tr.id, tr.rows.size(), last.x1, last.x2,
                   last.x2_ref);
    if (tr.tc) logger()->info("{}: excitation monitor fired at t = {:.6g}", tr.id, *tr.tc);
  } catch (const config_error& e) {
    logger()->error("{}: {}", sc.id, e.what());
    return exit_usage;
  } catch (const std::exception& e) {
    logger()->error("{}: {}", sc.id, e.what());
    return exit_model;
  }
  return exit_ok;
}

int cmd_verify(const fs::path& config, const Options& opt) {
  auto cfg = load(config);
  if (!cfg) return exit_usage;
  const Scenario& sc = cfg->scenario;
  try {
    const ControllerSpec spec = spec_for(sc);
    const VerifySettings vs = cfg->verify.value_or(VerifySettings{});
    const VerificationRegion region = vs.region.value_or(default_region(spec.equilibrium()));
    const VerificationReport rep = verify_all(spec, region, vs.options);
    io::write_atomic(opt.out_dir / ("verify_" + sc.id + ".json"), to_json(rep).dump(2) + "\n");
    for (std::size_t i = 0; i < condition_count; ++i) {
      const auto& p = rep.pass[i];
      logger()->info("{} {}: {}{}", sc.id, condition_name(i), p ? (*p ? "pass" : "FAIL") : "not checked",
                     rep.errors[i].empty() ? "" : " (" + rep.errors[i] + ")");
    }
    return rep.all_pass() ? exit_ok : exit_check_failed;
  } catch (const std::exception& e) {
    logger()->error("{}: {}", sc.id, e.what());
    return exit_model;
  }
}

int cmd_roa(const fs::path& config, const Options& opt) {
  auto cfg = load(config);
  if (!cfg) return exit_usage;
  const Scenario& sc = cfg->scenario;
  if (!cfg->roa) {
    logger()->error("{}: configuration has no roa section", sc.id);
    return exit_usage;
  }
  try {
    const ControllerSpec spec = spec_for(sc);
    const LyapunovFn fn(spec);
    const ClosedLoopField field(spec);
    const RoaSettings& rs = *cfg->roa;
    const VerificationRegion region = rs.region.value_or(default_region(spec.equilibrium()));
    const RoaResult res = evaluate_roa(fn, field, region, rs.levels, rs.options);

    std::ostringstream levels_csv;
    levels_csv << "level,curve,x1,x2\n";
    std::ostringstream probes_csv;
    probes_csv << "level,probe,x1,x2,P,converged\n";
    std::vector<io::PhaseCurve> curves;
    std::vector<std::vector<Point2>> paths;
    for (const auto& cand : res.candidates) {
      for (std::size_t c = 0; c < cand.curves.size(); ++c) {
        for (const auto& p : cand.curves[c])
          levels_csv << io::fmt(cand.level) << ',' << c << ',' << io::fmt(p.x()) << ',' << io::fmt(p.y()) << '\n';
        curves.push_back({cand.curves[c], "P = " + io::fmt(cand.level)});
      }
      for (std::size_t k = 0; k < cand.probes.size(); ++k) {
        const auto& run = cand.probes[k];
        for (std::size_t s = 0; s < run.path.size(); ++s)
          probes_csv << io::fmt(cand.level) << ',' << k << ',' << io::fmt(run.path[s](0)) << ','
                     << io::fmt(run.path[s](1)) << ',' << io::fmt(run.energy[s]) << ',' << (run.converged ? 1 : 0)
                     << '\n';
        paths.emplace_back(run.path.begin(), run.path.end());
      }
      logger()->info("{}: level {:.6g}: {}{}", sc.id, cand.level, cand.passed() ? "pass" : "no",
                     cand.reason.empty() ? "" : " (" + cand.reason + ")");
    }
    const std::string title = std::string(to_string(sc.kind)) + " k = " + io::fmt(spec.gain()) + ": level sets of P";
    io::write_atomic(opt.out_dir / ("roa_" + sc.id + "_levels.csv"), levels_csv.str());
    io::write_atomic(opt.out_dir / ("roa_" + sc.id + "_probes.csv"), probes_csv.str());
    io::write_atomic(opt.out_dir / ("roa_" + sc.id + ".svg"),
                     io::phase_portrait_svg(title, region, curves, paths, spec.equilibrium().state()));
    if (!res.best) {
      logger()->warn("{}: no passing level", sc.id);
      return exit_check_failed;
    }
    logger()->info("{}: largest passing level {:.6g}", sc.id, res.best->P_bar);
    return exit_ok;
  } catch (const std::exception& e) {
    logger()->error("{}: {}", sc.id, e.what());
    return exit_model;
  }
}

int cmd_experiments(const std::string& kind, const Options& opt) {
  std::vector<Scenario> scenarios;
  try {
    scenarios = experiment_scenarios(kind);
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return exit_usage;
  }
  if (opt.seed)
    for (auto& sc : scenarios) sc.seed = *opt.seed;

  std::atomic<std::size_t> next{0};
  std::atomic<int> status{exit_ok};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      try {
        const Trajectory tr = run(scenarios[i]);
        write_trajectory(tr, opt.out_dir);
        const auto errs = segment_end_errors(tr);
        std::lock_guard lock(log_mutex);
        logger()->info("{}: worst segment-end |x2 - x2_ref| = {:.3g}", tr.id, *std::max_element(errs.begin(), errs.end()));
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mutex);
        logger()->error("{}: {}", scenarios[i].id, e.what());
        status = exit_model;
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(scenarios.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return status;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Output-feedback IDA-PBC for Buck, Boost and Buck-Boost converters"};
  app.require_subcommand(1);

  Options opt;
  std::string out_flag;
  std::string positional_out;
  std::string target;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, const char* what, const char* desc) {
    sub->add_option(what, target, desc)->required();
    sub->add_option("out_dir", positional_out, "Output directory (same as --out)");
    sub->add_option("--out,-o", out_flag, "Output directory");
    sub->add_option("--seed", seed, "Seed for the measurement-noise option");
    sub->add_option("--threads", opt.threads, "Worker threads (experiments)")->check(CLI::PositiveNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write <id>.csv and <id>.svg");
  add_common(simulate, "config", "Scenario configuration (JSON)");
  auto* verify = app.add_subcommand("verify", "Check C1-C6 and write verify_<id>.json");
  add_common(verify, "config", "Scenario configuration (JSON)");
  auto* roa = app.add_subcommand("roa", "Level-set region-of-attraction estimate and phase portrait");
  add_common(roa, "config", "Scenario configuration with a roa section (JSON)");
  auto* experiments = app.add_subcommand("experiments", "Reference/load-step experiment re-creations");
  add_common(experiments, "kind", "buck_refsteps, buck_loadsteps, boost_refsteps, boost_loadsteps, bb_refsteps, "
                                  "bb_loadsteps or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }
  if (!out_flag.empty() && !positional_out.empty() && out_flag != positional_out) {
    logger()->error("conflicting output directories '{}' and '{}'", out_flag, positional_out);
    return exit_usage;
  }
  if (!out_flag.empty()) opt.out_dir = out_flag;
  else if (!positional_out.empty()) opt.out_dir = positional_out;
  for (auto* sub : {simulate, verify, roa, experiments})
    if (sub->count("--seed")) opt.seed = seed;

  try {
    if (simulate->parsed()) return cmd_simulate(target, opt);
    if (verify->parsed()) return cmd_verify(target, opt);
    if (roa->parsed()) return cmd_roa(target, opt);
    return cmd_experiments(target, opt);
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return exit_model;
  }
}

}  // namespace idapbc::cli

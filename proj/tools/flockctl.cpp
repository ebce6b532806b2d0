// flockctl: run scenarios, ablations and response-model fits; recompute metrics from logs.
//
// Exit codes: 0 success, 2 invalid configuration or log, 3 numerical fault
// during simulation, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flock/errors.hpp"
#include "flock/log.hpp"
#include "flock/metrics.hpp"
#include "flock/scenario.hpp"
#include "flock/sim.hpp"
#include "flock/velocity_estimation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kOther = 1, kInvalid = 2, kFault = 3 };

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << std::setprecision(17);
  return out;
}

// One delimited file per figure.
void export_plot_data(const flock::RunLog& log, const flock::MetricsSummary& m, const fs::path& dir) {
  auto traj = open_out(dir / "trajectories.csv");
  traj << "t,id,x,y,vx,vy,fused_x,fused_y\n";
  auto lam = open_out(dir / "lambda.csv");
  lam << "t,id,lambda,lambda_e,features,speed\n";
  auto vel = open_out(dir / "velocity_estimates.csv");
  vel << "t,observer,observed,true_vx,true_vy,est_vx,est_vy\n";
  auto cvr = open_out(dir / "cvr.csv");
  cvr << "t,cvr\n";
  for (std::size_t k = 0; k < log.ticks.size(); ++k) {
    const auto& r = log.ticks[k];
    std::map<flock::AgentId, flock::Vec2> truth_v;
    for (const auto& a : r.agents) truth_v[a.id] = a.velocity;
    for (const auto& a : r.agents) {
      const auto& o = log.header.origins[static_cast<std::size_t>(a.id)];
      traj << r.t << ',' << a.id << ',' << a.position.x() << ',' << a.position.y() << ',' << a.velocity.x() << ','
           << a.velocity.y() << ',' << a.fused_position.x() + o.x() << ',' << a.fused_position.y() + o.y() << '\n';
      lam << r.t << ',' << a.id << ',' << a.lambda << ',' << a.lambda_e << ',' << a.feature_count << ','
          << a.velocity.norm() << '\n';
      for (const auto& e : a.velocity_estimates) {
        const auto& tv = truth_v[e.id];
        vel << r.t << ',' << a.id << ',' << e.id << ',' << tv.x() << ',' << tv.y() << ',' << e.v_e.x() << ','
            << e.v_e.y() << '\n';
      }
    }
    if (k < m.cvr.size()) cvr << r.t << ',' << m.cvr[k] << '\n';
  }
}

flock::ScenarioConfig load(const std::string& path, std::optional<std::uint64_t> seed, bool no_comm,
                           std::optional<std::size_t> threads) {
  auto cfg = flock::load_scenario(path);
  if (seed) cfg.seed = *seed;
  if (no_comm) cfg.sensors.comm.enabled = false;
  if (threads) cfg.threads = *threads;
  cfg.validate();
  return cfg;
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, bool no_comm, const std::string& out_dir,
            std::optional<std::size_t> threads) {
  const auto cfg = load(config, seed, no_comm, threads);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::ofstream log_out(dir / "run.jsonl");
  if (!log_out) throw std::runtime_error("cannot write log in '" + out_dir + "'");
  const auto art = flock::run_scenario(cfg, &log_out);
  export_plot_data(art.log, art.metrics, dir);
  std::ofstream(dir / "summary.json") << art.log.summary.dump(2) << '\n';
  std::cout << art.log.summary.dump(2) << '\n';
  return kOk;
}

int cmd_ablate(const std::string& config, std::optional<std::uint64_t> seed, int runs,
               std::optional<std::size_t> threads) {
  auto cfg = load(config, seed, false, threads);
  json pairs = json::array();
  int wider = 0;
  for (int i = 0; i < runs; ++i) {
    auto c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const auto r = flock::run_ablation(c);
    auto j = flock::ablation_to_json(r);
    j["seed"] = c.seed;
    if (r.comm.neighbor_distance && r.no_comm.neighbor_distance &&
        r.no_comm.neighbor_distance->stddev > r.comm.neighbor_distance->stddev) {
      ++wider;
    }
    pairs.push_back(j);
  }
  std::cout << json{{"pairs", pairs}, {"no_comm_sigma_larger", wider}, {"runs", runs}}.dump(2) << '\n';
  return kOk;
}

int cmd_fit(const std::string& config, const std::string& write_path) {
  auto cfg = flock::load_scenario(config);
  const auto samples = flock::response_training_samples(cfg);
  const auto model = flock::fit_response_model(samples);
  if (!model.plausible()) {
    std::cerr << "warning: fitted model outside 0 < q1 < 1, q2 > 0\n";
  }
  std::cout << json{{"q1", model.q1}, {"q2", model.q2}, {"residual_norm", model.residual_norm},
                    {"samples", samples.size()}}
                   .dump(2)
            << '\n';
  if (!write_path.empty()) {
    cfg.response = model;
    std::ofstream(write_path) << flock::scenario_to_json(cfg).dump(2) << '\n';
  }
  return kOk;
}

int cmd_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw flock::ConfigError("cannot open log '" + path + "'");
  const auto log = flock::read_log(in);
  auto j = flock::metrics_to_json(flock::compute_metrics(log));
  j["type"] = "summary";
  if (!log.summary.is_null()) j["matches_logged_summary"] = (j == log.summary);
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_validate(const std::string& path) {
  const auto cfg = flock::load_scenario(path);
  const auto v = cfg.violations();
  if (v.empty()) {
    std::cout << path << ": ok (" << cfg.n_agents() << " agents, " << cfg.ticks() << " ticks)\n";
    return kOk;
  }
  std::cerr << path << ": " << v.size() << " violation(s)\n";
  for (const auto& s : v) std::cerr << "  - " << s << '\n';
  return kInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized fast-flocking simulator"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool no_comm = false;
  std::string out_dir = "out";
  int runs = 8;
  std::string write_path;
  std::string log_path;

  auto* run = app.add_subcommand("run", "Run a scenario and write its log and plot data");
  run->add_option("config", config, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the master seed");
  run->add_flag("--no-comm", no_comm, "Disable velocity sharing");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--threads", threads, "Worker threads per tick");

  auto* ablate = app.add_subcommand("ablate", "Paired runs with and without communication");
  ablate->add_option("config", config, "Scenario file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seed", seed, "First seed");
  ablate->add_option("--runs", runs, "Number of paired seeds")->check(CLI::PositiveNumber);
  ablate->add_option("--threads", threads, "Worker threads per tick");

  auto* fit = app.add_subcommand("fit-model", "Fit the response model from generated training profiles");
  fit->add_option("config", config, "Scenario file")->required()->check(CLI::ExistingFile);
  fit->add_option("--write", write_path, "Write the scenario with the fitted model to this path");

  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from a saved log");
  metrics->add_option("log", log_path, "Run log")->required()->check(CLI::ExistingFile);

  auto* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("config", config, "Scenario file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, seed, no_comm, out_dir, threads);
    if (*ablate) return cmd_ablate(config, seed, runs, threads);
    if (*fit) return cmd_fit(config, write_path);
    if (*metrics) return cmd_metrics(log_path);
    if (*validate) return cmd_validate(config);
  } catch (const flock::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const flock::SimulationFault& e) {
    std::cerr << "simulation fault: " << e.what() << '\n';
    return kFault;
  } catch (const flock::NumericalFault& e) {
    std::cerr << "numerical fault: " << e.what() << '\n';
    return kFault;
  } catch (const flock::FitFailure& e) {
    std::cerr << "fit failed: " << e.what() << '\n';
    return kFault;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}

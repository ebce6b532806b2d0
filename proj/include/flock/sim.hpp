#pragma once

// Deterministic synchronous simulator. Each tick runs two per-agent phases on
// the same ground-truth snapshot (sensing and estimation, then velocity
// ingest and control), then integrates every plant. Agents within a phase
// touch only their own state, so the phases may run on several threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flock/errors.hpp"
#include "flock/flocking_controller.hpp"
#include "flock/log.hpp"
#include "flock/metrics.hpp"
#include "flock/mrse.hpp"
#include "flock/neighbor_tracker.hpp"
#include "flock/scenario.hpp"
#include "flock/sensors.hpp"
#include "flock/velocity_estimation.hpp"

namespace flock {

class SimulationFault : public std::runtime_error {
 public:
  SimulationFault(AgentId agent, std::string stage, const std::string& what)
      : std::runtime_error("agent " + std::to_string(agent) + ", stage " + stage + ": " + what),
        agent_(agent),
        stage_(std::move(stage)) {}

  AgentId agent() const { return agent_; }
  const std::string& stage() const { return stage_; }

 private:
  AgentId agent_;
  std::string stage_;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions are
/// rethrown for the lowest failing index, independent of scheduling.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Runs one pipeline stage, attributing any failure to the agent and stage.
template <typename F>
decltype(auto) run_stage(AgentId agent, const char* name, F&& f) {
  try {
    return f();
  } catch (const SimulationFault&) {
    throw;
  } catch (const std::exception& e) {
    throw SimulationFault(agent, name, e.what());
  }
}

/// First-order velocity lag toward the command, solved exactly over the step,
/// then limited by the acceleration and speed caps. Position uses the
/// trapezoid of the old and new velocities.
inline void integrate_plant(AgentTruth& s, const Vec2& command, const PlantConfig& plant, double dt) {
  const Vec2 v0 = s.velocity;
  Vec2 v1 = command + (v0 - command) * std::exp(-dt / plant.tau);
  Vec2 dv = v1 - v0;
  const double max_dv = plant.a_max * dt;
  if (dv.norm() > max_dv) dv *= max_dv / dv.norm();
  v1 = v0 + dv;
  if (v1.norm() > plant.v_max) v1 *= plant.v_max / v1.norm();
  s.acceleration = (v1 - v0) / dt;
  s.position += 0.5 * (v0 + v1) * dt;
  s.velocity = v1;
}

inline std::vector<std::pair<AgentId, AgentId>> detect_collisions(std::span<const AgentTruth> world,
                                                                   double safety_radius) {
  if (!(safety_radius > 0.0)) throw PreconditionError("detect_collisions: safety radius must be positive");
  std::vector<std::pair<AgentId, AgentId>> out;
  for (std::size_t i = 0; i < world.size(); ++i) {
    for (std::size_t j = i + 1; j < world.size(); ++j) {
      if ((world[i].position - world[j].position).norm() < safety_radius) {
        out.emplace_back(std::min(world[i].id, world[j].id), std::max(world[i].id, world[j].id));
      }
    }
  }
  return out;
}

/// Scripted target: static point, constant-speed waypoint path, or an
/// intruder flying piecewise constant speed and turn-rate legs.
class TargetTrajectory {
 public:
  TargetTrajectory() = default;
  explicit TargetTrajectory(TargetSpec spec) : spec_(std::move(spec)), position_(spec_.position), heading_(spec_.heading) {}

  std::optional<Vec2> position() const {
    if (spec_.kind == TargetKind::kNone) return std::nullopt;
    return position_;
  }

  void advance(double dt) {
    switch (spec_.kind) {
      case TargetKind::kNone:
      case TargetKind::kStatic:
        return;
      case TargetKind::kWaypoints: {
        double budget = spec_.speed * dt;
        while (budget > 0.0 && waypoint_ < spec_.waypoints.size()) {
          const Vec2 d = spec_.waypoints[waypoint_] - position_;
          const double len = d.norm();
          if (len <= budget) {
            position_ = spec_.waypoints[waypoint_++];
            budget -= len;
          } else {
            position_ += d * (budget / len);
            budget = 0.0;
          }
        }
        return;
      }
      case TargetKind::kIntruder: {
        double remaining = dt;
        while (remaining > 0.0 && segment_ < spec_.segments.size()) {
          const auto& seg = spec_.segments[segment_];
          const double step = std::min(remaining, seg.duration - segment_time_);
          if (step > 0.0) {
            if (std::abs(seg.turn_rate) > 1e-12) {
              const double h1 = heading_ + seg.turn_rate * step;
              const double r = seg.speed / seg.turn_rate;
              position_ += r * Vec2(std::sin(h1) - std::sin(heading_), std::cos(heading_) - std::cos(h1));
              heading_ = h1;
            } else {
              position_ += seg.speed * step * unit(heading_);
            }
          }
          segment_time_ += std::max(step, 0.0);
          remaining -= std::max(step, 0.0);
          if (segment_time_ >= seg.duration) {
            ++segment_;
            segment_time_ = 0.0;
          }
        }
        return;
      }
    }
  }

 private:
  TargetSpec spec_;
  Vec2 position_ = Vec2::Zero();
  double heading_ = 0.0;
  std::size_t waypoint_ = 0;
  std::size_t segment_ = 0;
  double segment_time_ = 0.0;
};

/// One UAV: plant truth plus the complete onboard pipeline.
class Agent {
 public:
  Agent(const ScenarioConfig& cfg, AgentId id, const Vec2& origin)
      : cfg_(&cfg),
        id_(id),
        origin_(origin),
        rng_relative_(cfg.seed, id, SensorStream::kRelative),
        rng_imu_(cfg.seed, id, SensorStream::kImu),
        rng_comm_(cfg.seed, id, SensorStream::kComm),
        rng_target_(cfg.seed, id, SensorStream::kTarget),
        bank_(cfg.tracker),
        mrse_(cfg.mrse, cfg.mrse.initial_estimate()),
        baseline_(cfg.mrse, cfg.mrse.initial_estimate()),
        vio_(cfg.sensors.vio, origin, Rng(cfg.seed, id, SensorStream::kVio)),
        controller_(cfg.gains, cfg.initial_heading),
        commless_(cfg.response, cfg.gains, cfg.view()) {
    truth_.id = id;
    truth_.position = origin;
    truth_.heading = cfg.initial_heading;
    if (!cfg.sensors.vio.enabled) fusion_.lambda = 0.0;
  }

  AgentId id() const { return id_; }
  const AgentTruth& truth() const { return truth_; }
  const Vec2& origin() const { return origin_; }

  /// Sensing, track prediction, focal estimation, fusion and position ingest.
  /// Returns this tick's outgoing velocity broadcasts.
  std::vector<VelocityMessage> sense_and_estimate(std::span<const AgentTruth> world, std::size_t self,
                                                  std::span<const AgentId> everyone, long tick, double t) {
    const double dt = cfg_->dt;
    const auto observations = run_stage(id_, "sense", [&] { return observe(world, self, cfg_->sensors, rng_relative_, t); });
    if (tick > 0) run_stage(id_, "tracker-predict", [&] { bank_.step(dt); });

    const double heading = truth_.heading;
    const auto predicted = bank_.snapshot();
    fix_ = mrse_position_fix(predicted, observations, heading);
    const Vec2 accel = truth_.acceleration + Vec2(rng_imu_.normal(cfg_->sensors.sigma_imu),
                                                   rng_imu_.normal(cfg_->sensors.sigma_imu));
    if (tick > 0) {
      run_stage(id_, "mrse", [&] { mrse_.step(fix_, accel, command_.v_d, dt, t); });
      run_stage(id_, "baseline", [&] { baseline_.step(fix_, accel, command_.v_d, dt, t); });
    }

    run_stage(id_, "fusion", [&] {
      vio_sample_ = vio_.sample(truth_, dt);
      fusion_.lambda_e = lambda_estimate(vio_sample_);
      const double lambda =
          tick > 0 ? lambda_update(fusion_.lambda, fusion_.lambda_e, cfg_->mrse.q_lambda, dt) : fusion_.lambda;
      fusion_ = fuse(fusion_, vio_sample_, mrse_.state(), lambda);
      if (!all_finite(fusion_.position) || !all_finite(fusion_.velocity)) throw NumericalFault("fusion", "non-finite output");
    });

    run_stage(id_, "tracker-ingest", [&] { bank_.ingest_positions(observations, Pose2{fusion_.position, heading}); });
    return channel_.send(id_, everyone, fusion_.velocity, t, tick, rng_comm_);
  }

  /// Velocity ingest (communicated or replayed), control, replay for the next tick.
  void control(std::span<const VelocityMessage> inbox, const std::optional<Vec2>& target, double t) {
    const double dt = cfg_->dt;
    run_stage(id_, "velocity-ingest", [&] {
      if (cfg_->comm()) {
        for (const auto& m : inbox) bank_.ingest_velocity(m.sender, m.velocity, m.stamp);
      } else {
        for (const auto& e : commless_.last()) {
          bank_.ingest_velocity(e.id, e.v_e, t, cfg_->sigma_estimated_velocity);
        }
      }
    });

    std::optional<Vec2> r_target;
    if (target) {
      r_target = *target - truth_.position +
                 Vec2(rng_target_.normal(cfg_->sensors.sigma_target), rng_target_.normal(cfg_->sensors.sigma_target));
    }
    tracks_ = bank_.snapshot();
    run_stage(id_, "controller", [&] {
      const auto members = to_members(tracks_, fusion_.position, fusion_.velocity);
      command_ = controller_.update(members, r_target, dt);
      if (!all_finite(command_.v_d)) throw NumericalFault("controller", "non-finite command");
    });

    run_stage(id_, "velocity-estimation", [&] {
      std::vector<AgentId> ids;
      for (const auto& m : controller_.neighborhood()) ids.push_back(m.id);
      VelocityEstimationInput in;
      in.surroundings = tracks_;
      in.neighborhood = ids;
      in.focal_id = id_;
      in.focal_position = fusion_.position;
      in.r_target = r_target;
      in.focal_heading = controller_.heading();
      in.dt = dt;
      commless_.update(in);
    });

    if (cfg_->heading_mode == HeadingMode::kVelocity) {
      if (command_.v_d.norm() > 0.5) truth_.heading = bearing_of(command_.v_d);
    } else if (r_target && r_target->norm() > 1e-9) {
      truth_.heading = bearing_of(*r_target);
    }
  }

  void integrate(double dt) {
    run_stage(id_, "plant", [&] {
      integrate_plant(truth_, command_.v_d, cfg_->plant, dt);
      const double tol = 1e-9;
      if (truth_.velocity.norm() > cfg_->plant.v_max + tol || truth_.acceleration.norm() > cfg_->plant.a_max + tol) {
        throw NumericalFault("plant", "speed or acceleration cap violated");
      }
      if (!all_finite(truth_.position) || !all_finite(truth_.velocity)) throw NumericalFault("plant", "non-finite state");
    });
  }

  AgentSample sample() const {
    AgentSample s;
    s.id = id_;
    s.position = truth_.position;
    s.velocity = truth_.velocity;
    s.heading = truth_.heading;
    s.fused_position = fusion_.position;
    s.fused_velocity = fusion_.velocity;
    s.mrse_position = mrse_.state().head<2>();
    s.baseline_position = baseline_.position();
    s.has_fix = fix_.has_value();
    s.lambda = fusion_.lambda;
    s.lambda_e = fusion_.lambda_e;
    s.feature_count = vio_sample_.feature_count;
    s.v_d = command_.v_d;
    s.position_term = command_.position_term;
    s.velocity_term = command_.velocity_term;
    s.feedforward = command_.feedforward;
    s.group_heading = command_.heading;
    for (const auto& m : controller_.neighborhood()) s.neighbors.push_back(m.id);
    if (cfg_->log_tracks) {
      for (const auto& t : tracks_) s.tracks.push_back({t.id, t.position, t.velocity});
    }
    for (const auto& e : commless_.last()) s.velocity_estimates.push_back({e.id, e.v_d, e.v_e});
    return s;
  }

  const TrackBank& tracks() const { return bank_; }
  const FusionState& fusion() const { return fusion_; }
  const FlockingCommand& command() const { return command_; }

  /// Sets the shared channel configuration (the channel itself lives in the simulation).
  void set_channel(const CommChannel& ch) { channel_ = ch; }

 private:
  const ScenarioConfig* cfg_;
  AgentId id_;
  Vec2 origin_;
  AgentTruth truth_;
  Rng rng_relative_;
  Rng rng_imu_;
  Rng rng_comm_;
  Rng rng_target_;
  TrackBank bank_;
  FocalEstimator mrse_;
  VelocityIntegrationEstimator baseline_;
  VioSimulator vio_;
  VioSample vio_sample_;
  FusionState fusion_;
  std::optional<Vec2> fix_;
  FlockingController controller_;
  FlockingCommand command_;
  CommlessVelocityEstimator commless_;
  CommChannel channel_;
  std::vector<TrackView> tracks_;
};

class Simulation {
 public:
  explicit Simulation(ScenarioConfig config) : config_(std::move(config)) {
    config_.validate();
    target_ = TargetTrajectory(config_.target);
    channel_ = CommChannel(config_.sensors.comm);
    agents_.reserve(config_.n_agents());
    for (std::size_t i = 0; i < config_.n_agents(); ++i) {
      agents_.emplace_back(config_, static_cast<AgentId>(i), config_.initial_positions[i]);
      agents_.back().set_channel(channel_);
      ids_.push_back(static_cast<AgentId>(i));
    }
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const ScenarioConfig& config() const { return config_; }
  long tick_index() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * config_.dt; }
  const std::vector<Agent>& agents() const { return agents_; }

  LogHeader header() const {
    LogHeader h;
    h.config = config_;
    for (const auto& a : agents_) h.origins.push_back(a.origin());
    return h;
  }

  std::vector<AgentTruth> truths() const {
    std::vector<AgentTruth> out;
    out.reserve(agents_.size());
    for (const auto& a : agents_) out.push_back(a.truth());
    return out;
  }

  /// Advances one tick and returns the record of the state the tick acted on.
  TickRecord step() {
    const double t = time();
    const auto world = truths();
    const auto target = target_.position();
    const std::size_t n = agents_.size();

    std::vector<std::vector<VelocityMessage>> outgoing(n);
    parallel_for(n, config_.threads,
                 [&](std::size_t i) { outgoing[i] = agents_[i].sense_and_estimate(world, i, ids_, tick_, t); });
    for (const auto& out : outgoing) channel_.post(out);
    std::vector<std::vector<VelocityMessage>> inbox(n);
    for (std::size_t i = 0; i < n; ++i) inbox[i] = channel_.deliver(agents_[i].id(), tick_);

    parallel_for(n, config_.threads, [&](std::size_t i) { agents_[i].control(inbox[i], target, t); });

    TickRecord record;
    record.tick = tick_;
    record.t = t;
    record.target = target;
    record.agents.reserve(n);
    for (const auto& a : agents_) record.agents.push_back(a.sample());

    parallel_for(n, config_.threads, [&](std::size_t i) { agents_[i].integrate(config_.dt); });
    target_.advance(config_.dt);
    ++tick_;
    return record;
  }

 private:
  ScenarioConfig config_;
  std::vector<Agent> agents_;
  std::vector<AgentId> ids_;
  TargetTrajectory target_;
  CommChannel channel_;
  long tick_ = 0;
};

struct RunArtifacts {
  RunLog log;
  MetricsSummary metrics;
};

/// Runs the whole scenario; when `out` is given the log is streamed to it.
inline RunArtifacts run_scenario(const ScenarioConfig& config, std::ostream* out = nullptr) {
  Simulation sim(config);
  RunArtifacts art;
  art.log.header = sim.header();
  if (out) write_line(*out, header_to_json(art.log.header));
  const long ticks = config.ticks();
  art.log.ticks.reserve(static_cast<std::size_t>(ticks));
  for (long k = 0; k < ticks; ++k) {
    art.log.ticks.push_back(sim.step());
    if (out) write_line(*out, tick_to_json(art.log.ticks.back()));
  }
  art.metrics = compute_metrics(art.log);
  art.log.summary = metrics_to_json(art.metrics);
  art.log.summary["type"] = "summary";
  if (out) write_line(*out, art.log.summary);
  return art;
}

/// Serialized log of a run, for byte-level comparisons.
inline std::string run_log_text(const ScenarioConfig& config) {
  std::ostringstream os;
  run_scenario(config, &os);
  return os.str();
}

/// Training data for the response model: one plant driven by step, ramp and
/// sinusoid velocity profiles, its velocity read through the VIO noise.
inline std::vector<ResponseSample> response_training_samples(const ScenarioConfig& config) {
  const double dt = config.dt;
  const double v = config.gains.v_D;
  std::vector<std::function<Vec2(double)>> profiles = {
      [v](double t) { return t < 1.0 ? Vec2::Zero() : (t < 8.0 ? Vec2(v, 0.0) : Vec2::Zero()); },
      [v](double t) { return Vec2(std::min(v, 0.5 * t), 0.25 * std::min(v, 0.3 * t)); },
      [v](double t) { return Vec2(0.6 * v * std::sin(0.8 * t), 0.4 * v * std::cos(0.5 * t)); },
  };
  Rng rng(config.seed, 0, SensorStream::kVio);
  const double sigma = config.sensors.vio.sigma_velocity;
  std::vector<ResponseSample> out;
  for (const auto& profile : profiles) {
    AgentTruth s;
    Vec2 measured = Vec2::Zero();
    for (double t = 0.0; t < 15.0; t += dt) {
      const Vec2 command = profile(t);
      integrate_plant(s, command, config.plant, dt);
      const Vec2 next = s.velocity + Vec2(rng.normal(sigma), rng.normal(sigma));
      out.push_back({measured, command, next});
      measured = next;
    }
  }
  return out;
}

struct AblationResult {
  MetricsSummary comm;
  MetricsSummary no_comm;
};

/// Same scenario and seed, once with the velocity-sharing channel and once without.
inline AblationResult run_ablation(const ScenarioConfig& config) {
  ScenarioConfig with = config;
  with.sensors.comm.enabled = true;
  ScenarioConfig without = config;
  without.sensors.comm.enabled = false;
  return {run_scenario(with).metrics, run_scenario(without).metrics};
}

inline nlohmann::json ablation_to_json(const AblationResult& r) {
  nlohmann::json j = {{"comm", metrics_to_json(r.comm)}, {"no_comm", metrics_to_json(r.no_comm)}};
  nlohmann::json delta;
  delta["cvr_mean"] = r.no_comm.cvr_mean - r.comm.cvr_mean;
  if (r.comm.neighbor_distance && r.no_comm.neighbor_distance) {
    delta["neighbor_distance_mean"] = r.no_comm.neighbor_distance->mean - r.comm.neighbor_distance->mean;
    delta["neighbor_distance_stddev"] = r.no_comm.neighbor_distance->stddev - r.comm.neighbor_distance->stddev;
  }
  j["delta"] = delta;
  return j;
}

}  // namespace flock

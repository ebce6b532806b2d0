#pragma once

// Scenario description and its JSON representation.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flock/errors.hpp"
#include "flock/flocking_controller.hpp"
#include "flock/geometry.hpp"
#include "flock/mrse.hpp"
#include "flock/neighbor_tracker.hpp"
#include "flock/sensors.hpp"
#include "flock/velocity_estimation.hpp"

namespace flock {

struct PlantConfig {
  double tau = 0.5;     // [s] first-order velocity lag
  double v_max = 8.0;   // [m/s]
  double a_max = 4.0;   // [m/s^2]
};

enum class TargetKind { kNone, kStatic, kWaypoints, kIntruder };

/// One leg of a scripted intruder: constant speed and turn rate.
struct IntruderSegment {
  double duration = 0.0;   // [s]
  double speed = 0.0;      // [m/s]
  double turn_rate = 0.0;  // [rad/s]
};

struct TargetSpec {
  TargetKind kind = TargetKind::kNone;
  Vec2 position = Vec2::Zero();        // static position, or start of a path
  std::vector<Vec2> waypoints;         // visited in order after `position`
  double speed = 0.0;                  // waypoint traversal speed
  double heading = 0.0;                // initial intruder heading
  std::vector<IntruderSegment> segments;
};

enum class HeadingMode { kVelocity, kGoal };

struct ScenarioConfig {
  std::string name = "scenario";
  std::vector<Vec2> initial_positions;
  double initial_heading = 0.0;
  ControllerGains gains;
  SensorConfig sensors;
  PlantConfig plant;
  TrackerConfig tracker;
  MrseConfig mrse;
  ResponseModel response = ResponseModel::with(std::exp(-0.2), 1.0 - std::exp(-0.2));
  double sigma_estimated_velocity = 0.6;  // [m/s] noise assumed for replayed neighbor velocities
  TargetSpec target;
  double duration = 60.0;
  double dt = 0.1;
  std::uint64_t seed = 1;
  HeadingMode heading_mode = HeadingMode::kVelocity;
  double safety_radius = 2.0;
  double cvr_window = 1.0;
  std::size_t threads = 1;
  bool log_tracks = true;

  std::size_t n_agents() const { return initial_positions.size(); }
  bool comm() const { return sensors.comm.enabled; }
  long ticks() const { return std::lround(duration / dt); }

  ViewConfig view() const {
    ViewConfig v;
    v.max_range = sensors.max_range;
    v.fov = sensors.fov;
    v.n_max = gains.n_max;
    return v;
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (!(dt > 0.0)) out.emplace_back("dt: must be positive");
    if (!(duration > 0.0)) out.emplace_back("duration: must be positive");
    if (initial_positions.empty()) out.emplace_back("layout: at least one agent required");
    if (!(safety_radius > 0.0)) out.emplace_back("safety_radius: must be positive");
    for (std::size_t i = 0; i < initial_positions.size(); ++i) {
      for (std::size_t j = i + 1; j < initial_positions.size(); ++j) {
        if ((initial_positions[i] - initial_positions[j]).norm() < safety_radius) {
          out.push_back("layout: agents " + std::to_string(i) + " and " + std::to_string(j) +
                        " start closer than the safety radius");
        }
      }
    }
    try {
      gains.validate();
    } catch (const std::exception& e) {
      out.emplace_back(e.what());
    }
    try {
      mrse.validate();
    } catch (const std::exception& e) {
      out.emplace_back(e.what());
    }
    for (auto& v : sensors.violations()) out.push_back(std::move(v));
    if (!(plant.tau > 0.0) || !(plant.v_max > 0.0) || !(plant.a_max > 0.0)) {
      out.emplace_back("plant: tau, v_max and a_max must be positive");
    }
    if (!(tracker.sigma_position > 0.0) || !(tracker.sigma_velocity > 0.0) || !(tracker.drop_after > 0.0)) {
      out.emplace_back("tracker: sigma_position, sigma_velocity and drop_after must be positive");
    }
    if (!response.fitted) out.emplace_back("response_model: q1 and q2 are required");
    if (!(sigma_estimated_velocity > 0.0)) out.emplace_back("sigma_estimated_velocity: must be positive");
    if (!(cvr_window > 0.0)) out.emplace_back("metrics.cvr_window: must be positive");
    if (threads == 0) out.emplace_back("threads: must be at least 1");
    if (target.kind == TargetKind::kWaypoints && !(target.speed > 0.0)) {
      out.emplace_back("target.speed: must be positive for a waypoint path");
    }
    for (const auto& s : target.segments) {
      if (!(s.duration >= 0.0) || !(s.speed >= 0.0)) {
        out.emplace_back("target.segments: duration and speed must be non-negative");
        break;
      }
    }
    return out;
  }

  void validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid scenario '" + name + "':";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
};

/// Triangular lattice patch: `columns` agents per row, rows stacked against the travel direction.
inline std::vector<Vec2> triangular_layout(std::size_t n, std::size_t columns, double spacing, const Vec2& origin,
                                           double heading) {
  std::vector<Vec2> out;
  if (columns == 0) throw ConfigError("layout: columns must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<double>(i / columns);
    const auto col = static_cast<double>(i % columns);
    const double shift = (i / columns) % 2 == 1 ? 0.5 * spacing : 0.0;
    const Vec2 local(-row * spacing * std::sqrt(3.0) / 2.0,
                     (col - 0.5 * static_cast<double>(columns - 1)) * spacing + shift);
    out.push_back(origin + rotate(local, heading));
  }
  return out;
}

namespace detail {

using nlohmann::json;

inline Vec2 vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a [x, y] pair");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

inline json vec2_to(const Vec2& v) { return json::array({v.x(), v.y()}); }

inline double deg(double rad) { return rad * 180.0 / kPi; }
inline double rad(double deg) { return deg * kPi / 180.0; }

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_vec6(const json& j, const char* key, StateVector6& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 6) throw ConfigError(std::string(key) + ": expected six entries");
  for (int i = 0; i < 6; ++i) out(i) = a.at(static_cast<std::size_t>(i)).get<double>();
}

inline json vec6_to(const StateVector6& v) {
  json a = json::array();
  for (int i = 0; i < 6; ++i) a.push_back(v(i));
  return a;
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  using detail::read;
  ScenarioConfig c;
  try {
    read(j, "name", c.name);
    read(j, "dt", c.dt);
    read(j, "duration", c.duration);
    read(j, "seed", c.seed);
    read(j, "safety_radius", c.safety_radius);
    read(j, "threads", c.threads);
    read(j, "log_tracks", c.log_tracks);
    read(j, "sigma_estimated_velocity", c.sigma_estimated_velocity);
    if (j.contains("initial_heading_deg")) c.initial_heading = detail::rad(j.at("initial_heading_deg").get<double>());
    if (j.contains("heading_mode")) {
      const auto mode = j.at("heading_mode").get<std::string>();
      if (mode == "velocity") {
        c.heading_mode = HeadingMode::kVelocity;
      } else if (mode == "goal") {
        c.heading_mode = HeadingMode::kGoal;
      } else {
        throw ConfigError("heading_mode: expected 'velocity' or 'goal'");
      }
    }

    if (j.contains("layout")) {
      const auto& l = j.at("layout");
      const auto type = l.value("type", std::string("positions"));
      if (type == "positions") {
        for (const auto& p : l.at("positions")) c.initial_positions.push_back(detail::vec2_from(p));
      } else if (type == "triangular") {
        const Vec2 origin = l.contains("origin") ? detail::vec2_from(l.at("origin")) : Vec2::Zero();
        c.initial_positions = triangular_layout(l.at("n_agents").get<std::size_t>(), l.at("columns").get<std::size_t>(),
                                                l.at("spacing").get<double>(), origin, c.initial_heading);
      } else {
        throw ConfigError("layout.type: expected 'positions' or 'triangular'");
      }
    }

    if (j.contains("gains")) {
      const auto& g = j.at("gains");
      read(g, "k_p", c.gains.k_p);
      read(g, "k_v", c.gains.k_v);
      read(g, "v_D", c.gains.v_D);
      read(g, "d_min", c.gains.d_min);
      read(g, "d_max", c.gains.d_max);
      read(g, "d_des", c.gains.d_des);
      if (g.contains("theta_tri_deg")) c.gains.theta_tri = detail::rad(g.at("theta_tri_deg").get<double>());
      if (g.contains("theta_scale_deg")) c.gains.theta_scale = detail::rad(g.at("theta_scale_deg").get<double>());
      read(g, "pair_distance_tolerance", c.gains.pair_distance_tolerance);
      read(g, "n_max", c.gains.n_max);
      read(g, "v_max_factor", c.gains.v_max_factor);
      read(g, "rdot_cutoff_hz", c.gains.rdot_cutoff_hz);
    }

    if (j.contains("sensors")) {
      const auto& s = j.at("sensors");
      if (s.contains("sigma_bearing_deg")) c.sensors.sigma_bearing = detail::rad(s.at("sigma_bearing_deg").get<double>());
      read(s, "sigma_distance_rel", c.sensors.sigma_distance_rel);
      read(s, "dropout_prob", c.sensors.dropout_prob);
      read(s, "max_range", c.sensors.max_range);
      if (s.contains("fov_deg")) c.sensors.fov = detail::rad(s.at("fov_deg").get<double>());
      if (s.contains("blind_spot_deg")) c.sensors.blind_spot = detail::rad(s.at("blind_spot_deg").get<double>());
      read(s, "sigma_imu", c.sensors.sigma_imu);
      read(s, "sigma_target", c.sensors.sigma_target);
      if (s.contains("vio")) {
        const auto& v = s.at("vio");
        read(v, "enabled", c.sensors.vio.enabled);
        read(v, "sigma_position", c.sensors.vio.sigma_position);
        read(v, "sigma_velocity", c.sensors.vio.sigma_velocity);
        read(v, "sigma_acceleration", c.sensors.vio.sigma_acceleration);
        read(v, "drift_rate", c.sensors.vio.drift_rate);
        read(v, "starved_drift_gain", c.sensors.vio.starved_drift_gain);
        read(v, "max_features", c.sensors.vio.max_features);
        read(v, "speed_starve", c.sensors.vio.speed_starve);
        read(v, "count_noise", c.sensors.vio.count_noise);
        read(v, "hazard_base", c.sensors.vio.hazard_base);
        read(v, "hazard_per_speed", c.sensors.vio.hazard_per_speed);
      }
      if (s.contains("comm")) {
        const auto& m = s.at("comm");
        read(m, "enabled", c.sensors.comm.enabled);
        read(m, "latency_ticks", c.sensors.comm.latency_ticks);
        read(m, "drop_prob", c.sensors.comm.drop_prob);
      }
    }

    if (j.contains("plant")) {
      const auto& p = j.at("plant");
      read(p, "tau", c.plant.tau);
      read(p, "v_max", c.plant.v_max);
      read(p, "a_max", c.plant.a_max);
    }

    if (j.contains("tracker")) {
      const auto& t = j.at("tracker");
      read(t, "sigma_position", c.tracker.sigma_position);
      read(t, "sigma_velocity", c.tracker.sigma_velocity);
      detail::read_vec6(t, "q_diag", c.tracker.q_diag);
      read(t, "drop_after", c.tracker.drop_after);
      read(t, "init_var_velocity", c.tracker.init_var_velocity);
      read(t, "init_var_acceleration", c.tracker.init_var_acceleration);
    }

    if (j.contains("mrse")) {
      const auto& m = j.at("mrse");
      read(m, "tau", c.mrse.tau);
      detail::read_vec6(m, "q_diag", c.mrse.q_diag);
      read(m, "sigma_fix", c.mrse.sigma_fix);
      read(m, "sigma_accel", c.mrse.sigma_accel);
      read(m, "q_lambda", c.mrse.q_lambda);
      read(m, "sigma_fused_position", c.mrse.sigma_fused_position);
    }

    if (j.contains("response_model")) {
      const auto& r = j.at("response_model");
      if (r.contains("q1") && r.contains("q2")) {
        c.response = ResponseModel::with(r.at("q1").get<double>(), r.at("q2").get<double>());
        read(r, "residual_norm", c.response.residual_norm);
      } else {
        c.response = ResponseModel{};
      }
    }

    if (j.contains("target")) {
      const auto& t = j.at("target");
      const auto type = t.value("type", std::string("none"));
      if (type == "none") {
        c.target.kind = TargetKind::kNone;
      } else if (type == "static") {
        c.target.kind = TargetKind::kStatic;
        c.target.position = detail::vec2_from(t.at("position"));
      } else if (type == "waypoints") {
        c.target.kind = TargetKind::kWaypoints;
        c.target.position = detail::vec2_from(t.at("start"));
        for (const auto& p : t.at("waypoints")) c.target.waypoints.push_back(detail::vec2_from(p));
        read(t, "speed", c.target.speed);
      } else if (type == "intruder") {
        c.target.kind = TargetKind::kIntruder;
        c.target.position = detail::vec2_from(t.at("start"));
        if (t.contains("heading_deg")) c.target.heading = detail::rad(t.at("heading_deg").get<double>());
        for (const auto& s : t.at("segments")) {
          IntruderSegment seg;
          read(s, "duration", seg.duration);
          read(s, "speed", seg.speed);
          if (s.contains("turn_rate_deg")) seg.turn_rate = detail::rad(s.at("turn_rate_deg").get<double>());
          c.target.segments.push_back(seg);
        }
      } else {
        throw ConfigError("target.type: expected none, static, waypoints or intruder");
      }
    }

    if (j.contains("metrics")) read(j.at("metrics"), "cvr_window", c.cvr_window);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  return c;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  using nlohmann::json;
  using detail::deg;
  using detail::vec2_to;
  json j;
  j["name"] = c.name;
  j["dt"] = c.dt;
  j["duration"] = c.duration;
  j["seed"] = c.seed;
  j["safety_radius"] = c.safety_radius;
  j["threads"] = c.threads;
  j["log_tracks"] = c.log_tracks;
  j["sigma_estimated_velocity"] = c.sigma_estimated_velocity;
  j["initial_heading_deg"] = deg(c.initial_heading);
  j["heading_mode"] = c.heading_mode == HeadingMode::kVelocity ? "velocity" : "goal";
  json positions = json::array();
  for (const auto& p : c.initial_positions) positions.push_back(vec2_to(p));
  j["layout"] = {{"type", "positions"}, {"positions", positions}};
  const auto& g = c.gains;
  j["gains"] = {{"k_p", g.k_p},
                {"k_v", g.k_v},
                {"v_D", g.v_D},
                {"d_min", g.d_min},
                {"d_max", g.d_max},
                {"d_des", g.d_des},
                {"theta_tri_deg", deg(g.theta_tri)},
                {"theta_scale_deg", deg(g.theta_scale)},
                {"pair_distance_tolerance", g.pair_distance_tolerance},
                {"n_max", g.n_max},
                {"v_max_factor", g.v_max_factor},
                {"rdot_cutoff_hz", g.rdot_cutoff_hz}};
  const auto& s = c.sensors;
  j["sensors"] = {{"sigma_bearing_deg", deg(s.sigma_bearing)},
                  {"sigma_distance_rel", s.sigma_distance_rel},
                  {"dropout_prob", s.dropout_prob},
                  {"max_range", s.max_range},
                  {"fov_deg", deg(s.fov)},
                  {"blind_spot_deg", deg(s.blind_spot)},
                  {"sigma_imu", s.sigma_imu},
                  {"sigma_target", s.sigma_target},
                  {"vio",
                   {{"enabled", s.vio.enabled},
                    {"sigma_position", s.vio.sigma_position},
                    {"sigma_velocity", s.vio.sigma_velocity},
                    {"sigma_acceleration", s.vio.sigma_acceleration},
                    {"drift_rate", s.vio.drift_rate},
                    {"starved_drift_gain", s.vio.starved_drift_gain},
                    {"max_features", s.vio.max_features},
                    {"speed_starve", s.vio.speed_starve},
                    {"count_noise", s.vio.count_noise},
                    {"hazard_base", s.vio.hazard_base},
                    {"hazard_per_speed", s.vio.hazard_per_speed}}},
                  {"comm",
                   {{"enabled", s.comm.enabled}, {"latency_ticks", s.comm.latency_ticks}, {"drop_prob", s.comm.drop_prob}}}};
  j["plant"] = {{"tau", c.plant.tau}, {"v_max", c.plant.v_max}, {"a_max", c.plant.a_max}};
  j["tracker"] = {{"sigma_position", c.tracker.sigma_position},
                  {"sigma_velocity", c.tracker.sigma_velocity},
                  {"q_diag", detail::vec6_to(c.tracker.q_diag)},
                  {"drop_after", c.tracker.drop_after},
                  {"init_var_velocity", c.tracker.init_var_velocity},
                  {"init_var_acceleration", c.tracker.init_var_acceleration}};
  j["mrse"] = {{"tau", c.mrse.tau},
               {"q_diag", detail::vec6_to(c.mrse.q_diag)},
               {"sigma_fix", c.mrse.sigma_fix},
               {"sigma_accel", c.mrse.sigma_accel},
               {"q_lambda", c.mrse.q_lambda},
               {"sigma_fused_position", c.mrse.sigma_fused_position}};
  if (c.response.fitted) {
    j["response_model"] = {{"q1", c.response.q1}, {"q2", c.response.q2}, {"residual_norm", c.response.residual_norm}};
  }
  json t;
  switch (c.target.kind) {
    case TargetKind::kNone:
      t = {{"type", "none"}};
      break;
    case TargetKind::kStatic:
      t = {{"type", "static"}, {"position", vec2_to(c.target.position)}};
      break;
    case TargetKind::kWaypoints: {
      json w = json::array();
      for (const auto& p : c.target.waypoints) w.push_back(vec2_to(p));
      t = {{"type", "waypoints"}, {"start", vec2_to(c.target.position)}, {"waypoints", w}, {"speed", c.target.speed}};
      break;
    }
    case TargetKind::kIntruder: {
      json segs = json::array();
      for (const auto& s2 : c.target.segments) {
        segs.push_back({{"duration", s2.duration}, {"speed", s2.speed}, {"turn_rate_deg", deg(s2.turn_rate)}});
      }
      t = {{"type", "intruder"}, {"start", vec2_to(c.target.position)}, {"heading_deg", deg(c.target.heading)},
           {"segments", segs}};
      break;
    }
  }
  j["target"] = t;
  j["metrics"] = {{"cvr_window", c.cvr_window}};
  return j;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace flock

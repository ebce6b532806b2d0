#pragma once

// Line-delimited run log: a header record, one record per tick, and a
// closing summary record. Doubles are written with round-trip precision so a
// parsed log reproduces the in-memory records exactly.

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flock/errors.hpp"
#include "flock/geometry.hpp"
#include "flock/neighbor_tracker.hpp"
#include "flock/scenario.hpp"

namespace flock {

inline constexpr int kLogVersion = 1;
inline constexpr const char* kLogFormat = "flock-log";

struct TrackSample {
  AgentId id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
};

struct VelocitySample {
  AgentId id = 0;
  Vec2 v_d = Vec2::Zero();
  Vec2 v_e = Vec2::Zero();
};

/// Truth in the world frame; estimates in the agent's local frame (origin at its start position).
struct AgentSample {
  AgentId id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double heading = 0.0;
  Vec2 fused_position = Vec2::Zero();
  Vec2 fused_velocity = Vec2::Zero();
  Vec2 mrse_position = Vec2::Zero();
  Vec2 baseline_position = Vec2::Zero();
  bool has_fix = false;
  double lambda = 0.0;
  double lambda_e = 0.0;
  int feature_count = 0;
  Vec2 v_d = Vec2::Zero();
  Vec2 position_term = Vec2::Zero();
  Vec2 velocity_term = Vec2::Zero();
  Vec2 feedforward = Vec2::Zero();
  double group_heading = 0.0;
  std::vector<AgentId> neighbors;
  std::vector<TrackSample> tracks;
  std::vector<VelocitySample> velocity_estimates;
};

struct TickRecord {
  long tick = 0;
  double t = 0.0;
  std::optional<Vec2> target;
  std::vector<AgentSample> agents;
};

struct LogHeader {
  ScenarioConfig config;
  std::vector<Vec2> origins;
};

struct RunLog {
  LogHeader header;
  std::vector<TickRecord> ticks;
  nlohmann::json summary;  // empty when the run did not finish
};

namespace detail {

inline Vec2 v2(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline nlohmann::json j2(const Vec2& v) { return nlohmann::json::array({v.x(), v.y()}); }

}  // namespace detail

/// The worker count is left out so serial and parallel runs log identical bytes.
inline nlohmann::json header_to_json(const LogHeader& h) {
  nlohmann::json origins = nlohmann::json::array();
  for (const auto& o : h.origins) origins.push_back(detail::j2(o));
  auto config = scenario_to_json(h.config);
  config.erase("threads");
  return {{"type", "header"},
          {"format", kLogFormat},
          {"version", kLogVersion},
          {"config", config},
          {"origins", origins}};
}

inline nlohmann::json tick_to_json(const TickRecord& r) {
  using detail::j2;
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : r.agents) {
    nlohmann::json tracks = nlohmann::json::array();
    for (const auto& t : a.tracks) tracks.push_back({{"id", t.id}, {"p", j2(t.position)}, {"v", j2(t.velocity)}});
    nlohmann::json vhat = nlohmann::json::array();
    for (const auto& v : a.velocity_estimates) vhat.push_back({{"id", v.id}, {"v_d", j2(v.v_d)}, {"v_e", j2(v.v_e)}});
    agents.push_back({{"id", a.id},
                      {"p", j2(a.position)},
                      {"v", j2(a.velocity)},
                      {"heading", a.heading},
                      {"p_fused", j2(a.fused_position)},
                      {"v_fused", j2(a.fused_velocity)},
                      {"p_mrse", j2(a.mrse_position)},
                      {"p_baseline", j2(a.baseline_position)},
                      {"fix", a.has_fix},
                      {"lambda", a.lambda},
                      {"lambda_e", a.lambda_e},
                      {"features", a.feature_count},
                      {"cmd",
                       {{"v_d", j2(a.v_d)},
                        {"position", j2(a.position_term)},
                        {"velocity", j2(a.velocity_term)},
                        {"feedforward", j2(a.feedforward)},
                        {"psi", a.group_heading}}},
                      {"neighbors", a.neighbors},
                      {"tracks", tracks},
                      {"v_hat", vhat}});
  }
  return {{"type", "tick"},
          {"k", r.tick},
          {"t", r.t},
          {"target", r.target ? j2(*r.target) : nlohmann::json(nullptr)},
          {"agents", agents}};
}

inline TickRecord tick_from_json(const nlohmann::json& j) {
  using detail::v2;
  TickRecord r;
  r.tick = j.at("k").get<long>();
  r.t = j.at("t").get<double>();
  if (!j.at("target").is_null()) r.target = v2(j.at("target"));
  for (const auto& ja : j.at("agents")) {
    AgentSample a;
    a.id = ja.at("id").get<AgentId>();
    a.position = v2(ja.at("p"));
    a.velocity = v2(ja.at("v"));
    a.heading = ja.at("heading").get<double>();
    a.fused_position = v2(ja.at("p_fused"));
    a.fused_velocity = v2(ja.at("v_fused"));
    a.mrse_position = v2(ja.at("p_mrse"));
    a.baseline_position = v2(ja.at("p_baseline"));
    a.has_fix = ja.at("fix").get<bool>();
    a.lambda = ja.at("lambda").get<double>();
    a.lambda_e = ja.at("lambda_e").get<double>();
    a.feature_count = ja.at("features").get<int>();
    const auto& c = ja.at("cmd");
    a.v_d = v2(c.at("v_d"));
    a.position_term = v2(c.at("position"));
    a.velocity_term = v2(c.at("velocity"));
    a.feedforward = v2(c.at("feedforward"));
    a.group_heading = c.at("psi").get<double>();
    a.neighbors = ja.at("neighbors").get<std::vector<AgentId>>();
    for (const auto& t : ja.at("tracks")) a.tracks.push_back({t.at("id").get<AgentId>(), v2(t.at("p")), v2(t.at("v"))});
    for (const auto& v : ja.at("v_hat")) {
      a.velocity_estimates.push_back({v.at("id").get<AgentId>(), v2(v.at("v_d")), v2(v.at("v_e"))});
    }
    r.agents.push_back(std::move(a));
  }
  return r;
}

inline void write_line(std::ostream& out, const nlohmann::json& j) { out << j.dump() << '\n'; }

/// Parses a complete log. Unknown record types are rejected.
inline RunLog read_log(std::istream& in) {
  RunLog log;
  std::string line;
  bool have_header = false;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("log line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto type = j.value("type", std::string());
    try {
      if (type == "header") {
        if (j.value("format", std::string()) != kLogFormat) throw ConfigError("not a flock log");
        if (j.value("version", 0) != kLogVersion) {
          throw ConfigError("unsupported log version " + std::to_string(j.value("version", 0)));
        }
        log.header.config = scenario_from_json(j.at("config"));
        for (const auto& o : j.at("origins")) log.header.origins.push_back(detail::v2(o));
        have_header = true;
      } else if (type == "tick") {
        if (!have_header) throw ConfigError("tick record before header");
        log.ticks.push_back(tick_from_json(j));
      } else if (type == "summary") {
        log.summary = j;
      } else {
        throw ConfigError("unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw ConfigError("log has no header record");
  return log;
}

}  // namespace flock

#pragma once

// Run metrics computed from log records only, so a saved log reproduces the
// live numbers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flock/errors.hpp"
#include "flock/geometry.hpp"
#include "flock/log.hpp"

namespace flock {

/// ‖ṗ_c‖ / v_D, with ṗ_c a centered difference spanning `window` seconds
/// (one-sided at the ends).
inline std::vector<double> compute_cvr(std::span<const Vec2> centers, double dt, double v_D, double window) {
  if (!(v_D > 0.0)) throw PreconditionError("compute_cvr: v_D must be positive");
  if (!(dt > 0.0)) throw PreconditionError("compute_cvr: dt must be positive");
  if (centers.size() < 2) throw PreconditionError("compute_cvr: at least two samples required");
  const long n = static_cast<long>(centers.size());
  const long half = std::max(1L, std::lround(window / (2.0 * dt)));
  std::vector<double> out(centers.size());
  for (long k = 0; k < n; ++k) {
    const long lo = std::max(0L, k - half);
    const long hi = std::min(n - 1, k + half);
    const Vec2 rate = (centers[static_cast<std::size_t>(hi)] - centers[static_cast<std::size_t>(lo)]) /
                      (static_cast<double>(hi - lo) * dt);
    out[static_cast<std::size_t>(k)] = rate.norm() / v_D;
  }
  return out;
}

struct DistanceStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t samples = 0;
};

/// Unordered pairs (i, j) where either agent lists the other as a neighbor at that tick.
inline std::vector<std::pair<AgentId, AgentId>> neighbor_pairs(const TickRecord& r) {
  std::set<std::pair<AgentId, AgentId>> pairs;
  for (const auto& a : r.agents) {
    for (AgentId n : a.neighbors) {
      if (n == a.id || n < 0) continue;
      pairs.emplace(std::min(a.id, n), std::max(a.id, n));
    }
  }
  return {pairs.begin(), pairs.end()};
}

/// Mean and standard deviation of true distances over all (tick, neighbor pair)
/// samples; empty when no pair was ever a neighbor.
inline std::optional<DistanceStats> compute_neighbor_distance_stats(std::span<const TickRecord> ticks) {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  std::vector<double> distances;
  for (const auto& r : ticks) {
    std::map<AgentId, Vec2> pos;
    for (const auto& a : r.agents) pos[a.id] = a.position;
    for (const auto& [i, j] : neighbor_pairs(r)) {
      auto pi = pos.find(i);
      auto pj = pos.find(j);
      if (pi == pos.end() || pj == pos.end()) continue;
      distances.push_back((pi->second - pj->second).norm());
    }
  }
  if (distances.empty()) return std::nullopt;
  for (double d : distances) sum += d;
  count = distances.size();
  const double mean = sum / static_cast<double>(count);
  for (double d : distances) sum_sq += (d - mean) * (d - mean);
  return DistanceStats{mean, std::sqrt(sum_sq / static_cast<double>(count)), count};
}

inline Vec2 swarm_center(const TickRecord& r) {
  Vec2 c = Vec2::Zero();
  for (const auto& a : r.agents) c += a.position;
  return r.agents.empty() ? c : Vec2(c / static_cast<double>(r.agents.size()));
}

struct LambdaStats {
  AgentId id = 0;
  double mean = 0.0;
  double min = 0.0;
};

struct MetricsSummary {
  std::vector<double> cvr;
  double cvr_mean = 0.0;            // over the approach window
  std::optional<DistanceStats> neighbor_distance;
  double min_pair_distance = std::numeric_limits<double>::infinity();
  std::size_t collision_samples = 0;
  std::vector<std::pair<AgentId, AgentId>> colliding_pairs;
  std::vector<LambdaStats> lambda;
  double lambda_min = 1.0;
  double position_error = 0.0;      // p_e: mean fused position error at run end [m]
  double velocity_error = 0.0;      // v_e: mean fused velocity error [m/s]
  double trajectory_length = 0.0;   // l_t: swarm-center path length [m]
  double group_velocity = 0.0;      // v_g: mean center speed over the approach window [m/s]
  double mrse_rms = 0.0;            // full-state focal filter position RMS [m]
  double baseline_rms = 0.0;        // velocity-integration position RMS [m]
  double fused_rms = 0.0;
  double neighbor_velocity_rms = 0.0;  // communication-less estimate vs truth [m/s]
  std::size_t neighbor_velocity_samples = 0;
  std::size_t approach_ticks = 0;
};

/// Ticks counted as the approach: swarm center farther than d_max from the
/// target. Without a target, or when the center never is that far, every tick.
inline std::vector<bool> approach_window(std::span<const TickRecord> ticks, double d_max) {
  std::vector<bool> in(ticks.size(), false);
  bool any = false;
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    if (ticks[k].target && (swarm_center(ticks[k]) - *ticks[k].target).norm() > d_max) {
      in[k] = true;
      any = true;
    }
  }
  if (!any) std::fill(in.begin(), in.end(), true);
  return in;
}

inline MetricsSummary compute_metrics(const LogHeader& header, std::span<const TickRecord> ticks) {
  const auto& cfg = header.config;
  MetricsSummary m;
  if (ticks.empty()) return m;

  std::vector<Vec2> centers;
  centers.reserve(ticks.size());
  for (const auto& r : ticks) centers.push_back(swarm_center(r));
  if (centers.size() >= 2) {
    m.cvr = compute_cvr(centers, cfg.dt, cfg.gains.v_D, cfg.cvr_window);
    const auto window = approach_window(ticks, cfg.gains.d_max);
    double sum = 0.0;
    for (std::size_t k = 0; k < m.cvr.size(); ++k) {
      if (!window[k]) continue;
      sum += m.cvr[k];
      ++m.approach_ticks;
    }
    m.cvr_mean = sum / static_cast<double>(m.approach_ticks);
    m.group_velocity = m.cvr_mean * cfg.gains.v_D;
    for (std::size_t k = 1; k < centers.size(); ++k) m.trajectory_length += (centers[k] - centers[k - 1]).norm();
  }

  m.neighbor_distance = compute_neighbor_distance_stats(ticks);

  std::set<std::pair<AgentId, AgentId>> colliding;
  std::map<AgentId, std::pair<double, double>> lambda_acc;  // sum, min
  std::map<AgentId, Vec2> origin;
  for (std::size_t i = 0; i < header.origins.size(); ++i) origin[static_cast<AgentId>(i)] = header.origins[i];
  auto local = [&](const AgentSample& a) { return Vec2(a.position - origin[a.id]); };

  double v_err = 0.0;
  double mrse_sq = 0.0;
  double base_sq = 0.0;
  double fused_sq = 0.0;
  double nv_sq = 0.0;
  std::size_t agent_samples = 0;
  for (const auto& r : ticks) {
    std::map<AgentId, Vec2> truth_velocity;
    for (const auto& a : r.agents) truth_velocity[a.id] = a.velocity;
    for (std::size_t i = 0; i < r.agents.size(); ++i) {
      const auto& a = r.agents[i];
      for (std::size_t j = i + 1; j < r.agents.size(); ++j) {
        const double d = (a.position - r.agents[j].position).norm();
        m.min_pair_distance = std::min(m.min_pair_distance, d);
        if (d < cfg.safety_radius) {
          ++m.collision_samples;
          colliding.emplace(std::min(a.id, r.agents[j].id), std::max(a.id, r.agents[j].id));
        }
      }
      auto [it, fresh] = lambda_acc.try_emplace(a.id, 0.0, a.lambda);
      it->second.first += a.lambda;
      it->second.second = std::min(it->second.second, a.lambda);

      const Vec2 p = local(a);
      v_err += (a.fused_velocity - a.velocity).norm();
      mrse_sq += (a.mrse_position - p).squaredNorm();
      base_sq += (a.baseline_position - p).squaredNorm();
      fused_sq += (a.fused_position - p).squaredNorm();
      ++agent_samples;
      for (const auto& v : a.velocity_estimates) {
        auto t = truth_velocity.find(v.id);
        if (t == truth_velocity.end()) continue;
        nv_sq += (v.v_e - t->second).squaredNorm();
        ++m.neighbor_velocity_samples;
      }
    }
  }
  m.colliding_pairs.assign(colliding.begin(), colliding.end());
  for (const auto& [id, acc] : lambda_acc) {
    m.lambda.push_back({id, acc.first / static_cast<double>(ticks.size()), acc.second});
    m.lambda_min = std::min(m.lambda_min, acc.second);
  }
  const auto n = static_cast<double>(agent_samples);
  m.velocity_error = v_err / n;
  m.mrse_rms = std::sqrt(mrse_sq / n);
  m.baseline_rms = std::sqrt(base_sq / n);
  m.fused_rms = std::sqrt(fused_sq / n);
  if (m.neighbor_velocity_samples > 0) {
    m.neighbor_velocity_rms = std::sqrt(nv_sq / static_cast<double>(m.neighbor_velocity_samples));
  }

  const auto& last = ticks.back();
  for (const auto& a : last.agents) m.position_error += (a.fused_position - local(a)).norm();
  m.position_error /= static_cast<double>(last.agents.size());
  return m;
}

inline MetricsSummary compute_metrics(const RunLog& log) { return compute_metrics(log.header, log.ticks); }

/// Scalar fields only; the CVR trace is exported separately.
inline nlohmann::json metrics_to_json(const MetricsSummary& m) {
  nlohmann::json lambda = nlohmann::json::array();
  for (const auto& l : m.lambda) lambda.push_back({{"id", l.id}, {"mean", l.mean}, {"min", l.min}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : m.colliding_pairs) pairs.push_back({a, b});
  nlohmann::json nd = nullptr;
  if (m.neighbor_distance) {
    nd = {{"mean", m.neighbor_distance->mean},
          {"stddev", m.neighbor_distance->stddev},
          {"samples", m.neighbor_distance->samples}};
  }
  return {{"cvr_mean", m.cvr_mean},
          {"approach_ticks", m.approach_ticks},
          {"neighbor_distance", nd},
          {"min_pair_distance", m.min_pair_distance},
          {"collision_samples", m.collision_samples},
          {"colliding_pairs", pairs},
          {"lambda", lambda},
          {"lambda_min", m.lambda_min},
          {"p_e", m.position_error},
          {"v_e", m.velocity_error},
          {"l_t", m.trajectory_length},
          {"v_g", m.group_velocity},
          {"mrse_rms", m.mrse_rms},
          {"baseline_rms", m.baseline_rms},
          {"fused_rms", m.fused_rms},
          {"neighbor_velocity_rms", m.neighbor_velocity_rms},
          {"neighbor_velocity_samples", m.neighbor_velocity_samples}};
}

}  // namespace flock

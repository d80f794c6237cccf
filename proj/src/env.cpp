#include "quadswarm/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "quadswarm/config.hpp"

namespace quadswarm {

RewardCoefficients RewardCoefficients::from_config(KeyValueConfig& cfg) {
  RewardCoefficients c;
  c.position = cfg.get_double("reward_position", c.position);
  c.collision = cfg.get_double("reward_collision", c.collision);
  c.proximity = cfg.get_double("reward_proximity", c.proximity);
  c.omega = cfg.get_double("reward_omega", c.omega);
  c.thrust = cfg.get_double("reward_thrust", c.thrust);
  c.rotation = cfg.get_double("reward_rotation", c.rotation);
  c.proximity_distance = cfg.get_double("proximity_distance_m", c.proximity_distance);
  if (!(c.proximity_distance > 0.0)) throw UsageError("proximity_distance_m must be positive");
  return c;
}

void EpisodeConfig::validate() const {
  if (!(duration > 0.0)) throw UsageError("episode_duration_s must be positive");
  if (physics_hz <= 0 || control_hz <= 0 || physics_hz % control_hz != 0) {
    throw UsageError("physics_hz must be a positive multiple of control_hz");
  }
  if (num_drones < 1) throw UsageError("num_drones must be at least 1");
  if (num_neighbors < 0 || num_neighbors > num_drones - 1) {
    throw UsageError("num_neighbors must lie in [0, num_drones - 1]");
  }
}

int EpisodeConfig::control_steps() const {
  return static_cast<int>(std::lround(duration * control_hz));
}

EpisodeConfig EpisodeConfig::from_config(KeyValueConfig& cfg) {
  EpisodeConfig e;
  e.duration = cfg.get_double("episode_duration_s", e.duration);
  e.physics_hz = static_cast<int>(cfg.get_int("physics_hz", e.physics_hz));
  e.control_hz = static_cast<int>(cfg.get_int("control_hz", e.control_hz));
  e.num_drones = static_cast<int>(cfg.get_int("num_drones", e.num_drones));
  e.num_neighbors = static_cast<int>(
      cfg.get_int("num_neighbors", std::min(6, std::max(0, e.num_drones - 1))));
  e.count_ground_collisions = cfg.get_bool("count_ground_collisions", e.count_ground_collisions);
  e.validate();
  return e;
}

std::vector<int> nearest_neighbors(int self, std::span<const QuadrotorState> states, int k) {
  const int n = static_cast<int>(states.size());
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(n);
  for (int j = 0; j < n; ++j) {
    if (j != self) ranked.emplace_back((states[j].p - states[self].p).squaredNorm(), j);
  }
  k = std::min<int>(k, static_cast<int>(ranked.size()));
  std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end());
  std::vector<int> ids(k);
  for (int m = 0; m < k; ++m) ids[m] = ranked[m].second;
  return ids;
}

Observation build_observation(int self, std::span<const QuadrotorState> sensed,
                              std::span<const Vec3> goals, const ObstacleState* obstacle, int k) {
  const QuadrotorState& me = sensed[self];
  Observation obs;
  obs.self.segment<3>(0) = me.p - goals[self];
  obs.self.segment<3>(3) = me.v;
  for (int r = 0; r < 3; ++r) obs.self.segment<3>(6 + 3 * r) = me.R.row(r).transpose();
  obs.self.segment<3>(15) = me.omega;

  obs.neighbor_ids = nearest_neighbors(self, sensed, k);
  obs.neighbors.resize(static_cast<Eigen::Index>(obs.neighbor_ids.size()), kNeighborObsDim);
  for (std::size_t m = 0; m < obs.neighbor_ids.size(); ++m) {
    const QuadrotorState& other = sensed[obs.neighbor_ids[m]];
    obs.neighbors.row(m).head<3>() = (other.p - me.p).transpose();
    obs.neighbors.row(m).tail<3>() = (other.v - me.v).transpose();
  }

  if (obstacle != nullptr) {
    ObstacleBlock block;
    block(0) = obstacle->radius;
    block.segment<3>(1) = obstacle->position - me.p;
    block.segment<3>(4) = obstacle->velocity - me.v;
    obs.obstacle = block;
  }
  return obs;
}

RewardBreakdown compute_reward(const QuadrotorState& state, const Vec3& goal, const Vec4& f,
                               bool new_collision, std::span<const double> neighbor_distances,
                               double dt, const RewardCoefficients& c) {
  RewardBreakdown r;
  r.position = -c.position * dt * (state.p - goal).norm();
  r.collision = new_collision ? -c.collision : 0.0;
  double falloff = 0.0;
  for (double d : neighbor_distances) falloff += std::max(1.0 - d / c.proximity_distance, 0.0);
  r.proximity = -c.proximity * dt * falloff;
  r.omega = -c.omega * dt * state.omega.norm();
  r.thrust = -c.thrust * dt * f.norm();
  r.rotation = c.rotation * dt * state.R(2, 2);
  r.total = r.position + r.collision + r.proximity + r.omega + r.thrust + r.rotation;
  return r;
}

SwarmEnv::SwarmEnv(EpisodeConfig episode, QuadrotorParams params, NoiseModel noise,
                   RewardCoefficients reward, CollisionModel collision, SpawnConfig spawn)
    : episode_(episode),
      params_(params),
      noise_(noise),
      reward_(reward),
      collision_(collision),
      spawn_(spawn),
      detector_(episode.num_drones, collision.hysteresis) {
  episode_.validate();
  params_.validate();
}

std::vector<Observation> SwarmEnv::reset(const ScenarioSpec& spec, Rng& rng) {
  auto initial = spawn_states(rng, episode_.num_drones, params_, spawn_);
  return reset(spec, std::move(initial), rng);
}

std::vector<Observation> SwarmEnv::reset(const ScenarioSpec& spec,
                                         std::vector<QuadrotorState> initial, Rng& rng) {
  if (static_cast<int>(initial.size()) != episode_.num_drones) {
    throw std::invalid_argument("SwarmEnv::reset: wrong number of initial states");
  }
  spec.validate();
  spec_ = spec;
  states_ = std::move(initial);
  detector_.reset();
  step_count_ = 0;
  physics_steps_ = 0;
  done_ = false;
  goals_ = goals_at(spec_, 0.0, episode_.num_drones);
  return observe(rng);
}

std::optional<ObstacleState> SwarmEnv::obstacle() const {
  if (!spec_.obstacle) return std::nullopt;
  const double t = std::min(physics_steps_ * episode_.physics_dt(), spec_.episode_duration);
  return obstacle_state_at(*spec_.obstacle, t);
}

std::vector<Observation> SwarmEnv::observe(Rng& rng) {
  const int n = episode_.num_drones;
  std::vector<QuadrotorState> sensed(n);
  for (int i = 0; i < n; ++i) sensed[i] = sense(states_[i], noise_, rng);
  const auto obstacle_now = obstacle();
  std::vector<Observation> obs(n);
  for (int i = 0; i < n; ++i) {
    obs[i] = build_observation(i, sensed, goals_, obstacle_now ? &*obstacle_now : nullptr,
                               episode_.num_neighbors);
  }
  return obs;
}

StepResult SwarmEnv::step(std::span<const Vec4> actions, Rng& rng) {
  if (done_) throw std::logic_error("SwarmEnv::step called after the episode finished");
  const int n = episode_.num_drones;
  if (static_cast<int>(actions.size()) != n) {
    throw std::invalid_argument("SwarmEnv::step: one action per drone required");
  }
  std::vector<Vec4> commands(n);
  for (int i = 0; i < n; ++i) commands[i] = map_action(actions[i]);

  StepResult result;
  result.new_collision.assign(n, 0);
  const double dt = episode_.physics_dt();
  for (int sub = 0; sub < episode_.substeps(); ++sub) {
    for (int i = 0; i < n; ++i) states_[i] = step_dynamics(states_[i], commands[i], params_, dt, rng);
    ++physics_steps_;
    const double t = physics_steps_ * dt;
    const auto obstacle_now = obstacle();
    auto events = detector_.detect(states_, params_, obstacle_now ? &*obstacle_now : nullptr, t);
    for (const auto& e : events) {
      switch (e.kind) {
        case CollisionKind::DroneDrone: {
          auto [a, b] = resolve_drone_pair(states_[e.first], states_[e.second], params_,
                                           collision_, rng);
          states_[e.first] = a;
          states_[e.second] = b;
          result.new_collision[e.first] = 1;
          result.new_collision[e.second] = 1;
          break;
        }
        case CollisionKind::DroneObstacle:
          states_[e.first] = resolve_obstacle(states_[e.first], *obstacle_now, params_, collision_, rng);
          result.new_collision[e.first] = 1;
          break;
        case CollisionKind::DroneGround:
          if (episode_.count_ground_collisions) result.new_collision[e.first] = 1;
          break;
      }
    }
    for (int i = 0; i < n; ++i) {
      if (states_[i].p.z() < params_.collision_radius) {
        states_[i] = resolve_ground(states_[i], params_, collision_, rng);
      }
    }
    result.events.insert(result.events.end(), events.begin(), events.end());
  }

  ++step_count_;
  done_ = step_count_ >= episode_.control_steps();
  goals_ = goals_at(spec_, std::min(time(), spec_.episode_duration), n);

  result.rewards.resize(n);
  std::vector<double> distances;
  for (int i = 0; i < n; ++i) {
    const auto ids = nearest_neighbors(i, states_, episode_.num_neighbors);
    distances.clear();
    for (int j : ids) distances.push_back((states_[j].p - states_[i].p).norm());
    result.rewards[i] = compute_reward(states_[i], goals_[i], commands[i], result.new_collision[i],
                                       distances, episode_.control_dt(), reward_);
  }
  result.observations = observe(rng);
  result.done = done_;
  return result;
}

}  // namespace quadswarm

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "quadswarm/collision.hpp"
#include "quadswarm/quadrotor.hpp"
#include "quadswarm/scenarios.hpp"

namespace quadswarm {

class KeyValueConfig;

inline constexpr int kSelfObsDim = 18;
inline constexpr int kNeighborObsDim = 6;
inline constexpr int kObstacleObsDim = 7;

using SelfBlock = Eigen::Matrix<double, kSelfObsDim, 1>;
using NeighborBlock = Eigen::Matrix<double, Eigen::Dynamic, kNeighborObsDim, Eigen::RowMajor>;
using ObstacleBlock = Eigen::Matrix<double, kObstacleObsDim, 1>;

/// Per-drone observation.
///  self:      position relative to goal (3), velocity (3), R row-major (9), omega (3)
///  neighbors: K rows of (relative position, relative velocity), nearest first
///  obstacle:  (radius, relative position, relative velocity) when the scenario has one
struct Observation {
  SelfBlock self = SelfBlock::Zero();
  NeighborBlock neighbors;
  std::optional<ObstacleBlock> obstacle;
  std::vector<int> neighbor_ids;
};

struct RewardCoefficients {
  // Per-second weights; all but the collision penalty are scaled by the control dt.
  double position = 1.0;
  double collision = 5.0;
  double proximity = 10.0;
  double omega = 0.1;
  double thrust = 0.05;
  double rotation = 1.0;
  double proximity_distance = 0.2;  // m

  static RewardCoefficients from_config(KeyValueConfig& cfg);
};

struct RewardBreakdown {
  double position = 0.0;
  double collision = 0.0;
  double proximity = 0.0;
  double omega = 0.0;
  double thrust = 0.0;
  double rotation = 0.0;
  double total = 0.0;
};

struct EpisodeConfig {
  double duration = 16.0;  // s
  int physics_hz = 200;
  int control_hz = 100;
  int num_drones = 8;
  int num_neighbors = 6;
  bool count_ground_collisions = true;

  void validate() const;
  int control_steps() const;
  int substeps() const { return physics_hz / control_hz; }
  double control_dt() const { return 1.0 / control_hz; }
  double physics_dt() const { return 1.0 / physics_hz; }

  static EpisodeConfig from_config(KeyValueConfig& cfg);
};

/// Indices of the K nearest other drones, ascending by distance, ties broken by index.
std::vector<int> nearest_neighbors(int self, std::span<const QuadrotorState> states, int k);

Observation build_observation(int self, std::span<const QuadrotorState> sensed,
                              std::span<const Vec3> goals, const ObstacleState* obstacle, int k);

RewardBreakdown compute_reward(const QuadrotorState& state, const Vec3& goal, const Vec4& f,
                               bool new_collision, std::span<const double> neighbor_distances,
                               double dt, const RewardCoefficients& coeffs);

struct StepResult {
  std::vector<Observation> observations;
  std::vector<RewardBreakdown> rewards;
  std::vector<CollisionEvent> events;
  std::vector<char> new_collision;  // per drone
  bool done = false;
};

/// Episodic multi-drone environment. Each control step holds the mapped
/// actions for `substeps()` physics steps, resolves contacts after every
/// physics step, and scores the true state once at the end.
class SwarmEnv {
 public:
  SwarmEnv(EpisodeConfig episode, QuadrotorParams params, NoiseModel noise,
           RewardCoefficients reward, CollisionModel collision = {}, SpawnConfig spawn = {});

  std::vector<Observation> reset(const ScenarioSpec& spec, Rng& rng);
  /// Reset with caller-provided initial states instead of random spawns.
  std::vector<Observation> reset(const ScenarioSpec& spec, std::vector<QuadrotorState> initial,
                                 Rng& rng);

  /// Throws std::logic_error after the episode is done.
  StepResult step(std::span<const Vec4> actions, Rng& rng);

  const EpisodeConfig& episode() const { return episode_; }
  const QuadrotorParams& params() const { return params_; }
  const ScenarioSpec& spec() const { return spec_; }
  const std::vector<QuadrotorState>& states() const { return states_; }
  const std::vector<Vec3>& goals() const { return goals_; }
  std::optional<ObstacleState> obstacle() const;
  int step_count() const { return step_count_; }
  long physics_step_count() const { return physics_steps_; }
  double time() const { return step_count_ * episode_.control_dt(); }
  bool done() const { return done_; }
  bool has_obstacle() const { return spec_.obstacle.has_value(); }

 private:
  std::vector<Observation> observe(Rng& rng);

  EpisodeConfig episode_;
  QuadrotorParams params_;
  NoiseModel noise_;
  RewardCoefficients reward_;
  CollisionModel collision_;
  SpawnConfig spawn_;

  ScenarioSpec spec_;
  CollisionDetector detector_;
  std::vector<QuadrotorState> states_;
  std::vector<Vec3> goals_;
  int step_count_ = 0;
  long physics_steps_ = 0;
  bool done_ = true;
};

}  // namespace quadswarm

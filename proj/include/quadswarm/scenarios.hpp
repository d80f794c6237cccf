#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "quadswarm/collision.hpp"
#include "quadswarm/quadrotor.hpp"

namespace quadswarm {

class KeyValueConfig;

enum class ScenarioKind {
  StaticFormation,
  SameGoal,
  ShrinkFormation,
  TeleportFormation,
  SwarmVsSwarm,
  PursuitLissajous,
  PursuitBezier,
};
inline constexpr int kNumScenarioKinds = 7;

enum class FormationShape { Grid2d, Circle, Cylinder, Cube };
inline constexpr int kNumFormationShapes = 4;

std::string to_string(ScenarioKind kind);
std::string to_string(FormationShape shape);
ScenarioKind parse_scenario_kind(const std::string& name);
FormationShape parse_formation_shape(const std::string& name);

/// The 10 x 10 x 10 m arena; the floor is z = 0 and the central axis is x = y = 0.
struct Room {
  static constexpr double half_width = 5.0;
  static constexpr double height = 10.0;
  static bool contains(const Vec3& p, double margin = 0.0) {
    return std::abs(p.x()) <= half_width - margin && std::abs(p.y()) <= half_width - margin &&
           p.z() >= margin && p.z() <= height - margin;
  }
  static Vec3 clamp(const Vec3& p, double margin = 0.0);
};

struct ObstaclePass {
  Vec3 entry = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();  // unit
  double start_time = 0.0;
  double duration = 0.0;
};

struct ObstacleSpec {
  double radius = 0.5;  // m
  double speed = 1.0;   // m/s
  std::vector<ObstaclePass> passes;
};

/// Where the obstacle waits between passes.
inline const Vec3 kParkedObstaclePosition{0.0, 0.0, 2.0 * Room::height};

struct EvaderTrajectory {
  enum class Kind { Lissajous, Bezier };
  Kind kind = Kind::Lissajous;

  // Lissajous: center + amplitude * sin(frequency * t + phase), per axis.
  Vec3 center = Vec3::Zero();
  Vec3 amplitude = Vec3::Zero();
  Vec3 frequency = Vec3::Zero();
  Vec3 phase = Vec3::Zero();

  // Bezier: 3 * segments + 1 control points, C1 across segment joints.
  std::vector<Vec3> control_points;
  double segment_duration = 1.0;

  Vec3 position(double t) const;
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::SameGoal;
  FormationShape shape = FormationShape::Grid2d;
  double separation = 0.0;          // m
  double episode_duration = 16.0;   // s
  std::vector<double> swap_times;   // s
  Vec3 formation_center{0.0, 0.0, 2.0};
  double shrink_min_separation = 0.15;
  std::vector<double> teleport_times;   // s, first entry is 0
  std::vector<Vec3> teleport_centers;
  Vec3 group_offset = Vec3::Zero();     // swarm-vs-swarm: group B center minus group A center
  std::optional<EvaderTrajectory> evader;
  std::optional<ObstacleSpec> obstacle;

  /// Throws std::invalid_argument when the structural invariants do not hold.
  void validate() const;
};

/// Generation ranges for scenario sampling.
struct ScenarioCatalog {
  std::array<double, kNumScenarioKinds> weights{1, 1, 1, 1, 1, 1, 1};
  double episode_duration = 16.0;
  double separation_max = 0.8;
  std::vector<double> swap_times{5.0, 10.0};
  double teleport_period = 4.0;
  double teleport_wall_margin = 1.5;
  double shrink_min_separation = 0.15;
  double group_distance_min = 1.0;
  double group_distance_max = 3.0;
  bool obstacles = false;
  double obstacle_radius_min = 0.3;
  double obstacle_radius_max = 0.8;
  double obstacle_speed_min = 1.0;
  double obstacle_speed_max = 3.0;
  int obstacle_passes = 3;

  /// One-hot catalog forcing a single kind.
  static ScenarioCatalog only(ScenarioKind kind);
  static ScenarioCatalog from_config(KeyValueConfig& cfg);
};

struct SpawnConfig {
  double radius = 3.0;       // m around the central axis
  double z_min = 0.25;
  double z_max = 2.0;
  double speed_max = 1.0;    // m/s
  double omega_max = 2.0;    // rad/s per axis
  bool random_orientation = true;

  static SpawnConfig from_config(KeyValueConfig& cfg);
};

ScenarioSpec sample_scenario(Rng& rng, int num_drones, const ScenarioCatalog& catalog);

/// Unit-separation goal offsets for a formation shape, centered on the origin.
std::vector<Vec3> formation_offsets(FormationShape shape, int num_drones);

/// Goal of every drone at time t. Throws std::out_of_range when t is outside
/// [0, episode_duration].
std::vector<Vec3> goals_at(const ScenarioSpec& spec, double t, int num_drones);

std::vector<QuadrotorState> spawn_states(Rng& rng, int num_drones, const QuadrotorParams& params,
                                         const SpawnConfig& spawn = {});

ObstacleState obstacle_state_at(const ObstacleSpec& spec, double t);

}  // namespace quadswarm

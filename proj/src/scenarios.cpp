#include "quadswarm/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "quadswarm/config.hpp"
#include "quadswarm/so3.hpp"

namespace quadswarm {

namespace {

constexpr std::array<const char*, kNumScenarioKinds> kKindNames = {
    "static-formation", "same-goal",      "shrink-formation", "teleport-formation",
    "swarm-vs-swarm",   "pursuit-lissajous", "pursuit-bezier"};

constexpr std::array<const char*, kNumFormationShapes> kShapeNames = {"grid2d", "circle",
                                                                      "cylinder", "cube"};

// Lowest allowed goal height.
constexpr double kGoalFloor = 0.5;

double chord_ring_radius(int count) {
  return count < 2 ? 0.0 : 0.5 / std::sin(std::numbers::pi / count);
}

int integer_cube_root_ceil(int n) {
  int s = 1;
  while (s * s * s < n) ++s;
  return s;
}

int integer_sqrt_ceil(int n) {
  int s = 1;
  while (s * s < n) ++s;
  return s;
}

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return pts.empty() ? c : Vec3(c / static_cast<double>(pts.size()));
}

int swaps_elapsed(const std::vector<double>& swap_times, double t) {
  return static_cast<int>(std::count_if(swap_times.begin(), swap_times.end(),
                                        [t](double s) { return s <= t; }));
}

// Center lifted so that the lowest goal of the formation sits above the floor margin.
Vec3 lifted(const Vec3& center, const std::vector<Vec3>& offsets, double separation) {
  double lowest = 0.0;
  for (const auto& o : offsets) lowest = std::min(lowest, o.z() * separation);
  Vec3 c = center;
  c.z() = std::max(c.z(), kGoalFloor - lowest);
  return c;
}

}  // namespace

std::string to_string(ScenarioKind kind) { return kKindNames[static_cast<int>(kind)]; }
std::string to_string(FormationShape shape) { return kShapeNames[static_cast<int>(shape)]; }

ScenarioKind parse_scenario_kind(const std::string& name) {
  for (int i = 0; i < kNumScenarioKinds; ++i) {
    if (name == kKindNames[i]) return static_cast<ScenarioKind>(i);
  }
  throw UsageError("unknown scenario kind '" + name + "'");
}

FormationShape parse_formation_shape(const std::string& name) {
  for (int i = 0; i < kNumFormationShapes; ++i) {
    if (name == kShapeNames[i]) return static_cast<FormationShape>(i);
  }
  throw UsageError("unknown formation shape '" + name + "'");
}

Vec3 Room::clamp(const Vec3& p, double margin) {
  return Vec3(std::clamp(p.x(), -half_width + margin, half_width - margin),
              std::clamp(p.y(), -half_width + margin, half_width - margin),
              std::clamp(p.z(), margin, height - margin));
}

Vec3 EvaderTrajectory::position(double t) const {
  if (kind == Kind::Lissajous) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p(k) = center(k) + amplitude(k) * std::sin(frequency(k) * t + phase(k));
    return p;
  }
  const int segments = static_cast<int>(control_points.size() - 1) / 3;
  int seg = static_cast<int>(std::floor(t / segment_duration));
  seg = std::clamp(seg, 0, segments - 1);
  const double u = std::clamp((t - seg * segment_duration) / segment_duration, 0.0, 1.0);
  const double w = 1.0 - u;
  const Vec3* c = &control_points[3 * seg];
  return w * w * w * c[0] + 3.0 * w * w * u * c[1] + 3.0 * w * u * u * c[2] + u * u * u * c[3];
}

void ScenarioSpec::validate() const {
  if (!(separation >= 0.0)) throw std::invalid_argument("scenario: separation must be >= 0");
  if ((kind == ScenarioKind::SameGoal) != (separation == 0.0)) {
    throw std::invalid_argument("scenario: separation is zero exactly for same-goal");
  }
  for (std::size_t i = 0; i < swap_times.size(); ++i) {
    if (swap_times[i] < 0.0 || swap_times[i] > episode_duration) {
      throw std::invalid_argument("scenario: swap time outside the episode");
    }
    if (i > 0 && !(swap_times[i] > swap_times[i - 1])) {
      throw std::invalid_argument("scenario: swap times must be strictly increasing");
    }
  }
  if (teleport_times.size() != teleport_centers.size()) {
    throw std::invalid_argument("scenario: teleport schedule mismatch");
  }
  if (kind == ScenarioKind::TeleportFormation && teleport_times.empty()) {
    throw std::invalid_argument("scenario: teleport formation without a schedule");
  }
  if ((kind == ScenarioKind::PursuitLissajous || kind == ScenarioKind::PursuitBezier) && !evader) {
    throw std::invalid_argument("scenario: pursuit without an evader");
  }
  if (obstacle && !(obstacle->radius > 0.0)) {
    throw std::invalid_argument("scenario: obstacle radius must be positive");
  }
}

ScenarioCatalog ScenarioCatalog::only(ScenarioKind kind) {
  ScenarioCatalog c;
  c.weights.fill(0.0);
  c.weights[static_cast<int>(kind)] = 1.0;
  return c;
}

ScenarioCatalog ScenarioCatalog::from_config(KeyValueConfig& cfg) {
  ScenarioCatalog c;
  const std::string forced = cfg.get_string("scenario", "mix");
  for (int i = 0; i < kNumScenarioKinds; ++i) {
    c.weights[i] = cfg.get_double(std::string("scenario_weight_") + kKindNames[i], c.weights[i]);
    if (c.weights[i] < 0.0) throw UsageError("scenario weights must be non-negative");
  }
  if (forced != "mix") {
    const auto kind = parse_scenario_kind(forced);
    c.weights.fill(0.0);
    c.weights[static_cast<int>(kind)] = 1.0;
  }
  c.episode_duration = cfg.get_double("episode_duration_s", c.episode_duration);
  c.separation_max = cfg.get_double("formation_separation_max_m", c.separation_max);
  c.swap_times = cfg.get_doubles("swap_times_s", c.swap_times);
  c.teleport_period = cfg.get_double("teleport_period_s", c.teleport_period);
  c.teleport_wall_margin = cfg.get_double("teleport_wall_margin_m", c.teleport_wall_margin);
  c.shrink_min_separation = cfg.get_double("shrink_min_separation_m", c.shrink_min_separation);
  c.group_distance_min = cfg.get_double("swap_group_distance_min_m", c.group_distance_min);
  c.group_distance_max = cfg.get_double("swap_group_distance_max_m", c.group_distance_max);
  c.obstacles = cfg.get_bool("obstacles", c.obstacles);
  c.obstacle_radius_min = cfg.get_double("obstacle_radius_min_m", c.obstacle_radius_min);
  c.obstacle_radius_max = cfg.get_double("obstacle_radius_max_m", c.obstacle_radius_max);
  c.obstacle_speed_min = cfg.get_double("obstacle_speed_min_mps", c.obstacle_speed_min);
  c.obstacle_speed_max = cfg.get_double("obstacle_speed_max_mps", c.obstacle_speed_max);
  c.obstacle_passes = static_cast<int>(cfg.get_int("obstacle_passes", c.obstacle_passes));
  double total = 0.0;
  for (double w : c.weights) total += w;
  if (!(total > 0.0)) throw UsageError("scenario weights sum to zero");
  return c;
}

SpawnConfig SpawnConfig::from_config(KeyValueConfig& cfg) {
  SpawnConfig s;
  s.radius = cfg.get_double("spawn_radius_m", s.radius);
  s.z_min = cfg.get_double("spawn_z_min_m", s.z_min);
  s.z_max = cfg.get_double("spawn_z_max_m", s.z_max);
  s.speed_max = cfg.get_double("spawn_speed_max_mps", s.speed_max);
  s.omega_max = cfg.get_double("spawn_omega_max_radps", s.omega_max);
  s.random_orientation = cfg.get_bool("spawn_random_orientation", s.random_orientation);
  if (s.radius < 0.0 || s.speed_max < 0.0 || s.omega_max < 0.0 || !(s.z_max >= s.z_min)) {
    throw UsageError("spawn settings need non-negative ranges and spawn_z_max_m >= spawn_z_min_m");
  }
  return s;
}

std::vector<Vec3> formation_offsets(FormationShape shape, int n) {
  std::vector<Vec3> out;
  out.reserve(n);
  switch (shape) {
    case FormationShape::Grid2d: {
      const int cols = integer_sqrt_ceil(n);
      const int rows = (n + cols - 1) / cols;
      for (int i = 0; i < n; ++i) {
        out.emplace_back((i % cols) - 0.5 * (cols - 1), (i / cols) - 0.5 * (rows - 1), 0.0);
      }
      break;
    }
    case FormationShape::Circle: {
      const double radius = chord_ring_radius(n);
      for (int i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * i / n;
        out.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
      }
      break;
    }
    case FormationShape::Cylinder: {
      const int layers = n >= 4 ? std::max(2, (n + 7) / 8) : 1;
      const int per_layer = (n + layers - 1) / layers;
      const double radius = chord_ring_radius(per_layer);
      for (int i = 0; i < n; ++i) {
        const int layer = i / per_layer;
        const double a = 2.0 * std::numbers::pi * (i % per_layer) / per_layer;
        out.emplace_back(radius * std::cos(a), radius * std::sin(a), layer - 0.5 * (layers - 1));
      }
      break;
    }
    case FormationShape::Cube: {
      const int side = integer_cube_root_ceil(n);
      const double mid = 0.5 * (side - 1);
      for (int i = 0; i < n; ++i) {
        out.emplace_back((i % side) - mid, ((i / side) % side) - mid, (i / (side * side)) - mid);
      }
      break;
    }
  }
  return out;
}

namespace {

EvaderTrajectory sample_lissajous(Rng& rng, double duration) {
  (void)duration;
  EvaderTrajectory e;
  e.kind = EvaderTrajectory::Kind::Lissajous;
  e.center = Vec3(0.0, 0.0, 2.5);
  e.amplitude = Vec3(uniform(rng, 1.0, 3.0), uniform(rng, 1.0, 3.0), uniform(rng, 0.3, 1.0));
  e.frequency = Vec3(uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8));
  e.phase = Vec3(uniform(rng, 0.0, 2.0 * std::numbers::pi), uniform(rng, 0.0, 2.0 * std::numbers::pi),
                 uniform(rng, 0.0, 2.0 * std::numbers::pi));
  return e;
}

EvaderTrajectory sample_bezier(Rng& rng, double duration) {
  constexpr int kSegments = 4;
  auto draw = [&rng]() {
    return Vec3(uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0), uniform(rng, 1.0, 4.0));
  };
  EvaderTrajectory e;
  e.kind = EvaderTrajectory::Kind::Bezier;
  e.segment_duration = duration / kSegments;
  e.control_points.push_back(draw());
  Vec3 c1 = draw();
  for (int s = 0; s < kSegments; ++s) {
    e.control_points.push_back(c1);
    const Vec3 c2 = draw();
    e.control_points.push_back(c2);
    if (s + 1 < kSegments) {
      // Joint at the midpoint of (c2, next c1) keeps the curve C1 and inside the box.
      c1 = draw();
      e.control_points.push_back(0.5 * (c2 + c1));
    } else {
      e.control_points.push_back(draw());
    }
  }
  return e;
}

ObstacleSpec sample_obstacle(Rng& rng, const ScenarioSpec& spec, int n,
                             const ScenarioCatalog& catalog) {
  ObstacleSpec o;
  o.radius = uniform(rng, catalog.obstacle_radius_min, catalog.obstacle_radius_max);
  o.speed = uniform(rng, catalog.obstacle_speed_min, catalog.obstacle_speed_max);
  const int passes = std::max(1, catalog.obstacle_passes);
  const double slot = spec.episode_duration / passes;
  for (int k = 0; k < passes; ++k) {
    ObstaclePass pass;
    pass.start_time = (k + 0.05) * slot;
    pass.duration = 0.9 * slot;
    const auto goals = goals_at(spec, pass.start_time, n);
    const Vec3 center = centroid(goals);
    double spread = 0.0;
    for (const auto& g : goals) spread = std::max(spread, (g - center).norm());

    Vec3 d;
    do {
      d = Vec3(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
    } while (d.norm() < 1e-9 || std::abs(d.normalized().z()) > 0.5);
    d.normalize();
    // Lateral miss distance stays inside the formation's bounding sphere.
    Vec3 lateral(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
    lateral -= lateral.dot(d) * d;
    if (lateral.norm() > 1e-12) lateral.normalize();
    lateral *= uniform(rng, 0.0, 0.5) * spread;

    const double length = o.speed * pass.duration;
    pass.direction = d;
    pass.entry = center + lateral - 0.5 * length * d;
    o.passes.push_back(pass);
  }
  return o;
}

}  // namespace

ScenarioSpec sample_scenario(Rng& rng, int num_drones, const ScenarioCatalog& catalog) {
  if (num_drones < 1) throw std::invalid_argument("sample_scenario: need at least one drone");
  std::discrete_distribution<int> pick(catalog.weights.begin(), catalog.weights.end());
  ScenarioSpec spec;
  spec.kind = static_cast<ScenarioKind>(pick(rng));
  spec.episode_duration = catalog.episode_duration;
  spec.shape = static_cast<FormationShape>(
      std::uniform_int_distribution<int>(0, kNumFormationShapes - 1)(rng));
  spec.separation = 0.0;
  if (spec.kind != ScenarioKind::SameGoal) {
    do {
      spec.separation = uniform(rng, 0.0, catalog.separation_max);
    } while (spec.separation == 0.0);
  }
  spec.shrink_min_separation = catalog.shrink_min_separation;
  spec.formation_center = lifted(Vec3(0.0, 0.0, 2.0), formation_offsets(spec.shape, num_drones),
                                 spec.separation);

  switch (spec.kind) {
    case ScenarioKind::TeleportFormation: {
      const double m = catalog.teleport_wall_margin;
      for (double t = 0.0; t < spec.episode_duration; t += catalog.teleport_period) {
        spec.teleport_times.push_back(t);
        spec.teleport_centers.emplace_back(uniform(rng, -Room::half_width + m, Room::half_width - m),
                                           uniform(rng, -Room::half_width + m, Room::half_width - m),
                                           uniform(rng, m, Room::height - m));
      }
      break;
    }
    case ScenarioKind::SwarmVsSwarm: {
      const double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double dist = uniform(rng, catalog.group_distance_min, catalog.group_distance_max);
      spec.group_offset = Vec3(std::cos(heading), std::sin(heading), 0.0) * dist;
      for (double s : catalog.swap_times) {
        if (s > 0.0 && s < spec.episode_duration) spec.swap_times.push_back(s);
      }
      break;
    }
    case ScenarioKind::PursuitLissajous:
      spec.evader = sample_lissajous(rng, spec.episode_duration);
      break;
    case ScenarioKind::PursuitBezier:
      spec.evader = sample_bezier(rng, spec.episode_duration);
      break;
    default:
      break;
  }
  if (catalog.obstacles) spec.obstacle = sample_obstacle(rng, spec, num_drones, catalog);
  spec.validate();
  return spec;
}

std::vector<Vec3> goals_at(const ScenarioSpec& spec, double t, int n) {
  if (!(t >= 0.0 && t <= spec.episode_duration)) {
    throw std::out_of_range("goals_at: time outside the episode");
  }
  std::vector<Vec3> goals(n);
  switch (spec.kind) {
    case ScenarioKind::SameGoal:
      std::fill(goals.begin(), goals.end(), spec.formation_center);
      break;
    case ScenarioKind::StaticFormation: {
      const auto offsets = formation_offsets(spec.shape, n);
      for (int i = 0; i < n; ++i) goals[i] = spec.formation_center + spec.separation * offsets[i];
      break;
    }
    case ScenarioKind::ShrinkFormation: {
      const double target = std::min(spec.separation, std::max(spec.shrink_min_separation, 0.0));
      const double sep = spec.separation + (target - spec.separation) * (t / spec.episode_duration);
      const auto offsets = formation_offsets(spec.shape, n);
      for (int i = 0; i < n; ++i) goals[i] = spec.formation_center + sep * offsets[i];
      break;
    }
    case ScenarioKind::TeleportFormation: {
      std::size_t k = 0;
      while (k + 1 < spec.teleport_times.size() && spec.teleport_times[k + 1] <= t) ++k;
      const auto offsets = formation_offsets(spec.shape, n);
      const Vec3 center = lifted(spec.teleport_centers[k], offsets, spec.separation);
      for (int i = 0; i < n; ++i) goals[i] = center + spec.separation * offsets[i];
      break;
    }
    case ScenarioKind::SwarmVsSwarm: {
      const int group_a = n / 2;
      const int group_b = n - group_a;
      const auto off_a = formation_offsets(spec.shape, group_a);
      const auto off_b = formation_offsets(spec.shape, group_b);
      const Vec3 center_a = spec.formation_center - 0.5 * spec.group_offset;
      const Vec3 center_b = spec.formation_center + 0.5 * spec.group_offset;
      for (int i = 0; i < group_a; ++i) goals[i] = center_a + spec.separation * off_a[i];
      for (int j = 0; j < group_b; ++j) goals[group_a + j] = center_b + spec.separation * off_b[j];
      if (swaps_elapsed(spec.swap_times, t) % 2 == 1) {
        for (int i = 0; i < group_a; ++i) std::swap(goals[i], goals[group_a + i]);
      }
      break;
    }
    case ScenarioKind::PursuitLissajous:
    case ScenarioKind::PursuitBezier: {
      const Vec3 target = spec.evader->position(t);
      std::fill(goals.begin(), goals.end(), target);
      break;
    }
  }
  for (auto& g : goals) g = Room::clamp(g);
  return goals;
}

std::vector<QuadrotorState> spawn_states(Rng& rng, int n, const QuadrotorParams& params,
                                         const SpawnConfig& spawn) {
  if (n < 1) throw std::invalid_argument("spawn_states: need at least one drone");
  const double min_gap = 2.0 * params.collision_radius;
  std::vector<QuadrotorState> states;
  states.reserve(n);
  for (int i = 0; i < n; ++i) {
    QuadrotorState s;
    bool clear = false;
    for (int attempt = 0; attempt < 10000 && !clear; ++attempt) {
      const double r = spawn.radius * std::sqrt(uniform(rng, 0.0, 1.0));
      const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      s.p = Vec3(r * std::cos(a), r * std::sin(a), uniform(rng, spawn.z_min, spawn.z_max));
      clear = std::all_of(states.begin(), states.end(),
                          [&](const QuadrotorState& o) { return (o.p - s.p).norm() >= min_gap; });
    }
    if (!clear) throw std::runtime_error("spawn_states: could not place drones without overlap");
    s.R = spawn.random_orientation ? random_rotation(rng) : Mat3::Identity();
    Vec3 dir(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
    if (dir.norm() > 1e-12) dir.normalize();
    s.v = dir * uniform(rng, 0.0, spawn.speed_max);
    for (int k = 0; k < 3; ++k) s.omega(k) = uniform(rng, -spawn.omega_max, spawn.omega_max);
    s.motor_thrust = Vec4::Constant(params.mass * kGravity / 4.0);
    states.push_back(s);
  }
  return states;
}

ObstacleState obstacle_state_at(const ObstacleSpec& spec, double t) {
  ObstacleState out;
  out.radius = spec.radius;
  for (const auto& pass : spec.passes) {
    if (t >= pass.start_time && t <= pass.start_time + pass.duration) {
      out.active = true;
      out.velocity = pass.direction * spec.speed;
      out.position = pass.entry + out.velocity * (t - pass.start_time);
      return out;
    }
  }
  out.position = kParkedObstaclePosition;
  return out;
}

}  // namespace quadswarm

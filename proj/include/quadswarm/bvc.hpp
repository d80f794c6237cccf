#pragma once

#include <span>
#include <vector>

#include "quadswarm/env.hpp"
#include "quadswarm/quadrotor.hpp"

namespace quadswarm {

class KeyValueConfig;

/// n . x <= b
struct HalfSpace {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;

  double slack(const Vec3& x) const { return offset - normal.dot(x); }
};

struct BufferedVoronoiCell {
  Vec3 anchor = Vec3::Zero();  // owner position, strictly interior
  std::vector<HalfSpace> half_spaces;

  bool contains(const Vec3& x, double tol = 0.0) const;
  double max_violation(const Vec3& x) const;
};

struct BvcConfig {
  double safety_radius = 0.15;      // m
  Vec3 kp{6.0, 6.0, 6.0};
  Vec3 ki{0.0, 0.0, 0.0};
  Vec3 kd{4.5, 4.5, 4.5};
  double attitude_p = 20.0;         // 1/s, attitude error -> rate command
  double rate_p = 25.0;             // 1/s, rate error -> angular acceleration
  double max_tilt = 35.0 * 3.14159265358979323846 / 180.0;
  double max_speed = 1.0;           // m/s
  double integral_limit = 1.0;      // m s
  double deadlock_speed = 0.05;     // m/s
  double deadlock_offset = 0.5;     // m, sideways goal shift when stuck
  double lag_compensation = 1.0;    // 0 = none, 1 = reach the desired thrust in one control step

  void validate(const QuadrotorParams& params) const;
  static BvcConfig from_config(KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;
};

/// Bisector half-space per neighbor, shifted `safety_radius` toward the owner.
/// Throws std::invalid_argument on coincident positions.
BufferedVoronoiCell compute_cell(const Vec3& self, std::span<const Vec3> neighbors,
                                 double safety_radius);

/// Euclidean projection onto the cell by cyclic Dykstra iterations. If the
/// iteration budget leaves a residual violation, the result is pulled toward
/// the anchor until every half-space holds.
Vec3 project_to_cell(const BufferedVoronoiCell& cell, const Vec3& goal, int max_iterations = 100,
                     double tolerance = 1e-8);

struct PidState {
  Vec3 integral = Vec3::Zero();
  Vec4 thrust_estimate = Vec4::Constant(-1.0);  // N per motor; negative = not yet seeded
};

/// Cascaded position/attitude controller toward `target`; returns motor
/// command fractions in [0, 1]. The controller runs the motor-lag model on
/// its own commands and leads them so the lagged thrust tracks the mixer output.
Vec4 pid_control(const QuadrotorState& state, const Vec3& target, const QuadrotorParams& params,
                 const BvcConfig& config, PidState& pid, double dt);

/// Per-drone BVC planner plus PID tracking, driven by observations only.
/// Works in each drone's goal-relative frame: own position is `self[0:3]`,
/// the goal is the origin.
class BvcController {
 public:
  BvcController(int num_drones, QuadrotorParams params, BvcConfig config, double control_dt);

  /// Raw actions in [-1, 1] (the inverse of map_action) for every drone.
  std::vector<Vec4> act(std::span<const Observation> observations);

  /// Last planned target per drone, goal-relative.
  const std::vector<Vec3>& targets() const { return targets_; }
  void reset();

 private:
  QuadrotorParams params_;
  BvcConfig config_;
  double dt_;
  std::vector<PidState> pid_;
  std::vector<Vec3> targets_;
};

}  // namespace quadswarm

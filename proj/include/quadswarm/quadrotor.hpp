#pragma once

#include "quadswarm/common.hpp"

namespace quadswarm {

class KeyValueConfig;

/// Physical constants of one airframe. Defaults describe a Crazyflie-class
/// nano quadrotor.
struct QuadrotorParams {
  double mass = 0.028;                          // kg
  Vec3 inertia_diag{1.4e-5, 1.4e-5, 2.2e-5};    // kg m^2
  double arm_length = 0.046;                    // m, center to motor
  double max_thrust_per_motor = 0.13;           // N
  double motor_lag_tau = 0.06;                  // s
  double yaw_torque_coeff = 0.006;              // m, reaction torque per unit thrust
  double collision_radius = 0.05;               // m
  double thrust_noise_frac = 0.025;             // relative std of thrust noise
  double max_body_rate = 40.0;                  // rad/s per axis, gyro/ESC saturation

  /// Throws UsageError if a value is non-physical or the airframe cannot hover.
  void validate() const;

  /// Per-motor command fraction that exactly cancels gravity.
  double hover_fraction() const { return mass * kGravity / (4.0 * max_thrust_per_motor); }

  static QuadrotorParams from_config(KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;
};

struct QuadrotorState {
  Vec3 p = Vec3::Zero();               // world position, m
  Vec3 v = Vec3::Zero();               // world velocity, m/s
  Mat3 R = Mat3::Identity();           // body -> world
  Vec3 omega = Vec3::Zero();           // body rates, rad/s
  Vec4 motor_thrust = Vec4::Zero();    // lagged per-motor thrust, N
};

/// Sensor corruption applied to states before they reach a controller.
struct NoiseModel {
  double pos_sigma = 0.005;                  // m
  double vel_sigma = 0.01;                   // m/s
  double orient_sigma = 0.5 * 3.14159265358979323846 / 180.0;  // rad
  bool enabled = true;

  static NoiseModel from_config(KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;
};

/// Maps a raw policy action to motor command fractions, f = (clip(a,-1,1)+1)/2.
/// Throws NumericalError on non-finite input.
Vec4 map_action(const Vec4& action);

/// Body-frame motor positions (x, y) for the X configuration, one column per motor.
Eigen::Matrix<double, 2, 4> motor_positions(const QuadrotorParams& params);

/// Rotor spin signs for reaction torque: +1 for a motor producing positive yaw torque.
Vec4 rotor_yaw_signs();

/// Linear map from per-motor thrusts to (collective thrust, tau_x, tau_y, tau_z).
Mat4 mixer_matrix(const QuadrotorParams& params);

/// Advances one physics step: first-order motor lag toward f * max_thrust,
/// multiplicative thrust noise, rigid-body translation (semi-implicit Euler)
/// and rotation (Euler's equations, exponential-map attitude update). Body
/// rates saturate at `max_body_rate` per axis.
QuadrotorState step_dynamics(const QuadrotorState& state, const Vec4& f,
                             const QuadrotorParams& params, double dt, Rng& rng);

/// Returns a copy of `state` as seen through the noise model.
QuadrotorState sense(const QuadrotorState& state, const NoiseModel& noise, Rng& rng);

/// Translational plus rotational kinetic energy and gravitational potential energy.
double mechanical_energy(const QuadrotorState& state, const QuadrotorParams& params);

}  // namespace quadswarm

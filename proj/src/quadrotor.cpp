#include "quadswarm/quadrotor.hpp"

#include <cmath>

#include "quadswarm/config.hpp"
#include "quadswarm/so3.hpp"

namespace quadswarm {

void QuadrotorParams::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw UsageError(std::string("quadrotor parameter '") + name + "' must be positive");
    }
  };
  positive(mass, "mass_kg");
  positive(inertia_diag.x(), "inertia_x_kg_m2");
  positive(inertia_diag.y(), "inertia_y_kg_m2");
  positive(inertia_diag.z(), "inertia_z_kg_m2");
  positive(arm_length, "arm_length_m");
  positive(max_thrust_per_motor, "max_thrust_per_motor_n");
  positive(motor_lag_tau, "motor_lag_tau_s");
  positive(yaw_torque_coeff, "yaw_torque_coeff_m");
  positive(collision_radius, "collision_radius_m");
  positive(max_body_rate, "max_body_rate_radps");
  if (!(thrust_noise_frac >= 0.0) || !std::isfinite(thrust_noise_frac)) {
    throw UsageError("quadrotor parameter 'thrust_noise_frac' must be non-negative");
  }
  if (!(4.0 * max_thrust_per_motor > mass * kGravity)) {
    throw UsageError("quadrotor cannot hover: 4 * max_thrust_per_motor_n <= mass_kg * g");
  }
}

QuadrotorParams QuadrotorParams::from_config(KeyValueConfig& cfg) {
  QuadrotorParams p;
  p.mass = cfg.get_double("mass_kg", p.mass);
  p.inertia_diag.x() = cfg.get_double("inertia_x_kg_m2", p.inertia_diag.x());
  p.inertia_diag.y() = cfg.get_double("inertia_y_kg_m2", p.inertia_diag.y());
  p.inertia_diag.z() = cfg.get_double("inertia_z_kg_m2", p.inertia_diag.z());
  p.arm_length = cfg.get_double("arm_length_m", p.arm_length);
  p.max_thrust_per_motor = cfg.get_double("max_thrust_per_motor_n", p.max_thrust_per_motor);
  p.motor_lag_tau = cfg.get_double("motor_lag_tau_s", p.motor_lag_tau);
  p.yaw_torque_coeff = cfg.get_double("yaw_torque_coeff_m", p.yaw_torque_coeff);
  p.collision_radius = cfg.get_double("collision_radius_m", p.collision_radius);
  p.thrust_noise_frac = cfg.get_double("thrust_noise_frac", p.thrust_noise_frac);
  p.max_body_rate = cfg.get_double("max_body_rate_radps", p.max_body_rate);
  p.validate();
  return p;
}

void QuadrotorParams::to_config(KeyValueConfig& cfg) const {
  cfg.put_double("mass_kg", mass);
  cfg.put_double("inertia_x_kg_m2", inertia_diag.x());
  cfg.put_double("inertia_y_kg_m2", inertia_diag.y());
  cfg.put_double("inertia_z_kg_m2", inertia_diag.z());
  cfg.put_double("arm_length_m", arm_length);
  cfg.put_double("max_thrust_per_motor_n", max_thrust_per_motor);
  cfg.put_double("motor_lag_tau_s", motor_lag_tau);
  cfg.put_double("yaw_torque_coeff_m", yaw_torque_coeff);
  cfg.put_double("collision_radius_m", collision_radius);
  cfg.put_double("thrust_noise_frac", thrust_noise_frac);
  cfg.put_double("max_body_rate_radps", max_body_rate);
}

NoiseModel NoiseModel::from_config(KeyValueConfig& cfg) {
  NoiseModel n;
  n.enabled = cfg.get_bool("sensor_noise_enabled", n.enabled);
  n.pos_sigma = cfg.get_double("sensor_pos_sigma_m", n.pos_sigma);
  n.vel_sigma = cfg.get_double("sensor_vel_sigma_mps", n.vel_sigma);
  n.orient_sigma = cfg.get_double("sensor_orient_sigma_rad", n.orient_sigma);
  if (n.pos_sigma < 0 || n.vel_sigma < 0 || n.orient_sigma < 0) {
    throw UsageError("sensor noise sigmas must be non-negative");
  }
  return n;
}

void NoiseModel::to_config(KeyValueConfig& cfg) const {
  cfg.put_bool("sensor_noise_enabled", enabled);
  cfg.put_double("sensor_pos_sigma_m", pos_sigma);
  cfg.put_double("sensor_vel_sigma_mps", vel_sigma);
  cfg.put_double("sensor_orient_sigma_rad", orient_sigma);
}

Vec4 map_action(const Vec4& action) {
  if (!action.allFinite()) throw NumericalError("map_action: non-finite action");
  return 0.5 * (action.cwiseMax(-1.0).cwiseMin(1.0).array() + 1.0).matrix();
}

Eigen::Matrix<double, 2, 4> motor_positions(const QuadrotorParams& params) {
  const double d = params.arm_length / std::sqrt(2.0);
  Eigen::Matrix<double, 2, 4> pos;
  // front-right, back-right, back-left, front-left
  pos << d, -d, -d, d,
        -d, -d, d, d;
  return pos;
}

Vec4 rotor_yaw_signs() { return Vec4(-1.0, 1.0, -1.0, 1.0); }

Mat4 mixer_matrix(const QuadrotorParams& params) {
  const auto pos = motor_positions(params);
  const Vec4 signs = rotor_yaw_signs();
  Mat4 m;
  for (int i = 0; i < 4; ++i) {
    m(0, i) = 1.0;
    m(1, i) = pos(1, i);   // tau_x = y * f
    m(2, i) = -pos(0, i);  // tau_y = -x * f
    m(3, i) = params.yaw_torque_coeff * signs(i);
  }
  return m;
}

QuadrotorState step_dynamics(const QuadrotorState& state, const Vec4& f,
                             const QuadrotorParams& params, double dt, Rng& rng) {
  QuadrotorState next = state;

  const double blend = 1.0 - std::exp(-dt / params.motor_lag_tau);
  const Vec4 commanded = f.cwiseMax(0.0).cwiseMin(1.0) * params.max_thrust_per_motor;
  next.motor_thrust = (state.motor_thrust + blend * (commanded - state.motor_thrust))
                          .cwiseMax(0.0)
                          .cwiseMin(params.max_thrust_per_motor);

  Vec4 applied = next.motor_thrust;
  if (params.thrust_noise_frac > 0.0) {
    for (int i = 0; i < 4; ++i) {
      applied(i) = std::max(0.0, applied(i) * (1.0 + gaussian(rng, params.thrust_noise_frac)));
    }
  }

  const Vec4 wrench = mixer_matrix(params) * applied;
  const Vec3 torque = wrench.tail<3>();

  const Vec3 force = state.R.col(2) * wrench(0) + Vec3(0.0, 0.0, -params.mass * kGravity);
  next.v = state.v + force / params.mass * dt;
  next.p = state.p + next.v * dt;

  const Vec3& J = params.inertia_diag;
  // Gyroscopic term taken at the new rate, linearized around the old one:
  // (J + dt [w]x J) w' = J w + dt tau. Explicit Euler diverges at high spin.
  const Mat3 Jm = J.asDiagonal();
  const Mat3 lhs = Jm + dt * hat<double>(state.omega) * Jm;
  next.omega = lhs.partialPivLu()
                   .solve(J.cwiseProduct(state.omega) + dt * torque)
                   .cwiseMax(-params.max_body_rate)
                   .cwiseMin(params.max_body_rate);

  next.R = reorthonormalize<double>(state.R * so3_exp<double>(next.omega * dt));
  return next;
}

QuadrotorState sense(const QuadrotorState& state, const NoiseModel& noise, Rng& rng) {
  if (!noise.enabled) return state;
  QuadrotorState out = state;
  for (int k = 0; k < 3; ++k) out.p(k) += gaussian(rng, noise.pos_sigma);
  for (int k = 0; k < 3; ++k) out.v(k) += gaussian(rng, noise.vel_sigma);
  Vec3 tilt;
  for (int k = 0; k < 3; ++k) tilt(k) = gaussian(rng, noise.orient_sigma);
  out.R = reorthonormalize<double>(state.R * so3_exp<double>(tilt));
  return out;
}

double mechanical_energy(const QuadrotorState& state, const QuadrotorParams& params) {
  const double kinetic = 0.5 * params.mass * state.v.squaredNorm();
  const double rotational = 0.5 * state.omega.dot(params.inertia_diag.cwiseProduct(state.omega));
  return kinetic + rotational + params.mass * kGravity * state.p.z();
}

}  // namespace quadswarm

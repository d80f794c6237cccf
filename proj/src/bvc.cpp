#include "quadswarm/bvc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "quadswarm/config.hpp"
#include "quadswarm/so3.hpp"

namespace quadswarm {

bool BufferedVoronoiCell::contains(const Vec3& x, double tol) const {
  return max_violation(x) <= tol;
}

double BufferedVoronoiCell::max_violation(const Vec3& x) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& h : half_spaces) worst = std::max(worst, -h.slack(x));
  return half_spaces.empty() ? 0.0 : worst;
}

void BvcConfig::validate(const QuadrotorParams& params) const {
  if (safety_radius < params.collision_radius) {
    throw UsageError("bvc_safety_radius_m must be at least the collision radius");
  }
  if ((kp.array() < 0.0).any() || (ki.array() < 0.0).any() || (kd.array() <= 0.0).any() ||
      attitude_p < 0.0 || rate_p < 0.0) {
    throw UsageError("bvc gains must be non-negative (kd positive)");
  }
  if (!(max_tilt > 0.0 && max_tilt < 1.5)) throw UsageError("bvc_max_tilt_rad must lie in (0, 1.5)");
  if (!(max_speed > 0.0)) throw UsageError("bvc_max_speed_mps must be positive");
  if (!(lag_compensation >= 0.0 && lag_compensation <= 1.0)) {
    throw UsageError("bvc_lag_compensation must lie in [0, 1]");
  }
}

namespace {

Vec3 read_vec3(KeyValueConfig& cfg, const std::string& key, const Vec3& fallback) {
  const auto v = cfg.get_doubles(key, {fallback.x(), fallback.y(), fallback.z()});
  if (v.size() != 3) throw UsageError(key + " needs three comma-separated values");
  return {v[0], v[1], v[2]};
}

}  // namespace

BvcConfig BvcConfig::from_config(KeyValueConfig& cfg) {
  BvcConfig c;
  c.safety_radius = cfg.get_double("bvc_safety_radius_m", c.safety_radius);
  c.kp = read_vec3(cfg, "bvc_kp", c.kp);
  c.ki = read_vec3(cfg, "bvc_ki", c.ki);
  c.kd = read_vec3(cfg, "bvc_kd", c.kd);
  c.attitude_p = cfg.get_double("bvc_attitude_p", c.attitude_p);
  c.rate_p = cfg.get_double("bvc_rate_p", c.rate_p);
  c.max_tilt = cfg.get_double("bvc_max_tilt_rad", c.max_tilt);
  c.max_speed = cfg.get_double("bvc_max_speed_mps", c.max_speed);
  c.deadlock_speed = cfg.get_double("bvc_deadlock_speed_mps", c.deadlock_speed);
  c.deadlock_offset = cfg.get_double("bvc_deadlock_offset_m", c.deadlock_offset);
  c.lag_compensation = cfg.get_double("bvc_lag_compensation", c.lag_compensation);
  return c;
}

void BvcConfig::to_config(KeyValueConfig& cfg) const {
  cfg.put_double("bvc_safety_radius_m", safety_radius);
  cfg.put_doubles("bvc_kp", {kp.x(), kp.y(), kp.z()});
  cfg.put_doubles("bvc_ki", {ki.x(), ki.y(), ki.z()});
  cfg.put_doubles("bvc_kd", {kd.x(), kd.y(), kd.z()});
  cfg.put_double("bvc_attitude_p", attitude_p);
  cfg.put_double("bvc_rate_p", rate_p);
  cfg.put_double("bvc_max_tilt_rad", max_tilt);
  cfg.put_double("bvc_max_speed_mps", max_speed);
  cfg.put_double("bvc_deadlock_speed_mps", deadlock_speed);
  cfg.put_double("bvc_deadlock_offset_m", deadlock_offset);
  cfg.put_double("bvc_lag_compensation", lag_compensation);
}

BufferedVoronoiCell compute_cell(const Vec3& self, std::span<const Vec3> neighbors,
                                 double safety_radius) {
  BufferedVoronoiCell cell;
  cell.anchor = self;
  for (const Vec3& other : neighbors) {
    const Vec3 d = other - self;
    const double dist = d.norm();
    if (!(dist > 0.0)) throw std::invalid_argument("compute_cell: coincident positions");
    HalfSpace h;
    h.normal = d / dist;
    h.offset = h.normal.dot(0.5 * (self + other)) - safety_radius;
    cell.half_spaces.push_back(h);
  }
  return cell;
}

Vec3 project_to_cell(const BufferedVoronoiCell& cell, const Vec3& goal, int max_iterations,
                     double tolerance) {
  const auto& hs = cell.half_spaces;
  if (hs.empty() || cell.contains(goal)) return goal;
  Vec3 x = goal;
  std::vector<Vec3> corrections(hs.size(), Vec3::Zero());
  for (int it = 0; it < max_iterations; ++it) {
    const Vec3 start = x;
    for (std::size_t k = 0; k < hs.size(); ++k) {
      const Vec3 y = x + corrections[k];
      const double excess = hs[k].normal.dot(y) - hs[k].offset;
      const Vec3 projected = excess > 0.0 ? Vec3(y - excess * hs[k].normal) : y;
      corrections[k] = y - projected;
      x = projected;
    }
    if ((x - start).norm() < tolerance) break;
  }
  if (cell.max_violation(x) > 0.0) {
    // Pull toward the anchor, which satisfies every constraint with slack.
    double scale = 1.0;
    for (const auto& h : hs) {
      const double at_x = h.slack(x);
      if (at_x >= 0.0) continue;
      const double at_anchor = h.slack(cell.anchor);
      scale = std::min(scale, at_anchor / (at_anchor - at_x));
    }
    x = cell.anchor + scale * (x - cell.anchor);
    // Rounding in the blend can leave a residue of a few ulps.
    for (int guard = 0; guard < 4 && cell.max_violation(x) > 0.0; ++guard) {
      x = cell.anchor + (1.0 - 1e-12) * (x - cell.anchor);
    }
  }
  return x;
}

Vec4 pid_control(const QuadrotorState& state, const Vec3& target, const QuadrotorParams& params,
                 const BvcConfig& config, PidState& pid, double dt) {
  const Vec3 error = target - state.p;
  pid.integral = (pid.integral + error * dt)
                     .cwiseMax(-Vec3::Constant(config.integral_limit))
                     .cwiseMin(Vec3::Constant(config.integral_limit));

  // Outer loop: position error -> capped velocity command -> acceleration.
  Vec3 v_cmd = config.kp.cwiseQuotient(config.kd).cwiseProduct(error);
  const double speed = v_cmd.norm();
  if (speed > config.max_speed) v_cmd *= config.max_speed / speed;
  Vec3 accel = config.kd.cwiseProduct(v_cmd - state.v) + config.ki.cwiseProduct(pid.integral);
  accel.z() += kGravity;
  accel.z() = std::max(accel.z(), 0.1 * kGravity);
  const double horizontal = accel.head<2>().norm();
  const double horizontal_max = std::tan(config.max_tilt) * accel.z();
  if (horizontal > horizontal_max) accel.head<2>() *= horizontal_max / horizontal;

  // Desired attitude: body z along the acceleration, zero yaw.
  const Vec3 z_des = accel.normalized();
  Vec3 y_des = z_des.cross(Vec3::UnitX());
  if (y_des.norm() < 1e-6) y_des = Vec3::UnitY();
  y_des.normalize();
  const Vec3 x_des = y_des.cross(z_des);
  Mat3 R_des;
  R_des << x_des, y_des, z_des;

  const double collective = params.mass * accel.dot(state.R.col(2));

  // Inner loop: attitude error -> rate command -> torque.
  const Mat3 E = 0.5 * (R_des.transpose() * state.R - state.R.transpose() * R_des);
  const Vec3 e_R(E(2, 1), E(0, 2), E(1, 0));
  const Vec3 omega_cmd = -config.attitude_p * e_R;
  const Vec3& J = params.inertia_diag;
  const Vec3 torque = J.cwiseProduct(config.rate_p * (omega_cmd - state.omega)) +
                      state.omega.cross(J.cwiseProduct(state.omega));

  Vec4 wrench;
  wrench << std::max(collective, 0.0), torque;
  const Vec4 desired = mixer_matrix(params).partialPivLu().solve(wrench);

  const double blend = 1.0 - std::exp(-dt / params.motor_lag_tau);
  if ((pid.thrust_estimate.array() < 0.0).any()) pid.thrust_estimate = desired.cwiseMax(0.0);
  const double lead = 1.0 + config.lag_compensation * (1.0 / blend - 1.0);
  const Vec4 command = pid.thrust_estimate + lead * (desired - pid.thrust_estimate);
  const Vec4 f = (command / params.max_thrust_per_motor).cwiseMax(0.0).cwiseMin(1.0);
  pid.thrust_estimate += blend * (f * params.max_thrust_per_motor - pid.thrust_estimate);
  return f;
}

BvcController::BvcController(int num_drones, QuadrotorParams params, BvcConfig config,
                             double control_dt)
    : params_(params), config_(config), dt_(control_dt) {
  config_.validate(params_);
  pid_.resize(num_drones);
  targets_.assign(num_drones, Vec3::Zero());
}

void BvcController::reset() {
  for (auto& p : pid_) p = PidState{};
  for (auto& t : targets_) t.setZero();
}

std::vector<Vec4> BvcController::act(std::span<const Observation> observations) {
  if (observations.size() != pid_.size()) {
    throw std::invalid_argument("BvcController: one observation per drone required");
  }
  std::vector<Vec4> actions(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Observation& o = observations[i];
    QuadrotorState s;
    s.p = o.self.segment<3>(0);  // goal-relative
    s.v = o.self.segment<3>(3);
    for (int r = 0; r < 3; ++r) s.R.row(r) = o.self.segment<3>(6 + 3 * r).transpose();
    s.omega = o.self.segment<3>(15);

    std::vector<Vec3> others;
    for (Eigen::Index j = 0; j < o.neighbors.rows(); ++j) {
      others.push_back(s.p + o.neighbors.row(j).head<3>().transpose());
    }
    const BufferedVoronoiCell cell = compute_cell(s.p, others, config_.safety_radius);
    Vec3 goal = Vec3::Zero();
    Vec3 target = project_to_cell(cell, goal);

    // Right-hand rule: blocked and nearly stopped, slide the goal to the right
    // of the tightest constraint so symmetric encounters do not stall.
    if ((target - goal).norm() > 1e-3 && s.v.norm() < config_.deadlock_speed && s.p.norm() > 0.1) {
      const HalfSpace* tightest = nullptr;
      for (const auto& h : cell.half_spaces) {
        if (tightest == nullptr || h.slack(s.p) < tightest->slack(s.p)) tightest = &h;
      }
      Vec3 right = tightest->normal.cross(Vec3::UnitZ());
      if (right.norm() > 1e-6) {
        goal += config_.deadlock_offset * right.normalized();
        target = project_to_cell(cell, goal);
      }
    }
    targets_[i] = target;
    const Vec4 f = pid_control(s, target, params_, config_, pid_[i], dt_);
    actions[i] = 2.0 * f - Vec4::Ones();
  }
  return actions;
}

}  // namespace quadswarm

#include "quadswarm/collision.hpp"

#include <cmath>

namespace quadswarm {

std::string to_string(CollisionKind kind) {
  switch (kind) {
    case CollisionKind::DroneDrone: return "drone-drone";
    case CollisionKind::DroneGround: return "drone-ground";
    case CollisionKind::DroneObstacle: return "drone-obstacle";
  }
  return "unknown";
}

CollisionDetector::CollisionDetector(int num_drones, double hysteresis)
    : n_(num_drones),
      hysteresis_(hysteresis),
      pair_contact_(static_cast<std::size_t>(num_drones) * num_drones, 0),
      ground_contact_(num_drones, 0),
      obstacle_contact_(num_drones, 0) {}

void CollisionDetector::reset() {
  std::fill(pair_contact_.begin(), pair_contact_.end(), 0);
  std::fill(ground_contact_.begin(), ground_contact_.end(), 0);
  std::fill(obstacle_contact_.begin(), obstacle_contact_.end(), 0);
}

std::vector<CollisionEvent> CollisionDetector::detect(std::span<const QuadrotorState> states,
                                                      const QuadrotorParams& params,
                                                      const ObstacleState* obstacle,
                                                      double time) {
  const int n = static_cast<int>(states.size());
  if (n != n_) throw std::invalid_argument("CollisionDetector: drone count changed");
  std::vector<CollisionEvent> events;

  const double pair_threshold = 2.0 * params.collision_radius;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = (states[i].p - states[j].p).norm();
      char& in_contact = pair_contact_[static_cast<std::size_t>(i) * n + j];
      if (d < pair_threshold) {
        if (!in_contact) events.push_back({CollisionKind::DroneDrone, i, j, time});
        in_contact = 1;
      } else if (d > hysteresis_ * pair_threshold) {
        in_contact = 0;
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    const double z = states[i].p.z();
    if (z < params.collision_radius) {
      if (!ground_contact_[i]) events.push_back({CollisionKind::DroneGround, i, -1, time});
      ground_contact_[i] = 1;
    } else if (z > hysteresis_ * params.collision_radius) {
      ground_contact_[i] = 0;
    }
  }

  if (obstacle != nullptr) {
    const double threshold = params.collision_radius + obstacle->radius;
    for (int i = 0; i < n; ++i) {
      const double d = (states[i].p - obstacle->position).norm();
      if (obstacle->active && d < threshold) {
        if (!obstacle_contact_[i]) events.push_back({CollisionKind::DroneObstacle, i, 0, time});
        obstacle_contact_[i] = 1;
      } else if (!obstacle->active || d > hysteresis_ * threshold) {
        obstacle_contact_[i] = 0;
      }
    }
  }
  return events;
}

namespace {

Vec3 random_unit_vector(Rng& rng) {
  Vec3 u;
  do {
    for (int k = 0; k < 3; ++k) u(k) = gaussian(rng, 1.0);
  } while (u.norm() < 1e-12);
  return u.normalized();
}

Vec3 random_box(Rng& rng, double half_width) {
  return Vec3(uniform(rng, -half_width, half_width), uniform(rng, -half_width, half_width),
              uniform(rng, -half_width, half_width));
}

// Body-rate change produced by a world-frame angular impulse.
Vec3 body_rate_change(const QuadrotorState& s, const QuadrotorParams& params,
                      const Vec3& angular_impulse) {
  return (s.R.transpose() * angular_impulse).cwiseQuotient(params.inertia_diag);
}

}  // namespace

std::pair<QuadrotorState, QuadrotorState> resolve_drone_pair(const QuadrotorState& a,
                                                             const QuadrotorState& b,
                                                             const QuadrotorParams& params,
                                                             const CollisionModel& model,
                                                             Rng& rng) {
  const Vec3 offset = a.p - b.p;
  const Vec3 normal = offset.norm() > 1e-12 ? Vec3(offset.normalized()) : random_unit_vector(rng);
  const double rel_speed = (a.v - b.v).norm();
  const double scale = uniform(rng, model.impulse_scale_min, model.impulse_scale_max);
  const double magnitude = std::max(model.impulse_floor, scale * params.mass * rel_speed);
  const Vec3 angular = random_box(rng, model.torque_impulse_max);

  QuadrotorState a2 = a;
  QuadrotorState b2 = b;
  a2.v += normal * (magnitude / params.mass);
  b2.v -= normal * (magnitude / params.mass);
  a2.omega += body_rate_change(a, params, angular);
  b2.omega -= body_rate_change(b, params, angular);
  return {a2, b2};
}

QuadrotorState resolve_ground(const QuadrotorState& state, const QuadrotorParams& params,
                              const CollisionModel& model, Rng& rng) {
  QuadrotorState out = state;
  if (out.p.z() < params.collision_radius) out.p.z() = params.collision_radius;
  const double vz = state.v.z();
  if (vz < 0.0) {
    out.v.x() *= model.ground_tangential_damping;
    out.v.y() *= model.ground_tangential_damping;
    out.v.z() = -model.ground_restitution * vz;
    const Vec3 angular = random_box(rng, model.ground_torque_per_speed * -vz);
    out.omega += body_rate_change(state, params, angular);
  }
  return out;
}

QuadrotorState resolve_obstacle(const QuadrotorState& state, const ObstacleState& obstacle,
                                const QuadrotorParams& params, const CollisionModel& model,
                                Rng& rng) {
  const Vec3 offset = state.p - obstacle.position;
  const Vec3 normal = offset.norm() > 1e-12 ? Vec3(offset.normalized()) : random_unit_vector(rng);
  const double rel_speed = (state.v - obstacle.velocity).norm();
  const double scale = uniform(rng, model.impulse_scale_min, model.impulse_scale_max);
  const double magnitude = std::max(model.impulse_floor, scale * params.mass * rel_speed);
  const Vec3 angular = random_box(rng, model.torque_impulse_max);

  QuadrotorState out = state;
  out.p = obstacle.position + normal * (obstacle.radius + params.collision_radius);
  out.v += normal * (magnitude / params.mass);
  out.omega += body_rate_change(state, params, angular);
  return out;
}

Vec3 pair_linear_momentum(const QuadrotorState& a, const QuadrotorState& b,
                          const QuadrotorParams& params) {
  return params.mass * (a.v + b.v);
}

Vec3 pair_angular_momentum(const QuadrotorState& a, const QuadrotorState& b,
                           const QuadrotorParams& params, const Vec3& origin) {
  auto one = [&](const QuadrotorState& s) -> Vec3 {
    const Vec3 orbital = (s.p - origin).cross(params.mass * s.v);
    const Vec3 spin = s.R * params.inertia_diag.cwiseProduct(s.omega);
    return orbital + spin;
  };
  return one(a) + one(b);
}

}  // namespace quadswarm

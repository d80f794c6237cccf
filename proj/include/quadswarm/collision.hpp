#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "quadswarm/quadrotor.hpp"

namespace quadswarm {

enum class CollisionKind { DroneDrone, DroneGround, DroneObstacle };

std::string to_string(CollisionKind kind);

struct CollisionEvent {
  CollisionKind kind = CollisionKind::DroneDrone;
  int first = -1;   // drone index
  int second = -1;  // second drone for drone-drone, obstacle id otherwise, -1 for ground
  double time = 0.0;
};

/// Kinematic spherical obstacle. Inactive obstacles are parked outside the
/// room and never collide.
struct ObstacleState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double radius = 0.0;
  bool active = false;
};

/// Constants of the randomized contact model.
struct CollisionModel {
  double impulse_scale_min = 0.5;     // times m * |v_rel|
  double impulse_scale_max = 1.5;
  double impulse_floor = 0.05;        // kg m/s
  double torque_impulse_max = 5e-4;   // N m s, per axis
  double ground_restitution = 0.2;
  double ground_tangential_damping = 0.5;
  double ground_torque_per_speed = 1e-5;  // N m s per m/s of impact speed, per axis
  double hysteresis = 1.25;
};

/// Stateful contact detector. A pair emits one event when it first comes
/// into contact and re-arms only once it separates beyond `hysteresis` times
/// the contact threshold.
class CollisionDetector {
 public:
  CollisionDetector() = default;
  CollisionDetector(int num_drones, double hysteresis);

  std::vector<CollisionEvent> detect(std::span<const QuadrotorState> states,
                                     const QuadrotorParams& params,
                                     const ObstacleState* obstacle, double time);

  void reset();
  int num_drones() const { return n_; }

 private:
  int n_ = 0;
  double hysteresis_ = 1.25;
  std::vector<char> pair_contact_;
  std::vector<char> ground_contact_;
  std::vector<char> obstacle_contact_;
};

/// Equal-and-opposite central impulse plus equal-and-opposite world-frame
/// torque impulse. Conserves total linear momentum and total angular momentum
/// about the pair midpoint.
std::pair<QuadrotorState, QuadrotorState> resolve_drone_pair(const QuadrotorState& a,
                                                             const QuadrotorState& b,
                                                             const QuadrotorParams& params,
                                                             const CollisionModel& model,
                                                             Rng& rng);

/// Bounce off the floor plane z = 0.
QuadrotorState resolve_ground(const QuadrotorState& state, const QuadrotorParams& params,
                              const CollisionModel& model, Rng& rng);

/// Push a drone out of a kinematic sphere with a random outward impulse.
QuadrotorState resolve_obstacle(const QuadrotorState& state, const ObstacleState& obstacle,
                                const QuadrotorParams& params, const CollisionModel& model,
                                Rng& rng);

/// Total linear momentum of a pair.
Vec3 pair_linear_momentum(const QuadrotorState& a, const QuadrotorState& b,
                          const QuadrotorParams& params);

/// Orbital plus spin angular momentum of a pair about `origin`, world frame.
Vec3 pair_angular_momentum(const QuadrotorState& a, const QuadrotorState& b,
                           const QuadrotorParams& params, const Vec3& origin);

}  // namespace quadswarm

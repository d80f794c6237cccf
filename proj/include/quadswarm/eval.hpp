#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quadswarm/bvc.hpp"
#include "quadswarm/env.hpp"
#include "quadswarm/policies.hpp"
#include "quadswarm/ppo.hpp"

namespace quadswarm {

/// One drone at one control step, after the step was applied.
struct TrajectoryRow {
  double t = 0.0;
  int drone = 0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  double reward = 0.0;
  bool collision = false;
};

/// Rows are step-major, drone-minor.
struct EpisodeLog {
  int num_drones = 0;
  double control_dt = 0.01;
  std::vector<TrajectoryRow> rows;
  std::vector<CollisionEvent> events;

  int steps() const { return num_drones > 0 ? static_cast<int>(rows.size()) / num_drones : 0; }
};

struct EvalReport {
  double collisions_per_minute_per_drone = 0.0;
  double mean_distance_to_target = 0.0;  // m
  double max_speed = 0.0;                // m/s
  double max_acceleration = 0.0;         // m/s^2
  int episodes = 0;
  long collision_count = 0;              // in the chosen counting mode
  double drone_minutes = 0.0;
};

struct MetricOptions {
  double window_fraction = 0.75;  // distance averaged over this trailing share of each episode
  bool count_pair_events = false; // count each event once instead of once per involved drone
};

/// Pure function of the logs.
EvalReport compute_report(std::span<const EpisodeLog> logs, const MetricOptions& options = {});

/// Something that turns observations into raw actions.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset() {}
  virtual std::vector<Vec4> act(std::span<const Observation> observations) = 0;
};

/// Deterministic policy: acts with the Gaussian mean.
class PolicyController : public Controller {
 public:
  explicit PolicyController(const GaussianPolicy& policy) : policy_(policy) {}
  std::vector<Vec4> act(std::span<const Observation> observations) override;

 private:
  const GaussianPolicy& policy_;
};

class BaselineController : public Controller {
 public:
  BaselineController(int num_drones, const QuadrotorParams& params, const BvcConfig& config,
                     double control_dt)
      : bvc_(num_drones, params, config, control_dt) {}
  void reset() override { bvc_.reset(); }
  std::vector<Vec4> act(std::span<const Observation> observations) override {
    return bvc_.act(observations);
  }

 private:
  BvcController bvc_;
};

struct EvalSetup {
  EpisodeConfig episode;
  QuadrotorParams params;
  NoiseModel noise;
  RewardCoefficients reward;
  SpawnConfig spawn;
  ScenarioCatalog catalog;
};

struct EpisodePlan {
  ScenarioSpec spec;
  std::optional<std::vector<QuadrotorState>> initial;  // random spawns when empty
};

using EpisodePlanner = std::function<EpisodePlan(Rng& rng, int episode)>;

/// Samples each episode's scenario from the catalog.
EpisodePlanner catalog_planner(const EvalSetup& setup);

EpisodeLog run_episode(const EvalSetup& setup, const EpisodePlan& plan, Controller& controller,
                       Rng& rng);

struct EvalResult {
  EvalReport report;
  std::vector<EpisodeLog> logs;
};

/// Episode e runs on its own stream derive_seed(seed, e), so the outcome does
/// not depend on how episodes are scheduled.
EvalResult run_eval(const EvalSetup& setup, const EpisodePlanner& planner, Controller& controller,
                    int episodes, std::uint64_t seed, const MetricOptions& metrics = {});

struct ProbeEntry {
  int drone = 0;
  std::vector<int> neighbor_ids;
  std::vector<double> weights;
  double entropy = 0.0;  // nats
};

struct ProbeResult {
  std::vector<ProbeEntry> observed;       // neighbor velocities as sensed
  std::vector<ProbeEntry> zero_velocity;  // relative velocities set to zero
};

/// Softmax attention weights for every drone of a frozen snapshot. Throws
/// UsageError for non-attention policies.
ProbeResult attention_probe(const GaussianPolicy& policy, std::span<const Observation> snapshot);

/// Two-on-two snapshot: a red pair hovering at its goals and a blue pair flying
/// head-on toward it, one blue drone on a collision course with red drone 0.
/// For K > 3 distant hovering bystanders fill the neighborhood. Only the four
/// encounter drones are returned.
std::vector<Observation> probe_snapshot(int num_neighbors);

struct ScaleTuneResult {
  EvalReport before;
  EvalReport after;
  std::vector<EpisodeLog> after_logs;
  long transitions = 0;
};

/// Continues PPO on a larger swarm with the same K, evaluating before and after.
/// Rejects a model whose K does not match the setup, or N <= K.
ScaleTuneResult scale_tune(ActorCritic& model, const TrainSetup& train, long extra_transitions,
                           int eval_episodes, std::uint64_t seed, const MetricOptions& metrics = {},
                           const std::function<void(const IterationStats&)>& on_iteration = {});

}  // namespace quadswarm

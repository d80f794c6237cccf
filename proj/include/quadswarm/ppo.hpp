#pragma once

#include <functional>
#include <span>
#include <vector>

#include "quadswarm/env.hpp"
#include "quadswarm/nn/adam.hpp"
#include "quadswarm/policies.hpp"

namespace quadswarm {

class KeyValueConfig;

struct PPOConfig {
  double learning_rate = 1e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int rollout_length = 128;  // T
  int batch_size = 1024;     // samples per minibatch
  int epochs = 1;
  double grad_norm_clip = 5.0;
  double clip_ratio = 0.1;
  double value_coeff = 0.5;
  double entropy_coeff = 0.003;
  int num_envs = 4;

  void validate() const;
  static PPOConfig from_config(KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;
};

/// Samples indexed s = (t * E + e) * N + a.
struct RolloutBuffer {
  int steps = 0;   // T
  int envs = 0;    // E
  int agents = 0;  // N
  std::vector<Observation> observations;
  MatX actions;           // S x 4
  VecX log_probs;         // S
  VecX rewards;           // S
  VecX values;            // S
  std::vector<char> dones;  // S, true when the transition ended its episode
  VecX bootstrap_values;  // E*N, value of the observation after the last step
  VecX advantages;        // S
  VecX returns;           // S

  int size() const { return steps * envs * agents; }
  int index(int t, int e, int a) const { return (t * envs + e) * agents + a; }
};

struct GaeResult {
  VecX advantages;
  VecX returns;
};

/// GAE over one trajectory segment; a done at step t cuts both the bootstrap
/// and the advantage recursion.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const char> dones, double bootstrap, double gamma, double lambda);

/// Fills `advantages` and `returns` of every (env, agent) segment and
/// normalizes advantages over the whole buffer when `normalize`.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda, bool normalize = true);

/// Zero mean, unit variance in place.
void normalize_advantages(VecX& advantages);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int minibatches = 0;
};

/// Data of a PPO update that does not depend on environments.
struct PPOBatch {
  ObsBatch observations;
  MatX actions;
  VecX log_probs;
  VecX advantages;
  VecX returns;
};

/// Clipped-surrogate loss and its gradients for one minibatch. Gradients are
/// accumulated into the model parameters; returns the loss terms.
UpdateStats ppo_loss_and_grad(ActorCritic& model, const PPOBatch& batch, const PPOConfig& config);

/// One pass of `epochs` over shuffled minibatches with an Adam step each.
/// Throws NumericalError (parameters untouched for that minibatch) on a non-finite loss.
UpdateStats ppo_update(ActorCritic& model, nn::AdamState& adam, const PPOBatch& data,
                       const PPOConfig& config, Rng& rng);

PPOBatch make_batch(const RolloutBuffer& buffer);

struct TrainSetup {
  EpisodeConfig episode;
  QuadrotorParams params;
  NoiseModel noise;
  RewardCoefficients reward;
  ScenarioCatalog catalog;
  SpawnConfig spawn;
  PPOConfig ppo;
};

struct IterationStats {
  long transitions = 0;      // cumulative agent-steps
  double mean_reward = 0.0;  // per agent-step over the rollout
  RewardBreakdown reward_terms;
  double mean_episode_return = 0.0;  // per drone, episodes finished in this rollout
  int episodes_finished = 0;
  UpdateStats update;
  double sigma = 0.0;
};

/// Synchronous rollout/update loop over E independent environments sharing
/// one policy. Each environment owns its random stream, so results do not
/// depend on scheduling.
class PPOTrainer {
 public:
  PPOTrainer(TrainSetup setup, ActorCritic& model, std::uint64_t seed);

  RolloutBuffer collect_rollout();
  IterationStats iterate();

  long transitions() const { return transitions_; }
  const TrainSetup& setup() const { return setup_; }
  nn::AdamState& optimizer() { return adam_; }

 private:
  void reset_env(int e);

  TrainSetup setup_;
  ActorCritic& model_;
  nn::AdamState adam_;
  std::vector<SwarmEnv> envs_;
  std::vector<Rng> env_rngs_;
  Rng sample_rng_;
  Rng learner_rng_;
  std::vector<std::vector<Observation>> current_obs_;
  std::vector<double> episode_return_;  // per env, summed over drones
  long transitions_ = 0;
  // Accumulated over the current rollout.
  double finished_return_sum_ = 0.0;
  int finished_episodes_ = 0;
  RewardBreakdown reward_sum_;
};

}  // namespace quadswarm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "quadswarm/nn/layers.hpp"
#include "quadswarm/policies.hpp"
#include "quadswarm/eval.hpp"
#include "quadswarm/ppo.hpp"

namespace quadswarm::testing {

/// Relative error with an absolute floor for entries whose true value is ~0.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

/// Fourth-order central differences, (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h,
/// over every entry of every parameter. The analytic gradients must already
/// sit in `grad`. Returns the worst relative error.
inline double max_gradient_error(const nn::ParameterList& params, const std::function<double()>& loss,
                                 double h = 1e-3) {
  double worst = 0.0;
  for (nn::Parameter* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      auto at = [&](double dx) {
        x = saved + dx;
        const double v = loss();
        x = saved;
        return v;
      };
      const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
      worst = std::max(worst, relative_error(p->grad.data()[i], numeric));
    }
  }
  return worst;
}

/// Random observations with K neighbors, optionally an obstacle block.
inline std::vector<Observation> random_observations(Rng& rng, int batch, int k, bool obstacle) {
  std::vector<Observation> out(batch);
  for (auto& o : out) {
    for (int i = 0; i < kSelfObsDim; ++i) o.self(i) = uniform(rng, -1.0, 1.0);
    o.neighbors.resize(k, kNeighborObsDim);
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < kNeighborObsDim; ++c) o.neighbors(r, c) = uniform(rng, -1.0, 1.0);
      o.neighbor_ids.push_back(r + 1);
    }
    if (obstacle) {
      ObstacleBlock b;
      for (int i = 0; i < kObstacleObsDim; ++i) b(i) = uniform(rng, -1.0, 1.0);
      o.obstacle = b;
    }
  }
  return out;
}

inline PolicyConfig small_config(EncoderKind kind, int k, bool obstacle = false, int hidden = 6) {
  PolicyConfig c;
  c.encoder = kind;
  c.num_neighbors = k;
  c.obstacle_enabled = obstacle;
  c.self_hidden = hidden;
  c.neighbor_hidden = hidden;
  return c;
}

/// Gradient check of policy mean, log sigma and value through a random
/// linear functional of the outputs, on a miniature batch.
inline double actor_critic_gradient_error(const PolicyConfig& config, std::uint64_t seed, int batch = 3,
                                          double h = 1e-3) {
  Rng rng(seed);
  ActorCritic model(config);
  model.init(rng);
  const auto obs_list = random_observations(rng, batch, config.num_neighbors, config.obstacle_enabled);
  const ObsBatch obs = ObsBatch::from(obs_list);
  MatX g_mean(batch, 4), g_value(batch, 1);
  for (Eigen::Index i = 0; i < g_mean.size(); ++i) g_mean.data()[i] = uniform(rng, -1.0, 1.0);
  for (Eigen::Index i = 0; i < g_value.size(); ++i) g_value.data()[i] = uniform(rng, -1.0, 1.0);
  const double g_sigma = uniform(rng, -1.0, 1.0);

  const nn::ParameterList params = model.parameters();
  nn::zero_grads(params);
  EncoderNetwork::Cache pc, vc;
  model.policy.mean(obs, &pc);
  model.value.value(obs, &vc);
  model.policy.backward(g_mean, g_sigma, obs, pc);
  model.value.backward(g_value, obs, vc);

  auto loss = [&] {
    return model.policy.mean(obs).cwiseProduct(g_mean).sum() + g_sigma * model.policy.log_sigma() +
           model.value.value(obs).cwiseProduct(g_value).sum();
  };
  return max_gradient_error(params, loss, h);
}

/// Two-armed bandit on the first action component: the arm is a[0] > 0 and
/// pays 1, the other arm pays 0. Runs PPO updates on fresh samples until the
/// optimal arm's probability exceeds 0.9; returns the number of updates used,
/// or -1 if `max_updates` was not enough.
inline int bandit_updates_to_solve(std::uint64_t seed, int max_updates = 200, int samples = 256) {
  PolicyConfig pc = small_config(EncoderKind::Blind, 0, false, 8);
  ActorCritic model(pc);
  Rng rng(seed);
  model.init(rng);
  PPOConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = samples;
  cfg.epochs = 4;
  nn::AdamState adam;
  std::vector<Observation> obs(samples);
  for (auto& o : obs) o.neighbors.resize(0, kNeighborObsDim);
  const ObsBatch batch_obs = ObsBatch::from(obs);
  auto optimal_probability = [&] {
    const double mu = model.policy.mean(batch_obs)(0, 0);
    return 0.5 * std::erfc(-mu / (model.policy.sigma() * std::sqrt(2.0)));
  };
  for (int u = 0; u < max_updates; ++u) {
    if (optimal_probability() > 0.9) return u;
    const MatX mu = model.policy.mean(batch_obs);
    PPOBatch b;
    b.observations = batch_obs;
    b.actions.resize(samples, 4);
    b.log_probs.resize(samples);
    b.advantages.resize(samples);
    b.returns.resize(samples);
    for (int i = 0; i < samples; ++i) {
      const Vec4 m = mu.row(i).transpose();
      const Vec4 a = sample_action(m, model.policy.sigma(), rng);
      b.actions.row(i) = a.transpose();
      b.log_probs[i] = gaussian_log_prob(a, m, model.policy.log_sigma());
      b.returns[i] = a[0] > 0.0 ? 1.0 : 0.0;
    }
    b.advantages = b.returns;
    normalize_advantages(b.advantages);
    ppo_update(model, adam, b, cfg, rng);
  }
  return optimal_probability() > 0.9 ? max_updates : -1;
}

/// Noiseless 2-on-2 goal swap flown by the BVC baseline. Drones start at
/// rest on their goals with hover thrust; the two pairs exchange goals at 5 s.
inline EpisodeLog bvc_goal_swap_episode(std::uint64_t seed = 7) {
  EvalSetup setup;
  setup.episode.num_drones = 4;
  setup.episode.num_neighbors = 3;
  setup.params.thrust_noise_frac = 0.0;
  setup.noise.enabled = false;
  ScenarioSpec spec;
  spec.kind = ScenarioKind::SwarmVsSwarm;
  spec.shape = FormationShape::Grid2d;
  spec.separation = 0.5;
  spec.formation_center = Vec3(0.0, 0.0, 2.0);
  spec.group_offset = Vec3(2.0, 0.3, 0.0);
  spec.swap_times = {5.0};
  EpisodePlan plan;
  plan.spec = spec;
  std::vector<QuadrotorState> init(4);
  const auto goals = goals_at(spec, 0.0, 4);
  for (int i = 0; i < 4; ++i) {
    init[i].p = goals[i];
    init[i].motor_thrust = Vec4::Constant(setup.params.mass * kGravity / 4.0);
  }
  plan.initial = init;
  BaselineController controller(4, setup.params, BvcConfig{}, setup.episode.control_dt());
  Rng rng(seed);
  return run_episode(setup, plan, controller, rng);
}

#ifdef SWARMCTL_PATH
/// Runs the CLI with `args`, stdout and stderr captured into `log_path`.
/// Returns the exit status, or -1 if the process did not exit normally.
inline int run_swarmctl(const std::string& args, const std::string& log_path) {
  const std::string cmd = std::string("\"") + SWARMCTL_PATH + "\" " + args + " > \"" + log_path + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

/// A training run that finishes in seconds: two drones, 1 s episodes.
inline std::string tiny_train_overrides() {
  return "--set num_drones=2 --set num_neighbors=1 --set self_hidden_units=8 --set neighbor_hidden_units=8 "
         "--set episode_duration_s=1 --set rollout_length=16 --set batch_size=32 --set num_envs=1 "
         "--set total_transitions=128 --set eval_episodes=1 --set checkpoint_every_iterations=2";
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("quadswarm_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace quadswarm::testing

#include "quadswarm/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "quadswarm/config.hpp"

namespace quadswarm {

void PPOConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be non-negative");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw UsageError("gae_lambda must lie in [0, 1]");
  if (rollout_length < 1) throw UsageError("rollout_length must be positive");
  if (batch_size < 1) throw UsageError("batch_size must be positive");
  if (epochs < 1) throw UsageError("epochs must be positive");
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw UsageError("clip_ratio must lie in (0, 1)");
  if (value_coeff < 0.0 || entropy_coeff < 0.0) throw UsageError("loss coefficients must be non-negative");
  if (num_envs < 1) throw UsageError("num_envs must be positive");
}

PPOConfig PPOConfig::from_config(KeyValueConfig& cfg) {
  PPOConfig c;
  c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
  c.gamma = cfg.get_double("gamma", c.gamma);
  c.gae_lambda = cfg.get_double("gae_lambda", c.gae_lambda);
  c.rollout_length = static_cast<int>(cfg.get_int("rollout_length", c.rollout_length));
  c.batch_size = static_cast<int>(cfg.get_int("batch_size", c.batch_size));
  c.epochs = static_cast<int>(cfg.get_int("ppo_epochs", c.epochs));
  c.grad_norm_clip = cfg.get_double("grad_norm_clip", c.grad_norm_clip);
  c.clip_ratio = cfg.get_double("clip_ratio", c.clip_ratio);
  c.value_coeff = cfg.get_double("value_coeff", c.value_coeff);
  c.entropy_coeff = cfg.get_double("entropy_coeff", c.entropy_coeff);
  c.num_envs = static_cast<int>(cfg.get_int("num_envs", c.num_envs));
  c.validate();
  return c;
}

void PPOConfig::to_config(KeyValueConfig& cfg) const {
  cfg.put_double("learning_rate", learning_rate);
  cfg.put_double("gamma", gamma);
  cfg.put_double("gae_lambda", gae_lambda);
  cfg.put_int("rollout_length", rollout_length);
  cfg.put_int("batch_size", batch_size);
  cfg.put_int("ppo_epochs", epochs);
  cfg.put_double("grad_norm_clip", grad_norm_clip);
  cfg.put_double("clip_ratio", clip_ratio);
  cfg.put_double("value_coeff", value_coeff);
  cfg.put_double("entropy_coeff", entropy_coeff);
  cfg.put_int("num_envs", num_envs);
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const char> dones, double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: rewards, values and dones differ in length");
  }
  GaeResult out;
  out.advantages.resize(static_cast<Eigen::Index>(n));
  out.returns.resize(static_cast<Eigen::Index>(n));
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[static_cast<Eigen::Index>(i)] = next_adv;
    out.returns[static_cast<Eigen::Index>(i)] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

void normalize_advantages(VecX& advantages) {
  if (advantages.size() == 0) return;
  const double mean = advantages.mean();
  advantages.array() -= mean;
  const double var = advantages.squaredNorm() / static_cast<double>(advantages.size());
  advantages /= std::sqrt(var) + 1e-12;
  // Re-center: dividing by std does not move the mean, but rounding in the
  // first subtraction can leave a residue of order 1e-16 * |mean|.
  advantages.array() -= advantages.mean();
}

void compute_gae(RolloutBuffer& b, double gamma, double lambda, bool normalize) {
  const int total = b.size();
  b.advantages.resize(total);
  b.returns.resize(total);
  std::vector<double> r(b.steps), v(b.steps);
  std::vector<char> d(b.steps);
  for (int e = 0; e < b.envs; ++e) {
    for (int a = 0; a < b.agents; ++a) {
      for (int t = 0; t < b.steps; ++t) {
        const int s = b.index(t, e, a);
        r[t] = b.rewards[s];
        v[t] = b.values[s];
        d[t] = b.dones[s];
      }
      const auto g = compute_gae(r, v, d, b.bootstrap_values[e * b.agents + a], gamma, lambda);
      for (int t = 0; t < b.steps; ++t) {
        const int s = b.index(t, e, a);
        b.advantages[s] = g.advantages[t];
        b.returns[s] = g.returns[t];
      }
    }
  }
  if (normalize) normalize_advantages(b.advantages);
}

PPOBatch make_batch(const RolloutBuffer& buffer) {
  PPOBatch batch;
  batch.observations = ObsBatch::from(buffer.observations);
  batch.actions = buffer.actions;
  batch.log_probs = buffer.log_probs;
  batch.advantages = buffer.advantages;
  batch.returns = buffer.returns;
  return batch;
}

UpdateStats ppo_loss_and_grad(ActorCritic& model, const PPOBatch& batch, const PPOConfig& config) {
  const Eigen::Index n = batch.observations.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  EncoderNetwork::Cache pcache, vcache;
  const MatX mean = model.policy.mean(batch.observations, &pcache);
  const MatX value = model.value.value(batch.observations, &vcache);
  const double log_sigma = model.policy.log_sigma();
  const double inv_var = std::exp(-2.0 * log_sigma);

  UpdateStats stats;
  MatX d_mean(n, 4);
  double d_log_sigma = 0.0;
  MatX d_value(n, 1);
  double policy_loss = 0.0;
  double value_loss = 0.0;
  int clipped = 0;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec4 a = batch.actions.row(i).transpose();
    const Vec4 mu = mean.row(i).transpose();
    const double logp = gaussian_log_prob(a, mu, log_sigma);
    const double log_ratio = logp - batch.log_probs[i];
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[i];
    const double unclipped = ratio * adv;
    const double bounded = std::clamp(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio) * adv;
    policy_loss -= std::min(unclipped, bounded);
    kl += -log_ratio;
    // d(-min)/dlogp is -ratio*adv when the unclipped branch is active, else 0.
    double d_logp = 0.0;
    if (unclipped <= bounded) {
      d_logp = -ratio * adv * inv_n;
    } else {
      ++clipped;
    }
    const Vec4 diff = a - mu;
    d_mean.row(i) = (d_logp * inv_var * diff).transpose();
    d_log_sigma += d_logp * (diff.squaredNorm() * inv_var - 4.0);

    const double err = value(i, 0) - batch.returns[i];
    value_loss += err * err;
    d_value(i, 0) = 2.0 * config.value_coeff * err * inv_n;
  }
  policy_loss *= inv_n;
  value_loss *= config.value_coeff * inv_n;
  const double entropy = gaussian_entropy(log_sigma);
  d_log_sigma -= config.entropy_coeff * 4.0;

  const double total = policy_loss + value_loss - config.entropy_coeff * entropy;
  if (!std::isfinite(total)) throw NumericalError("ppo: non-finite loss, update aborted");

  model.policy.backward(d_mean, d_log_sigma, batch.observations, pcache);
  model.value.backward(d_value, batch.observations, vcache);

  stats.policy_loss = policy_loss;
  stats.value_loss = value_loss;
  stats.entropy = entropy;
  stats.clip_fraction = clipped * inv_n;
  stats.approx_kl = kl * inv_n;
  stats.minibatches = 1;
  return stats;
}

UpdateStats ppo_update(ActorCritic& model, nn::AdamState& adam, const PPOBatch& data,
                       const PPOConfig& config, Rng& rng) {
  const Eigen::Index total = data.observations.size();
  const auto params = model.parameters();
  if (adam.first_moment.empty()) adam = nn::AdamState::for_parameters(params);
  nn::AdamConfig opt;
  opt.learning_rate = config.learning_rate;
  opt.grad_norm_clip = config.grad_norm_clip;

  UpdateStats sum;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < total; start += config.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, total - start);
      const std::span<const Eigen::Index> idx(order.data() + start, static_cast<std::size_t>(len));
      PPOBatch mb;
      mb.observations = data.observations.select(idx);
      mb.actions.resize(len, 4);
      mb.log_probs.resize(len);
      mb.advantages.resize(len);
      mb.returns.resize(len);
      for (Eigen::Index i = 0; i < len; ++i) {
        mb.actions.row(i) = data.actions.row(idx[i]);
        mb.log_probs[i] = data.log_probs[idx[i]];
        mb.advantages[i] = data.advantages[idx[i]];
        mb.returns[i] = data.returns[idx[i]];
      }
      nn::zero_grads(params);
      const UpdateStats s = ppo_loss_and_grad(model, mb, config);
      const auto step = nn::adam_step(params, adam, opt);
      sum.policy_loss += s.policy_loss;
      sum.value_loss += s.value_loss;
      sum.entropy += s.entropy;
      sum.clip_fraction += s.clip_fraction;
      sum.approx_kl += s.approx_kl;
      sum.grad_norm += step.grad_norm;
      ++sum.minibatches;
    }
  }
  if (sum.minibatches > 0) {
    const double k = 1.0 / sum.minibatches;
    sum.policy_loss *= k;
    sum.value_loss *= k;
    sum.entropy *= k;
    sum.clip_fraction *= k;
    sum.approx_kl *= k;
    sum.grad_norm *= k;
  }
  return sum;
}

PPOTrainer::PPOTrainer(TrainSetup setup, ActorCritic& model, std::uint64_t seed)
    : setup_(std::move(setup)),
      model_(model),
      sample_rng_(derive_seed(seed, 1000)),
      learner_rng_(derive_seed(seed, 1001)) {
  setup_.ppo.validate();
  const int envs = setup_.ppo.num_envs;
  const int per_rollout = setup_.ppo.rollout_length * envs * setup_.episode.num_drones;
  if (setup_.ppo.batch_size > per_rollout) {
    throw UsageError("batch_size exceeds rollout_length * num_drones * num_envs");
  }
  adam_ = nn::AdamState::for_parameters(model_.parameters());
  for (int e = 0; e < envs; ++e) {
    envs_.emplace_back(setup_.episode, setup_.params, setup_.noise, setup_.reward, CollisionModel{},
                       setup_.spawn);
    env_rngs_.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(e)));
  }
  current_obs_.resize(envs);
  episode_return_.assign(envs, 0.0);
  for (int e = 0; e < envs; ++e) reset_env(e);
}

void PPOTrainer::reset_env(int e) {
  ScenarioCatalog catalog = setup_.catalog;
  catalog.episode_duration = setup_.episode.duration;
  const ScenarioSpec spec = sample_scenario(env_rngs_[e], setup_.episode.num_drones, catalog);
  current_obs_[e] = envs_[e].reset(spec, env_rngs_[e]);
  episode_return_[e] = 0.0;
}

RolloutBuffer PPOTrainer::collect_rollout() {
  const int T = setup_.ppo.rollout_length;
  const int E = static_cast<int>(envs_.size());
  const int N = setup_.episode.num_drones;
  RolloutBuffer b;
  b.steps = T;
  b.envs = E;
  b.agents = N;
  const int S = b.size();
  b.observations.reserve(S);
  b.actions.resize(S, 4);
  b.log_probs.resize(S);
  b.rewards.resize(S);
  b.values.resize(S);
  b.dones.assign(S, 0);
  b.bootstrap_values.resize(E * N);

  const double log_sigma = model_.policy.log_sigma();
  const double sigma = std::exp(log_sigma);
  std::vector<Observation> step_obs;
  step_obs.reserve(E * N);
  std::vector<Vec4> actions(N);
  for (int t = 0; t < T; ++t) {
    step_obs.clear();
    for (int e = 0; e < E; ++e) step_obs.insert(step_obs.end(), current_obs_[e].begin(), current_obs_[e].end());
    const ObsBatch batch = ObsBatch::from(step_obs);
    const MatX mean = model_.policy.mean(batch);
    const MatX value = model_.value.value(batch);
    for (int e = 0; e < E; ++e) {
      for (int a = 0; a < N; ++a) {
        const int row = e * N + a;
        const int s = b.index(t, e, a);
        const Vec4 mu = mean.row(row).transpose();
        actions[a] = sample_action(mu, sigma, sample_rng_);
        b.observations.push_back(step_obs[row]);
        b.actions.row(s) = actions[a].transpose();
        b.log_probs[s] = gaussian_log_prob(actions[a], mu, log_sigma);
        b.values[s] = value(row, 0);
      }
      StepResult res = envs_[e].step(actions, env_rngs_[e]);
      for (int a = 0; a < N; ++a) {
        const int s = b.index(t, e, a);
        const RewardBreakdown& r = res.rewards[a];
        b.rewards[s] = r.total;
        b.dones[s] = res.done ? 1 : 0;
        episode_return_[e] += r.total;
        reward_sum_.position += r.position;
        reward_sum_.collision += r.collision;
        reward_sum_.proximity += r.proximity;
        reward_sum_.omega += r.omega;
        reward_sum_.thrust += r.thrust;
        reward_sum_.rotation += r.rotation;
        reward_sum_.total += r.total;
      }
      if (res.done) {
        finished_return_sum_ += episode_return_[e] / N;
        ++finished_episodes_;
        reset_env(e);
      } else {
        current_obs_[e] = std::move(res.observations);
      }
    }
  }
  step_obs.clear();
  for (int e = 0; e < E; ++e) step_obs.insert(step_obs.end(), current_obs_[e].begin(), current_obs_[e].end());
  const MatX boot = model_.value.value(ObsBatch::from(step_obs));
  for (int i = 0; i < E * N; ++i) b.bootstrap_values[i] = boot(i, 0);
  transitions_ += S;
  return b;
}

IterationStats PPOTrainer::iterate() {
  reward_sum_ = RewardBreakdown{};
  finished_return_sum_ = 0.0;
  finished_episodes_ = 0;
  RolloutBuffer buffer = collect_rollout();
  compute_gae(buffer, setup_.ppo.gamma, setup_.ppo.gae_lambda, true);

  IterationStats stats;
  stats.transitions = transitions_;
  const double inv = 1.0 / buffer.size();
  stats.reward_terms.position = reward_sum_.position * inv;
  stats.reward_terms.collision = reward_sum_.collision * inv;
  stats.reward_terms.proximity = reward_sum_.proximity * inv;
  stats.reward_terms.omega = reward_sum_.omega * inv;
  stats.reward_terms.thrust = reward_sum_.thrust * inv;
  stats.reward_terms.rotation = reward_sum_.rotation * inv;
  stats.reward_terms.total = reward_sum_.total * inv;
  stats.mean_reward = stats.reward_terms.total;
  stats.episodes_finished = finished_episodes_;
  stats.mean_episode_return =
      finished_episodes_ > 0 ? finished_return_sum_ / finished_episodes_ : 0.0;
  stats.update = ppo_update(model_, adam_, make_batch(buffer), setup_.ppo, learner_rng_);
  stats.sigma = model_.policy.sigma();
  return stats;
}

}  // namespace quadswarm

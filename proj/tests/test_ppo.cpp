#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "quadswarm/config.hpp"
#include "quadswarm/ppo.hpp"
#include "test_support.hpp"

using namespace quadswarm;
using quadswarm::testing::random_observations;
using quadswarm::testing::small_config;

namespace {

/// Brute-force GAE: A_t = sum_l (gamma lambda)^l delta_{t+l}, cut at dones.
std::vector<double> brute_gae(const std::vector<double>& r, const std::vector<double>& v,
                              const std::vector<char>& d, double boot, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0;
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      const double next = l + 1 < n ? v[l + 1] : boot;
      const double delta = r[l] + (d[l] ? 0.0 : gamma * next) - v[l];
      sum += w * delta;
      if (d[l]) break;
      w *= gamma * lambda;
    }
    out[t] = sum;
  }
  return out;
}

PPOBatch random_batch(Rng& rng, ActorCritic& model, int n, const std::vector<double>& log_ratio_offsets) {
  PPOBatch b;
  b.observations = ObsBatch::from(random_observations(rng, n, model.config.num_neighbors, false));
  const MatX mu = model.policy.mean(b.observations);
  b.actions.resize(n, 4);
  b.log_probs.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  for (int i = 0; i < n; ++i) {
    const Vec4 m = mu.row(i).transpose();
    const Vec4 a = sample_action(m, model.policy.sigma(), rng);
    b.actions.row(i) = a.transpose();
    const double off = log_ratio_offsets.empty() ? 0.0 : log_ratio_offsets[i % log_ratio_offsets.size()];
    b.log_probs[i] = gaussian_log_prob(a, m, model.policy.log_sigma()) - off;
    b.advantages[i] = uniform(rng, -1.0, 1.0);
    b.returns[i] = uniform(rng, -1.0, 1.0);
  }
  return b;
}

double total_loss(ActorCritic& model, const PPOBatch& b, const PPOConfig& c) {
  nn::zero_grads(model.parameters());
  const UpdateStats s = ppo_loss_and_grad(model, b, c);
  return s.policy_loss + s.value_loss - c.entropy_coeff * s.entropy;
}

}  // namespace

TEST_CASE("GAE: five-step hand trace against brute force") {
  const std::vector<double> r{0.5, -1.0, 2.0, 0.25, -0.75};
  const std::vector<double> v{0.1, 0.3, -0.2, 0.4, 0.0};
  const std::vector<char> d{0, 0, 0, 0, 0};
  const double boot = 0.6;
  const auto g = compute_gae(r, v, d, boot, 0.9, 0.8);
  const auto ref = brute_gae(r, v, d, boot, 0.9, 0.8);
  for (int t = 0; t < 5; ++t) {
    CHECK(std::abs(g.advantages[t] - ref[t]) < 1e-12);
    CHECK(std::abs(g.returns[t] - (ref[t] + v[t])) < 1e-12);
  }
  // Last step by hand: 0.6 * 0.9 - 0.75 - 0.
  CHECK(std::abs(g.advantages[4] - (-0.75 + 0.54)) < 1e-12);
}

TEST_CASE("GAE: a done cuts bootstrap and recursion") {
  const std::vector<double> r{1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> v{0.5, 0.5, 0.5, 0.5, 0.5};
  const std::vector<char> d{0, 1, 0, 0, 1};
  const auto g = compute_gae(r, v, d, 100.0, 0.95, 0.9);
  const auto ref = brute_gae(r, v, d, 100.0, 0.95, 0.9);
  for (int t = 0; t < 5; ++t) CHECK(std::abs(g.advantages[t] - ref[t]) < 1e-12);
  CHECK(g.advantages[1] == 2.0 - 0.5);
  CHECK(g.advantages[4] == 5.0 - 0.5);
}

TEST_CASE("GAE: gamma = 0 collapses to r - V exactly") {
  Rng rng(81);
  std::vector<double> r(7), v(7);
  std::vector<char> d(7, 0);
  for (int i = 0; i < 7; ++i) {
    r[i] = uniform(rng, -2.0, 2.0);
    v[i] = uniform(rng, -2.0, 2.0);
  }
  const auto g = compute_gae(r, v, d, 3.0, 0.0, 0.95);
  for (int i = 0; i < 7; ++i) CHECK(g.advantages[i] == r[i] - v[i]);
}

TEST_CASE("GAE: lambda = 1 with zero values is the discounted return") {
  const std::vector<double> r{1.0, 1.0, 1.0, 1.0};
  const std::vector<double> v(4, 0.0);
  const std::vector<char> d(4, 0);
  const auto g = compute_gae(r, v, d, 0.0, 0.5, 1.0);
  CHECK(std::abs(g.returns[0] - (1.0 + 0.5 + 0.25 + 0.125)) < 1e-12);
  CHECK(std::abs(g.returns[3] - 1.0) < 1e-12);
}

TEST_CASE("GAE: constant reward with a perfect critic gives zero advantage") {
  // V = r / (1 - gamma) is the fixed point of an infinite geometric series.
  const double gamma = 0.99;
  const double value = 1.0 / (1.0 - gamma);
  const std::vector<double> r(10, 1.0), v(10, value);
  const std::vector<char> d(10, 0);
  const auto g = compute_gae(r, v, d, value, gamma, 0.95);
  for (int i = 0; i < 10; ++i) CHECK(std::abs(g.advantages[i]) < 1e-12);
}

TEST_CASE("advantage normalization: zero mean, unit std") {
  Rng rng(82);
  for (int trial = 0; trial < 20; ++trial) {
    VecX a(1000 + trial);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = 50.0 + 7.0 * uniform(rng, -1.0, 1.0);
    normalize_advantages(a);
    CHECK(std::abs(a.mean()) < 1e-10);
    CHECK(std::abs(std::sqrt(a.squaredNorm() / a.size()) - 1.0) < 1e-6);
  }
}

TEST_CASE("PPO loss gradients match central differences") {
  for (auto kind : {EncoderKind::DeepSets, EncoderKind::Attention}) {
    Rng rng(83);
    ActorCritic model(small_config(kind, 2));
    model.init(rng);
    // Ratios kept away from the clip edges so the loss is smooth around them.
    const PPOBatch b = random_batch(rng, model, 6, {0.0, 0.03, -0.04, 0.5, -0.5, 0.02});
    PPOConfig c;
    const auto params = model.parameters();
    nn::zero_grads(params);
    ppo_loss_and_grad(model, b, c);
    std::vector<MatX> analytic;
    for (auto* p : params) analytic.push_back(p->grad);
    auto loss = [&] { return total_loss(model, b, c); };
    double worst = 0.0;
    const double h = 1e-3;
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (Eigen::Index i = 0; i < params[k]->value.size(); ++i) {
        double& x = params[k]->value.data()[i];
        const double saved = x;
        auto at = [&](double dx) {
          x = saved + dx;
          const double v = loss();
          x = saved;
          return v;
        };
        const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
        worst = std::max(worst, quadswarm::testing::relative_error(analytic[k].data()[i], numeric));
      }
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("zero advantages: only log sigma gets a policy gradient") {
  Rng rng(84);
  ActorCritic model(small_config(EncoderKind::DeepSets, 2));
  model.init(rng);
  PPOBatch b = random_batch(rng, model, 8, {});
  b.advantages.setZero();
  const auto params = model.parameters();
  nn::zero_grads(params);
  PPOConfig c;
  ppo_loss_and_grad(model, b, c);
  for (auto* p : params) {
    if (p->name.rfind("policy.", 0) != 0) continue;
    if (p->name == "policy.log_sigma") {
      CHECK(p->grad(0, 0) == doctest::Approx(-4.0 * c.entropy_coeff));
    } else {
      CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("ratio one: the surrogate gradient is the vanilla policy gradient") {
  Rng rng(85);
  ActorCritic model(small_config(EncoderKind::DeepSets, 2));
  model.init(rng);
  const PPOBatch b = random_batch(rng, model, 8, {});
  PPOConfig c;
  c.entropy_coeff = 0.0;
  c.value_coeff = 0.0;
  const auto params = model.parameters();
  nn::zero_grads(params);
  ppo_loss_and_grad(model, b, c);
  nn::ParameterList policy_params;
  model.policy.collect(policy_params);
  auto vanilla = [&] {
    const MatX mu = model.policy.mean(b.observations);
    double s = 0.0;
    for (int i = 0; i < 8; ++i) {
      s -= b.advantages[i] * gaussian_log_prob(b.actions.row(i).transpose(), mu.row(i).transpose(),
                                               model.policy.log_sigma());
    }
    return s / 8.0;
  };
  CHECK(quadswarm::testing::max_gradient_error(policy_params, vanilla) < 1e-5);
}

TEST_CASE("the clipped objective never exceeds the unclipped one") {
  Rng rng(86);
  ActorCritic model(small_config(EncoderKind::DeepSets, 2));
  model.init(rng);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> offsets(16);
    for (auto& o : offsets) o = uniform(rng, -1.0, 1.0);
    const PPOBatch b = random_batch(rng, model, 16, offsets);
    PPOConfig c;
    nn::zero_grads(model.parameters());
    const UpdateStats s = ppo_loss_and_grad(model, b, c);
    const MatX mu = model.policy.mean(b.observations);
    double unclipped = 0.0;
    for (int i = 0; i < 16; ++i) {
      const double lp = gaussian_log_prob(b.actions.row(i).transpose(), mu.row(i).transpose(),
                                          model.policy.log_sigma());
      unclipped += std::exp(lp - b.log_probs[i]) * b.advantages[i];
    }
    CHECK(-s.policy_loss <= unclipped / 16.0 + 1e-12);
  }
}

TEST_CASE("learning rate zero leaves every parameter bit-identical") {
  Rng rng(87);
  ActorCritic model(small_config(EncoderKind::Attention, 2));
  model.init(rng);
  std::vector<MatX> before;
  for (auto* p : model.parameters()) before.push_back(p->value);
  const PPOBatch b = random_batch(rng, model, 32, {0.1, -0.2});
  PPOConfig c;
  c.learning_rate = 0.0;
  c.batch_size = 8;
  c.epochs = 3;
  nn::AdamState adam;
  ppo_update(model, adam, b, c, rng);
  const auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) CHECK(params[k]->value == before[k]);
}

TEST_CASE("PPO solves a two-armed bandit") {
  int solved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) solved += quadswarm::testing::bandit_updates_to_solve(seed) >= 0;
  CHECK(solved >= 4);
}

TEST_CASE("rollout: 4 envs x 8 drones x 128 steps, log-probs recorded exactly") {
  TrainSetup setup;
  setup.episode.num_drones = 8;
  setup.episode.num_neighbors = 6;
  setup.ppo.num_envs = 4;
  setup.ppo.rollout_length = 128;
  ActorCritic model(small_config(EncoderKind::DeepSets, 6, false, 16));
  Rng rng(88);
  model.init(rng);
  PPOTrainer trainer(setup, model, 89);
  const RolloutBuffer buf = trainer.collect_rollout();
  CHECK(buf.size() == 4096);
  CHECK(buf.observations.size() == 4096u);
  CHECK(trainer.transitions() == 4096);
  const MatX mu = model.policy.mean(ObsBatch::from(buf.observations));
  double worst = 0.0;
  for (int s = 0; s < buf.size(); ++s) {
    const double lp = gaussian_log_prob(buf.actions.row(s).transpose(), mu.row(s).transpose(),
                                        model.policy.log_sigma());
    worst = std::max(worst, std::abs(lp - buf.log_probs[s]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("rollout marks the episode end at control step 1600") {
  TrainSetup setup;
  setup.episode.num_drones = 2;
  setup.episode.num_neighbors = 1;
  setup.ppo.num_envs = 1;
  setup.ppo.rollout_length = 1700;
  setup.ppo.batch_size = 64;
  ActorCritic model(small_config(EncoderKind::DeepSets, 1));
  Rng rng(90);
  model.init(rng);
  PPOTrainer trainer(setup, model, 91);
  const RolloutBuffer buf = trainer.collect_rollout();
  for (int t = 0; t < 1700; ++t) {
    for (int a = 0; a < 2; ++a) CHECK(static_cast<bool>(buf.dones[buf.index(t, 0, a)]) == (t == 1599));
  }
}

TEST_CASE("trainer config validation") {
  TrainSetup setup;
  setup.episode.num_drones = 2;
  setup.episode.num_neighbors = 1;
  setup.ppo.num_envs = 1;
  setup.ppo.rollout_length = 8;
  setup.ppo.batch_size = 1024;
  ActorCritic model(small_config(EncoderKind::DeepSets, 1));
  CHECK_THROWS_AS(PPOTrainer(setup, model, 1), UsageError);
  KeyValueConfig cfg = KeyValueConfig::parse("clip_ratio = 1.5\n");
  CHECK_THROWS_AS(PPOConfig::from_config(cfg), UsageError);
}

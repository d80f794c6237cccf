// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// QUADSWARM_ACCEPTANCE_SKIP_TRAINING=1 skips the long training experiment
// (reported as FAIL, never as PASS).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "quadswarm/collision.hpp"
#include "quadswarm/env.hpp"
#include "quadswarm/eval.hpp"
#include "quadswarm/ppo.hpp"
#include "quadswarm/so3.hpp"
#include "test_support.hpp"

using namespace quadswarm;
using namespace quadswarm::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Reward oracle.
Outcome reward_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const RewardCoefficients c;
  struct Case {
    Vec3 p, goal, omega;
    Mat3 R;
    Vec4 f;
    bool hit;
    std::vector<double> dists;
    double dt;
    double expected;
  };
  const Mat3 I = Mat3::Identity();
  const Mat3 flipped = so3_exp<double>(Vec3(std::numbers::pi, 0.0, 0.0));
  const Mat3 tilted = so3_exp<double>(Vec3(0.0, std::numbers::pi / 3.0, 0.0));  // R22 = 1/2
  const std::vector<Case> cases{
      // 2 m off, upright, idle: -1*0.01*2 + 1*0.01*1.
      {{2, 0, 0}, {0, 0, 0}, {0, 0, 0}, I, Vec4::Zero(), false, {}, 0.01, -0.01},
      // Same plus a new collision: exactly -5 more.
      {{2, 0, 0}, {0, 0, 0}, {0, 0, 0}, I, Vec4::Zero(), true, {}, 0.01, -5.01},
      // At the goal, upright, idle.
      {{1, 1, 1}, {1, 1, 1}, {0, 0, 0}, I, Vec4::Zero(), false, {}, 0.01, 0.01},
      // Upside down at the goal.
      {{0, 0, 2}, {0, 0, 2}, {0, 0, 0}, flipped, Vec4::Zero(), false, {}, 0.01, -0.01},
      // 3-4-5 offset at 200 Hz: -0.005*5 + 0.005.
      {{3, 4, 2}, {0, 0, 2}, {0, 0, 0}, I, Vec4::Zero(), false, {}, 0.005, -0.02},
      // Spin of |w| = 5: -0.1*0.01*5.
      {{0, 0, 0}, {0, 0, 0}, {3, 4, 0}, I, Vec4::Zero(), false, {}, 0.01, -0.005 + 0.01},
      // Full thrust, |f| = 2: -0.05*0.01*2.
      {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, I, Vec4::Ones(), false, {}, 0.01, -0.001 + 0.01},
      // One neighbor at 0.1 m: falloff 1/2, -10*0.01*0.5.
      {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, I, Vec4::Zero(), false, {0.1}, 0.01, -0.05 + 0.01},
      // Neighbors at 0.05, 0.2 and 0.5 m: falloff 0.75 + 0 + 0.
      {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, I, Vec4::Zero(), false, {0.05, 0.2, 0.5}, 0.01, -0.075 + 0.01},
      // Tilted 60 degrees: R22 = 1/2.
      {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, tilted, Vec4::Zero(), false, {}, 0.01, 0.005},
      // Everything at once.
      {{0, 0, 1}, {0, 0, 0}, {0, 0, 2}, I, Vec4::Constant(0.5), true, {0.0}, 0.01,
       -0.01 - 5.0 - 0.1 - 0.002 - 0.0005 + 0.01},
  };
  double worst = 0.0;
  for (const auto& k : cases) {
    QuadrotorState s;
    s.p = k.p;
    s.omega = k.omega;
    s.R = k.R;
    const RewardBreakdown r = compute_reward(s, k.goal, k.f, k.hit, k.dists, k.dt, c);
    worst = std::max(worst, std::abs(r.total - k.expected));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 1.0, std::to_string(cases.size()) + " cases, worst error " + fmt("%.2e", worst) +
                                          ", " + fmt("%.3f s", secs)};
}

// 2. Action map.
Outcome action_map() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool ok = map_action(Vec4::Constant(-1.0)) == Vec4::Zero() && map_action(Vec4::Constant(1.0)) == Vec4::Ones() &&
            map_action(Vec4::Zero()) == Vec4::Constant(0.5) &&
            map_action(Vec4(3.0, -3.0, 0.5, -0.5)) == Vec4(1.0, 0.0, 0.75, 0.25);
  bool threw = false;
  try {
    map_action(Vec4(nan, 0.0, 0.0, 0.0));
  } catch (const NumericalError&) {
    threw = true;
  }
  return {ok && threw, "boundaries, midpoint, clipping and non-finite rejection"};
}

// 3. Encoder invariances.
Outcome encoder_invariance() {
  const auto t0 = std::chrono::steady_clock::now();
  const int k = 4;
  Rng rng(301);
  auto make = [&](EncoderKind kind) {
    GaussianPolicy p(small_config(kind, k, false, 16));
    p.init(rng);
    return p;
  };
  const GaussianPolicy ds = make(EncoderKind::DeepSets);
  const GaussianPolicy at = make(EncoderKind::Attention);
  const GaussianPolicy cm = make(EncoderKind::ConcatMlp);
  const GaussianPolicy bl = make(EncoderKind::Blind);
  double perm_err = 0.0, dup_err = 0.0, weight_err = 0.0, concat_gap = 0.0;
  bool blind_ok = true;
  for (int i = 0; i < 1000; ++i) {
    const auto obs = random_observations(rng, 1, k, false);
    Observation perm = obs[0];
    std::vector<int> order{0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng);
    if (order == std::vector<int>{0, 1, 2, 3}) std::swap(order[0], order[1]);
    for (int r = 0; r < k; ++r) perm.neighbors.row(r) = obs[0].neighbors.row(order[r]);
    const std::vector<Observation> pv{perm};
    const ObsBatch a = ObsBatch::from(obs), b = ObsBatch::from(pv);
    perm_err = std::max(perm_err, (ds.mean(a) - ds.mean(b)).cwiseAbs().maxCoeff());
    perm_err = std::max(perm_err, (at.mean(a) - at.mean(b)).cwiseAbs().maxCoeff());
    concat_gap = std::max(concat_gap, (cm.mean(a) - cm.mean(b)).cwiseAbs().maxCoeff());

    Observation twice = obs[0];
    twice.neighbors.resize(2 * k, kNeighborObsDim);
    twice.neighbors << obs[0].neighbors, obs[0].neighbors;
    GaussianPolicy ds2 = ds;
    const std::vector<Observation> tv{twice};
    dup_err = std::max(dup_err, (ds.mean(a) - ds2.mean(ObsBatch::from(tv))).cwiseAbs().maxCoeff());

    weight_err = std::max(weight_err, std::abs(at.network().attention_weights(a).sum() - 1.0));

    Observation other = obs[0];
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < kNeighborObsDim; ++c) other.neighbors(r, c) = uniform(rng, -5.0, 5.0);
    }
    const std::vector<Observation> ov{other};
    blind_ok = blind_ok && bl.mean(a) == bl.mean(ObsBatch::from(ov));
  }
  const double secs = seconds_since(t0);
  const bool pass =
      perm_err < 1e-12 && dup_err < 1e-12 && weight_err < 1e-12 && concat_gap > 1e-6 && blind_ok && secs < 10.0;
  return {pass, "perm " + fmt("%.1e", perm_err) + ", dup " + fmt("%.1e", dup_err) + ", weights " +
                    fmt("%.1e", weight_err) + ", concat gap " + fmt("%.2e", concat_gap) +
                    (blind_ok ? ", blind exact" : ", blind DIFFERS") + ", " + fmt("%.2f s", secs)};
}

// 4. Gradient checks.
Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, PolicyConfig>> archs{
      {"blind", small_config(EncoderKind::Blind, 2)},
      {"concat-mlp", small_config(EncoderKind::ConcatMlp, 2)},
      {"deepsets", small_config(EncoderKind::DeepSets, 2)},
      {"attention", small_config(EncoderKind::Attention, 3)},
      {"obstacle", small_config(EncoderKind::DeepSets, 2, true)},
      {"obstacle-attention", small_config(EncoderKind::Attention, 2, true)},
      {"deployment-16x8", PolicyConfig::deployment(2)},
  };
  double worst = 0.0;
  std::string worst_name;
  std::uint64_t seed = 401;
  for (const auto& [name, cfg] : archs) {
    const double e = actor_critic_gradient_error(cfg, seed++);
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 30.0, std::to_string(archs.size()) + " architectures, worst " + fmt("%.2e", worst) +
                                           " (" + worst_name + "), " + fmt("%.2f s", secs)};
}

// 5. Collision conservation.
Outcome collision_conservation() {
  const QuadrotorParams p;
  const CollisionModel model;
  Rng rng(501);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    QuadrotorState a, b;
    a.p = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 1, 3));
    Vec3 dir(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    dir.normalize();
    b.p = a.p + uniform(rng, 0.01, 0.099) * dir;
    for (auto* s : {&a, &b}) {
      s->v = Vec3(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
      s->omega = Vec3(uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, -10, 10));
      s->R = random_rotation(rng);
    }
    const Vec3 mid = 0.5 * (a.p + b.p);
    const auto [a2, b2] = resolve_drone_pair(a, b, p, model, rng);
    worst = std::max(worst, (pair_linear_momentum(a2, b2, p) - pair_linear_momentum(a, b, p)).norm());
    worst = std::max(worst, (pair_angular_momentum(a2, b2, p, mid) - pair_angular_momentum(a, b, p, mid)).norm());
  }
  return {worst < 1e-9, "10000 resolutions, worst momentum error " + fmt("%.2e", worst)};
}

// 6. Dynamics sanity.
Outcome dynamics_sanity() {
  QuadrotorParams p;
  p.thrust_noise_frac = 0.0;
  Rng rng(601);
  const double dt = 0.005;
  QuadrotorState s;
  s.p = {0.0, 0.0, 2.0};
  s.motor_thrust = Vec4::Constant(p.hover_fraction() * p.max_thrust_per_motor);
  for (int i = 0; i < 200; ++i) s = step_dynamics(s, Vec4::Constant(p.hover_fraction()), p, dt, rng);
  const double drift = (s.p - Vec3(0.0, 0.0, 2.0)).norm();

  QuadrotorState f;
  f.p = {0.0, 0.0, 50.0};
  double fall_err = 0.0;
  for (int i = 0; i < 400; ++i) {
    const QuadrotorState n = step_dynamics(f, Vec4::Zero(), p, dt, rng);
    fall_err = std::max(fall_err, std::abs((f.v.z() - n.v.z()) - kGravity * dt));
    f = n;
  }

  QuadrotorParams noisy;
  QuadrotorState r;
  r.p = {0.0, 0.0, 2.0};
  double ortho = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Vec4 cmd;
    for (int m = 0; m < 4; ++m) cmd(m) = uniform(rng, 0.0, 1.0);
    r = step_dynamics(r, cmd, noisy, dt, rng);
    ortho = std::max(ortho, orthonormality_error(r.R));
  }
  return {drift < 0.01 && fall_err < 1e-12 && ortho < 1e-9,
          "hover drift " + fmt("%.2e m", drift) + ", free-fall error " + fmt("%.2e", fall_err) +
              ", orthonormality " + fmt("%.2e", ortho)};
}

// 7. GAE oracle.
Outcome gae_oracle() {
  const std::vector<double> r{1.0, -0.5, 2.0, 0.0, 3.0};
  const std::vector<double> v{0.2, 0.4, -0.1, 0.3, 0.6};
  const std::vector<char> d{0, 0, 0, 0, 0};
  const double gamma = 0.9, lambda = 0.8, boot = 0.5;
  const auto g = compute_gae(r, v, d, boot, gamma, lambda);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    // Brute force: sum of (gamma lambda)^l delta_{t+l}.
    double sum = 0.0, w = 1.0;
    for (int l = t; l < 5; ++l) {
      const double next = l + 1 < 5 ? v[l + 1] : boot;
      sum += w * (r[l] + gamma * next - v[l]);
      w *= gamma * lambda;
    }
    worst = std::max(worst, std::abs(g.advantages[t] - sum));
  }
  const auto g0 = compute_gae(r, v, d, boot, 0.0, lambda);
  bool collapse = true;
  for (int t = 0; t < 5; ++t) collapse = collapse && g0.advantages[t] == r[t] - v[t];
  return {worst < 1e-12 && collapse,
          "5-step trace error " + fmt("%.2e", worst) + (collapse ? ", gamma=0 exact" : ", gamma=0 INEXACT")};
}

// 8. PPO bandit.
Outcome ppo_bandit() {
  const auto t0 = std::chrono::steady_clock::now();
  int solved = 0;
  std::string used;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const int u = bandit_updates_to_solve(seed);
    solved += u >= 0;
    used += (used.empty() ? "" : " ") + std::to_string(u);
  }
  const double secs = seconds_since(t0);
  return {solved >= 4 && secs < 60.0,
          std::to_string(solved) + "/5 seeds solved (updates: " + used + "), " + fmt("%.1f s", secs)};
}

// 9. Desk-scale training.
TrainSetup desk_scale_setup() {
  TrainSetup s;
  s.episode.num_drones = 4;
  s.episode.num_neighbors = 3;
  s.catalog = ScenarioCatalog::only(ScenarioKind::SameGoal);
  return s;
}

PolicyConfig desk_scale_policy() {
  PolicyConfig pc;
  pc.encoder = EncoderKind::DeepSets;
  pc.num_neighbors = 3;
  return pc;
}

double mean_distance(const GaussianPolicy& policy, const TrainSetup& t, int episodes, std::uint64_t seed) {
  EvalSetup e;
  e.episode = t.episode;
  e.params = t.params;
  e.noise = t.noise;
  e.reward = t.reward;
  e.spawn = t.spawn;
  e.catalog = t.catalog;
  PolicyController controller(policy);
  return run_eval(e, catalog_planner(e), controller, episodes, seed).report.mean_distance_to_target;
}

Outcome desk_scale_training() {
  if (const char* skip = std::getenv("QUADSWARM_ACCEPTANCE_SKIP_TRAINING"); skip && std::string(skip) == "1") {
    return {false, "skipped on request"};
  }
  const auto t0 = std::chrono::steady_clock::now();
  const long budget = 2'000'000;
  const TrainSetup setup = desk_scale_setup();
  int improved = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    ActorCritic model(desk_scale_policy());
    Rng init(derive_seed(seed, 3000));
    model.init(init);
    const std::uint64_t eval_seed = derive_seed(seed, 4000);
    const double before = mean_distance(model.policy, setup, 10, eval_seed);
    PPOTrainer trainer(setup, model, seed);
    while (trainer.transitions() < budget) trainer.iterate();
    const double after = mean_distance(model.policy, setup, 10, eval_seed);
    const double gain = 1.0 - after / before;
    improved += gain >= 0.5;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " " +
              fmt("%.3f", before) + " -> " + fmt("%.3f m", after) + " (" + fmt("%+.0f%%", 100.0 * gain) + ")";
    std::fprintf(stderr, "criterion 9: %s\n", detail.c_str());
  }
  return {improved >= 3,
          std::to_string(improved) + "/4 seeds improved >= 50%: " + detail + ", " + fmt("%.0f s", seconds_since(t0))};
}

// 10. BVC baseline goal swap.
Outcome bvc_baseline() {
  const EpisodeLog log = bvc_goal_swap_episode();
  const EvalReport r = compute_report(std::span<const EpisodeLog>(&log, 1));
  double worst = 0.0;
  int rows = 0;
  for (const auto& row : log.rows) {
    if (std::abs(row.t - 15.0) > 1e-9) continue;
    worst = std::max(worst, (row.p - row.goal).norm());
    ++rows;
  }
  const bool pass = log.events.empty() && rows == 4 && worst < 0.1 && r.max_speed < 4.0;
  return {pass, std::to_string(log.events.size()) + " collisions, worst distance at 15 s " + fmt("%.3f m", worst) +
                    ", max speed " + fmt("%.2f m/s", r.max_speed)};
}

// 11. Determinism and replay through the CLI.
Outcome determinism_and_replay() {
  const fs::path dir = scratch_dir("acceptance_replay");
  const std::string log = (dir / "out.txt").string();
  const fs::path a = dir / "a", b = dir / "b";
  const std::string args = "train --seed 11 " + tiny_train_overrides() + " --out ";
  if (run_swarmctl(args + a.string(), log) != 0 || run_swarmctl(args + b.string(), log) != 0) {
    return {false, "training run failed: " + slurp(log)};
  }
  int files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (slurp(entry.path()) != slurp(b / rel)) return {false, rel.string() + " differs between identical runs"};
    ++files;
  }
  const int replay = run_swarmctl("replay --run " + a.string(), log);
  if (replay != 0) return {false, "replay exited " + std::to_string(replay)};
  fs::remove_all(dir);
  return {true, std::to_string(files) + " artifacts bit-identical across runs, replay verified"};
}

// 12. Episode accounting.
Outcome episode_accounting() {
  EpisodeConfig e;
  e.num_drones = 2;
  e.num_neighbors = 1;
  SwarmEnv env(e, QuadrotorParams{}, NoiseModel{}, RewardCoefficients{});
  Rng rng(1201);
  ScenarioSpec spec;
  env.reset(spec, rng);
  const std::vector<Vec4> actions(2, Vec4::Zero());
  int steps = 0;
  while (!env.done()) {
    env.step(actions, rng);
    ++steps;
  }
  return {steps == 1600 && env.physics_step_count() == 3200,
          std::to_string(steps) + " control steps, " + std::to_string(env.physics_step_count()) + " physics steps"};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, reward_oracle},       {2, action_map},          {3, encoder_invariance},
      {4, gradient_checks},     {5, collision_conservation}, {6, dynamics_sanity},
      {7, gae_oracle},          {8, ppo_bandit},          {9, desk_scale_training},
      {10, bvc_baseline},       {11, determinism_and_replay}, {12, episode_accounting},
  };
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

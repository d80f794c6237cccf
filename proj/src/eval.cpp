#include "quadswarm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace quadswarm {

EvalReport compute_report(std::span<const EpisodeLog> logs, const MetricOptions& options) {
  if (logs.empty()) throw std::invalid_argument("compute_report: no episodes");
  if (!(options.window_fraction > 0.0 && options.window_fraction <= 1.0)) {
    throw std::invalid_argument("compute_report: window fraction must lie in (0, 1]");
  }
  EvalReport r;
  r.episodes = static_cast<int>(logs.size());
  double distance_sum = 0.0;
  long distance_count = 0;
  for (const EpisodeLog& log : logs) {
    const int n = log.num_drones;
    const int steps = log.steps();
    const double dt = log.control_dt;
    r.drone_minutes += n * steps * dt / 60.0;
    if (options.count_pair_events) {
      r.collision_count += static_cast<long>(log.events.size());
    } else {
      for (const auto& e : log.events) r.collision_count += e.kind == CollisionKind::DroneDrone ? 2 : 1;
    }

    const int first = steps - static_cast<int>(std::lround(options.window_fraction * steps));
    for (int k = first; k < steps; ++k) {
      for (int i = 0; i < n; ++i) {
        const TrajectoryRow& row = log.rows[static_cast<std::size_t>(k) * n + i];
        distance_sum += (row.p - row.goal).norm();
        ++distance_count;
      }
    }
    for (int i = 0; i < n; ++i) {
      auto pos = [&](int k) -> const Vec3& { return log.rows[static_cast<std::size_t>(k) * n + i].p; };
      Vec3 prev_velocity = Vec3::Zero();
      for (int k = 1; k < steps; ++k) {
        const Vec3 velocity = (pos(k) - pos(k - 1)) / dt;
        r.max_speed = std::max(r.max_speed, velocity.norm());
        if (k >= 2) r.max_acceleration = std::max(r.max_acceleration, ((velocity - prev_velocity) / dt).norm());
        prev_velocity = velocity;
      }
    }
  }
  r.mean_distance_to_target = distance_count > 0 ? distance_sum / distance_count : 0.0;
  r.collisions_per_minute_per_drone =
      r.drone_minutes > 0.0 ? static_cast<double>(r.collision_count) / r.drone_minutes : 0.0;
  return r;
}

std::vector<Vec4> PolicyController::act(std::span<const Observation> observations) {
  const MatX mean = policy_.mean(ObsBatch::from(observations));
  std::vector<Vec4> actions(observations.size());
  for (std::size_t i = 0; i < actions.size(); ++i) actions[i] = mean.row(static_cast<Eigen::Index>(i)).transpose();
  return actions;
}

EpisodePlanner catalog_planner(const EvalSetup& setup) {
  ScenarioCatalog catalog = setup.catalog;
  catalog.episode_duration = setup.episode.duration;
  const int n = setup.episode.num_drones;
  return [catalog, n](Rng& rng, int) { return EpisodePlan{sample_scenario(rng, n, catalog), std::nullopt}; };
}

EpisodeLog run_episode(const EvalSetup& setup, const EpisodePlan& plan, Controller& controller,
                       Rng& rng) {
  SwarmEnv env(setup.episode, setup.params, setup.noise, setup.reward, CollisionModel{}, setup.spawn);
  std::vector<Observation> obs =
      plan.initial ? env.reset(plan.spec, *plan.initial, rng) : env.reset(plan.spec, rng);
  controller.reset();

  EpisodeLog log;
  log.num_drones = setup.episode.num_drones;
  log.control_dt = setup.episode.control_dt();
  log.rows.reserve(static_cast<std::size_t>(setup.episode.control_steps()) * log.num_drones);
  while (!env.done()) {
    const auto actions = controller.act(obs);
    StepResult res = env.step(actions, rng);
    for (int i = 0; i < log.num_drones; ++i) {
      TrajectoryRow row;
      row.t = env.time();
      row.drone = i;
      row.p = env.states()[i].p;
      row.v = env.states()[i].v;
      row.goal = env.goals()[i];
      row.reward = res.rewards[i].total;
      row.collision = res.new_collision[i] != 0;
      log.rows.push_back(row);
    }
    for (const auto& e : res.events) {
      if (e.kind == CollisionKind::DroneGround && !setup.episode.count_ground_collisions) continue;
      log.events.push_back(e);
    }
    obs = std::move(res.observations);
  }
  return log;
}

EvalResult run_eval(const EvalSetup& setup, const EpisodePlanner& planner, Controller& controller,
                    int episodes, std::uint64_t seed, const MetricOptions& metrics) {
  if (episodes < 1) throw UsageError("episodes must be at least 1");
  EvalResult out;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    const EpisodePlan plan = planner(rng, e);
    out.logs.push_back(run_episode(setup, plan, controller, rng));
  }
  out.report = compute_report(out.logs, metrics);
  return out;
}

namespace {

std::vector<ProbeEntry> probe_weights(const GaussianPolicy& policy,
                                      std::span<const Observation> snapshot) {
  const ObsBatch batch = ObsBatch::from(snapshot);
  const MatX w = policy.network().attention_weights(batch);
  const Eigen::Index k = batch.neighbor_count;
  std::vector<ProbeEntry> out;
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    ProbeEntry e;
    e.drone = static_cast<int>(i);
    e.neighbor_ids = snapshot[i].neighbor_ids;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double wj = w(static_cast<Eigen::Index>(i) * k + j, 0);
      e.weights.push_back(wj);
      if (wj > 0.0) e.entropy -= wj * std::log(wj);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

ProbeResult attention_probe(const GaussianPolicy& policy, std::span<const Observation> snapshot) {
  if (policy.config().encoder != EncoderKind::Attention) {
    throw UsageError("attention probe needs an attention policy, got " + to_string(policy.config().encoder));
  }
  ProbeResult r;
  r.observed = probe_weights(policy, snapshot);
  std::vector<Observation> zeroed(snapshot.begin(), snapshot.end());
  for (auto& o : zeroed) {
    if (o.neighbors.rows() > 0) o.neighbors.rightCols<3>().setZero();
  }
  r.zero_velocity = probe_weights(policy, zeroed);
  return r;
}

std::vector<Observation> probe_snapshot(int num_neighbors) {
  if (num_neighbors < 1) throw UsageError("the two-on-two probe needs K >= 1");
  // Drones 0, 1: red, hovering at their goals. Drones 2, 3: blue, heading -x.
  // Larger K is filled with bystanders hovering well outside the encounter.
  const int n = std::max(4, num_neighbors + 1);
  std::vector<QuadrotorState> s(n);
  s[0].p = {-0.5, -0.3, 2.0};
  s[1].p = {-0.5, 0.3, 2.0};
  s[2].p = {0.7, -0.3, 2.0};
  s[2].v = {-1.5, 0.0, 0.0};
  s[3].p = {1.2, 0.6, 2.0};
  s[3].v = {-1.0, 0.0, 0.0};
  std::vector<Vec3> goals{s[0].p, s[1].p, Vec3(-1.5, -0.3, 2.0), Vec3(-1.5, 0.3, 2.0)};
  for (int i = 4; i < n; ++i) {
    s[i].p = {-3.0 + 1.5 * (i - 4), 6.0, 2.0};
    goals.push_back(s[i].p);
  }
  std::vector<Observation> obs;
  for (int i = 0; i < 4; ++i) obs.push_back(build_observation(i, s, goals, nullptr, num_neighbors));
  return obs;
}

ScaleTuneResult scale_tune(ActorCritic& model, const TrainSetup& train, long extra_transitions,
                           int eval_episodes, std::uint64_t seed, const MetricOptions& metrics,
                           const std::function<void(const IterationStats&)>& on_iteration) {
  const int k = train.episode.num_neighbors;
  if (model.config.num_neighbors != k) {
    throw UsageError("checkpoint was trained with K = " + std::to_string(model.config.num_neighbors) +
                     ", scale-tune keeps K fixed at " + std::to_string(k));
  }
  if (train.episode.num_drones <= k) throw UsageError("scale-tune needs num_drones > num_neighbors");

  EvalSetup eval{train.episode, train.params, train.noise, train.reward, train.spawn, train.catalog};
  const EpisodePlanner planner = catalog_planner(eval);
  ScaleTuneResult out;
  {
    PolicyController c(model.policy);
    out.before = run_eval(eval, planner, c, eval_episodes, derive_seed(seed, 2000), metrics).report;
  }
  if (extra_transitions > 0) {
    PPOTrainer trainer(train, model, seed);
    while (trainer.transitions() < extra_transitions) {
      const IterationStats st = trainer.iterate();
      if (on_iteration) on_iteration(st);
    }
    out.transitions = trainer.transitions();
  }
  {
    PolicyController c(model.policy);
    EvalResult after = run_eval(eval, planner, c, eval_episodes, derive_seed(seed, 2000), metrics);
    out.after = after.report;
    out.after_logs = std::move(after.logs);
  }
  return out;
}

}  // namespace quadswarm

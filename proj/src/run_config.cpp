#include "quadswarm/run_config.hpp"

namespace quadswarm {

RunConfig RunConfig::resolve(KeyValueConfig cfg) {
  RunConfig r;
  const long long seed = cfg.get_int("seed", 1);
  if (seed < 0) throw UsageError("seed must be non-negative");
  r.seed = static_cast<std::uint64_t>(seed);
  r.episode = EpisodeConfig::from_config(cfg);
  r.params = QuadrotorParams::from_config(cfg);
  r.noise = NoiseModel::from_config(cfg);
  r.reward = RewardCoefficients::from_config(cfg);
  r.catalog = ScenarioCatalog::from_config(cfg);
  r.spawn = SpawnConfig::from_config(cfg);
  r.policy = PolicyConfig::from_config(cfg, r.episode.num_neighbors, r.catalog.obstacles);
  r.ppo = PPOConfig::from_config(cfg);
  r.bvc = BvcConfig::from_config(cfg);
  r.metrics.window_fraction = cfg.get_double("distance_window_fraction", r.metrics.window_fraction);
  r.metrics.count_pair_events = cfg.get_bool("count_pair_events", r.metrics.count_pair_events);
  if (!(r.metrics.window_fraction > 0.0 && r.metrics.window_fraction <= 1.0)) {
    throw UsageError("distance_window_fraction must lie in (0, 1]");
  }
  r.total_transitions = static_cast<long>(cfg.get_int("total_transitions", r.total_transitions));
  r.eval_episodes = static_cast<int>(cfg.get_int("eval_episodes", r.eval_episodes));
  r.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every_iterations", r.checkpoint_every));
  r.scale_tune_transitions =
      static_cast<long>(cfg.get_int("scale_tune_transitions", r.scale_tune_transitions));
  if (r.total_transitions < 0 || r.scale_tune_transitions < 0) {
    throw UsageError("transition budgets must be non-negative");
  }
  if (r.eval_episodes < 1) throw UsageError("eval_episodes must be at least 1");
  if (r.checkpoint_every < 1) throw UsageError("checkpoint_every_iterations must be at least 1");
  cfg.reject_unconsumed();
  r.text = cfg.serialize();
  r.hash = cfg.hash();
  return r;
}

TrainSetup RunConfig::train_setup() const {
  return TrainSetup{episode, params, noise, reward, catalog, spawn, ppo};
}

EvalSetup RunConfig::eval_setup() const {
  return EvalSetup{episode, params, noise, reward, spawn, catalog};
}

void apply_override(KeyValueConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override '" + assignment + "' is not of the form key=value");
  }
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace quadswarm

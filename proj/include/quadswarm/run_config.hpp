#pragma once

#include <cstdint>
#include <string>

#include "quadswarm/bvc.hpp"
#include "quadswarm/config.hpp"
#include "quadswarm/eval.hpp"
#include "quadswarm/ppo.hpp"

namespace quadswarm {

/// Every setting of a run, resolved from one key-value file plus overrides.
/// `text` is the canonical serialization including every default that was
/// applied; `hash` identifies the run in all artifacts it writes.
struct RunConfig {
  std::uint64_t seed = 1;
  EpisodeConfig episode;
  QuadrotorParams params;
  NoiseModel noise;
  RewardCoefficients reward;
  ScenarioCatalog catalog;
  SpawnConfig spawn;
  PolicyConfig policy;
  PPOConfig ppo;
  BvcConfig bvc;
  MetricOptions metrics;
  long total_transitions = 2'000'000;
  int eval_episodes = 20;
  int checkpoint_every = 50;  // PPO iterations between checkpoints
  long scale_tune_transitions = 0;

  std::string text;
  std::uint64_t hash = 0;

  /// Pulls every component's settings, then rejects keys nobody consumed.
  static RunConfig resolve(KeyValueConfig cfg);

  TrainSetup train_setup() const;
  EvalSetup eval_setup() const;
};

/// Reads a `key=value` override as given on the command line.
void apply_override(KeyValueConfig& cfg, const std::string& assignment);

}  // namespace quadswarm

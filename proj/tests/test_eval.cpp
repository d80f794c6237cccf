#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "quadswarm/eval.hpp"
#include "quadswarm/trajectory_io.hpp"
#include "test_support.hpp"

using namespace quadswarm;
using quadswarm::testing::small_config;

namespace {

/// Two drones, four steps of 0.5 s. Drone 0 runs along x at 2, 4 and 6 m/s,
/// drone 1 sits 1 m from its goal.
EpisodeLog hand_log() {
  EpisodeLog log;
  log.num_drones = 2;
  log.control_dt = 0.5;
  const double xs[4] = {0.0, 1.0, 3.0, 6.0};
  for (int k = 0; k < 4; ++k) {
    TrajectoryRow a;
    a.t = 0.5 * (k + 1);
    a.drone = 0;
    a.p = {xs[k], 0.0, 0.0};
    TrajectoryRow b = a;
    b.drone = 1;
    b.p = {0.0, 1.0, 0.0};
    log.rows.push_back(a);
    log.rows.push_back(b);
  }
  log.events.push_back({CollisionKind::DroneDrone, 0, 1, 1.0});
  log.events.push_back({CollisionKind::DroneGround, 1, -1, 1.5});
  return log;
}

class ConstantController : public Controller {
 public:
  explicit ConstantController(Vec4 a) : a_(a) {}
  std::vector<Vec4> act(std::span<const Observation> obs) override { return std::vector<Vec4>(obs.size(), a_); }

 private:
  Vec4 a_;
};

EvalSetup short_setup(int n, int k, double duration) {
  EvalSetup s;
  s.episode.num_drones = n;
  s.episode.num_neighbors = k;
  s.episode.duration = duration;
  s.catalog.episode_duration = duration;
  return s;
}

std::size_t count_lines(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

}  // namespace

TEST_CASE("report metrics on a hand-built log") {
  const EpisodeLog log = hand_log();
  const EvalReport r = compute_report(std::span<const EpisodeLog>(&log, 1));
  CHECK(r.mean_distance_to_target == doctest::Approx(13.0 / 6.0).epsilon(1e-15));
  CHECK(r.max_speed == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(r.max_acceleration == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(r.collision_count == 3);
  CHECK(r.drone_minutes == doctest::Approx(4.0 / 60.0));
  CHECK(r.collisions_per_minute_per_drone == doctest::Approx(45.0));
  MetricOptions pair;
  pair.count_pair_events = true;
  const EvalReport rp = compute_report(std::span<const EpisodeLog>(&log, 1), pair);
  CHECK(rp.collision_count == 2);
  CHECK(rp.collisions_per_minute_per_drone == doctest::Approx(30.0));
  MetricOptions all;
  all.window_fraction = 1.0;
  CHECK(compute_report(std::span<const EpisodeLog>(&log, 1), all).mean_distance_to_target ==
        doctest::Approx(14.0 / 8.0));
  CHECK_THROWS_AS(compute_report({}), std::invalid_argument);
}

TEST_CASE("CSV reload reproduces every metric bit for bit") {
  const EvalSetup setup = short_setup(3, 2, 2.0);
  ActorCritic model(small_config(EncoderKind::DeepSets, 2));
  Rng init(111);
  model.init(init);
  PolicyController controller(model.policy);
  const EvalResult res = run_eval(setup, catalog_planner(setup), controller, 2, 112);
  std::vector<EpisodeLog> reloaded;
  for (const auto& log : res.logs) {
    const std::uint64_t hash = 0xabcdef12345ULL;
    LoadedEpisode back = parse_trajectory_csv(trajectory_csv(log, hash));
    CHECK(back.config_hash == hash);
    parse_events_csv(events_csv(log, hash), hash, back.log);
    CHECK(log_digest(back.log) == log_digest(log));
    CHECK(back.log.events.size() == log.events.size());
    reloaded.push_back(back.log);
  }
  const EvalReport a = res.report;
  const EvalReport b = compute_report(reloaded);
  CHECK(a.mean_distance_to_target == b.mean_distance_to_target);
  CHECK(a.max_speed == b.max_speed);
  CHECK(a.max_acceleration == b.max_acceleration);
  CHECK(a.collisions_per_minute_per_drone == b.collisions_per_minute_per_drone);
}

TEST_CASE("a 16 s episode of 8 drones logs 12800 rows") {
  const EvalSetup setup = short_setup(8, 6, 16.0);
  BaselineController controller(8, setup.params, BvcConfig{}, setup.episode.control_dt());
  const EvalResult res = run_eval(setup, catalog_planner(setup), controller, 1, 113);
  REQUIRE(res.logs.size() == 1);
  CHECK(res.logs[0].rows.size() == 12800u);
  CHECK(res.logs[0].steps() == 1600);
  CHECK(count_lines(trajectory_csv(res.logs[0], 1)) == 12802u);
}

TEST_CASE("an empty log gives a header-only CSV and a valid SVG") {
  EpisodeLog log;
  log.num_drones = 3;
  const std::string csv = trajectory_csv(log, 7);
  CHECK(count_lines(csv) == 2u);
  CHECK(csv.find(kTrajectoryHeader) != std::string::npos);
  const LoadedEpisode back = parse_trajectory_csv(csv);
  CHECK(back.log.rows.empty());
  const std::string svg = trajectory_svg(log);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("malformed CSV files are rejected") {
  CHECK_THROWS_AS(parse_trajectory_csv("no header here\n"), UsageError);
  EpisodeLog log = hand_log();
  std::string csv = trajectory_csv(log, 5);
  csv += "1.0,0,abc\n";
  CHECK_THROWS_AS(parse_trajectory_csv(csv), UsageError);
  CHECK_THROWS_AS(parse_events_csv(events_csv(log, 5), 6, log), UsageError);
}

TEST_CASE("ground contacts can be left out of the event log") {
  EvalSetup setup = short_setup(1, 0, 1.0);
  setup.params.thrust_noise_frac = 0.0;
  EpisodePlan plan;
  plan.spec.episode_duration = 1.0;
  std::vector<QuadrotorState> init(1);
  init[0].p = {0.0, 0.0, 0.5};
  plan.initial = init;
  ConstantController drop(Vec4::Constant(-1.0));
  Rng a(114), b(114);
  const EpisodeLog counted = run_episode(setup, plan, drop, a);
  CHECK_FALSE(counted.events.empty());
  CHECK(std::all_of(counted.events.begin(), counted.events.end(),
                    [](const auto& e) { return e.kind == CollisionKind::DroneGround; }));
  setup.episode.count_ground_collisions = false;
  CHECK(run_episode(setup, plan, drop, b).events.empty());
}

TEST_CASE("evaluation is reproducible and scheduling-free") {
  const EvalSetup setup = short_setup(2, 1, 1.0);
  ActorCritic model(small_config(EncoderKind::Attention, 1));
  Rng init(115);
  model.init(init);
  PolicyController controller(model.policy);
  const EvalResult x = run_eval(setup, catalog_planner(setup), controller, 3, 116);
  const EvalResult y = run_eval(setup, catalog_planner(setup), controller, 3, 116);
  for (int e = 0; e < 3; ++e) CHECK(log_digest(x.logs[e]) == log_digest(y.logs[e]));
}

TEST_CASE("attention probe on the encounter snapshot") {
  for (int k : {1, 3, 6}) {
    const auto snap = probe_snapshot(k);
    REQUIRE(snap.size() == 4u);
    for (const auto& o : snap) CHECK(o.neighbors.rows() == k);
    PolicyConfig pc = small_config(EncoderKind::Attention, k);
    GaussianPolicy p(pc);
    Rng rng(117);
    p.init(rng);
    const ProbeResult r = attention_probe(p, snap);
    REQUIRE(r.observed.size() == 4u);
    REQUIRE(r.zero_velocity.size() == 4u);
    for (const auto& e : r.observed) {
      double sum = 0.0;
      for (double w : e.weights) sum += w;
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(e.entropy >= 0.0);
      CHECK(e.entropy <= std::log(static_cast<double>(k)) + 1e-12);
    }
    GaussianPolicy ds(small_config(EncoderKind::DeepSets, k));
    CHECK_THROWS_AS(attention_probe(ds, snap), UsageError);
  }
  CHECK_THROWS_AS(probe_snapshot(0), UsageError);
}

TEST_CASE("scale tuning rejects a mismatched neighborhood") {
  ActorCritic model(small_config(EncoderKind::DeepSets, 2));
  Rng rng(118);
  model.init(rng);
  TrainSetup t;
  t.episode.num_drones = 6;
  t.episode.num_neighbors = 3;
  CHECK_THROWS_AS(scale_tune(model, t, 0, 1, 1), UsageError);
  t.episode.num_drones = 2;
  t.episode.num_neighbors = 2;
  CHECK_THROWS_AS(scale_tune(model, t, 0, 1, 1), UsageError);
}

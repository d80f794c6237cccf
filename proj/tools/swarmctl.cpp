#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "quadswarm/eval.hpp"
#include "quadswarm/nn/checkpoint.hpp"
#include "quadswarm/run_config.hpp"
#include "quadswarm/trajectory_io.hpp"

namespace fs = std::filesystem;
using namespace quadswarm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitMismatch = 3;
constexpr int kExitInterrupted = 130;

volatile std::sig_atomic_t g_interrupted = 0;
extern "C" void on_sigint(int) { g_interrupted = 1; }

struct Interrupted : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ReplayMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Seed streams of the CLI, disjoint from the trainer's own.
constexpr std::uint64_t kInitStream = 3000;
constexpr std::uint64_t kEvalStream = 4000;

/// Flags shared by the subcommands. Optional ones map onto config keys.
struct Flags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::optional<std::string> scenario;
  std::optional<int> episodes;
  std::optional<int> num_drones;
  std::optional<long> transitions;
  std::string checkpoint;
  std::string out;
  std::string run;
  std::string csv;
  std::string events;
  std::string svg;
};

/// What a run directory records about how it was produced.
struct RunHeader {
  std::string command;
  std::uint64_t config_hash = 0;
  std::string checkpoint;
  std::uint64_t checkpoint_hash = 0;
  std::vector<std::string> overrides;  // in application order, later wins
};

/// Digest of every deterministic artifact, keyed by path relative to the run dir.
using Manifest = std::map<std::string, std::string>;

void write_artifact(const fs::path& dir, const std::string& rel, const std::string& text,
                    Manifest& manifest) {
  const fs::path path = dir / rel;
  fs::create_directories(path.parent_path());
  write_text_file(path.string(), text);
  manifest[rel] = hex64(fnv1a64(text));
}

std::string header_text(const RunHeader& h) {
  std::string out = "# swarmctl run record\n# command = " + h.command + "\n# config_hash = " +
                    hex64(h.config_hash) + "\n";
  if (!h.checkpoint.empty()) {
    out += "# checkpoint = " + h.checkpoint + "\n# checkpoint_config_hash = " + hex64(h.checkpoint_hash) + "\n";
  }
  for (const auto& o : h.overrides) out += "# override = " + o + "\n";
  return out;
}

RunHeader parse_header(const std::string& text) {
  RunHeader h;
  std::istringstream in(text);
  std::string line;
  bool have_hash = false;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) != 0) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(2, eq - 2);
    const std::string value = line.substr(eq + 3);
    if (key == "command") h.command = value;
    if (key == "checkpoint") h.checkpoint = value;
    if (key == "override") h.overrides.push_back(value);
    if (key == "config_hash" || key == "checkpoint_config_hash") {
      std::uint64_t v = 0;
      try {
        v = std::stoull(value, nullptr, 16);
      } catch (const std::exception&) {
        throw UsageError("run.cfg: bad hash '" + value + "'");
      }
      if (key == "config_hash") {
        h.config_hash = v;
        have_hash = true;
      } else {
        h.checkpoint_hash = v;
      }
    }
  }
  if (h.command.empty() || !have_hash) throw UsageError("run.cfg lacks its command/config_hash header");
  return h;
}

std::string manifest_text(const Manifest& m) {
  std::string out;
  for (const auto& [file, digest] : m) out += digest + "  " + file + "\n";
  return out;
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string digest, file;
  while (in >> digest >> file) m[file] = digest;
  return m;
}

nn::Checkpoint load_checkpoint(const std::string& path) {
  if (path.empty()) throw UsageError("this command needs --checkpoint");
  if (!fs::exists(path)) throw UsageError("checkpoint '" + path + "' does not exist");
  try {
    return nn::Checkpoint::load(path);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("cannot load checkpoint '" + path + "': " + e.what());
  }
}

/// Checkpoint config < config file < --set < dedicated flags.
KeyValueConfig assemble_config(const std::string& command, const Flags& f, const nn::Checkpoint* ck,
                               std::vector<std::string>& overrides) {
  KeyValueConfig cfg = ck ? KeyValueConfig::parse(ck->config_text, "checkpoint") : KeyValueConfig{};
  if (!f.config_path.empty()) {
    for (const auto& [k, v] : KeyValueConfig::load(f.config_path).entries()) cfg.set(k, v);
  }
  auto over = [&](const std::string& assignment) {
    apply_override(cfg, assignment);
    overrides.push_back(assignment);
  };
  for (const auto& s : f.sets) over(s);
  if (f.seed) over("seed=" + std::to_string(*f.seed));
  if (f.scenario) over("scenario=" + *f.scenario);
  if (f.episodes) over("eval_episodes=" + std::to_string(*f.episodes));
  if (f.num_drones) over("num_drones=" + std::to_string(*f.num_drones));
  if (f.transitions) {
    over((command == "scale-tune" ? "scale_tune_transitions=" : "total_transitions=") +
         std::to_string(*f.transitions));
  }
  return cfg;
}

ActorCritic restore_model(const RunConfig& rc, const nn::Checkpoint& ck) {
  ActorCritic model(rc.policy);
  model.restore(ck);
  return model;
}

void save_model(ActorCritic& model, const RunConfig& rc, long transitions, const fs::path& dir,
                const std::string& rel, Manifest* manifest) {
  nn::Checkpoint ck;
  ck.config_text = rc.text;
  ck.config_hash = rc.hash;
  model.store(ck);
  ck.put_scalar("transitions", static_cast<double>(transitions));
  const fs::path path = dir / rel;
  fs::create_directories(path.parent_path());
  ck.save(path.string());
  if (manifest) (*manifest)[rel] = hex64(fnv1a64(read_text_file(path.string())));
}

std::string report_csv(const EvalReport& r, std::uint64_t hash) {
  return "# config_hash=" + hex64(hash) +
         "\nepisodes,collisions_per_minute_per_drone,mean_distance_to_target_m,max_speed_mps,"
         "max_acceleration_mps2,collision_count,drone_minutes\n" +
         std::to_string(r.episodes) + "," + format_double(r.collisions_per_minute_per_drone) + "," +
         format_double(r.mean_distance_to_target) + "," + format_double(r.max_speed) + "," +
         format_double(r.max_acceleration) + "," + std::to_string(r.collision_count) + "," +
         format_double(r.drone_minutes) + "\n";
}

std::string report_text(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "episodes                     %d\n"
                "collisions / min / drone     %.4f\n"
                "mean distance to target (m)  %.4f\n"
                "max speed (m/s)              %.4f\n"
                "max acceleration (m/s^2)     %.4f\n"
                "collision count              %ld\n"
                "drone minutes                %.3f\n",
                r.episodes, r.collisions_per_minute_per_drone, r.mean_distance_to_target, r.max_speed,
                r.max_acceleration, r.collision_count, r.drone_minutes);
  return buf;
}

void write_eval(const fs::path& dir, const EvalResult& result, const RunConfig& rc,
                const std::string& stem, Manifest& m) {
  for (std::size_t e = 0; e < result.logs.size(); ++e) {
    char name[64];
    std::snprintf(name, sizeof name, "trajectories/episode_%03zu", e);
    const std::string base = name;
    write_artifact(dir, base + ".csv", trajectory_csv(result.logs[e], rc.hash), m);
    write_artifact(dir, base + "_events.csv", events_csv(result.logs[e], rc.hash), m);
    write_artifact(dir, base + ".svg", trajectory_svg(result.logs[e]), m);
  }
  write_artifact(dir, stem + ".csv", report_csv(result.report, rc.hash), m);
  write_artifact(dir, stem + ".txt", report_text(result.report), m);
}

constexpr const char* kTrainHeader =
    "iteration,transitions,mean_reward,r_position,r_collision,r_proximity,r_omega,r_thrust,"
    "r_rotation,episode_return,episodes_finished,policy_loss,value_loss,entropy,grad_norm,"
    "clip_fraction,approx_kl,sigma\n";

std::string train_row(int iteration, const IterationStats& s) {
  const double v[] = {s.mean_reward, s.reward_terms.position, s.reward_terms.collision,
                      s.reward_terms.proximity, s.reward_terms.omega, s.reward_terms.thrust,
                      s.reward_terms.rotation, s.mean_episode_return};
  std::string row = std::to_string(iteration) + "," + std::to_string(s.transitions);
  for (double x : v) row += "," + format_double(x);
  row += "," + std::to_string(s.episodes_finished);
  const double u[] = {s.update.policy_loss, s.update.value_loss, s.update.entropy, s.update.grad_norm,
                      s.update.clip_fraction, s.update.approx_kl, s.sigma};
  for (double x : u) row += "," + format_double(x);
  return row + "\n";
}

void progress(const IterationStats& s, long target) {
  std::fprintf(stderr, "[%ld/%ld] reward/step %.4f  sigma %.3f  episodes %d\n", s.transitions, target,
               s.mean_reward, s.sigma, s.episodes_finished);
}

EvalResult evaluate(const RunConfig& rc, Controller& controller) {
  const EvalSetup setup = rc.eval_setup();
  return run_eval(setup, catalog_planner(setup), controller, rc.eval_episodes,
                  derive_seed(rc.seed, kEvalStream), rc.metrics);
}

Manifest exec_train(const RunConfig& rc, const fs::path& dir) {
  Manifest m;
  ActorCritic model(rc.policy);
  Rng init_rng(derive_seed(rc.seed, kInitStream));
  model.init(init_rng);
  PPOTrainer trainer(rc.train_setup(), model, rc.seed);
  std::string csv = "# config_hash=" + hex64(rc.hash) + "\n" + kTrainHeader;
  int iteration = 0;
  while (trainer.transitions() < rc.total_transitions) {
    const IterationStats s = trainer.iterate();
    ++iteration;
    csv += train_row(iteration, s);
    progress(s, rc.total_transitions);
    if (iteration % rc.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoints/iter_%06d.bin", iteration);
      save_model(model, rc, trainer.transitions(), dir, name, nullptr);
    }
    if (g_interrupted) {
      save_model(model, rc, trainer.transitions(), dir, "checkpoints/interrupted.bin", nullptr);
      write_text_file((dir / "train.csv").string(), csv);
      throw Interrupted("interrupted; saved checkpoints/interrupted.bin");
    }
  }
  write_artifact(dir, "train.csv", csv, m);
  save_model(model, rc, trainer.transitions(), dir, "checkpoint.bin", &m);
  PolicyController controller(model.policy);
  write_eval(dir, evaluate(rc, controller), rc, "report", m);
  return m;
}

Manifest exec_eval(const RunConfig& rc, const nn::Checkpoint& ck, const fs::path& dir) {
  Manifest m;
  ActorCritic model = restore_model(rc, ck);
  PolicyController controller(model.policy);
  write_eval(dir, evaluate(rc, controller), rc, "report", m);
  return m;
}

Manifest exec_baseline(const RunConfig& rc, const fs::path& dir) {
  Manifest m;
  BaselineController controller(rc.episode.num_drones, rc.params, rc.bvc, rc.episode.control_dt());
  write_eval(dir, evaluate(rc, controller), rc, "report", m);
  return m;
}

Manifest exec_scale_tune(const RunConfig& rc, const nn::Checkpoint& ck, const fs::path& dir) {
  Manifest m;
  ActorCritic model = restore_model(rc, ck);
  std::string csv = "# config_hash=" + hex64(rc.hash) + "\n" + kTrainHeader;
  int iteration = 0;
  const ScaleTuneResult r = scale_tune(model, rc.train_setup(), rc.scale_tune_transitions, rc.eval_episodes,
                                       rc.seed, rc.metrics, [&](const IterationStats& s) {
                                         csv += train_row(++iteration, s);
                                         progress(s, rc.scale_tune_transitions);
                                         if (g_interrupted) {
                                           save_model(model, rc, s.transitions, dir,
                                                      "checkpoints/interrupted.bin", nullptr);
                                           throw Interrupted("interrupted; saved checkpoints/interrupted.bin");
                                         }
                                       });
  write_artifact(dir, "train.csv", csv, m);
  save_model(model, rc, r.transitions, dir, "checkpoint.bin", &m);
  write_artifact(dir, "report_before.csv", report_csv(r.before, rc.hash), m);
  write_artifact(dir, "report_before.txt", report_text(r.before), m);
  EvalResult after{r.after, r.after_logs};
  write_eval(dir, after, rc, "report", m);
  std::cout << "before fine-tuning\n" << report_text(r.before) << "after fine-tuning\n";
  return m;
}

Manifest exec_probe(const RunConfig& rc, const nn::Checkpoint& ck, const fs::path& dir) {
  Manifest m;
  ActorCritic model = restore_model(rc, ck);
  const ProbeResult probe = attention_probe(model.policy, probe_snapshot(rc.policy.num_neighbors));
  std::string csv = "# config_hash=" + hex64(rc.hash) + "\nvariant,drone,rank,neighbor_id,weight,entropy\n";
  auto emit = [&](const char* variant, const std::vector<ProbeEntry>& entries) {
    for (const auto& e : entries) {
      for (std::size_t j = 0; j < e.weights.size(); ++j) {
        csv += std::string(variant) + "," + std::to_string(e.drone) + "," + std::to_string(j) + "," +
               std::to_string(e.neighbor_ids[j]) + "," + format_double(e.weights[j]) + "," +
               format_double(e.entropy) + "\n";
      }
    }
  };
  emit("observed", probe.observed);
  emit("zero_velocity", probe.zero_velocity);
  write_artifact(dir, "probe.csv", csv, m);
  std::cout << csv;
  return m;
}

/// Runs `command` into `dir`; shared by fresh runs and replay.
Manifest execute(const std::string& command, const RunConfig& rc, const nn::Checkpoint* ck,
                 const fs::path& dir) {
  fs::create_directories(dir);
  if (command == "train") return exec_train(rc, dir);
  if (command == "baseline") return exec_baseline(rc, dir);
  if (command == "eval") return exec_eval(rc, *ck, dir);
  if (command == "scale-tune") return exec_scale_tune(rc, *ck, dir);
  if (command == "probe-attention") return exec_probe(rc, *ck, dir);
  throw UsageError("run.cfg names unknown command '" + command + "'");
}

bool needs_checkpoint(const std::string& command) {
  return command == "eval" || command == "scale-tune" || command == "probe-attention";
}

fs::path run_dir(const Flags& f, const std::string& command, const RunConfig& rc) {
  if (!f.out.empty()) return f.out;
  const char* root = std::getenv("SWARM_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / (command + "-" + hex64(rc.hash).substr(0, 12));
}

int cmd_run(const std::string& command, const Flags& f) {
  std::optional<nn::Checkpoint> ck;
  if (needs_checkpoint(command)) ck = load_checkpoint(f.checkpoint);
  RunHeader header;
  header.command = command;
  const RunConfig rc = RunConfig::resolve(assemble_config(command, f, ck ? &*ck : nullptr, header.overrides));
  header.config_hash = rc.hash;
  if (ck) {
    header.checkpoint = fs::absolute(f.checkpoint).string();
    header.checkpoint_hash = ck->config_hash;
  }
  const fs::path dir = run_dir(f, command, rc);
  fs::create_directories(dir);
  write_text_file((dir / "run.cfg").string(), header_text(header) + rc.text);
  const Manifest m = execute(command, rc, ck ? &*ck : nullptr, dir);
  write_text_file((dir / "hashes.txt").string(), manifest_text(m));
  if (fs::exists(dir / "report.txt")) std::cout << read_text_file((dir / "report.txt").string());
  std::cout << "run directory: " << dir.string() << "\n";
  return 0;
}

int cmd_replay(const Flags& f) {
  const fs::path dir = f.run;
  const std::string text = read_text_file((dir / "run.cfg").string());
  const RunHeader header = parse_header(text);
  const RunConfig rc = RunConfig::resolve(KeyValueConfig::parse(text, (dir / "run.cfg").string()));
  if (rc.hash != header.config_hash) {
    throw ReplayMismatch("run.cfg config hash " + hex64(rc.hash) + " differs from its header " +
                         hex64(header.config_hash));
  }
  std::optional<nn::Checkpoint> ck;
  if (needs_checkpoint(header.command)) {
    ck = load_checkpoint(header.checkpoint);
    if (ck->config_hash != header.checkpoint_hash) {
      throw ReplayMismatch("checkpoint '" + header.checkpoint + "' has config hash " + hex64(ck->config_hash) +
                           ", the run recorded " + hex64(header.checkpoint_hash));
    }
  }
  const Manifest recorded = parse_manifest(read_text_file((dir / "hashes.txt").string()));
  const fs::path scratch = dir / "replay";
  fs::remove_all(scratch);
  const Manifest fresh = execute(header.command, rc, ck ? &*ck : nullptr, scratch);
  int mismatches = 0;
  for (const auto& [file, digest] : recorded) {
    const fs::path on_disk = dir / file;
    const std::string stored = fs::exists(on_disk) ? hex64(fnv1a64(read_text_file(on_disk.string()))) : "missing";
    if (stored != digest) {
      ++mismatches;
      std::cout << "MISMATCH " << file << " recorded " << digest << " on disk " << stored << "\n";
    }
    const auto it = fresh.find(file);
    const std::string got = it == fresh.end() ? "missing" : it->second;
    if (got != digest) {
      ++mismatches;
      std::cout << "MISMATCH " << file << " recorded " << digest << " replayed " << got << "\n";
    }
  }
  for (const auto& [file, digest] : fresh) {
    if (!recorded.count(file)) {
      ++mismatches;
      std::cout << "MISMATCH " << file << " not in the recorded run\n";
    }
  }
  if (mismatches > 0) {
    throw ReplayMismatch(std::to_string(mismatches) + " artifact(s) differ; replay kept in " + scratch.string());
  }
  fs::remove_all(scratch);
  std::cout << "replay OK: " << recorded.size() << " artifacts match (config " << hex64(rc.hash) << ")\n";
  return 0;
}

int cmd_export_trajectory(const Flags& f) {
  if (f.csv.empty()) throw UsageError("export-trajectory needs --csv");
  LoadedEpisode loaded = parse_trajectory_csv(read_text_file(f.csv));
  if (!f.events.empty()) parse_events_csv(read_text_file(f.events), loaded.config_hash, loaded.log);
  std::string svg_path = f.svg;
  if (svg_path.empty()) svg_path = fs::path(f.csv).replace_extension(".svg").string();
  write_text_file(svg_path, trajectory_svg(loaded.log));
  const EvalReport r = compute_report(std::span<const EpisodeLog>(&loaded.log, 1));
  std::cout << "config hash " << hex64(loaded.config_hash) << ", " << loaded.log.steps() << " steps\n"
            << report_text(r) << "svg: " << svg_path << "\n";
  return 0;
}

int cmd_export_policy(const Flags& f) {
  const nn::Checkpoint ck = load_checkpoint(f.checkpoint);
  const RunConfig rc = RunConfig::resolve(KeyValueConfig::parse(ck.config_text, "checkpoint"));
  ActorCritic model = restore_model(rc, ck);
  const std::string table = "# config_hash=" + hex64(ck.config_hash) + "\n" + export_weights_table(model.policy);
  if (f.out.empty()) {
    std::cout << table;
  } else {
    write_text_file(f.out, table);
  }
  return 0;
}

void add_config_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", f.sets, "override one key, key=value (repeatable)");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--scenario", f.scenario, "force one scenario kind, or mix");
  app->add_option("--episodes", f.episodes, "evaluation episodes");
  app->add_option("--num-drones", f.num_drones, "swarm size");
  app->add_option("--out", f.out, "run directory (default $SWARM_OUTPUT_ROOT/<command>-<hash>)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, evaluate and replay decentralized quadrotor swarm controllers."};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "run PPO from scratch, checkpoint, then evaluate");
  add_config_flags(train, f);
  train->add_option("--transitions", f.transitions, "agent-step budget");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config_flags(eval, f);
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();

  auto* tune = app.add_subcommand("scale-tune", "fine-tune a checkpoint on a larger swarm, same K");
  add_config_flags(tune, f);
  tune->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  tune->add_option("--transitions", f.transitions, "extra agent-steps of training");

  auto* probe = app.add_subcommand("probe-attention", "attention weights on the two-on-two snapshot");
  add_config_flags(probe, f);
  probe->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();

  auto* baseline = app.add_subcommand("baseline", "evaluate the buffered Voronoi cell controller");
  add_config_flags(baseline, f);

  auto* replay = app.add_subcommand("replay", "re-run a recorded run and verify every artifact hash");
  replay->add_option("--run", f.run, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* export_traj = app.add_subcommand("export-trajectory", "render a trajectory CSV to SVG and recompute metrics");
  export_traj->add_option("--csv", f.csv, "trajectory CSV")->required()->check(CLI::ExistingFile);
  export_traj->add_option("--events", f.events, "matching events CSV")->check(CLI::ExistingFile);
  export_traj->add_option("--svg", f.svg, "output SVG (default: next to the CSV)");

  auto* export_policy = app.add_subcommand("export-policy", "dump policy weights as a flat text table");
  export_policy->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  export_policy->add_option("--out", f.out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  std::signal(SIGINT, on_sigint);
  try {
    if (replay->parsed()) return cmd_replay(f);
    if (export_traj->parsed()) return cmd_export_trajectory(f);
    if (export_policy->parsed()) return cmd_export_policy(f);
    for (auto* sub : {train, eval, tune, probe, baseline}) {
      if (sub->parsed()) return cmd_run(sub->get_name(), f);
    }
  } catch (const Interrupted& e) {
    std::cerr << e.what() << "\n";
    return kExitInterrupted;
  } catch (const ReplayMismatch& e) {
    std::cerr << "replay mismatch: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

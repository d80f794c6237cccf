#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "quadswarm/eval.hpp"

namespace quadswarm {

inline constexpr const char* kTrajectoryHeader =
    "t,drone_id,px,py,pz,vx,vy,vz,goal_x,goal_y,goal_z,reward_total,collision_flag";

/// `# config_hash=<hex> num_drones=<N> control_dt=<s>` line, the column header,
/// then one row per drone per control step. Doubles are written in shortest
/// round-trip form so a reload reproduces them exactly.
std::string trajectory_csv(const EpisodeLog& log, std::uint64_t config_hash);
std::string events_csv(const EpisodeLog& log, std::uint64_t config_hash);

struct LoadedEpisode {
  EpisodeLog log;
  std::uint64_t config_hash = 0;
};

/// Throws UsageError on a malformed file or a missing header.
LoadedEpisode parse_trajectory_csv(const std::string& text);
/// Fills `log.events` from an events file; its config hash must match `expected_hash`.
void parse_events_csv(const std::string& text, std::uint64_t expected_hash, EpisodeLog& log);

/// Per-drone xy and xz projections with goals marked. Empty logs give an empty frame.
std::string trajectory_svg(const EpisodeLog& log);

/// FNV-1a of the canonical CSV text (hash-independent part only).
std::uint64_t log_digest(const EpisodeLog& log);

std::string read_text_file(const std::string& path);
/// Writes via a temporary file and rename.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace quadswarm

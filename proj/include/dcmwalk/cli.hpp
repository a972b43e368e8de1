#pragma once

// Command-line front end. Each command loads a scenario file, runs it and
// writes its outputs atomically into an output directory.
//
// Exit codes: 0 completed, 1 configuration or I/O error, 2 fall.

#include "dcmwalk/simulator.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dcmwalk {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitFall = 2;

/// Environment variable holding the default output directory.
inline constexpr const char* kOutDirEnv = "DCMWALK_OUT_DIR";

inline constexpr const char* kTrajectoryHeader =
  "t,x,y,z,vx,vy,xi_x,xi_y,cop_x,cop_y,cmp_x,cmp_y,Hdot_x,Hdot_y,foothold_id,push_active";

struct CliOptions
{
  int jobs = 1;
  /// Overrides sim.seed of the scenario.
  std::optional<std::uint64_t> seed;
};

/// Writes `content` to a temporary sibling and renames it over `path`.
/// Throws std::runtime_error on I/O failure.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// One CSV row per logged sample, columns as kTrajectoryHeader.
[[nodiscard]] std::string trajectory_csv(const SimLog& log);
[[nodiscard]] std::string footsteps_csv(const SimLog& log, const GaitPlan& plan);
[[nodiscard]] std::string summary_json(const Scenario& s, const SimLog& log);
[[nodiscard]] std::string comparison_csv(const std::vector<ComparisonRow>& rows);
[[nodiscard]] std::string envelope_json(const Scenario& s, const RecoveryEnvelope& e, double push_start);

/// trajectory.csv, footsteps.csv, summary.json.
int cmd_run(const std::filesystem::path& scenario,
            const std::filesystem::path& out,
            const CliOptions& opt,
            std::ostream& log);

/// comparison.csv; needs at least two modes.
int cmd_compare(const std::filesystem::path& scenario,
                const std::vector<std::string>& modes,
                const std::filesystem::path& out,
                const CliOptions& opt,
                std::ostream& log,
                double duration = 0.1,
                double tolerance = 5.0);

/// envelope.json for a push along +x ('x') or +y ('y').
int cmd_envelope(const std::filesystem::path& scenario,
                 char direction,
                 double duration,
                 double tolerance,
                 const std::filesystem::path& out,
                 const CliOptions& opt,
                 std::ostream& log);

/// Parses argv and dispatches to the commands above.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dcmwalk

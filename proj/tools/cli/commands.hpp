#pragma once

// Subcommands of the drmpc tool. Each returns a process exit code.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace drmpc::cli {

enum ExitCode : int { kOk = 0, kAcceptanceFailure = 1, kConfigError = 2, kRuntimeError = 3 };

/// Command-line overrides applied on top of the configuration file.
struct Overrides {
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> zeta_mode;
    std::optional<std::string> margin_mode;
};

/// Output directory precedence: --out, then DRMPC_OUT_DIR, then the config.
std::filesystem::path resolve_out_dir(const Overrides& o, const std::filesystem::path& from_config);

/// Writes <out>/schedules.json.
int cmd_tighten(const std::filesystem::path& config, const Overrides& o, std::ostream& log);

/// Writes <out>/report.json, <out>/timings.json and one CSV per trial under
/// <out>/trajectories/.
int cmd_run(const std::filesystem::path& config, const Overrides& o, std::ostream& log);

/// Prints a markdown table of measured vs reference percentages with the
/// ordinal and banded checks; kAcceptanceFailure when a check fails.
int cmd_compare(const std::filesystem::path& report, const std::filesystem::path& reference,
                std::ostream& out, std::ostream& log);

/// Plot-ready CSVs for one trial index of every cell: per-cell trajectory
/// overlays of all controllers and the state-constraint boundary.
int cmd_report(const std::filesystem::path& report, const std::filesystem::path& out_dir,
               std::size_t trial, std::ostream& log);

}  // namespace drmpc::cli

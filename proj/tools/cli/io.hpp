#pragma once

// JSON documents read and written by the drmpc tool: run configuration,
// tightening schedules, simulation reports and reference tables. Every
// document carries "format_version"; see docs/file-formats.md.

#include "drmpc/monte_carlo.hpp"
#include "drmpc/tightening.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace drmpc::cli {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

/// A parsed run configuration. `campaign.spec` carries the shared problem
/// data; epsilon and alpha are set per grid cell.
struct RunConfig {
    CampaignConfig campaign;
    std::filesystem::path out_dir = "drmpc-out";
    /// Controller radius used for grid cells without an explicit one when
    /// the world is unperturbed (world_alpha = 0).
    double nominal_alpha = 0.1;
};

/// Reads and validates a configuration file. Throws ConfigError with the
/// line/column of JSON syntax errors or the JSON pointer of a bad field.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// One (epsilon, alpha) cell of a tightening file: both inflation modes and
/// the schedule of the configured one when it is feasible.
struct ScheduleCell {
    double epsilon = 0.0;
    double alpha = 0.0;
    std::vector<double> zeta_literal;
    std::vector<double> zeta_corrected;
    bool feasible_literal = false;
    bool feasible_corrected = false;
    bool feasible = false;  ///< in the configured mode
    std::string error;
    TighteningSchedule schedule;
};

std::vector<ScheduleCell> compute_schedules(const RunConfig& config);
json schedules_to_json(const RunConfig& config, const std::vector<ScheduleCell>& cells);
/// Inverse of the "schedule" objects in schedules_to_json.
TighteningSchedule schedule_from_json(const json& j);
json schedule_to_json(const TighteningSchedule& s);

/// Relative path of a trial's trajectory file inside the output directory.
std::string trajectory_path(const SimulationReport& report, const TrialRecord& record);

/// Deterministic part of a report (no timings).
json report_to_json(const RunConfig& config, const SimulationReport& report);
/// Wall-clock statistics, kept apart so that reports stay reproducible.
json timings_to_json(const SimulationReport& report);
/// Delimited trajectory: t, x..., u..., violation.
std::string trajectory_csv(const TrialRecord& record);

/// Report summaries and trial headers as written by report_to_json.
struct LoadedReport {
    SimulationReport report;
    PolytopeConstraint state_con;
    /// trajectory path per record, relative to the report's directory
    std::vector<std::string> trajectories;
};
LoadedReport load_report(const std::filesystem::path& path);

ReferenceTable load_reference(const std::filesystem::path& path);

/// Writes `content` to `path` through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace drmpc::cli

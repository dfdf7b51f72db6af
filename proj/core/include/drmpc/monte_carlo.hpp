#pragma once

// Closed-loop Monte-Carlo campaigns: randomized trials per (grid cell,
// controller), violation accounting and Table-style aggregation.
//
// Seeds: trial_seed = derive_seed(derive_seed(master, cell), trial). The
// controller index never enters, so every controller in a cell sees the same
// x0, perturbed pmf and uniform stream. Inside a trial an mt19937_64 seeded
// with trial_seed draws, in order: x0 (one uniform per coordinate), the seed
// of the pmf perturbation, and one uniform per step for the disturbance.

#include "drmpc/controllers.hpp"
#include "drmpc/tightening.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace drmpc {

enum class PerturbationMode { none, random_in_ball, adversarial };

std::string_view to_string(PerturbationMode mode);
/// Accepts none, random-in-ball, adversarial; throws ConfigError otherwise.
PerturbationMode parse_perturbation_mode(std::string_view name);

/// One (epsilon, alpha) cell. The world radius perturbs the true pmf; the
/// controllers plan with controller_alpha (a nominal radius is still used
/// when the world is unperturbed).
struct GridCell {
    double epsilon = 0.1;
    double world_alpha = 0.0;
    double controller_alpha = 0.0;
};

struct CampaignConfig {
    /// epsilon and alpha are replaced per cell.
    ControlProblemSpec spec;
    std::vector<ControllerKind> controllers;
    std::vector<GridCell> grid;
    int trials = 100;
    int steps = 35;
    Eigen::VectorXd x0_lo;
    Eigen::VectorXd x0_hi;
    std::uint64_t master_seed = 0;
    PerturbationMode perturbation = PerturbationMode::random_in_ball;
    ScheduleOptions schedule_options;
    unsigned threads = 1;

    /// Throws ConfigError/DimensionError on inconsistent settings.
    void validate() const;
};

/// SplitMix64 finalizer applied to parent + golden * (index + 1).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);
std::uint64_t trial_seed(std::uint64_t master, std::size_t cell, std::size_t trial);

struct TrialRecord {
    std::size_t cell = 0;
    std::size_t controller = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    Eigen::VectorXd x0;
    Eigen::VectorXd pmf;             ///< realized disturbance pmf
    Eigen::MatrixXd states;          ///< nx x (executed + 1), x0 first
    Eigen::MatrixXd inputs;          ///< nu x executed
    std::vector<std::size_t> atoms;  ///< disturbance atom per executed step
    std::vector<bool> violation;     ///< state after step t leaves X
    std::vector<double> solve_seconds;
    int executed = 0;
    int violations = 0;
    int suboptimal_steps = 0;
    /// Set when an MPC step had no usable solution; the trial stops there.
    bool terminated = false;
    StepStatus termination_status = StepStatus::optimal;
};

struct CellSummary {
    std::size_t cell = 0;
    std::size_t controller = 0;
    std::string controller_name;
    double epsilon = 0.0;
    double world_alpha = 0.0;
    double controller_alpha = 0.0;
    /// Non-empty when the controller could not be set up for this cell
    /// (e.g. exhausted violation budget); no trials ran.
    std::string setup_error;
    int trials = 0;
    long executed_steps = 0;
    long violating_steps = 0;
    /// 100 * violating_steps / executed_steps.
    double violation_percent = 0.0;
    int trials_with_violation = 0;
    /// 100 * trials_with_violation / trials (secondary column).
    double trial_violation_percent = 0.0;
    int terminated_trials = 0;
    int infeasible_steps = 0;
    int failed_steps = 0;
    int suboptimal_steps = 0;
    double mean_solve_seconds = 0.0;
    double median_solve_seconds = 0.0;
};

struct SimulationReport {
    std::vector<GridCell> grid;
    std::vector<std::string> controllers;
    int trials = 0;
    int steps = 0;
    std::uint64_t master_seed = 0;
    PerturbationMode perturbation = PerturbationMode::none;
    std::vector<CellSummary> summaries;  ///< cell-major, controller-minor
    std::vector<TrialRecord> records;    ///< summary order, then trial

    const CellSummary* find(double epsilon, double world_alpha, std::string_view controller) const;
};

/// One closed-loop trial of `controller` in the cell `cell_index` of
/// `config`. The controller must already be set up for that cell.
TrialRecord run_trial(const CampaignConfig& config, std::size_t cell_index,
                      const MpcController& controller, std::uint64_t seed);

/// Spec with the cell's epsilon and controller radius.
ControlProblemSpec cell_spec(const CampaignConfig& config, const GridCell& cell);

/// True disturbance pmf of a trial.
Eigen::VectorXd trial_pmf(const CampaignConfig& config, const GridCell& cell,
                          std::uint64_t pmf_seed);

/// Runs every (cell, controller, trial) on config.threads workers. The
/// result does not depend on the thread count or completion order.
SimulationReport run_campaign(const CampaignConfig& config);

/// Reference violation percentages transcribed from a results table.
struct ReferenceEntry {
    double epsilon = 0.0;
    double world_alpha = 0.0;
    std::string controller;
    double violation_percent = 0.0;
};

struct ReferenceTable {
    std::vector<ReferenceEntry> entries;
    const ReferenceEntry* find(double epsilon, double world_alpha, std::string_view controller) const;
};

struct ComparisonRow {
    double epsilon = 0.0;
    double world_alpha = 0.0;
    std::string controller;
    double reference = 0.0;
    double measured = 0.0;
    double delta = 0.0;  ///< measured - reference
};

struct ComparisonCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ComparisonSummary {
    std::vector<ComparisonRow> rows;
    std::vector<ComparisonCheck> checks;
    bool all_passed() const;
};

struct ComparisonTolerances {
    /// CVaR-MPC may exceed SMPC by this many points.
    double ordering_slack = 2.0;
    /// DRMPC and tight DRMPC may exceed 0% by this much at the zero cells.
    double zero_band = 2.0;
    /// SMPC at smpc_cell must lie within this many points of the reference.
    double smpc_band = 8.0;
    /// (epsilon, world alpha) cells where DRMPC and tight DRMPC must be ~0%.
    std::vector<std::pair<double, double>> zero_cells = {{0.2, 0.15}, {0.5, 0.5}};
    std::pair<double, double> smpc_cell = {0.9, 0.8};
};

/// Per-cell deltas plus the ordinal and banded checks. Throws ConfigError
/// when a reference cell is missing from the report.
ComparisonSummary compare_report(const SimulationReport& report, const ReferenceTable& reference,
                                 const ComparisonTolerances& tolerances = {});

}  // namespace drmpc

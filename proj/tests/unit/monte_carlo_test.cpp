#include "drmpc/errors.hpp"
#include "drmpc/monte_carlo.hpp"
#include "instances.hpp"

#include <gtest/gtest.h>

#include <set>

namespace drmpc {
namespace {

using Eigen::VectorXd;

CampaignConfig small_campaign(int trials = 3, int steps = 6) {
    return testing::benchmark_campaign({{0.5, 0.5, 0.5}, {0.9, 0.0, 0.1}}, trials, steps);
}

void expect_same_records(const TrialRecord& a, const TrialRecord& b) {
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(a.x0, b.x0);
    EXPECT_EQ(a.pmf, b.pmf);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.inputs, b.inputs);
    EXPECT_EQ(a.atoms, b.atoms);
    EXPECT_EQ(a.violation, b.violation);
    EXPECT_EQ(a.terminated, b.terminated);
}

void expect_same_summaries(const SimulationReport& a, const SimulationReport& b) {
    ASSERT_EQ(a.summaries.size(), b.summaries.size());
    for (std::size_t i = 0; i < a.summaries.size(); ++i) {
        const CellSummary& x = a.summaries[i];
        const CellSummary& y = b.summaries[i];
        EXPECT_EQ(x.controller_name, y.controller_name);
        EXPECT_EQ(x.executed_steps, y.executed_steps);
        EXPECT_EQ(x.violating_steps, y.violating_steps);
        EXPECT_EQ(x.violation_percent, y.violation_percent);
        EXPECT_EQ(x.trials_with_violation, y.trials_with_violation);
        EXPECT_EQ(x.terminated_trials, y.terminated_trials);
        EXPECT_EQ(x.setup_error, y.setup_error);
    }
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) expect_same_records(a.records[i], b.records[i]);
}

TEST(Seeds, SplitmixDerivationIsStableAndDistinct) {
    EXPECT_EQ(derive_seed(0, 0), derive_seed(0, 0));
    std::set<std::uint64_t> seen;
    for (std::size_t cell = 0; cell < 8; ++cell) {
        for (std::size_t trial = 0; trial < 100; ++trial) seen.insert(trial_seed(7, cell, trial));
    }
    EXPECT_EQ(seen.size(), 800U);
    EXPECT_EQ(trial_seed(7, 2, 3), derive_seed(derive_seed(7, 2), 3));
    EXPECT_NE(trial_seed(7, 2, 3), trial_seed(8, 2, 3));
}

TEST(PerturbationMode, RoundTrip) {
    for (PerturbationMode m :
         {PerturbationMode::none, PerturbationMode::random_in_ball, PerturbationMode::adversarial}) {
        EXPECT_EQ(parse_perturbation_mode(to_string(m)), m);
    }
    EXPECT_THROW(parse_perturbation_mode("gaussian"), ConfigError);
}

TEST(CampaignConfig, RejectsInconsistentSettings) {
    EXPECT_NO_THROW(small_campaign().validate());
    CampaignConfig c = small_campaign();
    c.trials = 0;
    EXPECT_ANY_THROW(c.validate());
    c = small_campaign();
    c.steps = 0;
    EXPECT_ANY_THROW(c.validate());
    c = small_campaign();
    c.x0_hi = c.x0_lo;
    EXPECT_ANY_THROW(c.validate());
    c = small_campaign();
    c.x0_lo = VectorXd::Zero(3);
    EXPECT_ANY_THROW(c.validate());
    c = small_campaign();
    c.grid.push_back({1.2, 0.0, 0.1});
    EXPECT_ANY_THROW(c.validate());
    c = small_campaign();
    c.grid.clear();
    EXPECT_ANY_THROW(c.validate());
    c = small_campaign();
    c.controllers.clear();
    EXPECT_ANY_THROW(c.validate());
}

TEST(RunTrial, PointMassInsideBoxNeverViolates) {
    CampaignConfig c = testing::benchmark_campaign({{0.5, 0.0, 0.1}}, 1, 10);
    c.spec.disturbance = testing::point_mass(1);
    c.x0_lo = VectorXd::Constant(2, -1.0);
    c.x0_hi = VectorXd::Constant(2, 1.0);
    const ControlProblemSpec s = cell_spec(c, c.grid[0]);
    for (const ControllerKind& k : c.controllers) {
        const TighteningSchedule sched =
            build_schedule(s.sys, s.state_con, s.disturbance, s.epsilon, s.alpha, s.horizon,
                           c.schedule_options);
        const MpcController ctl(k, s, sched);
        const TrialRecord r = run_trial(c, 0, ctl, 42);
        EXPECT_FALSE(r.terminated) << to_string(k.tag);
        EXPECT_EQ(r.executed, 10);
        EXPECT_EQ(r.violations, 0);
        EXPECT_EQ(r.states.cols(), 11);
        EXPECT_EQ(r.inputs.cols(), 10);
    }
}

TEST(RunTrial, SameSeedSameRecord) {
    const CampaignConfig c = small_campaign();
    const ControlProblemSpec s = cell_spec(c, c.grid[0]);
    const MpcController ctl(testing::benchmark_kind(ControllerTag::cvar_mpc), s);
    const TrialRecord a = run_trial(c, 0, ctl, 99);
    const TrialRecord b = run_trial(c, 0, ctl, 99);
    expect_same_records(a, b);
    EXPECT_GE(a.x0(0), 3.1);
    EXPECT_LE(a.x0(0), 4.1);
    EXPECT_NEAR(a.pmf.sum(), 1.0, 1e-12);
    EXPECT_LE(tvd_distance(a.pmf, c.spec.disturbance.probs()), 0.5 + 1e-12);
}

TEST(TrialPmf, ModesAndRadius) {
    CampaignConfig c = small_campaign();
    const VectorXd p = c.spec.disturbance.probs();
    c.perturbation = PerturbationMode::none;
    EXPECT_EQ(trial_pmf(c, {0.5, 0.5, 0.5}, 1), p);
    c.perturbation = PerturbationMode::random_in_ball;
    EXPECT_EQ(trial_pmf(c, {0.5, 0.0, 0.1}, 1), p);
    const VectorXd q = trial_pmf(c, {0.5, 0.3, 0.3}, 1);
    EXPECT_LE(tvd_distance(p, q), 0.3 + 1e-12);
    EXPECT_EQ(q, trial_pmf(c, {0.5, 0.3, 0.3}, 1));
}

TEST(TrialPmf, AdversarialUnitRadiusCollapsesToWorstAtom) {
    CampaignConfig c = small_campaign();
    c.perturbation = PerturbationMode::adversarial;
    const VectorXd q = trial_pmf(c, {0.5, 1.0, 0.1}, 5);
    // Both extreme atoms push some box row equally far; the first wins.
    EXPECT_TRUE(q.isApprox(VectorXd::Unit(3, 0), 1e-12)) << q.transpose();
    c.spec.sys.D = Eigen::Vector2d(0.0, 0.1);
    c.spec.state_con.F.col(1).setZero();
    c.spec.state_con.F(2, 1) = 1.0;
    const VectorXd q2 = trial_pmf(c, {0.5, 1.0, 0.1}, 5);
    EXPECT_TRUE(q2.isApprox(VectorXd::Unit(3, 2), 1e-12)) << q2.transpose();
}

TEST(RunCampaign, PointMassGivesZeroViolations) {
    CampaignConfig c = testing::benchmark_campaign({{0.5, 0.0, 0.1}}, 2, 8);
    c.controllers = {testing::benchmark_kind(ControllerTag::drmpc)};
    c.spec.disturbance = testing::point_mass(1);
    const SimulationReport r = run_campaign(c);
    ASSERT_EQ(r.summaries.size(), 1U);
    EXPECT_EQ(r.summaries[0].violation_percent, 0.0);
    EXPECT_EQ(r.summaries[0].trials, 2);
    EXPECT_EQ(r.records.size(), 2U);
}

TEST(RunCampaign, DeterministicAcrossRunsAndThreadCounts) {
    CampaignConfig c = small_campaign(3, 5);
    const SimulationReport a = run_campaign(c);
    const SimulationReport b = run_campaign(c);
    c.threads = 4;
    const SimulationReport d = run_campaign(c);
    expect_same_summaries(a, b);
    expect_same_summaries(a, d);
}

TEST(RunCampaign, ControllersInCellShareRealizations) {
    const SimulationReport r = run_campaign(small_campaign(2, 4));
    for (const TrialRecord& a : r.records) {
        for (const TrialRecord& b : r.records) {
            if (a.cell != b.cell || a.trial != b.trial) continue;
            EXPECT_EQ(a.seed, b.seed);
            EXPECT_EQ(a.x0, b.x0);
            EXPECT_EQ(a.pmf, b.pmf);
        }
    }
}

TEST(RunCampaign, UnperturbedWorldMatchesEmptyBall) {
    CampaignConfig c = testing::benchmark_campaign({{0.5, 0.0, 0.1}}, 2, 5);
    c.controllers = {testing::benchmark_kind(ControllerTag::cvar_mpc),
                     testing::benchmark_kind(ControllerTag::tight_drmpc)};
    c.perturbation = PerturbationMode::none;
    const SimulationReport a = run_campaign(c);
    c.perturbation = PerturbationMode::random_in_ball;
    const SimulationReport b = run_campaign(c);
    expect_same_summaries(a, b);
}

TEST(RunCampaign, CountsAreConsistent) {
    const CampaignConfig c = small_campaign(3, 6);
    const SimulationReport r = run_campaign(c);
    ASSERT_EQ(r.summaries.size(), c.grid.size() * c.controllers.size());
    for (const CellSummary& s : r.summaries) {
        EXPECT_GE(s.violation_percent, 0.0);
        EXPECT_LE(s.violation_percent, 100.0);
        if (!s.setup_error.empty()) continue;
        EXPECT_EQ(s.trials, c.trials);
        EXPECT_LE(s.executed_steps, static_cast<long>(c.trials) * c.steps);
        EXPECT_LE(s.violating_steps, s.executed_steps);
        EXPECT_LE(s.terminated_trials, s.trials);
        EXPECT_EQ(s.infeasible_steps + s.failed_steps, s.terminated_trials);
    }
}

TEST(RunCampaign, ExhaustedBudgetIsRecordedPerController) {
    CampaignConfig c = testing::benchmark_campaign({{0.09, 0.1, 0.1}}, 1, 2);
    c.schedule_options.zeta_mode = ZetaMode::corrected;
    const SimulationReport r = run_campaign(c);
    for (const CellSummary& s : r.summaries) {
        const bool scheduled = s.controller_name == "drmpc" || s.controller_name == "tight_drmpc";
        EXPECT_EQ(!s.setup_error.empty(), scheduled) << s.controller_name;
    }
}

SimulationReport fabricated(const std::vector<ReferenceEntry>& entries) {
    SimulationReport r;
    for (const ReferenceEntry& e : entries) {
        CellSummary s;
        s.epsilon = e.epsilon;
        s.world_alpha = e.world_alpha;
        s.controller_name = e.controller;
        s.violation_percent = e.violation_percent;
        r.summaries.push_back(s);
    }
    return r;
}

ReferenceTable reference_table() {
    const std::vector<std::pair<double, double>> cells = {{0.09, 0.0}, {0.09, 0.1}, {0.2, 0.0},
                                                          {0.2, 0.15}, {0.5, 0.0},  {0.5, 0.5},
                                                          {0.9, 0.0},  {0.9, 0.8}};
    const std::vector<std::pair<std::string, std::vector<double>>> rows = {
        {"smpc", {2.3, 2.6, 9.5, 10.4, 14.1, 16.7, 24, 24.3}},
        {"cvar_mpc", {0, 0, 2.6, 3, 2.5, 6, 2.5, 9.3}},
        {"drmpc", {0, 0, 2.8, 0, 2.5, 0, 2.5, 8.8}},
        {"tight_drmpc", {0, 0, 1, 0, 2.5, 0, 2.5, 8.7}}};
    ReferenceTable t;
    for (const auto& [name, values] : rows) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            t.entries.push_back({cells[i].first, cells[i].second, name, values[i]});
        }
    }
    return t;
}

TEST(CompareReport, ReferenceAgainstItselfPasses) {
    const ReferenceTable ref = reference_table();
    const ComparisonSummary s = compare_report(fabricated(ref.entries), ref);
    EXPECT_TRUE(s.all_passed());
    EXPECT_EQ(s.rows.size(), ref.entries.size());
    for (const ComparisonRow& row : s.rows) EXPECT_EQ(row.delta, 0.0);
}

TEST(CompareReport, OrderingViolationFails) {
    const ReferenceTable ref = reference_table();
    std::vector<ReferenceEntry> measured = ref.entries;
    for (ReferenceEntry& e : measured) {
        if (e.controller == "drmpc" && e.epsilon == 0.2 && e.world_alpha == 0.15) e.violation_percent = 20.0;
    }
    const ComparisonSummary s = compare_report(fabricated(measured), ref);
    EXPECT_FALSE(s.all_passed());
    int failed = 0;
    for (const ComparisonCheck& c : s.checks) failed += c.passed ? 0 : 1;
    EXPECT_GE(failed, 2);  // ordering and the zero band
}

TEST(CompareReport, SmpcBandIsChecked) {
    const ReferenceTable ref = reference_table();
    std::vector<ReferenceEntry> measured = ref.entries;
    for (ReferenceEntry& e : measured) {
        if (e.controller == "smpc" && e.epsilon == 0.9 && e.world_alpha == 0.8) e.violation_percent = 33.0;
    }
    EXPECT_FALSE(compare_report(fabricated(measured), ref).all_passed());
    for (ReferenceEntry& e : measured) {
        if (e.controller == "smpc" && e.epsilon == 0.9 && e.world_alpha == 0.8) e.violation_percent = 31.0;
    }
    EXPECT_TRUE(compare_report(fabricated(measured), ref).all_passed());
}

TEST(CompareReport, MissingCellThrows) {
    const ReferenceTable ref = reference_table();
    std::vector<ReferenceEntry> measured = ref.entries;
    measured.pop_back();
    EXPECT_THROW(compare_report(fabricated(measured), ref), ConfigError);
}

}  // namespace
}  // namespace drmpc

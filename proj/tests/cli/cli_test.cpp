#include "commands.hpp"
#include "io.hpp"

#include "drmpc/errors.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <unistd.h>
#include <sstream>

namespace drmpc::cli {
namespace {

namespace fs = std::filesystem;

const fs::path kConfigs = DRMPC_CONFIG_DIR;

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("drmpc-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::size_t count_files(const fs::path& dir) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file() ? 1 : 0;
    return n;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
    const fs::path p = dir / name;
    write_atomic(p, doc.dump(1));
    return p;
}

json smoke_doc() { return json::parse(read_file(kConfigs / "smoke.json")); }

TEST(Config, ShippedConfigsParse) {
    const RunConfig bench = load_run_config(kConfigs / "benchmark.json");
    EXPECT_EQ(bench.campaign.trials, 100);
    EXPECT_EQ(bench.campaign.steps, 35);
    ASSERT_EQ(bench.campaign.grid.size(), 8U);
    EXPECT_EQ(bench.campaign.controllers.size(), 4U);
    // unperturbed cells plan with the nominal radius, perturbed ones with the world radius
    EXPECT_EQ(bench.campaign.grid[0].controller_alpha, 0.1);
    EXPECT_EQ(bench.campaign.grid[5].controller_alpha, 0.5);
    EXPECT_EQ(bench.campaign.schedule_options.zeta_mode, ZetaMode::paper_literal);
    EXPECT_EQ(bench.campaign.controllers[0].options.solver.max_binaries, 128U);
    EXPECT_NO_THROW(load_run_config(kConfigs / "smoke.json"));
    EXPECT_EQ(load_reference(kConfigs / "reference-violations.json").entries.size(), 32U);
}

TEST(Config, ErrorsNameTheField) {
    json doc = smoke_doc();
    doc["grid"][0]["epsilon"] = "half";
    try {
        parse_run_config(doc.dump());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/grid/0/epsilon"), std::string::npos) << e.what();
    }
    doc = smoke_doc();
    doc["system"]["B"] = json::array({json::array({1.0})});
    EXPECT_THROW(parse_run_config(doc.dump()), ConfigError);
    doc = smoke_doc();
    doc["controllers"] = json::array({"lqr"});
    EXPECT_THROW(parse_run_config(doc.dump()), ConfigError);
    doc = smoke_doc();
    doc["format_version"] = 7;
    EXPECT_THROW(parse_run_config(doc.dump()), ConfigError);
}

TEST(Config, SyntaxErrorsCarryLineAndColumn) {
    try {
        parse_run_config("{\n \"format_version\": 1,\n \"system\": [1, 2,]\n}");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
}

TEST(CmdRun, BadConfigExitsWithConfigError) {
    TempDir tmp;
    json doc = smoke_doc();
    doc["campaign"]["trials"] = 0;
    std::ostringstream log;
    Overrides o;
    o.out_dir = tmp.path() / "out";
    EXPECT_EQ(cmd_run(write_config(tmp.path(), "c.json", doc), o, log), kConfigError);
    EXPECT_FALSE(fs::exists(tmp.path() / "out" / "report.json"));
}

TEST(CmdRun, SmokeWritesOneTrajectoryPerTrial) {
    TempDir tmp;
    Overrides o;
    o.out_dir = tmp.path();
    std::ostringstream log;
    ASSERT_EQ(cmd_run(kConfigs / "smoke.json", o, log), kOk) << log.str();
    EXPECT_EQ(count_files(tmp.path() / "trajectories"), 2U);
    EXPECT_TRUE(fs::exists(tmp.path() / "report.json"));
    EXPECT_TRUE(fs::exists(tmp.path() / "timings.json"));
}

TEST(CmdRun, ReportMatchesInProcessCampaign) {
    TempDir tmp;
    Overrides o;
    o.out_dir = tmp.path();
    std::ostringstream log;
    ASSERT_EQ(cmd_run(kConfigs / "smoke.json", o, log), kOk);
    const RunConfig rc = load_run_config(kConfigs / "smoke.json");
    const SimulationReport direct = run_campaign(rc.campaign);
    const LoadedReport loaded = load_report(tmp.path() / "report.json");
    ASSERT_EQ(loaded.report.summaries.size(), direct.summaries.size());
    for (std::size_t i = 0; i < direct.summaries.size(); ++i) {
        EXPECT_EQ(loaded.report.summaries[i].violation_percent, direct.summaries[i].violation_percent);
        EXPECT_EQ(loaded.report.summaries[i].executed_steps, direct.summaries[i].executed_steps);
    }
    ASSERT_EQ(loaded.report.records.size(), direct.records.size());
    for (std::size_t i = 0; i < direct.records.size(); ++i) {
        EXPECT_EQ(loaded.report.records[i].x0, direct.records[i].x0);
        EXPECT_EQ(loaded.report.records[i].pmf, direct.records[i].pmf);
        EXPECT_EQ(read_file(tmp.path() / loaded.trajectories[i]), trajectory_csv(direct.records[i]));
    }
}

TEST(CmdRun, RepeatedRunsAreByteIdentical) {
    TempDir a, b;
    std::ostringstream log;
    Overrides o;
    o.out_dir = a.path();
    ASSERT_EQ(cmd_run(kConfigs / "smoke.json", o, log), kOk);
    o.out_dir = b.path();
    o.threads = 3;
    ASSERT_EQ(cmd_run(kConfigs / "smoke.json", o, log), kOk);
    EXPECT_EQ(read_file(a.path() / "report.json"), read_file(b.path() / "report.json"));
}

TEST(CmdRun, SeedOverrideChangesRealizations) {
    TempDir a, b;
    std::ostringstream log;
    Overrides o;
    o.out_dir = a.path();
    ASSERT_EQ(cmd_run(kConfigs / "smoke.json", o, log), kOk);
    o.out_dir = b.path();
    o.seed = 5;
    ASSERT_EQ(cmd_run(kConfigs / "smoke.json", o, log), kOk);
    EXPECT_NE(read_file(a.path() / "report.json"), read_file(b.path() / "report.json"));
}

TEST(OutDir, FlagThenEnvironmentThenConfig) {
    Overrides o;
    ::unsetenv("DRMPC_OUT_DIR");
    EXPECT_EQ(resolve_out_dir(o, "cfg"), fs::path("cfg"));
    ::setenv("DRMPC_OUT_DIR", "env", 1);
    EXPECT_EQ(resolve_out_dir(o, "cfg"), fs::path("env"));
    o.out_dir = "flag";
    EXPECT_EQ(resolve_out_dir(o, "cfg"), fs::path("flag"));
    ::unsetenv("DRMPC_OUT_DIR");
}

json tighten_doc() {
    json doc = smoke_doc();
    doc["grid"] = json::array({{{"epsilon", 0.2}, {"world_alpha", 0.0}, {"controller_alpha", 0.0}},
                               {{"epsilon", 0.2}, {"world_alpha", 0.15}},
                               {{"epsilon", 0.09}, {"world_alpha", 0.1}}});
    doc["tightening"]["zeta_mode"] = "corrected";
    return doc;
}

TEST(CmdTighten, CellsAndFlags) {
    TempDir tmp;
    Overrides o;
    o.out_dir = tmp.path();
    std::ostringstream log;
    ASSERT_EQ(cmd_tighten(write_config(tmp.path(), "t.json", tighten_doc()), o, log), kOk) << log.str();
    const json doc = json::parse(read_file(tmp.path() / "schedules.json"));
    EXPECT_EQ(doc["format_version"], kFormatVersion);
    const json& cells = doc["cells"];
    ASSERT_EQ(cells.size(), 3U);
    for (double z : cells[0]["zeta_corrected"]) EXPECT_EQ(z, 0.0);
    for (double z : cells[0]["zeta_literal"]) EXPECT_EQ(z, 0.0);
    ASSERT_TRUE(cells[1]["feasible"].get<bool>());
    for (double z : cells[1]["schedule"]["zeta"]) EXPECT_NEAR(z, 0.15, 1e-8);
    for (double t : cells[1]["schedule"]["tail"]) EXPECT_NEAR(t, 0.05, 1e-8);
    EXPECT_FALSE(cells[2]["feasible"].get<bool>());
    EXPECT_FALSE(cells[2]["feasible_corrected"].get<bool>());
    EXPECT_TRUE(cells[2]["feasible_literal"].get<bool>());
    EXPECT_TRUE(cells[2].contains("error"));
}

TEST(CmdTighten, ScheduleRoundTripsBitForBit) {
    TempDir tmp;
    Overrides o;
    o.out_dir = tmp.path();
    o.zeta_mode = "paper-literal";
    std::ostringstream log;
    const fs::path cfg = write_config(tmp.path(), "t.json", tighten_doc());
    ASSERT_EQ(cmd_tighten(cfg, o, log), kOk);
    const json doc = json::parse(read_file(tmp.path() / "schedules.json"));
    RunConfig rc = load_run_config(cfg);
    rc.campaign.schedule_options.zeta_mode = ZetaMode::paper_literal;
    const std::vector<ScheduleCell> direct = compute_schedules(rc);
    for (std::size_t i = 0; i < direct.size(); ++i) {
        ASSERT_TRUE(direct[i].feasible);
        const TighteningSchedule back = schedule_from_json(doc["cells"][i]["schedule"]);
        EXPECT_EQ(back.zeta, direct[i].schedule.zeta);
        EXPECT_EQ(back.tail, direct[i].schedule.tail);
        ASSERT_EQ(back.margins.size(), direct[i].schedule.margins.size());
        for (std::size_t k = 0; k < back.margins.size(); ++k) EXPECT_EQ(back.margins[k], direct[i].schedule.margins[k]);
        EXPECT_EQ(back.options.zeta_mode, ZetaMode::paper_literal);
        EXPECT_EQ(schedule_to_json(back).dump(), doc["cells"][i]["schedule"].dump());
    }
}

/// report.json whose cells carry the reference percentages.
fs::path fabricated_report(const fs::path& dir, const ReferenceTable& ref) {
    RunConfig rc = load_run_config(kConfigs / "benchmark.json");
    SimulationReport r;
    r.grid = rc.campaign.grid;
    r.controllers = {"smpc", "cvar_mpc", "drmpc", "tight_drmpc"};
    for (const ReferenceEntry& e : ref.entries) {
        CellSummary s;
        s.epsilon = e.epsilon;
        s.world_alpha = e.world_alpha;
        s.controller_name = e.controller;
        s.violation_percent = e.violation_percent;
        r.summaries.push_back(s);
    }
    write_atomic(dir / "report.json", report_to_json(rc, r).dump(1));
    return dir / "report.json";
}

TEST(CmdCompare, ReferenceAgainstItselfPasses) {
    TempDir tmp;
    const ReferenceTable ref = load_reference(kConfigs / "reference-violations.json");
    std::ostringstream out, log;
    EXPECT_EQ(cmd_compare(fabricated_report(tmp.path(), ref), kConfigs / "reference-violations.json", out, log), kOk)
        << out.str() << log.str();
    EXPECT_NE(out.str().find("| smpc |"), std::string::npos);
    EXPECT_NE(out.str().find("24.3"), std::string::npos);
    EXPECT_EQ(out.str().find("FAIL"), std::string::npos);
}

TEST(CmdCompare, OrderingViolationExitsNonzero) {
    TempDir tmp;
    ReferenceTable ref = load_reference(kConfigs / "reference-violations.json");
    ReferenceTable measured = ref;
    for (ReferenceEntry& e : measured.entries) {
        if (e.controller == "drmpc" && e.epsilon == 0.5 && e.world_alpha == 0.5) e.violation_percent = 30.0;
    }
    std::ostringstream out, log;
    EXPECT_EQ(cmd_compare(fabricated_report(tmp.path(), measured), kConfigs / "reference-violations.json", out, log),
              kAcceptanceFailure);
    EXPECT_NE(out.str().find("FAIL"), std::string::npos);
}

TEST(CmdCompare, UnreadableInputIsConfigError) {
    TempDir tmp;
    write_atomic(tmp.path() / "report.json", "{ not json");
    std::ostringstream out, log;
    EXPECT_EQ(cmd_compare(tmp.path() / "report.json", kConfigs / "reference-violations.json", out, log), kConfigError);
    EXPECT_NE(log.str().find(":1:"), std::string::npos) << log.str();
}

TEST(CmdReport, EmptyReportGivesHeaderOnlyFiles) {
    TempDir tmp;
    const fs::path report = fabricated_report(tmp.path(), ReferenceTable{});
    std::ostringstream log;
    ASSERT_EQ(cmd_report(report, tmp.path() / "plot", 0, log), kOk) << log.str();
    EXPECT_EQ(read_file(tmp.path() / "plot" / "trajectories.csv"), "cell,epsilon,world_alpha,controller,trial,t,x1,x2,violation\n");
    const std::string boundary = read_file(tmp.path() / "plot" / "boundary.csv");
    EXPECT_EQ(boundary.rfind("series,x1,x2\n", 0), 0U);
}

TEST(CmdReport, SeriesPerControllerWithFullLength) {
    TempDir tmp;
    json doc = smoke_doc();
    doc["controllers"] = json::array({"smpc", "cvar_mpc", "drmpc", "tight_drmpc"});
    doc["campaign"]["trials"] = 1;
    doc["grid"] = json::array({{{"epsilon", 0.5}, {"world_alpha", 0.5}}});
    Overrides o;
    o.out_dir = tmp.path() / "run";
    std::ostringstream log;
    ASSERT_EQ(cmd_run(write_config(tmp.path(), "c.json", doc), o, log), kOk) << log.str();
    ASSERT_EQ(cmd_report(tmp.path() / "run" / "report.json", tmp.path() / "plot", 0, log), kOk) << log.str();
    const LoadedReport loaded = load_report(tmp.path() / "run" / "report.json");
    std::istringstream csv(read_file(tmp.path() / "plot" / "trajectories.csv"));
    std::string line;
    std::getline(csv, line);
    std::map<std::string, int> rows;
    while (std::getline(csv, line)) {
        const auto a = line.find(',', line.find(',', line.find(',') + 1) + 1);
        rows[line.substr(a + 1, line.find(',', a + 1) - a - 1)]++;
    }
    ASSERT_EQ(rows.size(), 4U);
    for (const TrialRecord& r : loaded.report.records) {
        const std::string name = loaded.report.controllers[r.controller];
        EXPECT_EQ(rows[name], r.executed + 1) << name;
        if (!r.terminated) EXPECT_EQ(rows[name], doc["campaign"]["steps"].get<int>() + 1);
    }
    const std::string boundary = read_file(tmp.path() / "plot" / "boundary.csv");
    EXPECT_NE(boundary.find("row1,4,4"), std::string::npos) << boundary;
    EXPECT_NE(boundary.find("row1,-4,4"), std::string::npos) << boundary;
}

}  // namespace
}  // namespace drmpc::cli

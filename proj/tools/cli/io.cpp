#include "io.hpp"

#include "drmpc/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace drmpc::cli {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
}

const json& member(const json& j, const std::string& where, const char* key) {
    if (!j.is_object()) bad(where, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) bad(where + "/" + key, "missing");
    return *it;
}

const json* optional_member(const json& j, const std::string& where, const char* key) {
    if (!j.is_object()) bad(where, "expected an object");
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) bad(where, "expected a number");
    return j.get<double>();
}

std::int64_t integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) bad(where, "expected an integer");
    return j.get<std::int64_t>();
}

std::string text(const json& j, const std::string& where) {
    if (!j.is_string()) bad(where, "expected a string");
    return j.get<std::string>();
}

VectorXd vector(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) bad(where, "expected a non-empty array of numbers");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number(j[i], where + "/" + std::to_string(i));
    return v;
}

MatrixXd matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) bad(where, "expected a non-empty array of rows");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) bad(where + "/0", "expected a non-empty row");
    MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        const std::string rw = where + "/" + std::to_string(r);
        const VectorXd row = vector(j[r], rw);
        if (static_cast<std::size_t>(row.size()) != cols) bad(rw, "row length differs from row 0");
        m.row(static_cast<Index>(r)) = row.transpose();
    }
    return m;
}

template <class T, class F>
T parsed(const json& j, const std::string& where, F parse) {
    try {
        return parse(text(j, where));
    } catch (const ConfigError& e) {
        bad(where, e.what());
    }
}

PolytopeConstraint polytope(const json& j, const std::string& where) {
    if (const json* box = optional_member(j, where, "box")) {
        const VectorXd lo = vector(member(*box, where + "/box", "lo"), where + "/box/lo");
        const VectorXd hi = vector(member(*box, where + "/box", "hi"), where + "/box/hi");
        if (lo.size() != hi.size()) bad(where + "/box", "lo and hi differ in length");
        if ((lo.array() >= hi.array()).any()) bad(where + "/box", "lo must be below hi");
        return PolytopeConstraint::box(lo, hi);
    }
    PolytopeConstraint c;
    c.F = matrix(member(j, where, "F"), where + "/F");
    c.g = vector(member(j, where, "g"), where + "/g");
    if (c.g.size() != c.F.rows()) bad(where + "/g", "length differs from the row count of F");
    return c;
}

DiscreteDistribution distribution(const json& j, const std::string& where) {
    const json& atoms = member(j, where, "atoms");
    const VectorXd probs = vector(member(j, where, "probs"), where + "/probs");
    if (!atoms.is_array() || atoms.size() != static_cast<std::size_t>(probs.size())) {
        bad(where + "/atoms", "expected one atom per probability");
    }
    std::vector<VectorXd> a;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const std::string aw = where + "/atoms/" + std::to_string(i);
        a.push_back(atoms[i].is_array() ? vector(atoms[i], aw) : VectorXd::Constant(1, number(atoms[i], aw)));
    }
    try {
        return DiscreteDistribution(std::move(a), probs);
    } catch (const Error& e) {
        bad(where, e.what());
    }
}

void solver_settings(const json& j, const std::string& where, QpSettings& s) {
    for (const auto& [key, value] : j.items()) {
        const std::string w = where + "/" + key;
        if (key == "tolerance") s.tolerance = number(value, w);
        else if (key == "max_iterations") s.max_iterations = static_cast<int>(integer(value, w));
        else if (key == "kkt_tolerance") s.kkt_tolerance = number(value, w);
        else if (key == "max_binaries") s.max_binaries = static_cast<std::size_t>(integer(value, w));
        else if (key == "max_nodes") s.max_nodes = static_cast<std::size_t>(integer(value, w));
        else if (key == "gap_tolerance") s.gap_tolerance = number(value, w);
        else if (key == "integrality_tolerance") s.integrality_tolerance = number(value, w);
        else if (key == "polish") s.polish = value.is_boolean() ? value.get<bool>() : (bad(w, "expected a boolean"), false);
        else if (key == "rounding_heuristic") s.rounding_heuristic = value.is_boolean() ? value.get<bool>() : (bad(w, "expected a boolean"), false);
        else bad(w, "unknown solver setting");
    }
    if (!(s.tolerance > 0.0) || s.max_iterations < 1 || !(s.kkt_tolerance > 0.0) || s.max_nodes < 1) {
        bad(where, "tolerances and limits must be positive");
    }
}

ControllerKind controller(const json& j, const std::string& where, const QpSettings& defaults) {
    ControllerKind k;
    k.options.solver = defaults;
    if (j.is_string()) {
        k.tag = parsed<ControllerTag>(j, where, parse_controller_tag);
        return k;
    }
    k.tag = parsed<ControllerTag>(member(j, where, "tag"), where + "/tag", parse_controller_tag);
    for (const auto& [key, value] : j.items()) {
        const std::string w = where + "/" + key;
        if (key == "tag") continue;
        if (key == "big_m") k.options.big_m = number(value, w);
        else if (key == "tail_convention") k.options.tail_convention = parsed<TailConvention>(value, w, parse_tail_convention);
        else if (key == "scenario_cap") k.options.scenario_cap = static_cast<std::size_t>(integer(value, w));
        else if (key == "solver") solver_settings(value, w, k.options.solver);
        else bad(w, "unknown controller option");
    }
    try {
        k.validate();
    } catch (const ConfigError& e) {
        bad(where, e.what());
    }
    return k;
}

std::size_t line_of(const std::string& text, std::size_t byte, std::size_t& column) {
    std::size_t line = 1;
    column = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return line;
}

json parse_document(const std::string& content, const std::string& name) {
    try {
        return json::parse(content);
    } catch (const json::parse_error& e) {
        std::size_t column = 0;
        const std::size_t line = line_of(content, e.byte > 0 ? e.byte - 1 : 0, column);
        throw ConfigError(name + ":" + std::to_string(line) + ":" + std::to_string(column) +
                          ": invalid JSON (" + e.what() + ")");
    }
}

void check_version(const json& j, const std::string& kind) {
    const json& v = member(j, "", "format_version");
    if (integer(v, "/format_version") != kFormatVersion) {
        bad("/format_version", "unsupported version (expected " + std::to_string(kFormatVersion) + ")");
    }
    if (const json* k = optional_member(j, "", "kind")) {
        if (text(*k, "/kind") != kind) bad("/kind", "expected \"" + kind + "\"");
    }
}

json to_json(const VectorXd& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json to_json(const MatrixXd& m) {
    json a = json::array();
    for (Index r = 0; r < m.rows(); ++r) a.push_back(to_json(VectorXd(m.row(r).transpose())));
    return a;
}

json to_json(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(x);
    return a;
}

std::string cell_tag(const GridCell& c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "eps%g_alpha%g", c.epsilon, c.world_alpha);
    return buf;
}

}  // namespace

RunConfig parse_run_config(const std::string& content) {
    const json doc = parse_document(content, "config");
    check_version(doc, "run_config");
    RunConfig rc;
    CampaignConfig& c = rc.campaign;
    ControlProblemSpec& s = c.spec;

    const json& sys = member(doc, "", "system");
    s.sys.A = matrix(member(sys, "/system", "A"), "/system/A");
    s.sys.B = matrix(member(sys, "/system", "B"), "/system/B");
    s.sys.D = matrix(member(sys, "/system", "D"), "/system/D");
    try {
        s.sys.validate();
    } catch (const Error& e) {
        bad("/system", e.what());
    }
    s.state_con = polytope(member(doc, "", "state_constraints"), "/state_constraints");
    if (s.state_con.F.cols() != s.sys.nx()) bad("/state_constraints", "column count differs from the state dimension");
    s.input_con = polytope(member(doc, "", "input_constraints"), "/input_constraints");
    if (s.input_con.F.cols() != s.sys.nu()) bad("/input_constraints", "column count differs from the input dimension");
    s.disturbance = distribution(member(doc, "", "disturbance"), "/disturbance");
    if (s.disturbance.dim() != s.sys.nd()) bad("/disturbance/atoms", "atom dimension differs from the columns of D");

    const json& cost = member(doc, "", "cost");
    s.Q = matrix(member(cost, "/cost", "Q"), "/cost/Q");
    s.R = matrix(member(cost, "/cost", "R"), "/cost/R");
    s.horizon = static_cast<int>(integer(member(doc, "", "horizon"), "/horizon"));

    QpSettings solver;
    if (const json* j = optional_member(doc, "", "solver")) solver_settings(*j, "/solver", solver);

    const json& ctl = member(doc, "", "controllers");
    if (!ctl.is_array() || ctl.empty()) bad("/controllers", "expected a non-empty array");
    for (std::size_t i = 0; i < ctl.size(); ++i) {
        c.controllers.push_back(controller(ctl[i], "/controllers/" + std::to_string(i), solver));
    }

    const json& camp = member(doc, "", "campaign");
    if (const json* j = optional_member(camp, "/campaign", "nominal_alpha")) rc.nominal_alpha = number(*j, "/campaign/nominal_alpha");
    if (!(rc.nominal_alpha >= 0.0 && rc.nominal_alpha < 1.0)) bad("/campaign/nominal_alpha", "must lie in [0, 1)");
    c.trials = static_cast<int>(integer(member(camp, "/campaign", "trials"), "/campaign/trials"));
    c.steps = static_cast<int>(integer(member(camp, "/campaign", "steps"), "/campaign/steps"));
    const json& box = member(camp, "/campaign", "x0_box");
    c.x0_lo = vector(member(box, "/campaign/x0_box", "lo"), "/campaign/x0_box/lo");
    c.x0_hi = vector(member(box, "/campaign/x0_box", "hi"), "/campaign/x0_box/hi");
    const json& seed = member(camp, "/campaign", "seed");
    if (!seed.is_number_unsigned()) bad("/campaign/seed", "expected a nonnegative integer");
    c.master_seed = seed.get<std::uint64_t>();
    if (const json* j = optional_member(camp, "/campaign", "perturbation")) {
        c.perturbation = parsed<PerturbationMode>(*j, "/campaign/perturbation", parse_perturbation_mode);
    }
    std::int64_t threads = 0;
    if (const json* j = optional_member(camp, "/campaign", "threads")) threads = integer(*j, "/campaign/threads");
    if (threads < 0) bad("/campaign/threads", "must be nonnegative (0 = all cores)");
    c.threads = threads > 0 ? static_cast<unsigned>(threads) : std::max(1U, std::thread::hardware_concurrency());

    const json& grid = member(doc, "", "grid");
    if (!grid.is_array() || grid.empty()) bad("/grid", "expected a non-empty array");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::string w = "/grid/" + std::to_string(i);
        GridCell cell;
        cell.epsilon = number(member(grid[i], w, "epsilon"), w + "/epsilon");
        cell.world_alpha = number(member(grid[i], w, "world_alpha"), w + "/world_alpha");
        if (const json* j = optional_member(grid[i], w, "controller_alpha")) {
            cell.controller_alpha = number(*j, w + "/controller_alpha");
        } else {
            cell.controller_alpha = cell.world_alpha > 0.0 ? cell.world_alpha : rc.nominal_alpha;
        }
        c.grid.push_back(cell);
    }

    if (const json* t = optional_member(doc, "", "tightening")) {
        ScheduleOptions& o = c.schedule_options;
        for (const auto& [key, value] : t->items()) {
            const std::string w = "/tightening/" + key;
            if (key == "zeta_mode") o.zeta_mode = parsed<ZetaMode>(value, w, parse_zeta_mode);
            else if (key == "margin_mode") o.margin_mode = parsed<MarginMode>(value, w, parse_margin_mode);
            else if (key == "tail_convention") o.tail_convention = parsed<TailConvention>(value, w, parse_tail_convention);
            else if (key == "scenario_cap") o.scenario_cap = static_cast<std::size_t>(integer(value, w));
            else bad(w, "unknown tightening option");
        }
    }
    if (const json* o = optional_member(doc, "", "output")) {
        if (const json* d = optional_member(*o, "/output", "dir")) rc.out_dir = text(*d, "/output/dir");
    }

    try {
        c.validate();
        for (std::size_t i = 0; i < c.grid.size(); ++i) cell_spec(c, c.grid[i]).validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("configuration is inconsistent: ") + e.what());
    }
    return rc;
}

RunConfig load_run_config(const fs::path& path) {
    try {
        return parse_run_config(read_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<ScheduleCell> compute_schedules(const RunConfig& config) {
    const CampaignConfig& c = config.campaign;
    const ControlProblemSpec& s = c.spec;
    std::vector<ScheduleCell> out;
    for (const GridCell& g : c.grid) {
        ScheduleCell cell;
        cell.epsilon = g.epsilon;
        cell.alpha = g.controller_alpha;
        for (int k = 1; k <= s.horizon; ++k) {
            const ScenarioSet joint(s.disturbance, k, c.schedule_options.scenario_cap);
            cell.zeta_literal.push_back(zeta_lp(joint, g.controller_alpha, ZetaMode::paper_literal).zeta);
            cell.zeta_corrected.push_back(zeta_lp(joint, g.controller_alpha, ZetaMode::corrected).zeta);
        }
        auto below = [&](const std::vector<double>& z) {
            return std::all_of(z.begin(), z.end(), [&](double v) { return v < g.epsilon; });
        };
        cell.feasible_literal = below(cell.zeta_literal);
        cell.feasible_corrected = below(cell.zeta_corrected);
        try {
            cell.schedule = build_schedule(s.sys, s.state_con, s.disturbance, g.epsilon, g.controller_alpha,
                                           s.horizon, c.schedule_options);
            cell.feasible = true;
        } catch (const ScheduleError& e) {
            cell.error = e.what();
        }
        out.push_back(std::move(cell));
    }
    return out;
}

json schedule_to_json(const TighteningSchedule& s) {
    json j;
    j["epsilon"] = s.epsilon;
    j["alpha"] = s.alpha;
    j["horizon"] = s.horizon;
    j["zeta_mode"] = std::string(to_string(s.options.zeta_mode));
    j["margin_mode"] = std::string(to_string(s.options.margin_mode));
    j["tail_convention"] = std::string(to_string(s.options.tail_convention));
    j["scenario_cap"] = s.options.scenario_cap;
    j["zeta"] = to_json(s.zeta);
    j["tail"] = to_json(s.tail);
    json m = json::array();
    for (const VectorXd& v : s.margins) m.push_back(to_json(v));
    j["margins"] = m;
    return j;
}

TighteningSchedule schedule_from_json(const json& j) {
    const std::string w = "/schedule";
    TighteningSchedule s;
    s.epsilon = number(member(j, w, "epsilon"), w + "/epsilon");
    s.alpha = number(member(j, w, "alpha"), w + "/alpha");
    s.horizon = static_cast<int>(integer(member(j, w, "horizon"), w + "/horizon"));
    s.options.zeta_mode = parsed<ZetaMode>(member(j, w, "zeta_mode"), w + "/zeta_mode", parse_zeta_mode);
    s.options.margin_mode = parsed<MarginMode>(member(j, w, "margin_mode"), w + "/margin_mode", parse_margin_mode);
    s.options.tail_convention =
        parsed<TailConvention>(member(j, w, "tail_convention"), w + "/tail_convention", parse_tail_convention);
    s.options.scenario_cap = static_cast<std::size_t>(integer(member(j, w, "scenario_cap"), w + "/scenario_cap"));
    const VectorXd zeta = vector(member(j, w, "zeta"), w + "/zeta");
    const VectorXd tail = vector(member(j, w, "tail"), w + "/tail");
    const json& margins = member(j, w, "margins");
    if (zeta.size() != s.horizon || tail.size() != s.horizon || !margins.is_array() ||
        margins.size() != static_cast<std::size_t>(s.horizon)) {
        bad(w, "zeta, tail and margins must have one entry per step");
    }
    s.zeta.assign(zeta.data(), zeta.data() + zeta.size());
    s.tail.assign(tail.data(), tail.data() + tail.size());
    for (std::size_t k = 0; k < margins.size(); ++k) s.margins.push_back(vector(margins[k], w + "/margins/" + std::to_string(k)));
    return s;
}

json schedules_to_json(const RunConfig& config, const std::vector<ScheduleCell>& cells) {
    const CampaignConfig& c = config.campaign;
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["kind"] = "tightening_schedules";
    doc["horizon"] = c.spec.horizon;
    doc["zeta_mode"] = std::string(to_string(c.schedule_options.zeta_mode));
    doc["margin_mode"] = std::string(to_string(c.schedule_options.margin_mode));
    doc["tail_convention"] = std::string(to_string(c.schedule_options.tail_convention));
    json arr = json::array();
    for (const ScheduleCell& s : cells) {
        json j;
        j["epsilon"] = s.epsilon;
        j["alpha"] = s.alpha;
        j["zeta_literal"] = to_json(s.zeta_literal);
        j["zeta_corrected"] = to_json(s.zeta_corrected);
        j["feasible_literal"] = s.feasible_literal;
        j["feasible_corrected"] = s.feasible_corrected;
        j["feasible"] = s.feasible;
        if (s.feasible) {
            j["schedule"] = schedule_to_json(s.schedule);
        } else {
            j["error"] = s.error;
        }
        arr.push_back(std::move(j));
    }
    doc["cells"] = std::move(arr);
    return doc;
}

std::string trajectory_path(const SimulationReport& report, const TrialRecord& r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_trial%03zu.csv", r.trial);
    return "trajectories/c" + std::to_string(r.cell) + "_" + cell_tag(report.grid.at(r.cell)) + "_" +
           report.controllers.at(r.controller) + buf;
}

json report_to_json(const RunConfig& config, const SimulationReport& report) {
    const CampaignConfig& c = config.campaign;
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["kind"] = "simulation_report";
    doc["master_seed"] = report.master_seed;
    doc["trials"] = report.trials;
    doc["steps"] = report.steps;
    doc["perturbation"] = std::string(to_string(report.perturbation));
    doc["zeta_mode"] = std::string(to_string(c.schedule_options.zeta_mode));
    doc["margin_mode"] = std::string(to_string(c.schedule_options.margin_mode));
    doc["violation_metric"] = "100 * violating steps / executed steps, pooled over trials";
    doc["state_constraints"] = {{"F", to_json(c.spec.state_con.F)}, {"g", to_json(c.spec.state_con.g)}};
    json grid = json::array();
    for (const GridCell& g : report.grid) {
        grid.push_back({{"epsilon", g.epsilon}, {"world_alpha", g.world_alpha}, {"controller_alpha", g.controller_alpha}});
    }
    doc["grid"] = grid;
    doc["controllers"] = report.controllers;
    json cells = json::array();
    for (const CellSummary& s : report.summaries) {
        json j;
        j["cell"] = s.cell;
        j["controller"] = s.controller_name;
        j["epsilon"] = s.epsilon;
        j["world_alpha"] = s.world_alpha;
        j["controller_alpha"] = s.controller_alpha;
        if (!s.setup_error.empty()) j["setup_error"] = s.setup_error;
        j["trials"] = s.trials;
        j["executed_steps"] = s.executed_steps;
        j["violating_steps"] = s.violating_steps;
        j["violation_percent"] = s.violation_percent;
        j["trials_with_violation"] = s.trials_with_violation;
        j["trial_violation_percent"] = s.trial_violation_percent;
        j["terminated_trials"] = s.terminated_trials;
        j["infeasible_steps"] = s.infeasible_steps;
        j["failed_steps"] = s.failed_steps;
        j["suboptimal_steps"] = s.suboptimal_steps;
        cells.push_back(std::move(j));
    }
    doc["cells"] = std::move(cells);
    json trials = json::array();
    for (const TrialRecord& r : report.records) {
        json j;
        j["cell"] = r.cell;
        j["controller"] = report.controllers.at(r.controller);
        j["trial"] = r.trial;
        j["seed"] = r.seed;
        j["x0"] = to_json(r.x0);
        j["pmf"] = to_json(r.pmf);
        j["executed"] = r.executed;
        j["violations"] = r.violations;
        j["terminated"] = r.terminated;
        if (r.terminated) j["termination_status"] = std::string(to_string(r.termination_status));
        j["trajectory"] = trajectory_path(report, r);
        trials.push_back(std::move(j));
    }
    doc["trial_records"] = std::move(trials);
    return doc;
}

json timings_to_json(const SimulationReport& report) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["kind"] = "timings";
    doc["unit"] = "seconds per MPC solve (wall clock)";
    json cells = json::array();
    for (const CellSummary& s : report.summaries) {
        cells.push_back({{"cell", s.cell},
                         {"controller", s.controller_name},
                         {"epsilon", s.epsilon},
                         {"world_alpha", s.world_alpha},
                         {"mean", s.mean_solve_seconds},
                         {"median", s.median_solve_seconds}});
    }
    doc["cells"] = std::move(cells);
    return doc;
}

std::string trajectory_csv(const TrialRecord& r) {
    std::ostringstream out;
    out.precision(17);
    const Index nx = r.states.rows();
    const Index nu = r.inputs.rows();
    out << "t";
    for (Index i = 0; i < nx; ++i) out << ",x" << i + 1;
    for (Index i = 0; i < nu; ++i) out << ",u" << i + 1;
    out << ",violation\n";
    for (Index t = 0; t < r.states.cols(); ++t) {
        out << t;
        for (Index i = 0; i < nx; ++i) out << ',' << r.states(i, t);
        for (Index i = 0; i < nu; ++i) {
            out << ',';
            if (t < r.inputs.cols()) out << r.inputs(i, t);
        }
        // flags refer to the state in this row; x0 is not scored
        out << ',' << (t == 0 ? 0 : static_cast<int>(r.violation[static_cast<std::size_t>(t - 1)])) << '\n';
    }
    return out.str();
}

LoadedReport load_report(const fs::path& path) {
    json doc;
    try {
        doc = parse_document(read_file(path), path.string());
        check_version(doc, "simulation_report");
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    LoadedReport out;
    SimulationReport& r = out.report;
    try {
        r.trials = static_cast<int>(integer(member(doc, "", "trials"), "/trials"));
        r.steps = static_cast<int>(integer(member(doc, "", "steps"), "/steps"));
        r.master_seed = member(doc, "", "master_seed").get<std::uint64_t>();
        r.perturbation = parsed<PerturbationMode>(member(doc, "", "perturbation"), "/perturbation", parse_perturbation_mode);
        const json& sc = member(doc, "", "state_constraints");
        out.state_con.F = matrix(member(sc, "/state_constraints", "F"), "/state_constraints/F");
        out.state_con.g = vector(member(sc, "/state_constraints", "g"), "/state_constraints/g");
        const json& grid = member(doc, "", "grid");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const std::string w = "/grid/" + std::to_string(i);
            r.grid.push_back({number(member(grid[i], w, "epsilon"), w), number(member(grid[i], w, "world_alpha"), w),
                              number(member(grid[i], w, "controller_alpha"), w)});
        }
        for (const json& n : member(doc, "", "controllers")) r.controllers.push_back(text(n, "/controllers"));
        const json& cells = member(doc, "", "cells");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const std::string w = "/cells/" + std::to_string(i);
            const json& j = cells[i];
            CellSummary s;
            s.cell = static_cast<std::size_t>(integer(member(j, w, "cell"), w + "/cell"));
            s.controller_name = text(member(j, w, "controller"), w + "/controller");
            const auto it = std::find(r.controllers.begin(), r.controllers.end(), s.controller_name);
            s.controller = static_cast<std::size_t>(it - r.controllers.begin());
            s.epsilon = number(member(j, w, "epsilon"), w + "/epsilon");
            s.world_alpha = number(member(j, w, "world_alpha"), w + "/world_alpha");
            s.controller_alpha = number(member(j, w, "controller_alpha"), w + "/controller_alpha");
            if (const json* e = optional_member(j, w, "setup_error")) s.setup_error = text(*e, w + "/setup_error");
            s.trials = static_cast<int>(integer(member(j, w, "trials"), w + "/trials"));
            s.executed_steps = integer(member(j, w, "executed_steps"), w + "/executed_steps");
            s.violating_steps = integer(member(j, w, "violating_steps"), w + "/violating_steps");
            s.violation_percent = number(member(j, w, "violation_percent"), w + "/violation_percent");
            s.trials_with_violation = static_cast<int>(integer(member(j, w, "trials_with_violation"), w));
            s.trial_violation_percent = number(member(j, w, "trial_violation_percent"), w);
            s.terminated_trials = static_cast<int>(integer(member(j, w, "terminated_trials"), w));
            s.infeasible_steps = static_cast<int>(integer(member(j, w, "infeasible_steps"), w));
            s.failed_steps = static_cast<int>(integer(member(j, w, "failed_steps"), w));
            s.suboptimal_steps = static_cast<int>(integer(member(j, w, "suboptimal_steps"), w));
            r.summaries.push_back(std::move(s));
        }
        const json& trials = member(doc, "", "trial_records");
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const std::string w = "/trial_records/" + std::to_string(i);
            const json& j = trials[i];
            TrialRecord t;
            t.cell = static_cast<std::size_t>(integer(member(j, w, "cell"), w + "/cell"));
            const std::string name = text(member(j, w, "controller"), w + "/controller");
            t.controller = static_cast<std::size_t>(
                std::find(r.controllers.begin(), r.controllers.end(), name) - r.controllers.begin());
            t.trial = static_cast<std::size_t>(integer(member(j, w, "trial"), w + "/trial"));
            t.seed = member(j, w, "seed").get<std::uint64_t>();
            t.x0 = vector(member(j, w, "x0"), w + "/x0");
            t.pmf = vector(member(j, w, "pmf"), w + "/pmf");
            t.executed = static_cast<int>(integer(member(j, w, "executed"), w + "/executed"));
            t.violations = static_cast<int>(integer(member(j, w, "violations"), w + "/violations"));
            t.terminated = member(j, w, "terminated").get<bool>();
            r.records.push_back(std::move(t));
            out.trajectories.push_back(text(member(j, w, "trajectory"), w + "/trajectory"));
        }
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": malformed report (" + e.what() + ")");
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return out;
}

ReferenceTable load_reference(const fs::path& path) {
    ReferenceTable t;
    try {
        const json doc = parse_document(read_file(path), path.string());
        check_version(doc, "reference_table");
        const json& entries = member(doc, "", "entries");
        if (!entries.is_array()) bad("/entries", "expected an array");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const std::string w = "/entries/" + std::to_string(i);
            const json& j = entries[i];
            ReferenceEntry e;
            e.epsilon = number(member(j, w, "epsilon"), w + "/epsilon");
            e.world_alpha = number(member(j, w, "world_alpha"), w + "/world_alpha");
            e.controller = text(member(j, w, "controller"), w + "/controller");
            parsed<ControllerTag>(member(j, w, "controller"), w + "/controller", parse_controller_tag);
            e.violation_percent = number(member(j, w, "violation_percent"), w + "/violation_percent");
            t.entries.push_back(std::move(e));
        }
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return t;
}

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw Error("write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace drmpc::cli

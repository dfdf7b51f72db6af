#include "commands.hpp"

#include "io.hpp"

#include "drmpc/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>
#include <sstream>

namespace drmpc::cli {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

RunConfig configure(const fs::path& path, const Overrides& o) {
    RunConfig rc = load_run_config(path);
    if (o.seed) rc.campaign.master_seed = *o.seed;
    if (o.threads) {
        if (*o.threads < 1) throw ConfigError("--threads must be at least 1");
        rc.campaign.threads = *o.threads;
    }
    if (o.zeta_mode) rc.campaign.schedule_options.zeta_mode = parse_zeta_mode(*o.zeta_mode);
    if (o.margin_mode) rc.campaign.schedule_options.margin_mode = parse_margin_mode(*o.margin_mode);
    rc.out_dir = resolve_out_dir(o, rc.out_dir);
    return rc;
}

template <class F>
int guarded(std::ostream& log, F body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DimensionError& e) {
        log << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Vertices of a two-dimensional polytope in counter-clockwise order.
std::vector<Eigen::Vector2d> polygon(const PolytopeConstraint& X) {
    std::vector<Eigen::Vector2d> v;
    for (Index i = 0; i < X.rows(); ++i) {
        for (Index j = i + 1; j < X.rows(); ++j) {
            Eigen::Matrix2d M;
            M << X.F.row(i), X.F.row(j);
            if (std::abs(M.determinant()) < 1e-12) continue;
            const Eigen::Vector2d p = M.partialPivLu().solve(Eigen::Vector2d(X.g(i), X.g(j)));
            if (((X.F * p - X.g).array() <= 1e-9).all()) v.push_back(p);
        }
    }
    if (v.empty()) return v;
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& p : v) c += p;
    c /= static_cast<double>(v.size());
    std::sort(v.begin(), v.end(), [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
    });
    std::vector<Eigen::Vector2d> unique;
    for (const auto& p : v) {
        if (unique.empty() || (p - unique.back()).norm() > 1e-9) unique.push_back(p);
    }
    return unique;
}

}  // namespace

fs::path resolve_out_dir(const Overrides& o, const fs::path& from_config) {
    if (o.out_dir) return *o.out_dir;
    if (const char* env = std::getenv("DRMPC_OUT_DIR"); env && *env) return env;
    return from_config;
}

int cmd_tighten(const fs::path& config, const Overrides& o, std::ostream& log) {
    return guarded(log, [&] {
        const RunConfig rc = configure(config, o);
        const std::vector<ScheduleCell> cells = compute_schedules(rc);
        const fs::path out = rc.out_dir / "schedules.json";
        write_atomic(out, schedules_to_json(rc, cells).dump(1) + "\n");
        for (const ScheduleCell& c : cells) {
            log << "eps " << c.epsilon << " alpha " << c.alpha << ": "
                << (c.feasible ? "feasible" : "infeasible (" + c.error + ")") << '\n';
        }
        log << "wrote " << out.string() << '\n';
        return static_cast<int>(kOk);
    });
}

int cmd_run(const fs::path& config, const Overrides& o, std::ostream& log) {
    return guarded(log, [&] {
        const RunConfig rc = configure(config, o);
        const SimulationReport report = run_campaign(rc.campaign);
        for (const TrialRecord& r : report.records) {
            write_atomic(rc.out_dir / trajectory_path(report, r), trajectory_csv(r));
        }
        write_atomic(rc.out_dir / "timings.json", timings_to_json(report).dump(1) + "\n");
        write_atomic(rc.out_dir / "report.json", report_to_json(rc, report).dump(1) + "\n");
        for (const CellSummary& s : report.summaries) {
            log << s.controller_name << " eps " << s.epsilon << " alpha " << s.world_alpha << ": ";
            if (!s.setup_error.empty()) {
                log << "not run (" << s.setup_error << ")\n";
                continue;
            }
            log << fmt(s.violation_percent) << "% violations over " << s.executed_steps << " steps, "
                << s.terminated_trials << " terminated trials\n";
        }
        log << "wrote " << (rc.out_dir / "report.json").string() << " and " << report.records.size()
            << " trajectories\n";
        return static_cast<int>(kOk);
    });
}

int cmd_compare(const fs::path& report_path, const fs::path& reference_path, std::ostream& out,
                std::ostream& log) {
    return guarded(log, [&] {
        const LoadedReport loaded = load_report(report_path);
        const ReferenceTable ref = load_reference(reference_path);
        const ComparisonSummary cmp = compare_report(loaded.report, ref);

        std::vector<std::pair<double, double>> cells;
        std::vector<std::string> controllers;
        for (const ComparisonRow& r : cmp.rows) {
            const std::pair<double, double> c{r.epsilon, r.world_alpha};
            if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
            if (std::find(controllers.begin(), controllers.end(), r.controller) == controllers.end()) {
                controllers.push_back(r.controller);
            }
        }
        out << "| controller |";
        for (const auto& [e, a] : cells) out << " eps " << fmt(e) << ", alpha " << fmt(a) << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < cells.size(); ++i) out << "---|";
        out << '\n';
        for (const std::string& name : controllers) {
            out << "| " << name << " |";
            for (const auto& c : cells) {
                const auto it = std::find_if(cmp.rows.begin(), cmp.rows.end(), [&](const ComparisonRow& r) {
                    return r.controller == name && r.epsilon == c.first && r.world_alpha == c.second;
                });
                if (it == cmp.rows.end()) {
                    out << " - |";
                } else {
                    out << ' ' << fmt(it->measured) << " (ref " << fmt(it->reference) << ", "
                        << (it->delta >= 0 ? "+" : "") << fmt(it->delta) << ") |";
                }
            }
            out << '\n';
        }
        out << "\nMeasured % violations (reference, delta). Violations are pooled over executed steps.\n\n";
        for (const ComparisonCheck& c : cmp.checks) {
            out << "- " << (c.passed ? "PASS" : "FAIL") << ": " << c.name << " (" << c.detail << ")\n";
        }
        const bool ok = cmp.all_passed();
        out << "\n" << (ok ? "all checks passed" : "some checks failed") << '\n';
        return static_cast<int>(ok ? kOk : kAcceptanceFailure);
    });
}

int cmd_report(const fs::path& report_path, const fs::path& out_dir, std::size_t trial, std::ostream& log) {
    return guarded(log, [&] {
        const LoadedReport loaded = load_report(report_path);
        const SimulationReport& r = loaded.report;
        const Index nx = loaded.state_con.F.cols();
        const fs::path base = report_path.parent_path();

        std::ostringstream traj;
        traj.precision(17);
        traj << "cell,epsilon,world_alpha,controller,trial,t";
        for (Index i = 0; i < nx; ++i) traj << ",x" << i + 1;
        traj << ",violation\n";
        std::size_t series = 0;
        for (std::size_t i = 0; i < r.records.size(); ++i) {
            const TrialRecord& rec = r.records[i];
            if (rec.trial != trial) continue;
            const GridCell& cell = r.grid.at(rec.cell);
            std::istringstream csv(read_file(base / loaded.trajectories[i]));
            std::string line;
            std::getline(csv, line);  // header
            while (std::getline(csv, line)) {
                if (line.empty()) continue;
                const std::vector<std::string> f = split(line);
                if (f.size() < static_cast<std::size_t>(nx) + 2) {
                    throw ConfigError(loaded.trajectories[i] + ": short row");
                }
                traj << rec.cell << ',' << cell.epsilon << ',' << cell.world_alpha << ','
                     << r.controllers.at(rec.controller) << ',' << rec.trial << ',' << f[0];
                for (Index k = 0; k < nx; ++k) traj << ',' << f[static_cast<std::size_t>(k) + 1];
                traj << ',' << f.back() << '\n';
            }
            ++series;
        }
        write_atomic(out_dir / "trajectories.csv", traj.str());

        std::ostringstream bnd;
        bnd.precision(17);
        bnd << "series,x1,x2\n";
        if (nx == 2 && loaded.state_con.rows() > 0) {
            const std::vector<Eigen::Vector2d> poly = polygon(loaded.state_con);
            for (std::size_t i = 0; i <= poly.size() && !poly.empty(); ++i) {
                const auto& p = poly[i % poly.size()];
                bnd << "boundary," << p.x() << ',' << p.y() << '\n';
            }
            // each facet as its own series, e.g. the x2 = 4 edge of a box
            for (Index row = 0; row < loaded.state_con.rows(); ++row) {
                for (const auto& p : poly) {
                    const double s = loaded.state_con.F.row(row).dot(p) - loaded.state_con.g(row);
                    if (std::abs(s) <= 1e-9) bnd << "row" << row << ',' << p.x() << ',' << p.y() << '\n';
                }
            }
        }
        write_atomic(out_dir / "boundary.csv", bnd.str());
        log << "wrote " << series << " trajectory series for trial " << trial << " to "
            << (out_dir / "trajectories.csv").string() << '\n';
        return static_cast<int>(kOk);
    });
}

}  // namespace drmpc::cli

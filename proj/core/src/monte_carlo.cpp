#include "drmpc/monte_carlo.hpp"

#include "drmpc/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace drmpc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kViolationTolerance = 1e-9;
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

bool same(double a, double b) { return std::abs(a - b) <= 1e-12; }

// Adversary's per-atom cost: the worst one-step row excess F D delta_j.
VectorXd adversarial_cost(const ControlProblemSpec& spec) {
    const MatrixXd FD = spec.state_con.F * spec.sys.D;
    VectorXd cost(static_cast<Index>(spec.disturbance.size()));
    for (std::size_t j = 0; j < spec.disturbance.size(); ++j) {
        cost(static_cast<Index>(j)) = (FD * spec.disturbance.atom(j)).maxCoeff();
    }
    return cost;
}

std::size_t draw_atom(const VectorXd& pmf, double u) {
    double cum = 0.0;
    std::size_t last = 0;
    for (Index j = 0; j < pmf.size(); ++j) {
        if (pmf(j) <= 0.0) continue;
        last = static_cast<std::size_t>(j);
        cum += pmf(j);
        if (u < cum) return last;
    }
    return last;  // u landed in the rounding sliver above the last cumulative sum
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

std::string_view to_string(PerturbationMode mode) {
    switch (mode) {
        case PerturbationMode::none: return "none";
        case PerturbationMode::random_in_ball: return "random-in-ball";
        case PerturbationMode::adversarial: return "adversarial";
    }
    return "unknown";
}

PerturbationMode parse_perturbation_mode(std::string_view name) {
    for (PerturbationMode m :
         {PerturbationMode::none, PerturbationMode::random_in_ball, PerturbationMode::adversarial}) {
        if (name == to_string(m)) return m;
    }
    throw ConfigError("unknown perturbation mode '" + std::string(name) +
                      "' (expected none, random-in-ball or adversarial)");
}

void CampaignConfig::validate() const {
    if (trials < 1) throw ConfigError("trials must be at least 1");
    if (steps < 1) throw ConfigError("steps must be at least 1");
    if (controllers.empty()) throw ConfigError("no controllers configured");
    if (grid.empty()) throw ConfigError("grid has no cells");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    const Index nx = spec.sys.nx();
    if (x0_lo.size() != nx || x0_hi.size() != nx) {
        throw DimensionError("x0 box must have " + std::to_string(nx) + " coordinates");
    }
    for (Index i = 0; i < nx; ++i) {
        if (!(x0_lo(i) < x0_hi(i))) throw ConfigError("x0 box is degenerate in coordinate " + std::to_string(i));
    }
    for (const auto& c : grid) {
        if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ConfigError("grid epsilon must lie in (0, 1)");
        if (!(c.world_alpha >= 0.0 && c.world_alpha <= 1.0)) {
            throw ConfigError("grid world_alpha must lie in [0, 1]");
        }
        if (!(c.controller_alpha >= 0.0 && c.controller_alpha < 1.0)) {
            throw ConfigError("grid controller_alpha must lie in [0, 1)");
        }
    }
    for (const auto& k : controllers) k.validate();
    ControlProblemSpec s = spec;
    s.epsilon = grid.front().epsilon;
    s.alpha = grid.front().controller_alpha;
    s.validate();
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return splitmix_finalize(parent + kGolden * (index + 1));
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t cell, std::size_t trial) {
    return derive_seed(derive_seed(master, cell), trial);
}

ControlProblemSpec cell_spec(const CampaignConfig& config, const GridCell& cell) {
    ControlProblemSpec s = config.spec;
    s.epsilon = cell.epsilon;
    s.alpha = cell.controller_alpha;
    return s;
}

VectorXd trial_pmf(const CampaignConfig& config, const GridCell& cell, std::uint64_t pmf_seed) {
    const DiscreteDistribution& p = config.spec.disturbance;
    switch (config.perturbation) {
        case PerturbationMode::none: return p.probs();
        case PerturbationMode::random_in_ball:
            return sample_in_tvd_ball(p, cell.world_alpha, pmf_seed).probs();
        case PerturbationMode::adversarial:
            return sample_in_tvd_ball(p, cell.world_alpha, pmf_seed, adversarial_cost(config.spec))
                .probs();
    }
    return p.probs();
}

TrialRecord run_trial(const CampaignConfig& config, std::size_t cell_index,
                      const MpcController& controller, std::uint64_t seed) {
    const GridCell& cell = config.grid.at(cell_index);
    const ControlProblemSpec& spec = controller.spec();
    const Index nx = spec.sys.nx();
    const Index nu = spec.sys.nu();

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TrialRecord rec;
    rec.cell = cell_index;
    rec.trial = 0;
    rec.seed = seed;
    rec.x0.resize(nx);
    for (Index i = 0; i < nx; ++i) rec.x0(i) = config.x0_lo(i) + (config.x0_hi(i) - config.x0_lo(i)) * unit(rng);
    const std::uint64_t pmf_seed = rng();
    rec.pmf = trial_pmf(config, cell, pmf_seed);
    std::vector<double> draws(static_cast<std::size_t>(config.steps));
    for (double& d : draws) d = unit(rng);

    const int T = config.steps;
    rec.states.resize(nx, T + 1);
    rec.inputs.resize(nu, T);
    rec.states.col(0) = rec.x0;
    VectorXd x = rec.x0;
    const PolytopeConstraint& X = spec.state_con;
    for (int t = 0; t < T; ++t) {
        const MpcStepResult r = controller.step(x);
        rec.solve_seconds.push_back(r.solve_seconds);
        if (!r.usable()) {
            rec.terminated = true;
            rec.termination_status = r.status;
            break;
        }
        if (r.status == StepStatus::suboptimal) ++rec.suboptimal_steps;
        const std::size_t atom = draw_atom(rec.pmf, draws[static_cast<std::size_t>(t)]);
        x = spec.sys.A * x + spec.sys.B * r.u0 + spec.sys.D * spec.disturbance.atom(atom);
        const bool violated = ((X.F * x - X.g).array() > kViolationTolerance).any();
        rec.inputs.col(t) = r.u0;
        rec.states.col(t + 1) = x;
        rec.atoms.push_back(atom);
        rec.violation.push_back(violated);
        rec.violations += violated ? 1 : 0;
        ++rec.executed;
    }
    rec.states.conservativeResize(nx, rec.executed + 1);
    rec.inputs.conservativeResize(nu, rec.executed);
    return rec;
}

const CellSummary* SimulationReport::find(double epsilon, double world_alpha,
                                          std::string_view controller) const {
    for (const auto& s : summaries) {
        if (same(s.epsilon, epsilon) && same(s.world_alpha, world_alpha) &&
            s.controller_name == controller) {
            return &s;
        }
    }
    return nullptr;
}

SimulationReport run_campaign(const CampaignConfig& config) {
    config.validate();
    const std::size_t C = config.grid.size();
    const std::size_t K = config.controllers.size();
    const auto trials = static_cast<std::size_t>(config.trials);

    SimulationReport report;
    report.grid = config.grid;
    for (const auto& k : config.controllers) report.controllers.emplace_back(to_string(k.tag));
    report.trials = config.trials;
    report.steps = config.steps;
    report.master_seed = config.master_seed;
    report.perturbation = config.perturbation;
    report.summaries.resize(C * K);

    // Controllers per (cell, controller); schedules are shared per cell.
    std::vector<std::unique_ptr<MpcController>> ctl(C * K);
    for (std::size_t c = 0; c < C; ++c) {
        const GridCell& cell = config.grid[c];
        const ControlProblemSpec spec = cell_spec(config, cell);
        std::optional<TighteningSchedule> schedule;
        std::string schedule_error;
        try {
            schedule = build_schedule(spec.sys, spec.state_con, spec.disturbance, spec.epsilon,
                                      spec.alpha, spec.horizon, config.schedule_options);
        } catch (const ScheduleError& e) {
            schedule_error = e.what();
        }
        for (std::size_t k = 0; k < K; ++k) {
            CellSummary& s = report.summaries[c * K + k];
            s.cell = c;
            s.controller = k;
            s.controller_name = report.controllers[k];
            s.epsilon = cell.epsilon;
            s.world_alpha = cell.world_alpha;
            s.controller_alpha = cell.controller_alpha;
            const ControllerKind& kind = config.controllers[k];
            const bool needs_schedule =
                kind.tag == ControllerTag::drmpc || kind.tag == ControllerTag::tight_drmpc;
            if (needs_schedule && !schedule) {
                s.setup_error = schedule_error;
                continue;
            }
            ctl[c * K + k] = std::make_unique<MpcController>(kind, spec, needs_schedule ? schedule : std::nullopt);
        }
    }

    // Jobs in report order; workers pull indices and write to fixed slots.
    std::vector<std::size_t> jobs;
    for (std::size_t ck = 0; ck < C * K; ++ck) {
        if (ctl[ck]) jobs.push_back(ck);
    }
    std::vector<std::vector<TrialRecord>> results(C * K);
    for (std::size_t ck : jobs) results[ck].resize(trials);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t total = jobs.size() * trials;
    auto worker = [&]() {
        for (;;) {
            const std::size_t id = next.fetch_add(1);
            if (id >= total) return;
            const std::size_t ck = jobs[id / trials];
            const std::size_t t = id % trials;
            const std::size_t c = ck / K;
            try {
                TrialRecord rec = run_trial(config, c, *ctl[ck], trial_seed(config.master_seed, c, t));
                rec.controller = ck % K;
                rec.trial = t;
                results[ck][t] = std::move(rec);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = total;
                return;
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(std::max<std::size_t>(total, 1))));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t ck : jobs) {
        CellSummary& s = report.summaries[ck];
        std::vector<double> times;
        s.trials = config.trials;
        for (TrialRecord& rec : results[ck]) {
            s.executed_steps += rec.executed;
            s.violating_steps += rec.violations;
            s.trials_with_violation += rec.violations > 0 ? 1 : 0;
            s.suboptimal_steps += rec.suboptimal_steps;
            if (rec.terminated) {
                ++s.terminated_trials;
                if (rec.termination_status == StepStatus::infeasible) {
                    ++s.infeasible_steps;
                } else {
                    ++s.failed_steps;
                }
            }
            times.insert(times.end(), rec.solve_seconds.begin(), rec.solve_seconds.end());
            report.records.push_back(std::move(rec));
        }
        s.violation_percent =
            s.executed_steps > 0 ? 100.0 * static_cast<double>(s.violating_steps) / static_cast<double>(s.executed_steps) : 0.0;
        s.trial_violation_percent = 100.0 * s.trials_with_violation / static_cast<double>(s.trials);
        double sum = 0.0;
        for (double v : times) sum += v;
        s.mean_solve_seconds = times.empty() ? 0.0 : sum / static_cast<double>(times.size());
        s.median_solve_seconds = median(times);
    }
    return report;
}

const ReferenceEntry* ReferenceTable::find(double epsilon, double world_alpha,
                                           std::string_view controller) const {
    for (const auto& e : entries) {
        if (same(e.epsilon, epsilon) && same(e.world_alpha, world_alpha) && e.controller == controller) {
            return &e;
        }
    }
    return nullptr;
}

bool ComparisonSummary::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const ComparisonCheck& c) { return c.passed; });
}

ComparisonSummary compare_report(const SimulationReport& report, const ReferenceTable& reference,
                                 const ComparisonTolerances& tol) {
    ComparisonSummary out;
    auto fmt = [](double v) {
        std::ostringstream s;
        s.precision(4);
        s << v;
        return s.str();
    };
    for (const auto& e : reference.entries) {
        const CellSummary* s = report.find(e.epsilon, e.world_alpha, e.controller);
        if (!s) {
            throw ConfigError("report has no cell (eps " + fmt(e.epsilon) + ", alpha " +
                              fmt(e.world_alpha) + ") for controller " + e.controller);
        }
        out.rows.push_back({e.epsilon, e.world_alpha, e.controller, e.violation_percent,
                            s->violation_percent, s->violation_percent - e.violation_percent});
    }

    auto measured = [&](double eps, double a, std::string_view name) -> const CellSummary* {
        const CellSummary* s = report.find(eps, a, name);
        return s && s->setup_error.empty() ? s : nullptr;
    };
    auto cell_name = [&](double eps, double a) { return "(" + fmt(eps) + ", " + fmt(a) + ")"; };

    // Cells come from the summaries so that reports read back from disk
    // without a grid are checked the same way.
    std::vector<GridCell> cells;
    for (const auto& s : report.summaries) {
        const bool seen = std::any_of(cells.begin(), cells.end(), [&](const GridCell& c) {
            return same(c.epsilon, s.epsilon) && same(c.world_alpha, s.world_alpha);
        });
        if (!seen) cells.push_back({s.epsilon, s.world_alpha, s.controller_alpha});
    }
    for (const auto& cell : cells) {
        if (cell.world_alpha <= 0.0) continue;
        const auto* dr = measured(cell.epsilon, cell.world_alpha, "drmpc");
        const auto* cv = measured(cell.epsilon, cell.world_alpha, "cvar_mpc");
        const auto* sm = measured(cell.epsilon, cell.world_alpha, "smpc");
        if (dr && cv) {
            out.checks.push_back({"ordering drmpc <= cvar_mpc at " + cell_name(cell.epsilon, cell.world_alpha),
                                  dr->violation_percent <= cv->violation_percent,
                                  fmt(dr->violation_percent) + " vs " + fmt(cv->violation_percent)});
        }
        if (cv && sm) {
            out.checks.push_back(
                {"ordering cvar_mpc <= smpc + " + fmt(tol.ordering_slack) + " at " +
                     cell_name(cell.epsilon, cell.world_alpha),
                 cv->violation_percent <= sm->violation_percent + tol.ordering_slack,
                 fmt(cv->violation_percent) + " vs " + fmt(sm->violation_percent)});
        }
    }
    for (const auto& [eps, a] : tol.zero_cells) {
        for (const char* name : {"drmpc", "tight_drmpc"}) {
            const CellSummary* s = report.find(eps, a, name);
            if (!s) continue;
            const bool ok = s->setup_error.empty() && s->violation_percent <= tol.zero_band;
            out.checks.push_back({std::string(name) + " near 0% at " + cell_name(eps, a), ok,
                                  s->setup_error.empty() ? fmt(s->violation_percent) + "% (band " + fmt(tol.zero_band) + ")"
                                                         : "not run: " + s->setup_error});
        }
    }
    {
        const auto [eps, a] = tol.smpc_cell;
        const CellSummary* s = report.find(eps, a, "smpc");
        const ReferenceEntry* r = reference.find(eps, a, "smpc");
        if (s && r) {
            const bool ok = s->setup_error.empty() &&
                            std::abs(s->violation_percent - r->violation_percent) <= tol.smpc_band;
            out.checks.push_back({"smpc within " + fmt(tol.smpc_band) + " points of " +
                                      fmt(r->violation_percent) + " at " + cell_name(eps, a),
                                  ok, fmt(s->violation_percent)});
        }
    }
    return out;
}

}  // namespace drmpc

#include "drmpc/errors.hpp"
#include "drmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>

namespace drmpc {

using Eigen::Index;
using Eigen::VectorXd;

namespace {

// -1 free, 0/1 fixed; indexed like the sorted binary list
using Assignment = std::vector<std::int8_t>;

struct Node {
    double bound;
    std::uint64_t seq;
    Assignment fix;
    VectorXd x;  // relaxation optimum in the full variable space
};

class BranchAndBound {
public:
    BranchAndBound(const QpProblem& problem, const QpSettings& settings)
        : problem_(problem), settings_(settings), binaries_(problem.binaries) {
        std::sort(binaries_.begin(), binaries_.end());
        binaries_.erase(std::unique(binaries_.begin(), binaries_.end()), binaries_.end());
        qp_settings_ = settings;
        find_packing_rows();
    }

    QpSolution run() {
        Node root{0.0, seq_++, Assignment(binaries_.size(), -1), {}};
        if (!evaluate(root)) return finish();
        consider(root);
        if (!is_closed(root)) push(std::move(root));

        while (!open_.empty()) {
            if (nodes_ >= settings_.max_nodes) {
                incomplete_ = true;
                break;
            }
            Node node = pop();
            if (node.bound >= best_obj_ - settings_.gap_tolerance) continue;

            const std::size_t b = branch_variable(node);
            if (b == binaries_.size()) continue;  // already integral, handled in consider()
            // The rounding direction is created last so a dive takes it first.
            const bool up = node.x(binaries_[b]) >= 0.5;
            for (const std::int8_t v : {static_cast<std::int8_t>(!up), static_cast<std::int8_t>(up)}) {
                Node child{0.0, seq_++, node.fix, {}};
                child.fix[b] = v;
                if (!evaluate(child)) continue;
                consider(child);
                if (!is_closed(child)) push(std::move(child));
            }
        }
        return finish();
    }

private:
    /// Solves the node relaxation. Returns false when the node is infeasible
    /// or could not be solved.
    bool evaluate(Node& node) {
        ++nodes_;
        QpSolution rel = solve_fixed(node.fix, /*add_bounds=*/true);
        if (rel.status == QpStatus::infeasible) return false;
        if (rel.status != QpStatus::optimal) {
            incomplete_ = true;
            return false;
        }
        node.bound = rel.objective;
        node.x = std::move(rel.x);
        return true;
    }

    void consider(const Node& node) {
        if (node.bound >= best_obj_ - settings_.gap_tolerance) return;
        if (first_fractional(node) == binaries_.size()) {
            Assignment a(binaries_.size());
            for (std::size_t i = 0; i < binaries_.size(); ++i) {
                a[i] = static_cast<std::int8_t>(std::lround(node.x(binaries_[i])));
            }
            accept(a, node.bound);
            return;
        }
        if (settings_.rounding_heuristic) {
            // Implied rounding: each binary takes the smallest value its rows
            // need with everything else at the relaxation point, rounded up.
            // For indicator rows this switches on exactly the violated ones.
            const Assignment implied = implied_assignment(node);
            QpSolution s = solve_fixed(implied, false);
            ++nodes_;
            if (s.status == QpStatus::optimal) {
                accept(implied, s.objective);
                return;
            }
        }
        if (settings_.rounding_heuristic) {
            // Round every fractional binary up; cheap feasible point for
            // big-M style indicator rows.
            Assignment a(binaries_.size());
            for (std::size_t i = 0; i < binaries_.size(); ++i) {
                a[i] = node.fix[i] >= 0 ? node.fix[i]
                                        : static_cast<std::int8_t>(node.x(binaries_[i]) >
                                                                   settings_.integrality_tolerance);
            }
            QpSolution s = solve_fixed(a, false);
            ++nodes_;
            if (s.status == QpStatus::optimal) accept(a, s.objective);
        }
    }

    Assignment implied_assignment(const Node& node) const {
        const VectorXd residual = problem_.G * node.x - problem_.h;
        Assignment a(binaries_.size());
        for (std::size_t i = 0; i < binaries_.size(); ++i) {
            if (node.fix[i] >= 0) {
                a[i] = node.fix[i];
                continue;
            }
            const Index b = binaries_[i];
            double need = 0.0;
            for (SparseMatrix::InnerIterator it(problem_.G, b); it; ++it) {
                if (it.value() >= 0.0) continue;
                const double rest = residual(it.row()) - it.value() * node.x(b);
                need = std::max(need, rest / -it.value());
            }
            a[i] = static_cast<std::int8_t>(need > settings_.integrality_tolerance);
        }
        repair_packing(node, a);
        return a;
    }

    /// Rows whose only variables are binaries with nonnegative coefficients
    /// (budget rows such as sum p y <= eps).
    void find_packing_rows() {
        const Index m = problem_.G.rows();
        std::vector<Index> slot(static_cast<std::size_t>(problem_.num_vars()), -1);
        for (std::size_t i = 0; i < binaries_.size(); ++i) slot[static_cast<std::size_t>(binaries_[i])] = static_cast<Index>(i);
        std::vector<bool> packing(static_cast<std::size_t>(m), true);
        std::vector<std::vector<std::pair<std::size_t, double>>> terms(static_cast<std::size_t>(m));
        for (Index c = 0; c < problem_.G.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(problem_.G, c); it; ++it) {
                const auto r = static_cast<std::size_t>(it.row());
                const Index b = slot[static_cast<std::size_t>(c)];
                if (b < 0 || it.value() < 0.0) {
                    if (it.value() != 0.0) packing[r] = false;
                    continue;
                }
                terms[r].emplace_back(static_cast<std::size_t>(b), it.value());
            }
        }
        for (Index r = 0; r < m; ++r) {
            const auto k = static_cast<std::size_t>(r);
            if (packing[k] && !terms[k].empty()) packing_.push_back({r, std::move(terms[k])});
        }
    }

    /// Switches off the binaries with the smallest relaxation values until
    /// every packing row holds.
    void repair_packing(const Node& node, Assignment& a) const {
        for (const auto& row : packing_) {
            const double cap = problem_.h(row.index) + 1e-12;
            double activity = 0.0;
            for (const auto& [i, v] : row.terms) activity += v * a[i];
            while (activity > cap) {
                std::size_t pick = binaries_.size();
                for (const auto& [i, v] : row.terms) {
                    if (a[i] != 1 || node.fix[i] >= 0) continue;
                    if (pick == binaries_.size() ||
                        node.x(binaries_[i]) < node.x(binaries_[pick])) {
                        pick = i;
                    }
                }
                if (pick == binaries_.size()) break;
                a[pick] = 0;
                for (const auto& [i, v] : row.terms) {
                    if (i == pick) activity -= v;
                }
            }
        }
    }

    bool is_closed(const Node& node) const {
        return node.bound >= best_obj_ - settings_.gap_tolerance ||
               first_fractional(node) == binaries_.size();
    }

    void accept(const Assignment& a, double objective) {
        if (objective < best_obj_) {
            best_obj_ = objective;
            best_ = a;
        }
    }

    /// Most fractional free binary; lowest index on ties.
    std::size_t branch_variable(const Node& node) const {
        std::size_t best = binaries_.size();
        double score = settings_.integrality_tolerance;
        for (std::size_t i = 0; i < binaries_.size(); ++i) {
            if (node.fix[i] >= 0) continue;
            const double v = node.x(binaries_[i]);
            const double frac = std::min(std::abs(v), std::abs(1.0 - v));
            if (frac > score) {
                score = frac;
                best = i;
            }
        }
        return best;
    }

    std::size_t first_fractional(const Node& node) const {
        for (std::size_t i = 0; i < binaries_.size(); ++i) {
            if (node.fix[i] >= 0) continue;
            const double v = node.x(binaries_[i]);
            if (std::min(std::abs(v), std::abs(1.0 - v)) > settings_.integrality_tolerance) return i;
        }
        return binaries_.size();
    }

    /// Continuous problem with fixed binaries substituted; free binaries get
    /// [0, 1] bounds. The returned x, lambda, nu live in the full space of
    /// `problem_` (bound-row multipliers are dropped).
    QpSolution solve_fixed(const Assignment& fix, bool add_bounds) {
        std::vector<Index> idx;
        std::vector<double> val;
        for (std::size_t i = 0; i < binaries_.size(); ++i) {
            if (fix[i] >= 0) {
                idx.push_back(binaries_[i]);
                val.push_back(fix[i]);
            }
        }
        QpProblem reduced = fix_variables(problem_, idx, val);
        reduced.binaries.clear();
        const Index m0 = reduced.num_ineq();

        // map from full to reduced indices
        const Index n = problem_.num_vars();
        std::vector<Index> map(static_cast<std::size_t>(n), -1);
        {
            std::vector<bool> fixed(static_cast<std::size_t>(n), false);
            for (Index i : idx) fixed[static_cast<std::size_t>(i)] = true;
            Index k = 0;
            for (Index i = 0; i < n; ++i) {
                if (!fixed[static_cast<std::size_t>(i)]) map[static_cast<std::size_t>(i)] = k++;
            }
        }
        if (add_bounds) {
            std::vector<Eigen::Triplet<double>> trip;
            for (Index c = 0; c < reduced.G.outerSize(); ++c) {
                for (SparseMatrix::InnerIterator it(reduced.G, c); it; ++it) {
                    trip.emplace_back(it.row(), c, it.value());
                }
            }
            std::vector<double> rhs(reduced.h.data(), reduced.h.data() + reduced.h.size());
            Index row = m0;
            for (std::size_t i = 0; i < binaries_.size(); ++i) {
                if (fix[i] >= 0) continue;
                const Index c = map[static_cast<std::size_t>(binaries_[i])];
                trip.emplace_back(row++, c, 1.0);
                rhs.push_back(1.0);
                trip.emplace_back(row++, c, -1.0);
                rhs.push_back(0.0);
            }
            reduced.G.resize(row, reduced.num_vars());
            reduced.G.setFromTriplets(trip.begin(), trip.end());
            reduced.h = Eigen::Map<VectorXd>(rhs.data(), static_cast<Index>(rhs.size()));
        }

        QpSolution r = solve_qp(reduced, qp_settings_);
        QpSolution out;
        out.status = r.status;
        out.objective = r.objective;
        out.iterations = r.iterations;
        out.kkt = r.kkt;
        out.x = VectorXd::Zero(n);
        for (std::size_t k = 0; k < idx.size(); ++k) out.x(idx[k]) = val[k];
        if (r.x.size() == reduced.num_vars()) {
            for (Index i = 0; i < n; ++i) {
                const Index k = map[static_cast<std::size_t>(i)];
                if (k >= 0) out.x(i) = r.x(k);
            }
        }
        out.lambda = r.lambda.size() >= m0 ? VectorXd(r.lambda.head(m0)) : VectorXd::Zero(m0);
        out.nu = r.nu.size() == reduced.num_eq() ? r.nu : VectorXd::Zero(reduced.num_eq());
        return out;
    }

    QpSolution finish() {
        QpSolution out;
        out.nodes = nodes_;
        if (best_.empty()) {
            out.status = incomplete_ ? QpStatus::max_iter : QpStatus::infeasible;
            out.x = VectorXd::Zero(problem_.num_vars());
            out.lambda = VectorXd::Zero(problem_.num_ineq());
            out.nu = VectorXd::Zero(problem_.num_eq());
            return out;
        }
        // Clean multipliers from the continuous problem at the incumbent.
        QpSolution s = solve_fixed(best_, false);
        out.x = std::move(s.x);
        out.lambda = std::move(s.lambda);
        out.nu = std::move(s.nu);
        out.kkt = s.kkt;
        out.iterations = s.iterations;
        out.objective = evaluate_objective(problem_, out.x);
        out.status = s.status == QpStatus::optimal && !incomplete_ ? QpStatus::optimal
                                                                    : QpStatus::max_iter;
        return out;
    }

    const QpProblem& problem_;
    QpSettings settings_;
    QpSettings qp_settings_;
    std::vector<Index> binaries_;
    struct PackingRow {
        Index index;
        std::vector<std::pair<std::size_t, double>> terms;  // (binary slot, coefficient)
    };
    std::vector<PackingRow> packing_;
    // Open nodes by sequence number, plus a (bound, seq) index. Until an
    // incumbent exists the newest node is expanded (a dive); then the one
    // with the smallest bound.
    std::map<std::uint64_t, Node> open_;
    std::set<std::pair<double, std::uint64_t>> by_bound_;

    void push(Node node) {
        by_bound_.emplace(node.bound, node.seq);
        const std::uint64_t seq = node.seq;
        open_.emplace(seq, std::move(node));
    }

    Node pop() {
        const std::uint64_t seq = best_.empty() ? open_.rbegin()->first : by_bound_.begin()->second;
        auto it = open_.find(seq);
        Node node = std::move(it->second);
        open_.erase(it);
        by_bound_.erase({node.bound, seq});
        return node;
    }
    std::uint64_t seq_ = 0;
    std::size_t nodes_ = 0;
    bool incomplete_ = false;
    double best_obj_ = std::numeric_limits<double>::infinity();
    Assignment best_;
};

}  // namespace

QpSolution solve_miqp(const QpProblem& problem, const QpSettings& settings) {
    problem.validate();
    if (problem.binaries.empty()) return solve_qp(problem, settings);
    if (problem.binaries.size() > settings.max_binaries) {
        throw CapacityError("MIQP has " + std::to_string(problem.binaries.size()) +
                            " binaries; cap is " + std::to_string(settings.max_binaries));
    }
    BranchAndBound bb(problem, settings);
    return bb.run();
}

}  // namespace drmpc

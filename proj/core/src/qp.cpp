#include "drmpc/qp.hpp"

#include "drmpc/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace drmpc {

using Eigen::Index;
using Eigen::VectorXd;

std::string_view to_string(QpStatus status) {
    switch (status) {
        case QpStatus::optimal: return "optimal";
        case QpStatus::infeasible: return "infeasible";
        case QpStatus::unbounded: return "unbounded";
        case QpStatus::max_iter: return "max-iter";
    }
    return "unknown";
}

double KktResiduals::worst() const {
    return std::max({primal, stationarity, complementarity, dual_sign});
}

namespace {

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

bool all_finite(const VectorXd& v) { return v.allFinite(); }

bool all_finite(const SparseMatrix& m) {
    for (Index k = 0; k < m.nonZeros(); ++k) {
        if (!std::isfinite(m.valuePtr()[k])) return false;
    }
    return true;
}

void check_psd(const SparseMatrix& H, double floor) {
    // Eigenvalues of H are those of the principal block on the nonzero
    // rows/columns plus zeros, so only that block is decomposed.
    std::vector<Index> active;
    std::vector<Index> where(static_cast<std::size_t>(H.cols()), -1);
    for (Index c = 0; c < H.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(H, c); it; ++it) {
            if (it.value() != 0.0 && where[static_cast<std::size_t>(c)] < 0) {
                where[static_cast<std::size_t>(c)] = static_cast<Index>(active.size());
                active.push_back(c);
            }
        }
    }
    if (active.empty()) return;
    const Index k = static_cast<Index>(active.size());
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(k, k);
    for (Index c = 0; c < H.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(H, c); it; ++it) {
            const Index r = where[static_cast<std::size_t>(it.row())];
            const Index cc = where[static_cast<std::size_t>(c)];
            if (r >= 0 && cc >= 0) block(r, cc) = it.value();
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block, Eigen::EigenvaluesOnly);
    const double smallest = eig.eigenvalues().minCoeff();
    if (smallest < floor) {
        std::ostringstream msg;
        msg << "quadratic cost is not positive semidefinite (smallest eigenvalue " << smallest
            << ")";
        throw DomainError(msg.str());
    }
}

/// Row-equilibrated copy of the inequality block.
struct ScaledInequalities {
    SparseMatrix G;
    VectorXd h;
    VectorXd scale;  // G_scaled = diag(scale) * G
    std::vector<bool> empty_row;
};

ScaledInequalities scale_rows(const SparseMatrix& G, const VectorXd& h) {
    const Index m = G.rows();
    VectorXd row_max = VectorXd::Zero(m);
    for (Index c = 0; c < G.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(G, c); it; ++it) {
            row_max(it.row()) = std::max(row_max(it.row()), std::abs(it.value()));
        }
    }
    ScaledInequalities out;
    out.scale = VectorXd::Ones(m);
    out.empty_row.assign(static_cast<std::size_t>(m), true);
    for (Index i = 0; i < m; ++i) {
        if (row_max(i) > 0.0) {
            out.scale(i) = 1.0 / row_max(i);
            out.empty_row[static_cast<std::size_t>(i)] = false;
        }
    }
    out.G = out.scale.asDiagonal() * G;
    out.G.makeCompressed();
    out.h = out.scale.cwiseProduct(h);
    return out;
}

/// Reduced Newton system of the interior-point method,
///     [ H + G' D G + rho I    E'       ]
///     [ E                     -delta I ]
/// assembled on a fixed sparsity pattern so the symbolic factorization is
/// done once per solve.
class NewtonSystem {
public:
    NewtonSystem(const SparseMatrix& H, const SparseMatrix& G, const SparseMatrix& E)
        : H_(H), G_(G), E_(E), n_(H.rows()), p_(E.rows()) {
        Gt_ = G_.transpose();
        Et_ = E_.transpose();
        build_pattern();
    }

    /// Factors with the base regularization, escalating it when the
    /// factorization hits a zero pivot (large d ratios late in the solve).
    bool factor(const VectorXd& d) {
        for (double reg = kRho; reg <= kMaxReg; reg *= 100.0) {
            if (factor_with(d, reg)) return true;
        }
        return false;
    }

    /// Refactors the current d with a larger regularization; false once the
    /// ceiling is reached.
    bool strengthen() {
        for (double reg = reg_ * 100.0; reg <= kMaxReg; reg *= 100.0) {
            if (factor_with(d_, reg)) return true;
        }
        return false;
    }

    bool factor_with(const VectorXd& d, double reg) {
        d_ = d;
        reg_ = reg;
        double* values = K_.valuePtr();
        std::fill(values, values + K_.nonZeros(), 0.0);
        for (std::size_t k = 0; k < h_pos_.size(); ++k) values[h_pos_[k]] += h_val_[k];
        for (Index i = 0; i < n_; ++i) values[diag_pos_[static_cast<std::size_t>(i)]] += reg;
        for (Index i = n_; i < n_ + p_; ++i) values[diag_pos_[static_cast<std::size_t>(i)]] -= reg;
        for (std::size_t k = 0; k < e_pos_.size(); ++k) values[e_pos_[k]] += e_val_[k];
        // outer products of the inequality rows
        for (std::size_t r = 0; r < row_cols_.size(); ++r) {
            const auto& cols = row_cols_[r];
            const auto& vals = row_vals_[r];
            const auto& pos = row_pos_[r];
            const double dr = d_(static_cast<Index>(r));
            std::size_t idx = 0;
            for (std::size_t a = 0; a < cols.size(); ++a) {
                const double va = dr * vals[a];
                for (std::size_t b = 0; b <= a; ++b) values[pos[idx++]] += va * vals[b];
            }
        }
        if (!analyzed_) {
            ldlt_.analyzePattern(K_);
            analyzed_ = true;
        }
        ldlt_.factorize(K_);
        if (ldlt_.info() != Eigen::Success) return false;
        // SimplicialLDLT only reports exact zero pivots; also reject overflow.
        const VectorXd& D = ldlt_.vectorD();
        for (Index i = 0; i < D.size(); ++i) {
            if (!std::isfinite(D(i))) return false;
        }
        return true;
    }

    /// Solves the unregularized system by refinement on the regularized
    /// factorization. False when the result is not finite or leaves a
    /// relative residual above 1e-6.
    bool solve(const VectorXd& rhs_x, const VectorXd& rhs_e, VectorXd& dx, VectorXd& dy) const {
        VectorXd rhs(n_ + p_);
        rhs << rhs_x, rhs_e;
        VectorXd sol = ldlt_.solve(rhs);
        VectorXd res = rhs - apply(sol);
        double res_norm = inf_norm(res);
        for (int it = 0; it < 3; ++it) {
            if (res_norm <= 1e-14 * (1.0 + inf_norm(rhs))) break;
            // refinement diverges when the unregularized system is nearly
            // singular; keep the best iterate
            VectorXd next = sol + ldlt_.solve(res);
            VectorXd next_res = rhs - apply(next);
            const double next_norm = inf_norm(next_res);
            if (!(next_norm < res_norm)) break;
            sol = std::move(next);
            res = std::move(next_res);
            res_norm = next_norm;
        }
        dx = sol.head(n_);
        dy = sol.tail(p_);
        return sol.allFinite() && res_norm <= 1e-6 * (1.0 + inf_norm(rhs));
    }

private:
    static constexpr double kRho = 1e-9;
    static constexpr double kMaxReg = 1e-3;
    double reg_ = kRho;

    VectorXd apply(const VectorXd& v) const {
        const VectorXd x = v.head(n_);
        const VectorXd y = v.tail(p_);
        VectorXd out(n_ + p_);
        VectorXd gx = G_ * x;
        out.head(n_) = H_ * x + Gt_ * d_.cwiseProduct(gx) + Et_ * y;
        out.tail(p_) = E_ * x;
        return out;
    }

    void build_pattern() {
        const Index dim = n_ + p_;
        std::vector<Eigen::Triplet<double>> trip;
        for (Index c = 0; c < H_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(H_, c); it; ++it) {
                if (it.row() >= c) trip.emplace_back(it.row(), c, 1.0);
            }
        }
        for (Index i = 0; i < dim; ++i) trip.emplace_back(i, i, 1.0);
        for (Index c = 0; c < E_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(E_, c); it; ++it) {
                trip.emplace_back(n_ + it.row(), c, 1.0);
            }
        }
        // row-wise view of G
        const Index m = G_.rows();
        row_cols_.assign(static_cast<std::size_t>(m), {});
        row_vals_.assign(static_cast<std::size_t>(m), {});
        for (Index c = 0; c < G_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(G_, c); it; ++it) {
                row_cols_[static_cast<std::size_t>(it.row())].push_back(c);
                row_vals_[static_cast<std::size_t>(it.row())].push_back(it.value());
            }
        }
        for (const auto& cols : row_cols_) {
            for (std::size_t a = 0; a < cols.size(); ++a) {
                for (std::size_t b = 0; b <= a; ++b) trip.emplace_back(cols[a], cols[b], 1.0);
            }
        }
        K_.resize(dim, dim);
        K_.setFromTriplets(trip.begin(), trip.end(), [](double a, double) { return a; });
        K_.makeCompressed();

        auto position = [this](Index row, Index col) -> Index {
            const int* inner = K_.innerIndexPtr();
            const int begin = K_.outerIndexPtr()[col];
            const int end = K_.outerIndexPtr()[col + 1];
            const int* found = std::lower_bound(inner + begin, inner + end, static_cast<int>(row));
            return static_cast<Index>(found - inner);
        };

        for (Index c = 0; c < H_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(H_, c); it; ++it) {
                if (it.row() >= c) {
                    h_pos_.push_back(position(it.row(), c));
                    h_val_.push_back(it.value());
                }
            }
        }
        diag_pos_.resize(static_cast<std::size_t>(dim));
        for (Index i = 0; i < dim; ++i) diag_pos_[static_cast<std::size_t>(i)] = position(i, i);
        for (Index c = 0; c < E_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(E_, c); it; ++it) {
                e_pos_.push_back(position(n_ + it.row(), c));
                e_val_.push_back(it.value());
            }
        }
        row_pos_.resize(row_cols_.size());
        for (std::size_t r = 0; r < row_cols_.size(); ++r) {
            const auto& cols = row_cols_[r];
            auto& pos = row_pos_[r];
            pos.reserve(cols.size() * (cols.size() + 1) / 2);
            for (std::size_t a = 0; a < cols.size(); ++a) {
                for (std::size_t b = 0; b <= a; ++b) {
                    // cols are ascending, so cols[a] >= cols[b]: lower triangle
                    pos.push_back(position(cols[a], cols[b]));
                }
            }
        }
    }

    const SparseMatrix& H_;
    const SparseMatrix& G_;
    const SparseMatrix& E_;
    SparseMatrix Gt_;
    SparseMatrix Et_;
    Index n_;
    Index p_;
    VectorXd d_;

    SparseMatrix K_;
    std::vector<Index> h_pos_;
    std::vector<double> h_val_;
    std::vector<Index> diag_pos_;
    std::vector<Index> e_pos_;
    std::vector<double> e_val_;
    std::vector<std::vector<Index>> row_cols_;
    std::vector<std::vector<double>> row_vals_;
    std::vector<std::vector<Index>> row_pos_;

    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    bool analyzed_ = false;
};

double max_step(const VectorXd& v, const VectorXd& dv) {
    double step = 1.0;
    for (Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
    }
    return step;
}

enum class IpmOutcome { converged, stalled, diverged, factor_failed, max_iter };

struct IpmPoint {
    VectorXd x, lambda, y;
};

struct IpmResult {
    IpmOutcome outcome = IpmOutcome::max_iter;
    VectorXd x, w, lambda, y;
    int iterations = 0;
    /// Least-residual iterate of an unconverged run; late iterations on
    /// ill-conditioned faces can drift away from it.
    IpmPoint kept;
};

/// Mehrotra predictor-corrector on min 0.5x'Hx + f'x, Gx <= h, Ex = e.
IpmResult run_ipm(const SparseMatrix& H, const VectorXd& f, const SparseMatrix& G,
                  const VectorXd& h, const SparseMatrix& E, const VectorXd& e,
                  const QpSettings& settings) {
    const Index n = f.size();
    const Index m = h.size();
    const Index p = e.size();
    const SparseMatrix Gt = G.transpose();
    const SparseMatrix Et = E.transpose();

    NewtonSystem newton(H, G, E);
    IpmResult res;

    // Initial point: least-squares fit of Gx = h with unit weights.
    VectorXd x(n), y(p);
    if (!newton.factor(VectorXd::Ones(m))) {
        res.outcome = IpmOutcome::factor_failed;
        return res;
    }
    newton.solve(-f + Gt * h, e, x, y);
    VectorXd w = h - G * x;
    VectorXd lambda = -w;
    {
        const double shift_w = -w.minCoeff();
        if (shift_w >= -1e-8) w.array() += 1.0 + shift_w;
        const double shift_l = -lambda.minCoeff();
        if (shift_l >= -1e-8) lambda.array() += 1.0 + shift_l;
    }

    const double h_scale = 1.0 + std::max(inf_norm(h), inf_norm(e));
    double best_merit = std::numeric_limits<double>::infinity();
    int since_best = 0;
    double kept_merit = std::numeric_limits<double>::infinity();
    IpmPoint kept;

    VectorXd dx(n), dy(p), dw(m), dl(m);
    for (int iter = 0; iter < settings.max_iterations; ++iter) {
        res.iterations = iter;
        const VectorXd Hx = H * x;
        const VectorXd Gtl = Gt * lambda;
        const VectorXd Ety = Et * y;
        const VectorXd rd = Hx + f + Gtl + Ety;
        const VectorXd rp = G * x + w - h;
        const VectorXd re = E * x - e;
        const double gap = w.dot(lambda);
        const double mu = gap / static_cast<double>(m);
        const double pobj = 0.5 * x.dot(Hx) + f.dot(x);

        const double rd_rel =
            inf_norm(rd) / (1.0 + std::max({inf_norm(f), inf_norm(Hx), inf_norm(Gtl), inf_norm(Ety)}));
        const double rp_rel = std::max(inf_norm(rp), inf_norm(re)) / h_scale;
        const double gap_rel = gap / (1.0 + std::abs(pobj));
        if (rd_rel <= settings.tolerance && rp_rel <= settings.tolerance &&
            gap_rel <= settings.tolerance) {
            res.outcome = IpmOutcome::converged;
            break;
        }

        const double merit = std::max({rd_rel, rp_rel, gap_rel});
        if (merit < kept_merit) {
            kept_merit = merit;
            kept = {x, lambda, y};
        }
        if (merit < 0.5 * best_merit) {
            best_merit = merit;
            since_best = 0;
        } else if (++since_best > 25) {
            res.outcome = IpmOutcome::stalled;
            break;
        }
        if (inf_norm(x) > 1e12) {
            res.outcome = IpmOutcome::diverged;
            break;
        }
        // Quick primal infeasibility signal: multipliers blowing up while the
        // primal residual stays put.
        if (iter > 15 && inf_norm(lambda) > 1e10 * (1.0 + inf_norm(f)) && rp_rel > settings.tolerance) {
            res.outcome = IpmOutcome::stalled;
            break;
        }

        const VectorXd d = lambda.cwiseQuotient(w);
        if (!newton.factor(d)) {
            res.outcome = IpmOutcome::factor_failed;
            break;
        }

        auto direction = [&](const VectorXd& rc) {
            // rc is the complementarity residual W*lambda - target
            const VectorXd t = (lambda.cwiseProduct(rp) - rc).cwiseQuotient(w);
            while (!newton.solve(-rd - Gt * t, -re, dx, dy) && newton.strengthen()) {
            }
            dw = -rp - G * dx;
            dl = (-rc - lambda.cwiseProduct(dw)).cwiseQuotient(w);
        };

        // predictor
        VectorXd rc = w.cwiseProduct(lambda);
        direction(rc);
        const double a_aff = std::min(max_step(w, dw), max_step(lambda, dl));
        const double mu_aff =
            (w + a_aff * dw).dot(lambda + a_aff * dl) / static_cast<double>(m);
        const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

        // corrector
        rc = w.cwiseProduct(lambda) + dw.cwiseProduct(dl) - VectorXd::Constant(m, sigma * mu);
        direction(rc);
        double a_max = std::min(max_step(w, dw), max_step(lambda, dl));
        double step = std::min(1.0, 0.995 * a_max);
        // The second-order term can make complementarity grow on
        // ill-scaled faces; fall back to a plain centered step then.
        if ((w + step * dw).dot(lambda + step * dl) > w.dot(lambda)) {
            const VectorXd sdx = dx, sdy = dy, sdw = dw, sdl = dl;
            const double sstep = step;
            rc = w.cwiseProduct(lambda) - VectorXd::Constant(m, std::max(sigma, 0.1) * mu);
            direction(rc);
            a_max = std::min(max_step(w, dw), max_step(lambda, dl));
            step = std::min(1.0, 0.995 * a_max);
            if ((w + step * dw).dot(lambda + step * dl) >
                (w + sstep * sdw).dot(lambda + sstep * sdl)) {
                dx = sdx; dy = sdy; dw = sdw; dl = sdl;
                step = sstep;
            }
            // Neither direction reduces complementarity at full length;
            // shorten until it does.
            while (step > 1e-12 && (w + step * dw).dot(lambda + step * dl) > w.dot(lambda)) {
                step *= 0.5;
            }
        }
        if (step < 1e-12) {
            res.outcome = IpmOutcome::stalled;
            break;
        }
        x += step * dx;
        y += step * dy;
        w += step * dw;
        lambda += step * dl;
        res.iterations = iter + 1;
    }
    if (res.outcome != IpmOutcome::converged) res.kept = std::move(kept);
    res.x = std::move(x);
    res.w = std::move(w);
    res.lambda = std::move(lambda);
    res.y = std::move(y);
    return res;
}

/// Equality-constrained re-solve on the active set identified by the IPM.
bool polish(const SparseMatrix& H, const VectorXd& f, const SparseMatrix& G, const VectorXd& h,
            const SparseMatrix& E, const VectorXd& e, const IpmResult& ipm, VectorXd& x,
            VectorXd& lambda, VectorXd& y) {
    const Index n = f.size();
    const Index m = h.size();
    const Index p = e.size();
    std::vector<Index> active;
    for (Index i = 0; i < m; ++i) {
        if (ipm.lambda(i) > ipm.w(i)) active.push_back(i);
    }
    const Index a = static_cast<Index>(active.size());
    const Index dim = n + a + p;
    constexpr double reg = 1e-10;

    const SparseMatrix Gt = G.transpose();
    std::vector<Eigen::Triplet<double>> trip, trip0;
    for (Index c = 0; c < H.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(H, c); it; ++it) {
            if (it.row() >= c) trip.emplace_back(it.row(), c, it.value());
        }
    }
    for (Index k = 0; k < a; ++k) {
        const Index row = active[static_cast<std::size_t>(k)];
        for (SparseMatrix::InnerIterator it(Gt, row); it; ++it) {
            trip.emplace_back(n + k, it.row(), it.value());
        }
    }
    for (Index c = 0; c < E.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(E, c); it; ++it) {
            trip.emplace_back(n + a + it.row(), c, it.value());
        }
    }
    trip0 = trip;
    for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, reg);
    for (Index i = n; i < dim; ++i) trip.emplace_back(i, i, -reg);

    SparseMatrix K(dim, dim), K0(dim, dim);
    K.setFromTriplets(trip.begin(), trip.end());
    K0.setFromTriplets(trip0.begin(), trip0.end());
    const SparseMatrix K0full = SparseMatrix(K0.selfadjointView<Eigen::Lower>());

    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(K);
    if (ldlt.info() != Eigen::Success) return false;

    VectorXd rhs(dim);
    rhs.head(n) = -f;
    for (Index k = 0; k < a; ++k) rhs(n + k) = h(active[static_cast<std::size_t>(k)]);
    rhs.tail(p) = e;

    VectorXd sol = ldlt.solve(rhs);
    for (int it = 0; it < 10; ++it) {
        const VectorXd r = rhs - K0full * sol;
        if (inf_norm(r) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
        sol += ldlt.solve(r);
    }
    if (!sol.allFinite()) return false;
    x = sol.head(n);
    lambda = VectorXd::Zero(m);
    for (Index k = 0; k < a; ++k) lambda(active[static_cast<std::size_t>(k)]) = sol(n + k);
    y = sol.tail(p);
    return true;
}

/// Phase-one problem: min t s.t. Gx - t <= h, t >= -1, Ex = e. Returns the
/// optimal t (inequality violation in scaled row units).
double phase_one(const SparseMatrix& G, const VectorXd& h, const SparseMatrix& E,
                 const VectorXd& e, const QpSettings& settings, bool& converged) {
    const Index n = G.cols();
    const Index m = G.rows();
    const Index p = E.rows();
    SparseMatrix G1(m + 1, n + 1);
    {
        std::vector<Eigen::Triplet<double>> trip;
        for (Index c = 0; c < G.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(G, c); it; ++it) trip.emplace_back(it.row(), c, it.value());
        }
        for (Index i = 0; i < m; ++i) trip.emplace_back(i, n, -1.0);
        trip.emplace_back(m, n, -1.0);
        G1.setFromTriplets(trip.begin(), trip.end());
    }
    VectorXd h1(m + 1);
    h1 << h, 1.0;
    SparseMatrix E1(p, n + 1);
    {
        std::vector<Eigen::Triplet<double>> trip;
        for (Index c = 0; c < E.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(E, c); it; ++it) trip.emplace_back(it.row(), c, it.value());
        }
        E1.setFromTriplets(trip.begin(), trip.end());
    }
    SparseMatrix H1(n + 1, n + 1);
    {
        std::vector<Eigen::Triplet<double>> trip;
        for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, 1e-12);
        H1.setFromTriplets(trip.begin(), trip.end());
    }
    VectorXd f1 = VectorXd::Zero(n + 1);
    f1(n) = 1.0;
    QpSettings s = settings;
    s.tolerance = std::max(settings.tolerance, 1e-10);
    const IpmResult r = run_ipm(H1, f1, G1, h1, E1, e, s);
    converged = r.outcome == IpmOutcome::converged;
    if (r.x.size() != n + 1) return std::numeric_limits<double>::infinity();
    return r.x(n);
}

}  // namespace

void QpProblem::validate() const {
    const Index n = f.size();
    if (H.rows() != n || H.cols() != n) throw DimensionError("QP: H must be n x n with n = size(f)");
    if (G.cols() != n && G.rows() != 0) throw DimensionError("QP: G must have n columns");
    if (G.rows() != h.size()) throw DimensionError("QP: rows(G) != size(h)");
    if (E.cols() != n && E.rows() != 0) throw DimensionError("QP: E must have n columns");
    if (E.rows() != e.size()) throw DimensionError("QP: rows(E) != size(e)");
    if (!all_finite(f) || !all_finite(h) || !all_finite(e) || !all_finite(H) || !all_finite(G) ||
        !all_finite(E) || !std::isfinite(objective_offset)) {
        throw DomainError("QP: non-finite problem data");
    }
    const SparseMatrix asym = SparseMatrix(H.transpose()) - H;
    double hmax = 0.0;
    for (Index k = 0; k < H.nonZeros(); ++k) hmax = std::max(hmax, std::abs(H.valuePtr()[k]));
    for (Index k = 0; k < asym.nonZeros(); ++k) {
        if (std::abs(asym.valuePtr()[k]) > 1e-10 * std::max(1.0, hmax)) {
            throw DomainError("QP: H is not symmetric");
        }
    }
    for (Index b : binaries) {
        if (b < 0 || b >= n) throw DimensionError("QP: binary index out of range");
    }
}

double evaluate_objective(const QpProblem& problem, const VectorXd& x) {
    return 0.5 * x.dot(problem.H * x) + problem.f.dot(x) + problem.objective_offset;
}

KktResiduals verify_kkt(const QpProblem& problem, const QpSolution& solution) {
    KktResiduals r;
    const VectorXd& x = solution.x;
    const Index n = problem.num_vars();
    if (x.size() != n || solution.lambda.size() != problem.num_ineq() ||
        solution.nu.size() != problem.num_eq()) {
        r.primal = r.stationarity = r.complementarity = r.dual_sign =
            std::numeric_limits<double>::infinity();
        return r;
    }
    const VectorXd slack = problem.h - problem.G * x;
    double viol = 0.0;
    for (Index i = 0; i < slack.size(); ++i) viol = std::max(viol, -slack(i));
    const VectorXd eq_res = problem.E * x - problem.e;
    for (Index i = 0; i < eq_res.size(); ++i) viol = std::max(viol, std::abs(eq_res(i)));
    double hmax = 0.0;
    for (Index i = 0; i < problem.h.size(); ++i) hmax = std::max(hmax, std::abs(problem.h(i)));
    for (Index i = 0; i < problem.e.size(); ++i) hmax = std::max(hmax, std::abs(problem.e(i)));
    r.primal = viol / (1.0 + hmax);

    const VectorXd hx = problem.H * x;
    const VectorXd gl = problem.G.transpose() * solution.lambda;
    const VectorXd en = problem.E.transpose() * solution.nu;
    const VectorXd grad = hx + problem.f + gl + en;
    double scale = 0.0;
    for (const VectorXd* v : {&hx, &problem.f, &gl, &en}) {
        for (Index i = 0; i < v->size(); ++i) scale = std::max(scale, std::abs((*v)(i)));
    }
    double gmax = 0.0;
    for (Index i = 0; i < grad.size(); ++i) gmax = std::max(gmax, std::abs(grad(i)));
    r.stationarity = gmax / (1.0 + scale);

    double comp = 0.0;
    double neg = 0.0;
    double lmax = 0.0;
    for (Index i = 0; i < slack.size(); ++i) {
        comp = std::max(comp, std::abs(solution.lambda(i) * slack(i)));
        neg = std::max(neg, -solution.lambda(i));
        lmax = std::max(lmax, std::abs(solution.lambda(i)));
    }
    const double obj = 0.5 * x.dot(hx) + problem.f.dot(x);
    r.complementarity = comp / (1.0 + std::abs(obj));
    r.dual_sign = neg / (1.0 + lmax);
    return r;
}

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings) {
    problem.validate();
    check_psd(problem.H, settings.psd_floor);

    const Index n = problem.num_vars();
    const Index m = problem.num_ineq();
    const Index p = problem.num_eq();
    const SparseMatrix G = m > 0 ? problem.G : SparseMatrix(0, n);
    const SparseMatrix E = p > 0 ? problem.E : SparseMatrix(0, n);

    QpSolution sol;
    sol.x = VectorXd::Zero(n);
    sol.lambda = VectorXd::Zero(m);
    sol.nu = VectorXd::Zero(p);

    const ScaledInequalities scaled = scale_rows(G, problem.h);
    for (Index i = 0; i < m; ++i) {
        // an all-zero row reads 0 <= h_i
        if (scaled.empty_row[static_cast<std::size_t>(i)] && problem.h(i) < 0.0) {
            sol.status = QpStatus::infeasible;
            return sol;
        }
    }

    if (m == 0) {
        // Equality-constrained QP: one KKT solve.
        NewtonSystem newton(problem.H, G, E);
        VectorXd dy;
        if (!newton.factor(VectorXd::Zero(0))) {
            sol.status = QpStatus::unbounded;
            return sol;
        }
        newton.solve(-problem.f, problem.e, sol.x, dy);
        sol.nu = dy;
        sol.objective = evaluate_objective(problem, sol.x);
        sol.kkt = verify_kkt(problem, sol);
        sol.status = sol.kkt.worst() <= settings.kkt_tolerance ? QpStatus::optimal
                     : sol.kkt.primal > settings.kkt_tolerance ? QpStatus::infeasible
                                                               : QpStatus::unbounded;
        return sol;
    }

    IpmResult ipm =
        run_ipm(problem.H, problem.f, scaled.G, scaled.h, E, problem.e, settings);
    sol.iterations = ipm.iterations;

    // A stalled run can still end on a point that meets the KKT contract
    // (degenerate optimal faces stall the step length); accept it.
    bool usable = ipm.outcome == IpmOutcome::converged;
    auto meets_contract = [&](const VectorXd& x, const VectorXd& lambda, const VectorXd& y) {
        if (x.size() != n || !x.allFinite()) return false;
        QpSolution probe;
        probe.x = x;
        probe.lambda = scaled.scale.cwiseProduct(lambda);
        probe.nu = y;
        return verify_kkt(problem, probe).worst() <= settings.kkt_tolerance;
    };
    if (!usable) usable = meets_contract(ipm.x, ipm.lambda, ipm.y);
    if (!usable && meets_contract(ipm.kept.x, ipm.kept.lambda, ipm.kept.y)) {
        ipm.x = ipm.kept.x;
        ipm.lambda = ipm.kept.lambda;
        ipm.y = ipm.kept.y;
        usable = true;
    }

    if (!usable) {
        bool p1_converged = false;
        const double t = phase_one(scaled.G, scaled.h, E, problem.e, settings, p1_converged);
        if (!p1_converged || t > 1e-7) {
            sol.status = QpStatus::infeasible;
            return sol;
        }
        // A feasible problem whose iterates run off is checked for a
        // descent recession direction.
        if (ipm.x.size() == n && inf_norm(ipm.x) > 1e3 * (1.0 + inf_norm(scaled.h))) {
            const VectorXd dir = ipm.x / inf_norm(ipm.x);
            const bool descent = problem.f.dot(dir) < 0.0;
            const bool flat = inf_norm(problem.H * dir) <= 1e-8;
            const VectorXd gd = scaled.G * dir;
            const bool recession = gd.maxCoeff() <= 1e-8 && inf_norm(E * dir) <= 1e-8;
            if (descent && flat && recession) {
                sol.status = QpStatus::unbounded;
                return sol;
            }
        }
        sol.status = QpStatus::max_iter;
        if (ipm.x.size() == n) {
            sol.x = ipm.x;
            sol.lambda = scaled.scale.cwiseProduct(ipm.lambda);
            sol.nu = ipm.y;
            sol.objective = evaluate_objective(problem, sol.x);
            sol.kkt = verify_kkt(problem, sol);
        }
        return sol;
    }

    sol.x = ipm.x;
    sol.lambda = scaled.scale.cwiseProduct(ipm.lambda);
    sol.nu = ipm.y;
    sol.kkt = verify_kkt(problem, sol);

    if (settings.polish) {
        QpSolution cand = sol;
        VectorXd lam_scaled;
        if (polish(problem.H, problem.f, scaled.G, scaled.h, E, problem.e, ipm, cand.x, lam_scaled,
                   cand.nu)) {
            cand.lambda = scaled.scale.cwiseProduct(lam_scaled);
            cand.kkt = verify_kkt(problem, cand);
            if (cand.kkt.worst() <= sol.kkt.worst()) sol = std::move(cand);
        }
    }

    sol.objective = evaluate_objective(problem, sol.x);
    sol.status = sol.kkt.worst() <= settings.kkt_tolerance ? QpStatus::optimal : QpStatus::max_iter;
    return sol;
}

QpProblem fix_variables(const QpProblem& problem, const std::vector<Index>& indices,
                        const std::vector<double>& values) {
    if (indices.size() != values.size()) {
        throw DimensionError("fix_variables: indices and values differ in length");
    }
    const Index n = problem.num_vars();
    std::vector<Index> new_index(static_cast<std::size_t>(n), 0);
    VectorXd fixed = VectorXd::Zero(n);
    std::vector<bool> is_fixed(static_cast<std::size_t>(n), false);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] < 0 || indices[k] >= n) throw DimensionError("fix_variables: index out of range");
        is_fixed[static_cast<std::size_t>(indices[k])] = true;
        fixed(indices[k]) = values[k];
    }
    Index kept = 0;
    for (Index i = 0; i < n; ++i) {
        new_index[static_cast<std::size_t>(i)] = is_fixed[static_cast<std::size_t>(i)] ? -1 : kept++;
    }

    std::vector<Eigen::Triplet<double>> sel;
    for (Index i = 0; i < n; ++i) {
        if (new_index[static_cast<std::size_t>(i)] >= 0) sel.emplace_back(i, new_index[static_cast<std::size_t>(i)], 1.0);
    }
    SparseMatrix P(n, kept);
    P.setFromTriplets(sel.begin(), sel.end());

    QpProblem out;
    out.H = SparseMatrix(P.transpose() * problem.H * P);
    const VectorXd Hv = problem.H * fixed;
    out.f = P.transpose() * (problem.f + Hv);
    out.objective_offset =
        problem.objective_offset + 0.5 * fixed.dot(Hv) + problem.f.dot(fixed);
    out.G = problem.G * P;
    out.h = problem.h - problem.G * fixed;
    out.E = problem.E * P;
    out.e = problem.e - problem.E * fixed;
    for (Index b : problem.binaries) {
        const Index ni = new_index[static_cast<std::size_t>(b)];
        if (ni >= 0) out.binaries.push_back(ni);
    }
    out.H.makeCompressed();
    out.G.makeCompressed();
    out.E.makeCompressed();
    return out;
}

void dump_problem(const QpProblem& problem, std::ostream& out) {
    out << "# drmpc QP dump, format_version 1\n";
    out << std::setprecision(17);
    out << "n " << problem.num_vars() << " m " << problem.num_ineq() << " p " << problem.num_eq()
        << "\n";
    out << "offset " << problem.objective_offset << "\n";
    auto dump_sparse = [&out](const char* name, const SparseMatrix& M) {
        out << name << " " << M.rows() << " " << M.cols() << " " << M.nonZeros() << "\n";
        for (Index c = 0; c < M.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(M, c); it; ++it) {
                out << it.row() << " " << c << " " << it.value() << "\n";
            }
        }
    };
    auto dump_vec = [&out](const char* name, const VectorXd& v) {
        out << name << " " << v.size() << "\n";
        for (Index i = 0; i < v.size(); ++i) out << v(i) << "\n";
    };
    dump_sparse("H", problem.H);
    dump_vec("f", problem.f);
    dump_sparse("G", problem.G);
    dump_vec("h", problem.h);
    dump_sparse("E", problem.E);
    dump_vec("e", problem.e);
    out << "binaries " << problem.binaries.size() << "\n";
    for (Index b : problem.binaries) out << b << "\n";
}

Index ConstraintBuilder::add_row(double rhs) {
    rhs_.push_back(rhs);
    return static_cast<Index>(rhs_.size()) - 1;
}

void ConstraintBuilder::add_coefficient(Index row, Index col, double value) {
    if (col < 0 || col >= num_vars_ || row < 0 || row >= rows()) {
        throw DimensionError("ConstraintBuilder: coefficient out of range");
    }
    if (value != 0.0) triplets_.emplace_back(row, col, value);
}

SparseMatrix ConstraintBuilder::matrix() const {
    SparseMatrix M(rows(), num_vars_);
    M.setFromTriplets(triplets_.begin(), triplets_.end());
    M.makeCompressed();
    return M;
}

VectorXd ConstraintBuilder::rhs() const {
    return Eigen::Map<const VectorXd>(rhs_.data(), static_cast<Index>(rhs_.size()));
}

}  // namespace drmpc

#pragma once

// Bounded-variable revised primal simplex for
//
//   min c^T x   s.t.  A x = b,  lower <= x <= upper   (+-inf bounds allowed)
//
// Two phases with one artificial column per row. The basis inverse is kept
// dense, updated by elementary row operations after each pivot and rebuilt
// from an LU factorization every `refactor_every` pivots.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace optap {

inline constexpr double lp_inf = std::numeric_limits<double>::infinity();

struct SparseLp {
    Eigen::SparseMatrix<double> A; // m x n, column major
    Eigen::VectorXd b;
    Eigen::VectorXd c;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::vector<std::string> names;     // optional, per variable
    std::vector<std::string> row_names; // optional, per row

    int rows() const { return static_cast<int>(A.rows()); }
    int cols() const { return static_cast<int>(A.cols()); }
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit, numerical_failure };

inline const char* to_string(LpStatus s) {
    switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
    case LpStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

struct LpSolution {
    LpStatus status = LpStatus::numerical_failure;
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;
    std::vector<int> basis; // structural columns; artificial columns are numbered n + row
};

struct LpOptions {
    int max_iter = 20000;
    double pivot_tol = 1e-9;
    double optimality_tol = 1e-9;
    double feasibility_tol = 1e-9;
    int refactor_every = 50;
    int bland_after = 25; // consecutive degenerate pivots
};

/// Throws std::invalid_argument on inconsistent dimensions, crossed bounds or empty rows.
inline void check_lp(const SparseLp& lp) {
    const int m = lp.rows();
    const int n = lp.cols();
    if (lp.b.size() != m || lp.c.size() != n || lp.lower.size() != n || lp.upper.size() != n)
        throw std::invalid_argument("LP dimensions are inconsistent");
    if (!lp.names.empty() && static_cast<int>(lp.names.size()) != n)
        throw std::invalid_argument("LP variable names do not match column count");
    for (int j = 0; j < n; ++j) {
        if (std::isnan(lp.lower(j)) || std::isnan(lp.upper(j)) || lp.lower(j) > lp.upper(j))
            throw std::invalid_argument("LP bounds crossed for column " + std::to_string(j));
        if (lp.lower(j) == lp_inf || lp.upper(j) == -lp_inf)
            throw std::invalid_argument("LP bound is infinite in the wrong direction for column " + std::to_string(j));
    }
    std::vector<int> count(m, 0);
    for (int j = 0; j < n; ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(lp.A, j); it; ++it)
            if (it.value() != 0.0) ++count[it.row()];
    for (int i = 0; i < m; ++i)
        if (count[i] == 0) throw std::invalid_argument("LP row " + std::to_string(i) + " is empty");
}

namespace detail {

class BoundedSimplex {
public:
    BoundedSimplex(const SparseLp& lp, const LpOptions& opts)
        : lp_(lp), opts_(opts), m_(lp.rows()), n_(lp.cols()), total_(lp.cols() + lp.rows()) {}

    LpSolution run() {
        LpSolution out;
        init();
        if (!refactor()) return finish(LpStatus::numerical_failure);

        // Phase 1: drive the artificial columns to zero.
        Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total_);
        phase1.tail(m_).setOnes();
        LpStatus st = iterate(phase1, /*phase_one=*/true);
        if (st != LpStatus::optimal) return finish(st);
        double infeasibility = 0.0;
        for (int i = 0; i < m_; ++i) infeasibility += x_(n_ + i);
        const double scale = 1.0 + (lp_.b.size() ? lp_.b.cwiseAbs().maxCoeff() : 0.0);
        if (infeasibility > 1e-8 * scale) return finish(LpStatus::infeasible);

        for (int i = 0; i < m_; ++i) {
            lo_(n_ + i) = 0.0;
            up_(n_ + i) = 0.0;
            if (!is_basic(n_ + i)) x_(n_ + i) = 0.0;
        }
        if (!evict_artificials()) return finish(LpStatus::numerical_failure);

        Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(total_);
        phase2.head(n_) = lp_.c;
        st = iterate(phase2, /*phase_one=*/false);
        return finish(st);
    }

private:
    enum class At { basic, lower, upper, zero };

    bool is_basic(int j) const { return pos_[j] >= 0; }

    double column_dot(const Eigen::VectorXd& y, int j) const {
        if (j >= n_) return y(j - n_) * art_sign_(j - n_);
        double s = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, j); it; ++it) s += y(it.row()) * it.value();
        return s;
    }

    Eigen::VectorXd column(int j) const {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(m_);
        if (j >= n_) {
            a(j - n_) = art_sign_(j - n_);
        } else {
            for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, j); it; ++it) a(it.row()) += it.value();
        }
        return a;
    }

    void init() {
        lo_.resize(total_);
        up_.resize(total_);
        x_.setZero(total_);
        at_.assign(total_, At::zero);
        pos_.assign(total_, -1);
        lo_.head(n_) = lp_.lower;
        up_.head(n_) = lp_.upper;
        for (int j = 0; j < n_; ++j) {
            if (std::isfinite(lo_(j))) {
                x_(j) = lo_(j);
                at_[j] = At::lower;
            } else if (std::isfinite(up_(j))) {
                x_(j) = up_(j);
                at_[j] = At::upper;
            } else {
                x_(j) = 0.0;
                at_[j] = At::zero;
            }
        }
        Eigen::VectorXd r = lp_.b;
        for (int j = 0; j < n_; ++j)
            if (x_(j) != 0.0)
                for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, j); it; ++it) r(it.row()) -= it.value() * x_(j);
        art_sign_.resize(m_);
        basis_.resize(m_);
        for (int i = 0; i < m_; ++i) {
            art_sign_(i) = r(i) >= 0.0 ? 1.0 : -1.0;
            const int j = n_ + i;
            lo_(j) = 0.0;
            up_(j) = lp_inf;
            x_(j) = std::abs(r(i));
            at_[j] = At::basic;
            pos_[j] = i;
            basis_[i] = j;
        }
    }

    /// Rebuilds the basis inverse and the basic values from scratch.
    bool refactor() {
        Eigen::MatrixXd B(m_, m_);
        for (int i = 0; i < m_; ++i) B.col(i) = column(basis_[i]);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
        lu.setThreshold(1e-11);
        if (!lu.isInvertible()) return false;
        binv_ = lu.inverse();
        Eigen::VectorXd rhs = lp_.b;
        for (int j = 0; j < total_; ++j)
            if (!is_basic(j) && x_(j) != 0.0) rhs -= x_(j) * column(j);
        const Eigen::VectorXd xb = binv_ * rhs;
        for (int i = 0; i < m_; ++i) x_(basis_[i]) = xb(i);
        since_refactor_ = 0;
        return true;
    }

    void pivot(int row, const Eigen::VectorXd& alpha) {
        const double piv = alpha(row);
        binv_.row(row) /= piv;
        for (int i = 0; i < m_; ++i)
            if (i != row && alpha(i) != 0.0) binv_.row(i) -= alpha(i) * binv_.row(row);
    }

    /// Degenerate pivots that replace zero-level artificials by structural columns.
    bool evict_artificials() {
        for (int row = 0; row < m_; ++row) {
            if (basis_[row] < n_) continue;
            const Eigen::RowVectorXd brow = binv_.row(row);
            int best = -1;
            double best_mag = 1e-7;
            for (int j = 0; j < n_; ++j) {
                if (is_basic(j)) continue;
                double s = 0.0;
                for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, j); it; ++it) s += brow(it.row()) * it.value();
                if (std::abs(s) > best_mag) {
                    best_mag = std::abs(s);
                    best = j;
                }
            }
            if (best < 0) continue; // redundant row, artificial stays basic at zero
            const Eigen::VectorXd alpha = binv_ * column(best);
            const int leaving = basis_[row];
            pivot(row, alpha);
            pos_[leaving] = -1;
            at_[leaving] = At::lower;
            x_(leaving) = 0.0;
            basis_[row] = best;
            pos_[best] = row;
            at_[best] = At::basic;
            ++since_refactor_;
        }
        return refactor();
    }

    LpStatus iterate(const Eigen::VectorXd& cost, bool phase_one) {
        int degenerate_streak = 0;
        bool bland = false;
        while (true) {
            if (iterations_ >= opts_.max_iter) return LpStatus::iteration_limit;
            if (since_refactor_ >= opts_.refactor_every && !refactor()) return LpStatus::numerical_failure;

            Eigen::VectorXd cb(m_);
            for (int i = 0; i < m_; ++i) cb(i) = cost(basis_[i]);
            const Eigen::VectorXd y = binv_.transpose() * cb;

            // Pricing
            int q = -1;
            double dir = 0.0;
            double best = 0.0;
            for (int j = 0; j < total_; ++j) {
                if (is_basic(j) || lo_(j) == up_(j)) continue;
                const double d = cost(j) - column_dot(y, j);
                double move = 0.0;
                if (at_[j] == At::lower && d < -opts_.optimality_tol) move = 1.0;
                else if (at_[j] == At::upper && d > opts_.optimality_tol) move = -1.0;
                else if (at_[j] == At::zero && std::abs(d) > opts_.optimality_tol) move = d < 0.0 ? 1.0 : -1.0;
                if (move == 0.0) continue;
                if (bland) {
                    q = j;
                    dir = move;
                    break;
                }
                if (std::abs(d) > best) {
                    best = std::abs(d);
                    q = j;
                    dir = move;
                }
            }
            if (q < 0) return LpStatus::optimal;

            const Eigen::VectorXd alpha = binv_ * column(q);

            // Ratio test
            double step = lp_inf;
            int leave_row = -1;
            double leave_mag = 0.0;
            for (int i = 0; i < m_; ++i) {
                const double a = alpha(i);
                if (std::abs(a) <= opts_.pivot_tol) continue;
                const int j = basis_[i];
                const double rate = -dir * a; // d x_j / d step
                double limit = lp_inf;
                if (rate < 0.0 && std::isfinite(lo_(j))) limit = std::max(0.0, (x_(j) - lo_(j)) / -rate);
                else if (rate > 0.0 && std::isfinite(up_(j))) limit = std::max(0.0, (up_(j) - x_(j)) / rate);
                if (!std::isfinite(limit)) continue;
                const bool better = limit < step - 1e-12;
                const bool tie = !better && limit <= step + 1e-12;
                if (better || (tie && (bland ? j < basis_[leave_row] : std::abs(a) > leave_mag))) {
                    step = limit;
                    leave_row = i;
                    leave_mag = std::abs(a);
                }
            }
            const double flip = (std::isfinite(lo_(q)) && std::isfinite(up_(q))) ? up_(q) - lo_(q) : lp_inf;
            if (!std::isfinite(step) && !std::isfinite(flip)) {
                return phase_one ? LpStatus::numerical_failure : LpStatus::unbounded;
            }

            ++iterations_;
            if (flip <= step) {
                x_(q) += dir * flip;
                for (int i = 0; i < m_; ++i) x_(basis_[i]) -= dir * flip * alpha(i);
                at_[q] = dir > 0 ? At::upper : At::lower;
                x_(q) = dir > 0 ? up_(q) : lo_(q);
                degenerate_streak = 0;
                bland = false;
                continue;
            }

            x_(q) += dir * step;
            for (int i = 0; i < m_; ++i) x_(basis_[i]) -= dir * step * alpha(i);
            const int leaving = basis_[leave_row];
            const double rate = -dir * alpha(leave_row);
            if (rate < 0.0) {
                x_(leaving) = lo_(leaving);
                at_[leaving] = At::lower;
            } else {
                x_(leaving) = up_(leaving);
                at_[leaving] = At::upper;
            }
            pos_[leaving] = -1;
            pivot(leave_row, alpha);
            basis_[leave_row] = q;
            pos_[q] = leave_row;
            at_[q] = At::basic;
            ++since_refactor_;

            if (step <= 1e-12) {
                if (++degenerate_streak >= opts_.bland_after) bland = true;
            } else {
                degenerate_streak = 0;
                bland = false;
            }
        }
    }

    LpSolution finish(LpStatus st) {
        LpSolution out;
        out.status = st;
        out.iterations = iterations_;
        if (st == LpStatus::optimal && !refactor()) out.status = LpStatus::numerical_failure;
        out.x = x_.head(n_);
        if (out.status == LpStatus::optimal) {
            // Snap values that drifted across a bound by round-off.
            for (int j = 0; j < n_; ++j) {
                if (out.x(j) < lo_(j) && out.x(j) > lo_(j) - opts_.feasibility_tol) out.x(j) = lo_(j);
                if (out.x(j) > up_(j) && out.x(j) < up_(j) + opts_.feasibility_tol) out.x(j) = up_(j);
            }
        }
        out.objective = lp_.c.dot(out.x);
        out.basis = basis_;
        return out;
    }

    const SparseLp& lp_;
    LpOptions opts_;
    int m_;
    int n_;
    int total_;
    Eigen::VectorXd lo_, up_, x_, art_sign_;
    std::vector<At> at_;
    std::vector<int> pos_;
    std::vector<int> basis_;
    Eigen::MatrixXd binv_;
    int since_refactor_ = 0;
    int iterations_ = 0;
};

} // namespace detail

inline LpSolution solve_lp(const SparseLp& lp, const LpOptions& opts = {}) {
    check_lp(lp);
    if (lp.rows() == 0) {
        // Bounds only: each variable sits at its cheaper bound.
        LpSolution out;
        out.x.resize(lp.cols());
        out.status = LpStatus::optimal;
        for (int j = 0; j < lp.cols(); ++j) {
            const double c = lp.c(j);
            const double v = c > 0.0 ? lp.lower(j) : c < 0.0 ? lp.upper(j)
                             : std::isfinite(lp.lower(j)) ? lp.lower(j) : std::isfinite(lp.upper(j)) ? lp.upper(j) : 0.0;
            if (!std::isfinite(v)) {
                out.status = LpStatus::unbounded;
                out.x(j) = 0.0;
            } else {
                out.x(j) = v;
            }
        }
        out.objective = lp.c.dot(out.x);
        return out;
    }
    return detail::BoundedSimplex(lp, opts).run();
}

inline LpSolution solve_lp(const SparseLp& lp, int max_iter) {
    LpOptions opts;
    opts.max_iter = max_iter;
    return solve_lp(lp, opts);
}

struct LpResiduals {
    double primal = 0.0; // ||A x - b||_inf
    double bounds = 0.0; // largest bound violation
};

inline LpResiduals residuals(const SparseLp& lp, const Eigen::VectorXd& x) {
    LpResiduals r;
    if (lp.rows() > 0) r.primal = (lp.A * x - lp.b).cwiseAbs().maxCoeff();
    for (int j = 0; j < lp.cols(); ++j) {
        r.bounds = std::max(r.bounds, lp.lower(j) - x(j));
        r.bounds = std::max(r.bounds, x(j) - lp.upper(j));
    }
    return r;
}

inline LpResiduals residuals(const SparseLp& lp, const LpSolution& sol) { return residuals(lp, sol.x); }

/// Column-oriented text dump in the spirit of fixed MPS: NAME, ROWS, COLUMNS,
/// RHS and BOUNDS sections. Equality rows only; names default to R<i>/C<j>.
inline void write_lp(std::ostream& os, const SparseLp& lp, const std::string& name = "OPTAP") {
    auto col_name = [&](int j) { return lp.names.empty() ? "C" + std::to_string(j) : lp.names[j]; };
    auto row_name = [&](int i) { return lp.row_names.empty() ? "R" + std::to_string(i) : lp.row_names[i]; };
    char buf[256];
    os << "NAME          " << name << "\nROWS\n N  COST\n";
    for (int i = 0; i < lp.rows(); ++i) os << " E  " << row_name(i) << '\n';
    os << "COLUMNS\n";
    for (int j = 0; j < lp.cols(); ++j) {
        if (lp.c(j) != 0.0) {
            std::snprintf(buf, sizeof buf, "    %-24s %-24s %.17g\n", col_name(j).c_str(), "COST", lp.c(j));
            os << buf;
        }
        for (Eigen::SparseMatrix<double>::InnerIterator it(lp.A, j); it; ++it) {
            std::snprintf(buf, sizeof buf, "    %-24s %-24s %.17g\n", col_name(j).c_str(),
                          row_name(static_cast<int>(it.row())).c_str(), it.value());
            os << buf;
        }
    }
    os << "RHS\n";
    for (int i = 0; i < lp.rows(); ++i)
        if (lp.b(i) != 0.0) {
            std::snprintf(buf, sizeof buf, "    RHS       %-24s %.17g\n", row_name(i).c_str(), lp.b(i));
            os << buf;
        }
    os << "BOUNDS\n";
    for (int j = 0; j < lp.cols(); ++j) {
        const double lo = lp.lower(j);
        const double up = lp.upper(j);
        const std::string cn = col_name(j);
        if (!std::isfinite(lo) && !std::isfinite(up)) {
            os << " FR BND       " << cn << '\n';
            continue;
        }
        if (lo == up) {
            std::snprintf(buf, sizeof buf, " FX BND       %-24s %.17g\n", cn.c_str(), lo);
            os << buf;
            continue;
        }
        if (!std::isfinite(lo)) os << " MI BND       " << cn << '\n';
        else if (lo != 0.0) {
            std::snprintf(buf, sizeof buf, " LO BND       %-24s %.17g\n", cn.c_str(), lo);
            os << buf;
        }
        if (std::isfinite(up)) {
            std::snprintf(buf, sizeof buf, " UP BND       %-24s %.17g\n", cn.c_str(), up);
            os << buf;
        }
    }
    os << "ENDATA\n";
}

} // namespace optap

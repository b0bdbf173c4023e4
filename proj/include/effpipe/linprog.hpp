#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "effpipe/csv.hpp"
#include "effpipe/errors.hpp"

namespace effpipe {

enum class Sense { maximize, minimize };
enum class Relation { less_equal, equal, greater_equal };

struct Constraint {
    std::vector<double> coefficients;
    Relation relation = Relation::less_equal;
    double rhs = 0.0;
};

/// Dense linear program. Variables have lower bounds only: 0 by default,
/// any finite value, or -infinity for a free variable.
struct LpProblem {
    Sense sense = Sense::maximize;
    std::vector<double> objective;
    std::vector<Constraint> constraints;
    std::vector<double> lower_bounds;  // empty means all zero

    std::size_t variable_count() const { return objective.size(); }

    double lower_bound(std::size_t j) const { return lower_bounds.empty() ? 0.0 : lower_bounds[j]; }

    void check() const {
        const std::size_t n = objective.size();
        for (double c : objective) {
            if (!std::isfinite(c)) throw UsageError("LP objective coefficient is not finite");
        }
        for (std::size_t i = 0; i < constraints.size(); ++i) {
            const auto& row = constraints[i];
            if (row.coefficients.size() != n) {
                throw UsageError("LP constraint " + std::to_string(i) + " has " +
                                 std::to_string(row.coefficients.size()) + " coefficients, expected " +
                                 std::to_string(n));
            }
            for (double a : row.coefficients) {
                if (!std::isfinite(a)) throw UsageError("LP constraint coefficient is not finite");
            }
            if (!std::isfinite(row.rhs)) throw UsageError("LP right-hand side is not finite");
        }
        if (!lower_bounds.empty() && lower_bounds.size() != n) {
            throw UsageError("LP lower bound vector has wrong length");
        }
        for (double l : lower_bounds) {
            if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
                throw UsageError("LP lower bound must be finite or -infinity");
            }
        }
    }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
    }
    return "?";
}

/// Solved state. `dual` has one multiplier per constraint, signed so that
/// objective_value == b.y (plus bound shifts) at optimality.
struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    double objective_value = 0.0;
    std::vector<double> primal;
    std::vector<double> dual;
    std::size_t iterations = 0;
};

namespace lp_detail {

inline constexpr double pivot_tol = 1e-9;
inline constexpr double feasibility_tol = 1e-7;
inline constexpr int bland_after_degenerate = 50;

// Dense tableau for min c.x, A x = b, x >= 0, b >= 0, where every row owns
// a unit column (slack or artificial) that forms the starting basis.
class Tableau {
public:
    Tableau(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, std::vector<int> unit_columns,
            std::size_t first_artificial)
        : m_(a.rows()), n_(a.cols()), t_(a.rows() + 1, a.cols() + 1), basis_(std::move(unit_columns)),
          first_artificial_(first_artificial) {
        t_.setZero();
        t_.topLeftCorner(m_, n_) = a;
        t_.block(0, n_, m_, 1) = b;
    }

    Eigen::Index rows() const { return m_; }
    Eigen::Index cols() const { return n_; }
    const std::vector<int>& basis() const { return basis_; }
    std::size_t iterations() const { return iterations_; }
    double rhs(Eigen::Index i) const { return t_(i, n_); }

    bool is_artificial(Eigen::Index j) const { return static_cast<std::size_t>(j) >= first_artificial_; }

    /// Loads the cost vector and prices out the current basis.
    void set_costs(const Eigen::VectorXd& cost) {
        t_.row(m_).setZero();
        t_.row(m_).head(n_) = cost.transpose();
        for (Eigen::Index i = 0; i < m_; ++i) {
            const double cb = cost(basis_[static_cast<std::size_t>(i)]);
            if (cb != 0.0) t_.row(m_) -= cb * t_.row(i);
        }
    }

    enum class Outcome { optimal, unbounded };

    /// Runs primal simplex iterations. Dantzig pricing, switching to Bland's
    /// rule after a run of degenerate pivots until progress resumes.
    Outcome optimize(bool allow_artificial_entry, int phase) {
        const std::size_t limit = 10000 + 100 * static_cast<std::size_t>(m_ + n_);
        int degenerate_run = 0;
        bool bland = false;
        for (;;) {
            Eigen::Index enter = -1;
            double best = -pivot_tol;
            for (Eigen::Index j = 0; j < n_; ++j) {
                if (!allow_artificial_entry && is_artificial(j)) continue;
                const double d = t_(m_, j);
                if (bland) {
                    if (d < -pivot_tol) {
                        enter = j;
                        break;
                    }
                } else if (d < best) {
                    best = d;
                    enter = j;
                }
            }
            if (enter < 0) return Outcome::optimal;

            Eigen::Index leave = -1;
            double min_ratio = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < m_; ++i) {
                const double a = t_(i, enter);
                if (a <= pivot_tol) continue;
                const double ratio = std::max(t_(i, n_), 0.0) / a;
                const double tie_band = 1e-12 * (1.0 + std::abs(min_ratio));
                if (leave < 0 || ratio < min_ratio - tie_band) {
                    leave = i;
                    min_ratio = ratio;
                } else if (ratio <= min_ratio + tie_band) {
                    const bool prefer =
                        bland ? basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]
                              : a > t_(leave, enter);
                    if (prefer) {
                        leave = i;
                        min_ratio = std::min(min_ratio, ratio);
                    }
                }
            }
            if (leave < 0) return Outcome::unbounded;

            if (++iterations_ > limit) {
                std::ostringstream msg;
                msg << "simplex iteration limit " << limit << " reached in phase " << phase << " (rows " << m_
                    << ", columns " << n_ << ", degenerate run " << degenerate_run
                    << ", bland " << (bland ? "on" : "off") << ")";
                throw SolverFailure(msg.str());
            }
            if (min_ratio <= 1e-12) {
                if (++degenerate_run >= bland_after_degenerate) bland = true;
            } else {
                degenerate_run = 0;
                bland = false;
            }
            pivot(leave, enter);
        }
    }

    void pivot(Eigen::Index r, Eigen::Index c) {
        const double p = t_(r, c);
        if (std::abs(p) <= pivot_tol * 1e-3) {
            throw SolverFailure("pivot element " + csv::format_exact(p) + " below tolerance at iteration " +
                                std::to_string(iterations_));
        }
        t_.row(r) /= p;
        for (Eigen::Index i = 0; i <= m_; ++i) {
            if (i == r) continue;
            const double f = t_(i, c);
            if (f != 0.0) t_.row(i) -= f * t_.row(r);
        }
        t_(r, c) = 1.0;
        basis_[static_cast<std::size_t>(r)] = static_cast<int>(c);
    }

    /// Pivots basic artificials out wherever a structural/slack entry allows.
    void expel_artificials() {
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (!is_artificial(basis_[static_cast<std::size_t>(i)])) continue;
            Eigen::Index best = -1;
            double best_abs = pivot_tol;
            for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(first_artificial_); ++j) {
                if (std::abs(t_(i, j)) > best_abs) {
                    best_abs = std::abs(t_(i, j));
                    best = j;
                }
            }
            if (best >= 0) pivot(i, best);
            // Otherwise the row is redundant; its artificial stays basic at zero.
        }
    }

private:
    Eigen::Index m_, n_;
    Eigen::MatrixXd t_;
    std::vector<int> basis_;
    std::size_t first_artificial_;
    std::size_t iterations_ = 0;
};

}  // namespace lp_detail

/// Two-phase primal simplex on the dense standard form. Rows are scaled to
/// unit max-norm before solving; the final basis is re-solved with an LU
/// factorization of the original scaled matrix to clean up round-off.
inline LpSolution solve_lp(const LpProblem& problem) {
    problem.check();
    using Eigen::Index;
    const std::size_t n = problem.variable_count();
    const std::size_t m = problem.constraints.size();

    // Column map: a finite lower bound l shifts x = l + x'; a free variable
    // splits into x+ - x-.
    std::vector<int> pos_col(n), neg_col(n, -1);
    std::vector<double> shift(n, 0.0);
    int ncols = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double l = problem.lower_bound(j);
        pos_col[j] = ncols++;
        if (std::isinf(l)) {
            neg_col[j] = ncols++;
        } else {
            shift[j] = l;
        }
    }
    const int structural = ncols;

    std::vector<double> row_multiplier(m);
    std::vector<Relation> rel(m);
    Eigen::MatrixXd core = Eigen::MatrixXd::Zero(static_cast<Index>(m), structural);
    Eigen::VectorXd b(static_cast<Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        const auto& c = problem.constraints[i];
        double rhs = c.rhs;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = c.coefficients[j];
            core(static_cast<Index>(i), pos_col[j]) = a;
            if (neg_col[j] >= 0) core(static_cast<Index>(i), neg_col[j]) = -a;
            rhs -= a * shift[j];
        }
        double scale = core.row(static_cast<Index>(i)).cwiseAbs().maxCoeff();
        if (!(scale > 0.0)) scale = 1.0;
        double mult = 1.0 / scale;
        rel[i] = c.relation;
        if (rhs * mult < 0.0) {
            mult = -mult;
            if (rel[i] == Relation::less_equal) {
                rel[i] = Relation::greater_equal;
            } else if (rel[i] == Relation::greater_equal) {
                rel[i] = Relation::less_equal;
            }
        }
        core.row(static_cast<Index>(i)) *= mult;
        b(static_cast<Index>(i)) = rhs * mult;
        row_multiplier[i] = mult;
    }

    // Slack (+1 for <=), surplus (-1 for >=), then artificials for >= and =.
    int slack_count = 0, artificial_count = 0;
    for (auto r : rel) {
        if (r != Relation::equal) ++slack_count;
        if (r != Relation::less_equal) ++artificial_count;
    }
    const int total = structural + slack_count + artificial_count;
    const std::size_t first_artificial = static_cast<std::size_t>(structural + slack_count);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Index>(m), total);
    a.leftCols(structural) = core;
    std::vector<int> unit(m);
    int next_slack = structural, next_art = static_cast<int>(first_artificial);
    for (std::size_t i = 0; i < m; ++i) {
        const Index r = static_cast<Index>(i);
        switch (rel[i]) {
            case Relation::less_equal:
                a(r, next_slack) = 1.0;
                unit[i] = next_slack++;
                break;
            case Relation::greater_equal:
                a(r, next_slack++) = -1.0;
                a(r, next_art) = 1.0;
                unit[i] = next_art++;
                break;
            case Relation::equal:
                a(r, next_art) = 1.0;
                unit[i] = next_art++;
                break;
        }
    }

    lp_detail::Tableau tab(a, b, unit, first_artificial);
    LpSolution sol;

    if (artificial_count > 0) {
        Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total);
        phase1.tail(artificial_count).setOnes();
        tab.set_costs(phase1);
        tab.optimize(true, 1);
        double infeasibility = 0.0;
        for (Index i = 0; i < tab.rows(); ++i) {
            if (tab.is_artificial(tab.basis()[static_cast<std::size_t>(i)])) infeasibility += std::abs(tab.rhs(i));
        }
        if (infeasibility > lp_detail::feasibility_tol) {
            sol.status = LpStatus::infeasible;
            sol.iterations = tab.iterations();
            return sol;
        }
        tab.expel_artificials();
    }

    Eigen::VectorXd cost = Eigen::VectorXd::Zero(total);
    const double sign = problem.sense == Sense::maximize ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        cost(pos_col[j]) = sign * problem.objective[j];
        if (neg_col[j] >= 0) cost(neg_col[j]) = -sign * problem.objective[j];
    }
    tab.set_costs(cost);
    if (tab.optimize(false, 2) == lp_detail::Tableau::Outcome::unbounded) {
        sol.status = LpStatus::unbounded;
        sol.iterations = tab.iterations();
        return sol;
    }

    // Re-solve B x_B = b and B^T y = c_B from the original scaled matrix.
    const auto& basis = tab.basis();
    Eigen::VectorXd x_std = Eigen::VectorXd::Zero(total);
    Eigen::VectorXd y_std = Eigen::VectorXd::Zero(static_cast<Index>(m));
    if (m > 0) {
        Eigen::MatrixXd bm(static_cast<Index>(m), static_cast<Index>(m));
        Eigen::VectorXd cb(static_cast<Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            bm.col(static_cast<Index>(i)) = a.col(basis[i]);
            cb(static_cast<Index>(i)) = cost(basis[i]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(bm);
        Eigen::VectorXd xb;
        if (lu.isInvertible()) xb = lu.solve(b);
        if (lu.isInvertible() && xb.minCoeff() >= -lp_detail::feasibility_tol) {
            y_std = lu.transpose().solve(cb);
        } else {
            xb.resize(static_cast<Index>(m));
            for (std::size_t i = 0; i < m; ++i) xb(static_cast<Index>(i)) = tab.rhs(static_cast<Index>(i));
            y_std = bm.transpose().colPivHouseholderQr().solve(cb);
        }
        for (std::size_t i = 0; i < m; ++i) x_std(basis[i]) = std::max(0.0, xb(static_cast<Index>(i)));
    }

    sol.status = LpStatus::optimal;
    sol.iterations = tab.iterations();
    sol.primal.resize(n);
    double value = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double x = shift[j] + x_std(pos_col[j]);
        if (neg_col[j] >= 0) x -= x_std(neg_col[j]);
        sol.primal[j] = x;
        value += problem.objective[j] * x;
    }
    sol.objective_value = value;
    sol.dual.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        sol.dual[i] = sign * row_multiplier[i] * y_std(static_cast<Index>(i));
    }
    return sol;
}

/// Human-readable dump in CPLEX LP file syntax, for troubleshooting.
inline std::string to_lp_text(const LpProblem& problem) {
    std::ostringstream os;
    auto term_list = [&](const std::vector<double>& coeffs) {
        bool first = true;
        for (std::size_t j = 0; j < coeffs.size(); ++j) {
            if (coeffs[j] == 0.0) continue;
            const double c = coeffs[j];
            if (!first) os << (c < 0 ? " - " : " + ");
            else if (c < 0) os << "-";
            os << csv::format_exact(std::abs(c)) << " x" << j;
            first = false;
        }
        if (first) os << "0 x0";
    };
    os << (problem.sense == Sense::maximize ? "Maximize\n" : "Minimize\n") << " obj: ";
    term_list(problem.objective);
    os << "\nSubject To\n";
    for (std::size_t i = 0; i < problem.constraints.size(); ++i) {
        const auto& c = problem.constraints[i];
        os << " c" << i << ": ";
        term_list(c.coefficients);
        os << (c.relation == Relation::less_equal ? " <= " : c.relation == Relation::equal ? " = " : " >= ")
           << csv::format_exact(c.rhs) << '\n';
    }
    os << "Bounds\n";
    for (std::size_t j = 0; j < problem.variable_count(); ++j) {
        const double l = problem.lower_bound(j);
        if (std::isinf(l)) {
            os << " x" << j << " free\n";
        } else {
            os << " x" << j << " >= " << csv::format_exact(l) << '\n';
        }
    }
    os << "End\n";
    return os.str();
}

}  // namespace effpipe

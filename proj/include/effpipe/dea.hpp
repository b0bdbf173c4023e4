#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "effpipe/dea_spec.hpp"
#include "effpipe/errors.hpp"
#include "effpipe/linprog.hpp"
#include "effpipe/panel_data.hpp"

namespace effpipe {

/// Virtual weights from the multiplier LP, in the data's original units.
/// `free_term` is the VRS intercept (u0 for input, v0 for output
/// orientation) and 0 under CRS.
struct MultiplierWeights {
    std::vector<double> output_weights;
    std::vector<double> input_weights;
    double free_term = 0.0;
};

struct EnvelopmentSolution {
    std::vector<double> lambdas;        // one peer weight per DMU
    std::vector<double> input_slacks;   // original units
    std::vector<double> output_slacks;  // original units
};

/// Efficiency of one DMU against one cross-section.
///
/// `score` is the envelopment optimum after rounding: theta in (0, 1] for
/// input orientation, phi >= 1 for output orientation. `multiplier_score`
/// is the unrounded optimum of the multiplier LP; the two agree to 1e-6 by
/// LP duality and the solve fails with ConsistencyError otherwise.
struct EfficiencyResult {
    std::string dmu;
    ReturnsToScale returns_to_scale = ReturnsToScale::crs;
    Orientation orientation = Orientation::input;
    double score = 1.0;
    double envelopment_score = 1.0;
    double multiplier_score = 1.0;
    MultiplierWeights weights;
    EnvelopmentSolution envelopment;
    bool weakly_efficient = false;  // radially efficient but with nonzero slacks

    /// Score mapped into (0, 1]: theta, or 1/phi for output orientation.
    double efficiency() const { return orientation == Orientation::input ? score : 1.0 / score; }
};

namespace dea_detail {

inline constexpr double duality_tol = 1e-6;
inline constexpr double unit_snap = 1e-7;
inline constexpr double min_score = 1e-12;
inline constexpr double slack_tol = 1e-7;

// Columns divided by their mean so every LP sees O(1) data regardless of units.
struct Normalized {
    Eigen::MatrixXd x, y;
    Eigen::VectorXd x_scale, y_scale;

    explicit Normalized(const CrossSection& cs) {
        x_scale = cs.inputs.colwise().mean().transpose();
        y_scale = cs.outputs.colwise().mean().transpose();
        x = cs.inputs * x_scale.cwiseInverse().asDiagonal();
        y = cs.outputs * y_scale.cwiseInverse().asDiagonal();
    }
};

inline void require_optimal(const LpSolution& s, const char* which, std::string_view dmu) {
    if (s.status != LpStatus::optimal) {
        throw ConsistencyError(std::string(which) + " LP for DMU '" + std::string(dmu) + "' is " +
                               to_string(s.status) + "; this cannot happen on strictly positive data");
    }
}

inline LpSolution solve_envelopment(const Normalized& d, Eigen::Index o, ReturnsToScale rts, Orientation orient) {
    const Eigen::Index n = d.x.rows(), m = d.x.cols(), s = d.y.cols();
    LpProblem lp;
    lp.sense = orient == Orientation::input ? Sense::minimize : Sense::maximize;
    lp.objective.assign(static_cast<std::size_t>(n + 1), 0.0);
    lp.objective[0] = 1.0;  // theta or phi
    for (Eigen::Index i = 0; i < m; ++i) {
        Constraint c;
        c.coefficients.resize(static_cast<std::size_t>(n + 1));
        for (Eigen::Index j = 0; j < n; ++j) c.coefficients[static_cast<std::size_t>(j + 1)] = d.x(j, i);
        c.relation = Relation::less_equal;
        if (orient == Orientation::input) {
            c.coefficients[0] = -d.x(o, i);
            c.rhs = 0.0;
        } else {
            c.rhs = d.x(o, i);
        }
        lp.constraints.push_back(std::move(c));
    }
    for (Eigen::Index r = 0; r < s; ++r) {
        Constraint c;
        c.coefficients.resize(static_cast<std::size_t>(n + 1));
        for (Eigen::Index j = 0; j < n; ++j) c.coefficients[static_cast<std::size_t>(j + 1)] = d.y(j, r);
        c.relation = Relation::greater_equal;
        if (orient == Orientation::input) {
            c.rhs = d.y(o, r);
        } else {
            c.coefficients[0] = -d.y(o, r);
            c.rhs = 0.0;
        }
        lp.constraints.push_back(std::move(c));
    }
    if (rts == ReturnsToScale::vrs) {
        Constraint c;
        c.coefficients.assign(static_cast<std::size_t>(n + 1), 1.0);
        c.coefficients[0] = 0.0;
        c.relation = Relation::equal;
        c.rhs = 1.0;
        lp.constraints.push_back(std::move(c));
    }
    return solve_lp(lp);
}

// Multiplier form. Variable order: u (outputs), v (inputs), then the free
// VRS term when present.
inline LpSolution solve_multiplier(const Normalized& d, Eigen::Index o, ReturnsToScale rts, Orientation orient) {
    const Eigen::Index n = d.x.rows(), m = d.x.cols(), s = d.y.cols();
    const bool vrs = rts == ReturnsToScale::vrs;
    const std::size_t nvar = static_cast<std::size_t>(s + m + (vrs ? 1 : 0));
    LpProblem lp;
    lp.objective.assign(nvar, 0.0);
    lp.lower_bounds.assign(nvar, 0.0);
    if (vrs) lp.lower_bounds.back() = -std::numeric_limits<double>::infinity();

    Constraint norm;
    norm.coefficients.assign(nvar, 0.0);
    norm.relation = Relation::equal;
    norm.rhs = 1.0;
    if (orient == Orientation::input) {
        // max u.y0 + u0  s.t.  v.x0 = 1,  u.yj - v.xj + u0 <= 0
        lp.sense = Sense::maximize;
        for (Eigen::Index r = 0; r < s; ++r) lp.objective[static_cast<std::size_t>(r)] = d.y(o, r);
        if (vrs) lp.objective.back() = 1.0;
        for (Eigen::Index i = 0; i < m; ++i) norm.coefficients[static_cast<std::size_t>(s + i)] = d.x(o, i);
    } else {
        // min v.x0 + v0  s.t.  u.y0 = 1,  v.xj - u.yj + v0 >= 0
        lp.sense = Sense::minimize;
        for (Eigen::Index i = 0; i < m; ++i) lp.objective[static_cast<std::size_t>(s + i)] = d.x(o, i);
        if (vrs) lp.objective.back() = 1.0;
        for (Eigen::Index r = 0; r < s; ++r) norm.coefficients[static_cast<std::size_t>(r)] = d.y(o, r);
    }
    lp.constraints.push_back(std::move(norm));

    const double sign = orient == Orientation::input ? 1.0 : -1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        Constraint c;
        c.coefficients.assign(nvar, 0.0);
        for (Eigen::Index r = 0; r < s; ++r) c.coefficients[static_cast<std::size_t>(r)] = sign * d.y(j, r);
        for (Eigen::Index i = 0; i < m; ++i) c.coefficients[static_cast<std::size_t>(s + i)] = -sign * d.x(j, i);
        if (vrs) c.coefficients.back() = 1.0;
        c.relation = orient == Orientation::input ? Relation::less_equal : Relation::greater_equal;
        c.rhs = 0.0;
        lp.constraints.push_back(std::move(c));
    }
    return solve_lp(lp);
}

// Second stage: maximize total (normalized) slack at the radial optimum.
// Variable order: lambda (n), input slacks (m), output slacks (s).
inline LpSolution solve_max_slack(const Normalized& d, Eigen::Index o, ReturnsToScale rts, Orientation orient,
                                  double radial) {
    const Eigen::Index n = d.x.rows(), m = d.x.cols(), s = d.y.cols();
    const std::size_t nvar = static_cast<std::size_t>(n + m + s);
    LpProblem lp;
    lp.sense = Sense::maximize;
    lp.objective.assign(nvar, 0.0);
    std::fill(lp.objective.begin() + n, lp.objective.end(), 1.0);
    for (Eigen::Index i = 0; i < m; ++i) {
        Constraint c;
        c.coefficients.assign(nvar, 0.0);
        for (Eigen::Index j = 0; j < n; ++j) c.coefficients[static_cast<std::size_t>(j)] = d.x(j, i);
        c.coefficients[static_cast<std::size_t>(n + i)] = 1.0;
        c.relation = Relation::equal;
        c.rhs = (orient == Orientation::input ? radial : 1.0) * d.x(o, i);
        lp.constraints.push_back(std::move(c));
    }
    for (Eigen::Index r = 0; r < s; ++r) {
        Constraint c;
        c.coefficients.assign(nvar, 0.0);
        for (Eigen::Index j = 0; j < n; ++j) c.coefficients[static_cast<std::size_t>(j)] = d.y(j, r);
        c.coefficients[static_cast<std::size_t>(n + m + r)] = -1.0;
        c.relation = Relation::equal;
        c.rhs = (orient == Orientation::output ? radial : 1.0) * d.y(o, r);
        lp.constraints.push_back(std::move(c));
    }
    if (rts == ReturnsToScale::vrs) {
        Constraint c;
        c.coefficients.assign(nvar, 0.0);
        std::fill(c.coefficients.begin(), c.coefficients.begin() + n, 1.0);
        c.relation = Relation::equal;
        c.rhs = 1.0;
        lp.constraints.push_back(std::move(c));
    }
    return solve_lp(lp);
}

}  // namespace dea_detail

/// Solves both DEA forms for DMU `dmu_index` of `cs` and cross-checks them.
inline EfficiencyResult solve_dea(const CrossSection& cs, std::size_t dmu_index, ReturnsToScale rts,
                                  Orientation orientation) {
    using namespace dea_detail;
    if (dmu_index >= cs.size()) throw LookupError("DMU index out of range");
    if (cs.inputs.rows() != static_cast<Eigen::Index>(cs.size()) ||
        cs.outputs.rows() != static_cast<Eigen::Index>(cs.size()) || cs.inputs.cols() == 0 ||
        cs.outputs.cols() == 0) {
        throw UsageError("cross-section matrices do not match its DMU list");
    }
    if (!(cs.inputs.array() > 0.0).all() || !(cs.outputs.array() > 0.0).all() || !cs.inputs.allFinite() ||
        !cs.outputs.allFinite()) {
        throw ValidationError("cross-section " + cs.period + " has nonpositive or non-finite data");
    }
    const Normalized data(cs);
    const auto o = static_cast<Eigen::Index>(dmu_index);
    const std::string& name = cs.dmus[dmu_index];
    const bool input = orientation == Orientation::input;

    const LpSolution env = solve_envelopment(data, o, rts, orientation);
    require_optimal(env, "envelopment", name);
    const LpSolution mult = solve_multiplier(data, o, rts, orientation);
    require_optimal(mult, "multiplier", name);

    const double env_score = env.objective_value;
    const double mult_score = mult.objective_value;
    if (std::abs(env_score - mult_score) > duality_tol * std::max(1.0, std::abs(env_score))) {
        throw ConsistencyError("DMU '" + name + "' in " + cs.period + ": envelopment score " +
                               csv::format_exact(env_score) + " and multiplier score " +
                               csv::format_exact(mult_score) + " disagree");
    }

    EfficiencyResult res;
    res.dmu = name;
    res.returns_to_scale = rts;
    res.orientation = orientation;
    res.envelopment_score = env_score;
    res.multiplier_score = mult_score;
    if (input) {
        res.score = std::clamp(env_score, min_score, 1.0);
        if (res.score > 1.0 - unit_snap) res.score = 1.0;
    } else {
        res.score = std::max(env_score, 1.0);
        if (res.score < 1.0 + unit_snap) res.score = 1.0;
    }

    const Eigen::Index n = data.x.rows(), m = data.x.cols(), s = data.y.cols();
    res.weights.output_weights.resize(static_cast<std::size_t>(s));
    res.weights.input_weights.resize(static_cast<std::size_t>(m));
    for (Eigen::Index r = 0; r < s; ++r) {
        res.weights.output_weights[static_cast<std::size_t>(r)] = mult.primal[static_cast<std::size_t>(r)] / data.y_scale(r);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        res.weights.input_weights[static_cast<std::size_t>(i)] = mult.primal[static_cast<std::size_t>(s + i)] / data.x_scale(i);
    }
    if (rts == ReturnsToScale::vrs) res.weights.free_term = mult.primal.back();

    // Peers and slacks: prefer the max-slack solution; fall back to the
    // radial solution if the fixed-score system is numerically infeasible.
    std::vector<double> lambda(static_cast<std::size_t>(n));
    Eigen::VectorXd sx(m), sy(s);
    const LpSolution slack = solve_max_slack(data, o, rts, orientation, env_score);
    if (slack.status == LpStatus::optimal) {
        for (Eigen::Index j = 0; j < n; ++j) lambda[static_cast<std::size_t>(j)] = slack.primal[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < m; ++i) sx(i) = slack.primal[static_cast<std::size_t>(n + i)];
        for (Eigen::Index r = 0; r < s; ++r) sy(r) = slack.primal[static_cast<std::size_t>(n + m + r)];
    } else {
        for (Eigen::Index j = 0; j < n; ++j) lambda[static_cast<std::size_t>(j)] = env.primal[static_cast<std::size_t>(j + 1)];
        Eigen::Map<const Eigen::VectorXd> lam(lambda.data(), n);
        const double in_radial = input ? env_score : 1.0, out_radial = input ? 1.0 : env_score;
        sx = (in_radial * data.x.row(o).transpose() - data.x.transpose() * lam).cwiseMax(0.0);
        sy = (data.y.transpose() * lam - out_radial * data.y.row(o).transpose()).cwiseMax(0.0);
    }
    const double max_slack = std::max(m ? sx.maxCoeff() : 0.0, s ? sy.maxCoeff() : 0.0);
    if (res.score == 1.0 && max_slack <= slack_tol) {
        // Fully efficient: the DMU is its own reference set.
        std::fill(lambda.begin(), lambda.end(), 0.0);
        lambda[dmu_index] = 1.0;
        sx.setZero();
        sy.setZero();
    }
    res.weakly_efficient = res.score == 1.0 && max_slack > slack_tol;
    res.envelopment.lambdas = std::move(lambda);
    for (Eigen::Index i = 0; i < m; ++i) res.envelopment.input_slacks.push_back(sx(i) * data.x_scale(i));
    for (Eigen::Index r = 0; r < s; ++r) res.envelopment.output_slacks.push_back(sy(r) * data.y_scale(r));
    return res;
}

/// Charnes-Cooper-Rhodes model (constant returns to scale).
inline EfficiencyResult solve_ccr(const CrossSection& cs, std::string_view dmu, Orientation orientation) {
    return solve_dea(cs, cs.dmu_index(dmu), ReturnsToScale::crs, orientation);
}

/// Banker-Charnes-Cooper model (variable returns to scale, sum of lambdas = 1).
inline EfficiencyResult solve_bcc(const CrossSection& cs, std::string_view dmu, Orientation orientation) {
    return solve_dea(cs, cs.dmu_index(dmu), ReturnsToScale::vrs, orientation);
}

inline std::vector<EfficiencyResult> solve_cross_section(const CrossSection& cs, ReturnsToScale rts,
                                                         Orientation orientation) {
    std::vector<EfficiencyResult> out;
    out.reserve(cs.size());
    for (std::size_t d = 0; d < cs.size(); ++d) out.push_back(solve_dea(cs, d, rts, orientation));
    return out;
}

/// Per-period scores (DMU x period) and their per-DMU means. Scores are
/// efficiencies in (0, 1]; output-oriented runs store 1/phi.
struct EfficiencyPanel {
    std::vector<std::string> dmus;
    std::vector<std::string> periods;
    ReturnsToScale returns_to_scale = ReturnsToScale::crs;
    Orientation orientation = Orientation::input;
    Eigen::MatrixXd scores;
    std::vector<double> means;

    bool operator==(const EfficiencyPanel& o) const {
        return dmus == o.dmus && periods == o.periods && returns_to_scale == o.returns_to_scale &&
               orientation == o.orientation && scores.rows() == o.scores.rows() &&
               scores.cols() == o.scores.cols() && scores == o.scores && means == o.means;
    }
};

/// Arithmetic mean of each row, summed left to right in period order.
inline std::vector<double> row_means(const Eigen::MatrixXd& scores) {
    std::vector<double> means(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index d = 0; d < scores.rows(); ++d) {
        double sum = 0.0;
        for (Eigen::Index p = 0; p < scores.cols(); ++p) sum += scores(d, p);
        means[static_cast<std::size_t>(d)] = sum / static_cast<double>(scores.cols());
    }
    return means;
}

/// One independent DEA run per period (each period is its own reference
/// set), then per-DMU means. `periods` restricts the run when non-empty.
inline EfficiencyPanel run_panel_dea(const PanelDataset& panel, const DeaSpec& spec,
                                     const std::vector<std::string>& periods = {}) {
    spec.check();
    const auto report = validate_for_dea(panel, spec);
    if (!report.ok()) {
        const auto& e = report.errors.front();
        throw ValidationError("dataset is not DEA-admissible (" + std::to_string(report.errors.size()) +
                              " errors); first: " + e.code + " " + e.message + " at (" + e.location.dmu + ", " +
                              e.location.period + ", " + e.location.variable + ")");
    }
    EfficiencyPanel out;
    out.dmus = panel.dmus();
    out.periods = periods.empty() ? panel.periods() : periods;
    for (const auto& p : out.periods) panel.period_index(p);  // LookupError for unknown labels
    out.returns_to_scale = spec.returns_to_scale;
    out.orientation = spec.orientation;
    out.scores.resize(static_cast<Eigen::Index>(out.dmus.size()), static_cast<Eigen::Index>(out.periods.size()));

    for (std::size_t p = 0; p < out.periods.size(); ++p) {
        const CrossSection cs = slice_period(panel, out.periods[p], spec);
        for (std::size_t d = 0; d < cs.size(); ++d) {
            try {
                const auto r = solve_dea(cs, d, spec.returns_to_scale, spec.orientation);
                out.scores(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(p)) = r.efficiency();
            } catch (const Error& e) {
                throw Error(e.code(), "period " + out.periods[p] + ", DMU " + cs.dmus[d] + ": " + e.what());
            }
        }
    }
    out.means = row_means(out.scores);
    return out;
}

}  // namespace effpipe

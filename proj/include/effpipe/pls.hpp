#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "effpipe/distributions.hpp"
#include "effpipe/errors.hpp"
#include "effpipe/panel_data.hpp"
#include "effpipe/random.hpp"

namespace effpipe {

/// Named columns of observations. Used both for PLS indicator data and for
/// regression designs.
struct DataMatrix {
    std::vector<std::string> columns;
    std::vector<std::string> row_labels;  // optional, one per row when present
    Eigen::MatrixXd values;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }

    std::size_t column_index(std::string_view name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw LookupError("unknown column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }

    Eigen::VectorXd column(std::string_view name) const {
        return values.col(static_cast<Eigen::Index>(column_index(name)));
    }
};

/// Regression design. `parents[j]` names the two columns whose product forms
/// interaction column j; it is empty for main effects.
struct DesignMatrix : DataMatrix {
    std::vector<std::vector<std::string>> parents;
};

/// Centres each column and scales it to unit sample variance (n - 1).
inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& m, const std::vector<std::string>& names = {}) {
    if (m.rows() < 2) throw UsageError("standardize: need at least two rows");
    Eigen::MatrixXd out(m.rows(), m.cols());
    const double denom = static_cast<double>(m.rows() - 1);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const std::string name = j < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(j)]
                                                                              : "column " + std::to_string(j);
        if (!m.col(j).allFinite()) throw DomainError("standardize: non-finite value in " + name);
        const Eigen::VectorXd c = m.col(j).array() - m.col(j).mean();
        const double sd = std::sqrt(c.squaredNorm() / denom);
        if (!(sd > 0.0) || sd <= 1e-13 * std::max(1.0, m.col(j).cwiseAbs().maxCoeff()))
            throw DegenerateColumnError(name, "column '" + name + "' has zero variance");
        out.col(j) = c / sd;
    }
    return out;
}

struct OlsResult {
    std::vector<std::string> columns;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd std_errors;
    Eigen::VectorXd residuals;
    double r_squared = 0.0;  // uncentred when the design has no intercept
    int df_residual = 0;
};

/// Least squares via column-pivoted Householder QR. Rank deficiency is an
/// error naming the columns the pivoting left out of the basis.
inline OlsResult ols(const DataMatrix& design, const Eigen::VectorXd& target) {
    const auto n = design.values.rows(), p = design.values.cols();
    if (target.size() != n) throw UsageError("ols: target length differs from design rows");
    if (p == 0 || n <= p) throw UsageError("ols: need more rows than columns");
    if (!design.values.allFinite() || !target.allFinite()) throw DomainError("ols: non-finite input");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.values);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::string dependent;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < p; ++j) {
            const auto c = static_cast<std::size_t>(perm(j));
            if (!dependent.empty()) dependent += ", ";
            dependent += c < design.columns.size() ? design.columns[c] : "column " + std::to_string(c);
        }
        throw CollinearityError("ols: design is rank deficient; dependent columns: " + dependent);
    }
    OlsResult r;
    r.columns = design.columns;
    r.coefficients = qr.solve(target);
    r.residuals = target - design.values * r.coefficients;
    r.df_residual = static_cast<int>(n - p);
    const double sigma2 = r.residuals.squaredNorm() / r.df_residual;

    // (X'X)^-1 = P R^-1 R^-T P'.
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv =
        R.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd cov_perm = Rinv * Rinv.transpose();
    const Eigen::MatrixXd cov = qr.colsPermutation() * cov_perm * qr.colsPermutation().transpose();
    r.std_errors = (sigma2 * cov.diagonal()).cwiseSqrt();

    const Eigen::VectorXd centred = target.array() - target.mean();
    const double tss = centred.squaredNorm();
    r.r_squared = tss > 0.0 ? 1.0 - r.residuals.squaredNorm() / tss : 1.0;
    return r;
}

enum class InnerScheme { centroid, path_weighting };
enum class BlockMode { reflective };

inline const char* to_string(InnerScheme s) { return s == InnerScheme::centroid ? "centroid" : "path_weighting"; }

inline InnerScheme parse_inner_scheme(const std::string& s) {
    if (s == "centroid") return InnerScheme::centroid;
    if (s == "path_weighting") return InnerScheme::path_weighting;
    throw UsageError("unknown inner scheme '" + s + "'");
}

struct LatentBlock {
    std::string name;
    std::vector<std::string> indicators;
    BlockMode mode = BlockMode::reflective;
};

struct StructuralPath {
    std::string from;
    std::string to;
};

struct PathModelSpec {
    std::vector<LatentBlock> blocks;
    std::vector<StructuralPath> paths;
    InnerScheme inner_scheme = InnerScheme::path_weighting;

    std::size_t block_index(std::string_view name) const {
        for (std::size_t i = 0; i < blocks.size(); ++i)
            if (blocks[i].name == name) return i;
        throw UsageError("path model: unknown latent '" + std::string(name) + "'");
    }

    /// Latent indices in an order where every path points forward. Throws on
    /// any structural problem, including cycles.
    std::vector<std::size_t> topological_order() const {
        if (blocks.empty()) throw UsageError("path model: no blocks");
        std::vector<std::string> seen_indicators;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            if (b.name.empty()) throw UsageError("path model: empty latent name");
            for (std::size_t j = 0; j < i; ++j)
                if (blocks[j].name == b.name) throw UsageError("path model: duplicate latent '" + b.name + "'");
            if (b.indicators.empty()) throw UsageError("path model: latent '" + b.name + "' has no indicators");
            for (const auto& ind : b.indicators) {
                if (std::find(seen_indicators.begin(), seen_indicators.end(), ind) != seen_indicators.end())
                    throw UsageError("path model: indicator '" + ind + "' appears in more than one block");
                seen_indicators.push_back(ind);
            }
        }
        const std::size_t L = blocks.size();
        std::vector<std::vector<std::size_t>> succ(L);
        std::vector<std::size_t> indegree(L, 0);
        for (std::size_t p = 0; p < paths.size(); ++p) {
            const auto f = block_index(paths[p].from), t = block_index(paths[p].to);
            if (f == t) throw UsageError("path model: self loop on '" + paths[p].from + "'");
            for (std::size_t q = 0; q < p; ++q)
                if (paths[q].from == paths[p].from && paths[q].to == paths[p].to)
                    throw UsageError("path model: duplicate path " + paths[p].from + " -> " + paths[p].to);
            succ[f].push_back(t);
            ++indegree[t];
        }
        std::vector<std::size_t> order, ready;
        for (std::size_t i = L; i-- > 0;)
            if (indegree[i] == 0) ready.push_back(i);
        while (!ready.empty()) {
            const auto i = ready.back();
            ready.pop_back();
            order.push_back(i);
            for (auto t : succ[i])
                if (--indegree[t] == 0) ready.push_back(t);
        }
        if (order.size() != L) throw UsageError("path model: structural paths contain a cycle");
        return order;
    }

    void check() const { (void)topological_order(); }

    std::vector<std::size_t> predecessors(std::size_t latent) const {
        std::vector<std::size_t> out;
        for (const auto& p : paths)
            if (block_index(p.to) == latent) out.push_back(block_index(p.from));
        return out;
    }
};

struct PathCoefficient {
    std::string from;
    std::string to;
    double beta = 0.0;
    std::optional<double> std_error;
    std::optional<double> t_statistic;
    std::optional<double> p_value;
};

struct IndicatorEstimate {
    std::string latent;
    std::string indicator;
    double weight = 0.0;
    double loading = 0.0;
};

struct BootstrapInfo {
    std::size_t replicates = 0;
    std::uint64_t seed = 0;
    std::size_t redraws = 0;
};

struct PathEstimates {
    std::vector<PathCoefficient> paths;  // spec order
    std::vector<std::pair<std::string, double>> r_squared;  // endogenous latents, spec order
    std::vector<IndicatorEstimate> indicators;
    std::vector<std::string> latent_names;
    Eigen::MatrixXd latent_scores;  // n x latents
    bool converged = false;
    std::size_t iterations = 0;
    double last_weight_change = 0.0;
    std::optional<BootstrapInfo> bootstrap;

    const PathCoefficient& path(std::string_view from, std::string_view to) const {
        for (const auto& p : paths)
            if (p.from == from && p.to == to) return p;
        throw LookupError("no path " + std::string(from) + " -> " + std::string(to));
    }
};

inline constexpr std::size_t pls_max_iterations = 300;
inline constexpr double pls_tolerance = 1e-7;

namespace pls_detail {

inline double sample_sd(const Eigen::VectorXd& v) {
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

inline double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd x = a.array() - a.mean(), y = b.array() - b.mean();
    return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

inline Eigen::VectorXd regress(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::string& what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) throw CollinearityError("structural regression for '" + what + "' is singular");
    return qr.solve(y);
}

}  // namespace pls_detail

/// Linear PLS path model (Lohmoeller's iteration, mode A outer weights).
inline PathEstimates fit_path_model(const DataMatrix& data, const PathModelSpec& spec) {
    const auto order = spec.topological_order();
    (void)order;
    const std::size_t L = spec.blocks.size();
    const auto n = data.values.rows();

    std::vector<std::vector<std::size_t>> preds(L);
    std::size_t max_preds = 0;
    for (std::size_t i = 0; i < L; ++i) {
        preds[i] = spec.predecessors(i);
        max_preds = std::max(max_preds, preds[i].size());
    }
    if (static_cast<std::size_t>(n) < max_preds + 3)
        throw UsageError("path model: need at least " + std::to_string(max_preds + 3) + " observations");
    std::vector<std::vector<std::size_t>> succs(L);
    for (std::size_t i = 0; i < L; ++i)
        for (auto p : preds[i]) succs[p].push_back(i);

    std::vector<Eigen::MatrixXd> X(L);
    for (std::size_t i = 0; i < L; ++i) {
        const auto& b = spec.blocks[i];
        Eigen::MatrixXd raw(n, static_cast<Eigen::Index>(b.indicators.size()));
        for (std::size_t k = 0; k < b.indicators.size(); ++k)
            raw.col(static_cast<Eigen::Index>(k)) = data.column(b.indicators[k]);
        X[i] = standardize(raw, b.indicators);
    }

    std::vector<Eigen::VectorXd> w(L), Y(L);
    auto outer_estimate = [&](std::size_t i) {
        const Eigen::VectorXd y = X[i] * w[i];
        const double sd = pls_detail::sample_sd(y);
        if (!(sd > 0.0))
            throw DegenerateColumnError(spec.blocks[i].name, "latent '" + spec.blocks[i].name + "' has zero variance");
        w[i] /= sd;
        Y[i] = X[i] * w[i];
    };
    for (std::size_t i = 0; i < L; ++i) {
        w[i] = Eigen::VectorXd::Ones(X[i].cols());
        outer_estimate(i);
    }

    PathEstimates est;
    const double denom = static_cast<double>(n - 1);
    for (std::size_t it = 1; it <= pls_max_iterations; ++it) {
        std::vector<Eigen::VectorXd> Z(L);
        for (std::size_t i = 0; i < L; ++i) {
            Z[i] = Eigen::VectorXd::Zero(n);
            if (preds[i].empty() && succs[i].empty()) {
                Z[i] = Y[i];
                continue;
            }
            if (spec.inner_scheme == InnerScheme::centroid) {
                for (auto j : preds[i]) {
                    const double c = pls_detail::correlation(Y[i], Y[j]);
                    Z[i] += (c > 0 ? 1.0 : c < 0 ? -1.0 : 0.0) * Y[j];
                }
                for (auto j : succs[i]) {
                    const double c = pls_detail::correlation(Y[i], Y[j]);
                    Z[i] += (c > 0 ? 1.0 : c < 0 ? -1.0 : 0.0) * Y[j];
                }
            } else {
                if (!preds[i].empty()) {
                    Eigen::MatrixXd P(n, static_cast<Eigen::Index>(preds[i].size()));
                    for (std::size_t k = 0; k < preds[i].size(); ++k) P.col(static_cast<Eigen::Index>(k)) = Y[preds[i][k]];
                    const Eigen::VectorXd b = pls_detail::regress(P, Y[i], spec.blocks[i].name);
                    Z[i] += P * b;
                }
                for (auto j : succs[i]) Z[i] += pls_detail::correlation(Y[i], Y[j]) * Y[j];
            }
        }
        double change = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            const Eigen::VectorXd old = w[i];
            Eigen::VectorXd next = X[i].transpose() * Z[i] / denom;
            if (next.squaredNorm() == 0.0) next = old;  // no inner signal: keep weights
            w[i] = next;
            outer_estimate(i);
            change = std::max(change, (w[i] - old).cwiseAbs().maxCoeff());
        }
        est.iterations = it;
        est.last_weight_change = change;
        if (change < pls_tolerance) {
            est.converged = true;
            break;
        }
    }

    // Orient each latent so its loadings sum to a nonnegative value.
    std::vector<Eigen::VectorXd> loadings(L);
    for (std::size_t i = 0; i < L; ++i) {
        loadings[i] = X[i].transpose() * Y[i] / denom;
        if (loadings[i].sum() < 0.0) {
            w[i] = -w[i];
            Y[i] = -Y[i];
            loadings[i] = -loadings[i];
        }
    }

    est.latent_scores.resize(n, static_cast<Eigen::Index>(L));
    for (std::size_t i = 0; i < L; ++i) {
        est.latent_names.push_back(spec.blocks[i].name);
        est.latent_scores.col(static_cast<Eigen::Index>(i)) = Y[i];
        for (std::size_t k = 0; k < spec.blocks[i].indicators.size(); ++k)
            est.indicators.push_back({spec.blocks[i].name, spec.blocks[i].indicators[k],
                                      w[i](static_cast<Eigen::Index>(k)), loadings[i](static_cast<Eigen::Index>(k))});
    }

    std::vector<std::optional<Eigen::VectorXd>> beta(L);
    for (std::size_t i = 0; i < L; ++i) {
        if (preds[i].empty()) continue;
        Eigen::MatrixXd P(n, static_cast<Eigen::Index>(preds[i].size()));
        for (std::size_t k = 0; k < preds[i].size(); ++k) P.col(static_cast<Eigen::Index>(k)) = Y[preds[i][k]];
        beta[i] = pls_detail::regress(P, Y[i], spec.blocks[i].name);
        const double rss = (Y[i] - P * *beta[i]).squaredNorm();
        est.r_squared.emplace_back(spec.blocks[i].name, 1.0 - rss / Y[i].squaredNorm());
    }
    for (const auto& p : spec.paths) {
        const auto f = spec.block_index(p.from), t = spec.block_index(p.to);
        const auto pos = std::find(preds[t].begin(), preds[t].end(), f) - preds[t].begin();
        est.paths.push_back({p.from, p.to, (*beta[t])(pos), std::nullopt, std::nullopt, std::nullopt});
    }
    return est;
}

/// Row bootstrap of the path coefficients. Replicate b draws from a stream
/// derived from (seed, b); a resample that leaves an indicator constant is
/// redrawn. Returns the full-sample fit with standard errors, t and p.
inline PathEstimates bootstrap_significance(const DataMatrix& data, const PathModelSpec& spec,
                                            std::size_t replicates = 500, std::uint64_t seed = 0) {
    if (replicates < 100) throw UsageError("bootstrap: at least 100 replicates required");
    PathEstimates full = fit_path_model(data, spec);
    const auto n = data.values.rows();
    const std::size_t L = spec.blocks.size();
    const std::size_t redraw_limit = 10 * replicates;

    // Full-sample outer weights per latent, for sign alignment.
    std::vector<Eigen::VectorXd> w_full(L);
    auto weights_by_block = [&](const PathEstimates& e) {
        std::vector<Eigen::VectorXd> out(L);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < L; ++i) {
            out[i].resize(static_cast<Eigen::Index>(spec.blocks[i].indicators.size()));
            for (Eigen::Index k = 0; k < out[i].size(); ++k) out[i](k) = e.indicators[pos++].weight;
        }
        return out;
    };
    w_full = weights_by_block(full);

    std::vector<std::vector<double>> draws(spec.paths.size());
    std::size_t redraws = 0;
    DataMatrix sample;
    sample.columns = data.columns;
    sample.values.resize(n, data.values.cols());
    for (std::size_t b = 0; b < replicates; ++b) {
        RandomStream rng = RandomStream::derived(seed, b);
        std::optional<PathEstimates> fit;
        while (!fit) {
            for (Eigen::Index r = 0; r < n; ++r)
                sample.values.row(r) = data.values.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
            try {
                fit = fit_path_model(sample, spec);
            } catch (const DegenerateColumnError&) {
                if (++redraws > redraw_limit)
                    throw DegenerateColumnError("", "bootstrap: more than " + std::to_string(redraw_limit) +
                                                        " resamples had a constant column");
            }
        }
        const auto w_rep = weights_by_block(*fit);
        std::vector<double> sign(L);
        for (std::size_t i = 0; i < L; ++i) sign[i] = w_rep[i].dot(w_full[i]) < 0.0 ? -1.0 : 1.0;
        for (std::size_t p = 0; p < spec.paths.size(); ++p) {
            const auto f = spec.block_index(spec.paths[p].from), t = spec.block_index(spec.paths[p].to);
            draws[p].push_back(fit->paths[p].beta * sign[f] * sign[t]);
        }
    }

    const double df = static_cast<double>(n - 1);
    for (std::size_t p = 0; p < spec.paths.size(); ++p) {
        const auto& d = draws[p];
        const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
        double ss = 0.0;
        for (double v : d) ss += (v - mean) * (v - mean);
        const double se = std::sqrt(ss / static_cast<double>(d.size() - 1));
        auto& out = full.paths[p];
        out.std_error = se;
        if (se > 0.0) {
            out.t_statistic = out.beta / se;
            out.p_value = student_t_two_tailed(*out.t_statistic, df);
        } else {
            out.t_statistic = out.beta == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), out.beta);
            out.p_value = out.beta == 0.0 ? 1.0 : 0.0;
        }
    }
    full.bootstrap = BootstrapInfo{replicates, seed, redraws};
    return full;
}

/// Pooled (dmu, period) observations of the named variables, raw values.
inline DataMatrix pooled_observations(const PanelDataset& panel, const std::vector<std::string>& variables) {
    DataMatrix m;
    m.columns = variables;
    std::vector<std::size_t> idx;
    for (const auto& v : variables) idx.push_back(panel.variable_index(v));
    const auto rows = static_cast<Eigen::Index>(panel.dmu_count() * panel.period_count());
    m.values.resize(rows, static_cast<Eigen::Index>(variables.size()));
    Eigen::Index r = 0;
    for (std::size_t d = 0; d < panel.dmu_count(); ++d) {
        for (std::size_t p = 0; p < panel.period_count(); ++p, ++r) {
            m.row_labels.push_back(panel.dmus()[d] + "@" + panel.periods()[p]);
            for (std::size_t k = 0; k < idx.size(); ++k) {
                if (panel.is_missing(d, p, idx[k]))
                    throw ValidationError("MISSING at DMU " + panel.dmus()[d] + ", period " + panel.periods()[p] +
                                          ", variable " + variables[k]);
                m.values(r, static_cast<Eigen::Index>(k)) = panel.value(d, p, idx[k]);
            }
        }
    }
    return m;
}

/// Log-linear Cobb-Douglas design: log(ict), log(h) for each health
/// variable, then log(ict) * log(h) interactions. One row per (dmu, period).
inline DesignMatrix build_cobb_douglas_design(const PanelDataset& panel, const std::string& ict_var,
                                              const std::vector<std::string>& health_vars) {
    if (health_vars.empty()) throw UsageError("cobb-douglas design: no health variables");
    std::vector<std::string> vars{ict_var};
    vars.insert(vars.end(), health_vars.begin(), health_vars.end());
    const DataMatrix raw = pooled_observations(panel, vars);
    for (Eigen::Index r = 0; r < raw.values.rows(); ++r)
        for (Eigen::Index c = 0; c < raw.values.cols(); ++c)
            if (!(raw.values(r, c) > 0.0)) {
                std::ostringstream msg;
                msg << "log of nonpositive value " << raw.values(r, c) << " at "
                    << raw.row_labels[static_cast<std::size_t>(r)] << ", variable " << vars[static_cast<std::size_t>(c)];
                throw DomainError(msg.str());
            }

    const auto H = static_cast<Eigen::Index>(health_vars.size());
    DesignMatrix d;
    d.row_labels = raw.row_labels;
    d.values.resize(raw.values.rows(), 1 + 2 * H);
    const Eigen::MatrixXd logs = raw.values.array().log().matrix();
    d.values.leftCols(1 + H) = logs;
    for (const auto& v : vars) {
        d.columns.push_back("log(" + v + ")");
        d.parents.emplace_back();
    }
    for (Eigen::Index h = 0; h < H; ++h) {
        d.values.col(1 + H + h) = logs.col(0).cwiseProduct(logs.col(1 + h));
        d.columns.push_back(d.columns[0] + "*" + d.columns[static_cast<std::size_t>(1 + h)]);
        d.parents.push_back({d.columns[0], d.columns[static_cast<std::size_t>(1 + h)]});
    }
    return d;
}

/// Copy of `design` with a leading column of ones.
inline DesignMatrix with_intercept(const DesignMatrix& design) {
    DesignMatrix d = design;
    d.values.resize(design.values.rows(), design.values.cols() + 1);
    d.values.col(0).setOnes();
    d.values.rightCols(design.values.cols()) = design.values;
    d.columns.insert(d.columns.begin(), "(intercept)");
    d.parents.insert(d.parents.begin(), std::vector<std::string>{});
    return d;
}

}  // namespace effpipe

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "effpipe/distributions.hpp"
#include "effpipe/errors.hpp"
#include "effpipe/random.hpp"

namespace effpipe {

/// One row per observation, one column per clustering variable.
using PointMatrix = Eigen::MatrixXd;

inline PointMatrix as_points(const std::vector<double>& values) {
    PointMatrix p(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = values[i];
    return p;
}

struct ClusterSolution {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;
    Eigen::MatrixXd centroids;  // k x dims
    double sse_within = 0.0;
    std::size_t restarts_used = 0;
    std::uint64_t seed = 0;
    std::size_t winning_restart = 0;
    std::size_t iterations = 0;
    std::vector<double> sse_trace;  // SSE after each Lloyd iteration of the winner

    std::vector<std::size_t> cluster_sizes() const {
        std::vector<std::size_t> sizes(k, 0);
        for (auto a : assignments) ++sizes[a];
        return sizes;
    }
};

struct LloydResult {
    std::vector<std::size_t> assignments;
    Eigen::MatrixXd centroids;
    double sse = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> sse_trace;
};

inline constexpr std::size_t kmeans_max_iterations = 300;
inline constexpr std::size_t kmeans_default_restarts = 32;

namespace cluster_detail {

inline double squared_distance(const PointMatrix& points, Eigen::Index i, const Eigen::MatrixXd& centroids,
                               Eigen::Index c) {
    return (points.row(i) - centroids.row(c)).squaredNorm();
}

// Nearest centroid; ties go to the lowest cluster index.
inline std::size_t nearest(const PointMatrix& points, Eigen::Index i, const Eigen::MatrixXd& centroids) {
    std::size_t best = 0;
    double best_d = squared_distance(points, i, centroids, 0);
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
        const double d = squared_distance(points, i, centroids, c);
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::size_t>(c);
        }
    }
    return best;
}

// Member means, summed in index order.
inline Eigen::MatrixXd member_means(const PointMatrix& points, const std::vector<std::size_t>& assignments,
                                    std::size_t k) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        sums.row(static_cast<Eigen::Index>(assignments[i])) += points.row(static_cast<Eigen::Index>(i));
        ++counts[assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
        if (counts[c]) sums.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
    return sums;
}

inline double sse(const PointMatrix& points, const std::vector<std::size_t>& assignments,
                  const Eigen::MatrixXd& centroids) {
    double total = 0.0;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        total += squared_distance(points, static_cast<Eigen::Index>(i), centroids,
                                  static_cast<Eigen::Index>(assignments[i]));
    return total;
}

// Gives each empty cluster the point farthest from its own centroid, taken
// from a cluster that can spare it. Centroids are recomputed after each move.
inline void repair_empty(const PointMatrix& points, std::vector<std::size_t>& assignments,
                         Eigen::MatrixXd& centroids, std::size_t k) {
    for (;;) {
        std::vector<std::size_t> counts(k, 0);
        for (auto a : assignments) ++counts[a];
        const auto empty = std::find(counts.begin(), counts.end(), 0u);
        if (empty == counts.end()) return;
        std::size_t far = assignments.size();
        double far_d = -1.0;
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            if (counts[assignments[i]] < 2) continue;
            const double d = squared_distance(points, static_cast<Eigen::Index>(i), centroids,
                                              static_cast<Eigen::Index>(assignments[i]));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far == assignments.size()) throw SolverFailure("k-means: cannot repair empty cluster");
        assignments[far] = static_cast<std::size_t>(empty - counts.begin());
        centroids = member_means(points, assignments, k);
    }
}

inline Eigen::MatrixXd plus_plus_seed(const PointMatrix& points, std::size_t k, RandomStream& rng) {
    const auto n = points.rows();
    Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), points.cols());
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = squared_distance(points, i, centroids, 0);
    for (std::size_t c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index pick = n - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double run = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                run += d2[static_cast<std::size_t>(i)];
                if (run > target && d2[static_cast<std::size_t>(i)] > 0.0) {
                    pick = i;
                    break;
                }
            }
            // Rounding can leave the running sum short of target.
            while (d2[static_cast<std::size_t>(pick)] == 0.0) --pick;
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centroids.row(static_cast<Eigen::Index>(c)) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& d = d2[static_cast<std::size_t>(i)];
            d = std::min(d, squared_distance(points, i, centroids, static_cast<Eigen::Index>(c)));
        }
    }
    return centroids;
}

inline std::size_t distinct_rows(const PointMatrix& points) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(points.cols()));
        for (Eigen::Index j = 0; j < points.cols(); ++j) r[static_cast<std::size_t>(j)] = points(i, j);
        rows.push_back(std::move(r));
    }
    std::sort(rows.begin(), rows.end());
    return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

// Orders clusters by descending centroid (lexicographic over columns).
inline void canonicalize(std::vector<std::size_t>& assignments, Eigen::MatrixXd& centroids) {
    const auto k = static_cast<std::size_t>(centroids.rows());
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (Eigen::Index j = 0; j < centroids.cols(); ++j) {
            const double x = centroids(static_cast<Eigen::Index>(a), j), y = centroids(static_cast<Eigen::Index>(b), j);
            if (x != y) return x > y;
        }
        return false;
    });
    std::vector<std::size_t> new_label(k);
    Eigen::MatrixXd sorted(centroids.rows(), centroids.cols());
    for (std::size_t pos = 0; pos < k; ++pos) {
        new_label[order[pos]] = pos;
        sorted.row(static_cast<Eigen::Index>(pos)) = centroids.row(static_cast<Eigen::Index>(order[pos]));
    }
    for (auto& a : assignments) a = new_label[a];
    centroids = std::move(sorted);
}

inline void check_points(const PointMatrix& points) {
    if (points.rows() == 0 || points.cols() == 0) throw UsageError("k-means: no points");
    if (!points.allFinite()) throw DomainError("k-means: points must be finite");
}

}  // namespace cluster_detail

/// Lloyd iterations from the given centroids until assignments stop
/// changing or `max_iterations` is reached. Empty clusters are repaired.
inline LloydResult lloyd(const PointMatrix& points, Eigen::MatrixXd centroids,
                         std::size_t max_iterations = kmeans_max_iterations) {
    cluster_detail::check_points(points);
    const auto k = static_cast<std::size_t>(centroids.rows());
    if (k == 0 || centroids.cols() != points.cols()) throw UsageError("lloyd: centroid shape mismatch");
    LloydResult r;
    r.assignments.assign(static_cast<std::size_t>(points.rows()), k);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        std::vector<std::size_t> next(r.assignments.size());
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            next[static_cast<std::size_t>(i)] = cluster_detail::nearest(points, i, centroids);
        if (next == r.assignments) {
            r.converged = true;
            break;
        }
        r.assignments = std::move(next);
        centroids = cluster_detail::member_means(points, r.assignments, k);
        cluster_detail::repair_empty(points, r.assignments, centroids, k);
        r.iterations = it + 1;
        r.sse_trace.push_back(cluster_detail::sse(points, r.assignments, centroids));
    }
    r.centroids = std::move(centroids);
    r.sse = cluster_detail::sse(points, r.assignments, r.centroids);
    return r;
}

/// Best-of-restarts k-means with k-means++ seeding. Restart r draws from a
/// stream seeded with seed + r; the winner is the lowest (SSE, restart).
/// Cluster labels are ordered by descending centroid.
inline ClusterSolution kmeans(const PointMatrix& points, std::size_t k,
                              std::size_t restarts = kmeans_default_restarts, std::uint64_t seed = 0) {
    cluster_detail::check_points(points);
    if (k == 0) throw UsageError("k-means: k must be at least 1");
    if (restarts == 0) throw UsageError("k-means: restarts must be at least 1");
    const auto distinct = cluster_detail::distinct_rows(points);
    if (k > distinct)
        throw UsageError("k-means: k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                         " distinct points");

    std::optional<LloydResult> best;
    std::size_t best_restart = 0;
    for (std::size_t r = 0; r < restarts; ++r) {
        RandomStream rng(seed + r);
        auto run = lloyd(points, cluster_detail::plus_plus_seed(points, k, rng));
        if (!best || run.sse < best->sse) {
            best = std::move(run);
            best_restart = r;
        }
    }

    ClusterSolution s;
    s.k = k;
    s.restarts_used = restarts;
    s.seed = seed;
    s.winning_restart = best_restart;
    s.iterations = best->iterations;
    s.sse_trace = best->sse_trace;
    s.assignments = std::move(best->assignments);
    s.centroids = std::move(best->centroids);
    // Relabel, then settle any exact ties under the new label order.
    for (std::size_t pass = 0; pass < kmeans_max_iterations; ++pass) {
        cluster_detail::canonicalize(s.assignments, s.centroids);
        auto settled = s.assignments;
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            settled[static_cast<std::size_t>(i)] = cluster_detail::nearest(points, i, s.centroids);
        if (settled == s.assignments) break;
        s.assignments = std::move(settled);
        s.centroids = cluster_detail::member_means(points, s.assignments, k);
        cluster_detail::repair_empty(points, s.assignments, s.centroids, k);
    }
    s.centroids = cluster_detail::member_means(points, s.assignments, k);
    s.sse_within = cluster_detail::sse(points, s.assignments, s.centroids);
    return s;
}

inline ClusterSolution kmeans(const std::vector<double>& points, std::size_t k,
                              std::size_t restarts = kmeans_default_restarts, std::uint64_t seed = 0) {
    return kmeans(as_points(points), k, restarts, seed);
}

struct AnovaResult {
    int df_between = 0;
    int df_within = 0;
    double ss_between = 0.0;
    double ss_within = 0.0;
    double f_value = 0.0;  // +inf when ss_within is zero
    double p_value = 1.0;
    bool perfect_separation = false;
};

/// The F statistic is computed on the variable that produced the clusters,
/// so it is inflated by construction. Reports carry this note.
inline const char* const anova_caveat =
    "F is computed on the clustering variable itself; clusters were chosen to maximise separation, "
    "so F and its p-value overstate the evidence for group differences.";

/// One-way ANOVA of the points grouped by `assignments`. With more than one
/// column the sums of squares are totalled over columns (pseudo-F).
inline AnovaResult anova_f(const PointMatrix& points, const std::vector<std::size_t>& assignments, std::size_t k) {
    cluster_detail::check_points(points);
    const auto n = static_cast<std::size_t>(points.rows());
    if (assignments.size() != n) throw UsageError("anova: assignment count differs from point count");
    if (k < 2 || n <= k) throw UsageError("anova: requires k >= 2 and n > k");
    for (auto a : assignments)
        if (a >= k) throw UsageError("anova: assignment out of range");

    const Eigen::RowVectorXd grand = points.colwise().mean();
    const PointMatrix centered = points.rowwise() - grand;
    const Eigen::MatrixXd means = cluster_detail::member_means(centered, assignments, k);
    std::vector<std::size_t> counts(k, 0);
    for (auto a : assignments) ++counts[a];
    for (auto c : counts)
        if (c == 0) throw UsageError("anova: empty cluster");

    AnovaResult r;
    r.df_between = static_cast<int>(k) - 1;
    r.df_within = static_cast<int>(n - k);
    for (std::size_t c = 0; c < k; ++c)
        r.ss_between += static_cast<double>(counts[c]) * means.row(static_cast<Eigen::Index>(c)).squaredNorm();
    r.ss_within = cluster_detail::sse(centered, assignments, means);
    if (r.ss_within == 0.0) {
        r.perfect_separation = true;
        r.f_value = std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
        return r;
    }
    r.f_value = (r.ss_between / r.df_between) / (r.ss_within / r.df_within);
    r.p_value = f_sf(r.f_value, r.df_between, r.df_within);
    return r;
}

inline AnovaResult anova_f(const PointMatrix& points, const ClusterSolution& solution) {
    return anova_f(points, solution.assignments, solution.k);
}

inline AnovaResult anova_f(const std::vector<double>& points, const ClusterSolution& solution) {
    return anova_f(as_points(points), solution);
}

struct KSweepEntry {
    std::size_t k = 0;
    ClusterSolution solution;
    AnovaResult anova;
    bool resolved = true;  // false when centroids differ only by noise
};

struct KSweepReport {
    std::vector<KSweepEntry> entries;  // k descending
    std::optional<std::size_t> selected_k;
    std::string selection_rule = "max_f_significant";
    double significance = 0.05;
    std::vector<std::string> flags;

    const KSweepEntry* selected() const {
        if (!selected_k) return nullptr;
        for (const auto& e : entries)
            if (e.k == *selected_k) return &e;
        return nullptr;
    }
};

struct SweepOptions {
    std::size_t k_max = 6;
    std::size_t k_min = 3;
    std::size_t restarts = kmeans_default_restarts;
    std::uint64_t seed = 0;
    double significance = 0.05;
};

/// Centroid separation below this fraction of the data magnitude is treated
/// as floating-point noise rather than structure.
inline constexpr double sweep_resolution = 1e-8;

/// Runs k-means and ANOVA for k = k_max down to k_min and selects the k with
/// the largest F among significant, resolved entries (ties: smallest k).
inline KSweepReport sweep_k(const PointMatrix& points, const SweepOptions& opt) {
    if (opt.k_min < 2 || opt.k_max < opt.k_min) throw UsageError("sweep: requires k_max >= k_min >= 2");
    if (!(opt.significance > 0.0 && opt.significance < 1.0)) throw UsageError("sweep: significance must be in (0, 1)");
    cluster_detail::check_points(points);
    const double floor = sweep_resolution * std::max(1.0, points.cwiseAbs().maxCoeff());

    KSweepReport report;
    report.significance = opt.significance;
    for (std::size_t k = opt.k_max; k + 1 > opt.k_min; --k) {
        KSweepEntry e;
        e.k = k;
        e.solution = kmeans(points, k, opt.restarts, opt.seed);
        e.anova = anova_f(points, e.solution);
        const Eigen::RowVectorXd spread = e.solution.centroids.colwise().maxCoeff() - e.solution.centroids.colwise().minCoeff();
        e.resolved = spread.maxCoeff() > floor;
        report.entries.push_back(std::move(e));
    }
    const KSweepEntry* best = nullptr;
    for (const auto& e : report.entries) {
        if (!e.resolved || !(e.anova.p_value < opt.significance)) continue;
        if (!best || e.anova.f_value > best->anova.f_value ||
            (e.anova.f_value == best->anova.f_value && e.k < best->k))
            best = &e;
    }
    if (best) report.selected_k = best->k;
    else report.flags.push_back("NO_SIGNIFICANT_K");
    if (std::any_of(report.entries.begin(), report.entries.end(), [](const auto& e) { return !e.resolved; }))
        report.flags.push_back("UNRESOLVED");
    if (std::any_of(report.entries.begin(), report.entries.end(),
                    [](const auto& e) { return e.anova.perfect_separation; }))
        report.flags.push_back("PERFECT_SEPARATION");
    return report;
}

inline KSweepReport sweep_k(const std::vector<double>& points, const SweepOptions& opt) {
    return sweep_k(as_points(points), opt);
}

}  // namespace effpipe

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "effpipe/cluster.hpp"
#include "effpipe/csv.hpp"
#include "effpipe/dea.hpp"
#include "effpipe/errors.hpp"
#include "effpipe/panel_data.hpp"
#include "effpipe/pls.hpp"

namespace effpipe {

inline constexpr const char* tool_name = "effpipe";
inline constexpr const char* tool_version = "0.1.0";

using Json = nlohmann::ordered_json;

enum class StageStatus { complete, skipped, failed, not_run };

inline const char* to_string(StageStatus s) {
    switch (s) {
        case StageStatus::complete: return "complete";
        case StageStatus::skipped: return "skipped";
        case StageStatus::failed: return "failed";
        case StageStatus::not_run: return "not_run";
    }
    return "?";
}

inline StageStatus parse_stage_status(const std::string& s) {
    if (s == "complete") return StageStatus::complete;
    if (s == "skipped") return StageStatus::skipped;
    if (s == "failed") return StageStatus::failed;
    if (s == "not_run") return StageStatus::not_run;
    throw ParseError("unknown stage status '" + s + "'");
}

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"dea", "cluster", "pls"};
    return names;
}

struct StageError {
    std::string stage;
    std::string code;
    std::string message;
};

struct UndesirableTransform {
    std::string variable;
    UndesirableMethod method = UndesirableMethod::max_minus;
};

struct DeaAnalysisReport {
    std::string name;
    DeaSpec spec;
    EfficiencyPanel efficiency;
    std::vector<Diagnostic> warnings;
};

struct ClusterAnalysisReport {
    std::string name;
    KSweepReport sweep;
};

struct CorrespondencePair {
    std::string first;
    std::string second;
    std::vector<std::vector<std::size_t>> contingency;  // first's labels x second's labels
    std::size_t agreement = 0;
    std::size_t total = 0;
};

struct CorrespondenceTable {
    std::vector<std::string> analyses;
    std::vector<std::string> dmus;
    std::vector<std::vector<std::optional<std::size_t>>> clusters;  // per DMU, per analysis
    std::vector<CorrespondencePair> pairs;
};

struct PlsSettings {
    InnerScheme inner_scheme = InnerScheme::path_weighting;
    std::size_t replicates = 500;
    std::uint64_t seed = 0;
    bool joint = false;
};

struct PlsModelReport {
    std::string name;
    PathModelSpec spec;
    std::size_t observations = 0;
    PathEstimates estimates;
};

struct CobbDouglasReport {
    std::string ict_variable;
    std::string target;
    std::size_t observations = 0;
    OlsResult fit;
};

struct Provenance {
    std::string config_hash;
    std::string tool_version = effpipe::tool_version;
    std::optional<std::uint64_t> cluster_seed;
    std::optional<std::uint64_t> bootstrap_seed;
};

/// Everything a pipeline run produces. Stages fill their sections in turn;
/// the JSON form of this struct is also the hand-off format between the
/// stand-alone stage commands.
struct ReportBundle {
    Provenance provenance;
    std::vector<std::pair<std::string, StageStatus>> stages{
        {"dea", StageStatus::not_run}, {"cluster", StageStatus::not_run}, {"pls", StageStatus::not_run}};
    std::optional<StageError> error;
    std::vector<UndesirableTransform> transforms;
    std::vector<DeaAnalysisReport> dea;
    std::optional<SweepOptions> cluster_settings;
    std::vector<ClusterAnalysisReport> clusters;
    std::optional<CorrespondenceTable> correspondence;
    std::optional<PlsSettings> pls_settings;
    std::vector<PlsModelReport> pls_models;
    std::vector<CobbDouglasReport> cobb_douglas;

    StageStatus stage(std::string_view name) const {
        for (const auto& [n, s] : stages)
            if (n == name) return s;
        throw LookupError("unknown stage '" + std::string(name) + "'");
    }

    void set_stage(std::string_view name, StageStatus s) {
        for (auto& [n, st] : stages)
            if (n == name) {
                st = s;
                return;
            }
        throw LookupError("unknown stage '" + std::string(name) + "'");
    }

    /// "complete", "incomplete" (a stage failed) or "partial" (stages left to run).
    std::string status() const {
        bool pending = false;
        for (const auto& [n, s] : stages) {
            if (s == StageStatus::failed) return "incomplete";
            pending |= s == StageStatus::not_run;
        }
        return pending ? "partial" : "complete";
    }

    const DeaAnalysisReport& dea_analysis(std::string_view name) const {
        for (const auto& a : dea)
            if (a.name == name) return a;
        throw LookupError("no DEA analysis named '" + std::string(name) + "'");
    }

    const ClusterAnalysisReport& cluster_analysis(std::string_view name) const {
        for (const auto& a : clusters)
            if (a.name == name) return a;
        throw LookupError("no cluster analysis named '" + std::string(name) + "'");
    }
};

// ---------------------------------------------------------------------------
// Correspondence

/// Largest number of DMUs whose labels agree under a one-to-one matching of
/// the two label sets.
inline std::size_t best_matching_agreement(const std::vector<std::vector<std::size_t>>& table) {
    if (table.empty() || table[0].empty()) return 0;
    const std::size_t rows = table.size(), cols = table[0].size();
    const bool transpose = rows > cols;
    const std::size_t small = transpose ? cols : rows, large = transpose ? rows : cols;
    std::vector<std::size_t> perm(large);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t sum = 0;
        for (std::size_t i = 0; i < small; ++i) sum += transpose ? table[perm[i]][i] : table[i][perm[i]];
        best = std::max(best, sum);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline CorrespondenceTable build_correspondence(const std::vector<DeaAnalysisReport>& dea,
                                                const std::vector<ClusterAnalysisReport>& clusters) {
    CorrespondenceTable t;
    if (dea.empty()) return t;
    t.dmus = dea.front().efficiency.dmus;
    for (const auto& c : clusters) t.analyses.push_back(c.name);
    t.clusters.assign(t.dmus.size(), std::vector<std::optional<std::size_t>>(clusters.size()));
    for (std::size_t a = 0; a < clusters.size(); ++a) {
        const KSweepEntry* sel = clusters[a].sweep.selected();
        if (!sel) continue;
        const auto& dmus = std::find_if(dea.begin(), dea.end(), [&](const auto& d) { return d.name == clusters[a].name; })
                               ->efficiency.dmus;
        for (std::size_t d = 0; d < t.dmus.size(); ++d) {
            const auto it = std::find(dmus.begin(), dmus.end(), t.dmus[d]);
            if (it != dmus.end()) t.clusters[d][a] = sel->solution.assignments[static_cast<std::size_t>(it - dmus.begin())];
        }
    }
    for (std::size_t a = 0; a < clusters.size(); ++a) {
        for (std::size_t b = a + 1; b < clusters.size(); ++b) {
            const auto* sa = clusters[a].sweep.selected();
            const auto* sb = clusters[b].sweep.selected();
            if (!sa || !sb) continue;
            CorrespondencePair p;
            p.first = clusters[a].name;
            p.second = clusters[b].name;
            p.contingency.assign(sa->k, std::vector<std::size_t>(sb->k, 0));
            for (std::size_t d = 0; d < t.dmus.size(); ++d) {
                if (!t.clusters[d][a] || !t.clusters[d][b]) continue;
                ++p.contingency[*t.clusters[d][a]][*t.clusters[d][b]];
                ++p.total;
            }
            p.agreement = best_matching_agreement(p.contingency);
            t.pairs.push_back(std::move(p));
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// JSON

namespace report_detail {

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json optional_number(const std::optional<double>& v) { return v ? number(*v) : Json(nullptr); }

template <typename T>
T get(const Json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("report: missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: bad field '") + key + "': " + e.what());
    }
}

inline double get_double(const Json& j, const char* key, double if_null) {
    if (!j.contains(key)) throw ParseError(std::string("report: missing field '") + key + "'");
    const auto& v = j.at(key);
    if (v.is_null()) return if_null;
    if (!v.is_number()) throw ParseError(std::string("report: field '") + key + "' is not a number");
    return v.get<double>();
}

inline std::optional<double> get_optional_double(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

inline Json matrix_rows(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd parse_matrix(const Json& rows, Eigen::Index cols_if_empty = 0) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r ? static_cast<Eigen::Index>(rows[0].size()) : cols_if_empty;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c) throw ParseError("report: ragged matrix");
        for (Eigen::Index j = 0; j < c; ++j) {
            const auto& v = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            m(i, j) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
        }
    }
    return m;
}

inline Json vector_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

inline Eigen::VectorXd parse_vector(const Json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = a[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : a[i].get<double>();
    return v;
}

inline Json path_spec_json(const PathModelSpec& s) {
    Json blocks = Json::array();
    for (const auto& b : s.blocks) blocks.push_back({{"name", b.name}, {"indicators", b.indicators}, {"mode", "reflective"}});
    Json paths = Json::array();
    for (const auto& p : s.paths) paths.push_back({{"from", p.from}, {"to", p.to}});
    return {{"blocks", blocks}, {"paths", paths}, {"inner_scheme", to_string(s.inner_scheme)}};
}

inline PathModelSpec parse_path_spec(const Json& j) {
    PathModelSpec s;
    for (const auto& b : get<Json>(j, "blocks")) {
        if (b.contains("mode") && b.at("mode") != "reflective")
            throw ParseError("path model: only reflective blocks are supported");
        s.blocks.push_back({get<std::string>(b, "name"), get<std::vector<std::string>>(b, "indicators")});
    }
    for (const auto& p : get<Json>(j, "paths")) s.paths.push_back({get<std::string>(p, "from"), get<std::string>(p, "to")});
    if (j.contains("inner_scheme")) s.inner_scheme = parse_inner_scheme(get<std::string>(j, "inner_scheme"));
    return s;
}

}  // namespace report_detail

inline Json to_json(const ReportBundle& b) {
    using namespace report_detail;
    Json j;
    j["tool"] = {{"name", tool_name}, {"version", tool_version}};
    j["status"] = b.status();
    Json stages = Json::object();
    for (const auto& [n, s] : b.stages) stages[n] = to_string(s);
    j["stages"] = stages;
    if (b.error) {
        j["failed_stage"] = b.error->stage;
        j["error"] = {{"code", b.error->code}, {"message", b.error->message}};
    }
    Json prov{{"config_hash", b.provenance.config_hash}, {"tool_version", b.provenance.tool_version}};
    Json seeds = Json::object();
    seeds["cluster"] = b.provenance.cluster_seed ? Json(*b.provenance.cluster_seed) : Json(nullptr);
    seeds["bootstrap"] = b.provenance.bootstrap_seed ? Json(*b.provenance.bootstrap_seed) : Json(nullptr);
    prov["seeds"] = seeds;
    j["provenance"] = prov;

    Json transforms = Json::array();
    for (const auto& t : b.transforms) transforms.push_back({{"variable", t.variable}, {"method", to_string(t.method)}});

    Json dea = Json::array();
    for (const auto& a : b.dea) {
        Json warnings = Json::array();
        for (const auto& w : a.warnings)
            warnings.push_back({{"code", w.code}, {"message", w.message}});
        dea.push_back({{"name", a.name},
                       {"inputs", a.spec.input_vars},
                       {"outputs", a.spec.output_vars},
                       {"returns_to_scale", to_string(a.spec.returns_to_scale)},
                       {"orientation", to_string(a.spec.orientation)},
                       {"dmus", a.efficiency.dmus},
                       {"periods", a.efficiency.periods},
                       {"scores", matrix_rows(a.efficiency.scores)},
                       {"means", a.efficiency.means},
                       {"warnings", warnings}});
    }
    j["dea"] = {{"transforms", transforms}, {"analyses", dea}};

    if (b.cluster_settings) {
        const auto& s = *b.cluster_settings;
        Json analyses = Json::array();
        for (const auto& c : b.clusters) {
            Json entries = Json::array();
            for (const auto& e : c.sweep.entries) {
                const auto& sol = e.solution;
                entries.push_back(
                    {{"k", e.k},
                     {"resolved", e.resolved},
                     {"assignments", sol.assignments},
                     {"centroids", matrix_rows(sol.centroids)},
                     {"sse_within", sol.sse_within},
                     {"restarts_used", sol.restarts_used},
                     {"seed", sol.seed},
                     {"winning_restart", sol.winning_restart},
                     {"iterations", sol.iterations},
                     {"sse_trace", sol.sse_trace},
                     {"anova",
                      {{"df_between", e.anova.df_between},
                       {"df_within", e.anova.df_within},
                       {"ss_between", e.anova.ss_between},
                       {"ss_within", e.anova.ss_within},
                       {"f_value", number(e.anova.f_value)},
                       {"p_value", e.anova.p_value},
                       {"perfect_separation", e.anova.perfect_separation}}}});
            }
            analyses.push_back({{"name", c.name},
                                {"selected_k", c.sweep.selected_k ? Json(*c.sweep.selected_k) : Json(nullptr)},
                                {"selection_rule", c.sweep.selection_rule},
                                {"significance", c.sweep.significance},
                                {"flags", c.sweep.flags},
                                {"entries", entries}});
        }
        Json cl{{"settings",
                 {{"k_max", s.k_max}, {"k_min", s.k_min}, {"restarts", s.restarts}, {"seed", s.seed},
                  {"significance", s.significance}}},
                {"caveat", anova_caveat},
                {"analyses", analyses}};
        if (b.correspondence) {
            const auto& t = *b.correspondence;
            Json rows = Json::array();
            for (std::size_t d = 0; d < t.dmus.size(); ++d) {
                Json labels = Json::array();
                for (const auto& l : t.clusters[d]) labels.push_back(l ? Json(*l) : Json(nullptr));
                rows.push_back({{"dmu", t.dmus[d]}, {"clusters", labels}});
            }
            Json pairs = Json::array();
            for (const auto& p : t.pairs)
                pairs.push_back({{"first", p.first}, {"second", p.second}, {"contingency", p.contingency},
                                 {"agreement", p.agreement}, {"total", p.total}});
            cl["correspondence"] = {{"analyses", t.analyses}, {"rows", rows}, {"pairs", pairs}};
        }
        j["cluster"] = cl;
    }

    if (b.pls_settings) {
        const auto& s = *b.pls_settings;
        Json models = Json::array();
        for (const auto& m : b.pls_models) {
            const auto& e = m.estimates;
            Json paths = Json::array();
            for (const auto& p : e.paths)
                paths.push_back({{"from", p.from}, {"to", p.to}, {"beta", p.beta},
                                 {"std_error", optional_number(p.std_error)},
                                 {"t_statistic", optional_number(p.t_statistic)},
                                 {"p_value", optional_number(p.p_value)}});
            Json r2 = Json::array();
            for (const auto& [latent, v] : e.r_squared) r2.push_back({{"latent", latent}, {"value", v}});
            Json indicators = Json::array();
            for (const auto& i : e.indicators)
                indicators.push_back({{"latent", i.latent}, {"indicator", i.indicator}, {"weight", i.weight},
                                      {"loading", i.loading}});
            Json boot = nullptr;
            if (e.bootstrap)
                boot = {{"replicates", e.bootstrap->replicates}, {"seed", e.bootstrap->seed},
                        {"redraws", e.bootstrap->redraws}};
            models.push_back({{"name", m.name},
                              {"spec", path_spec_json(m.spec)},
                              {"observations", m.observations},
                              {"paths", paths},
                              {"r_squared", r2},
                              {"indicators", indicators},
                              {"converged", e.converged},
                              {"iterations", e.iterations},
                              {"last_weight_change", e.last_weight_change},
                              {"bootstrap", boot}});
        }
        Json cd = Json::array();
        for (const auto& c : b.cobb_douglas)
            cd.push_back({{"ict_variable", c.ict_variable},
                          {"target", c.target},
                          {"observations", c.observations},
                          {"columns", c.fit.columns},
                          {"coefficients", vector_json(c.fit.coefficients)},
                          {"std_errors", vector_json(c.fit.std_errors)},
                          {"r_squared", c.fit.r_squared},
                          {"df_residual", c.fit.df_residual}});
        j["pls"] = {{"settings",
                     {{"inner_scheme", to_string(s.inner_scheme)}, {"replicates", s.replicates}, {"seed", s.seed},
                      {"joint", s.joint}}},
                    {"models", models},
                    {"cobb_douglas", cd}};
    }
    return j;
}

inline ReportBundle bundle_from_json(const Json& j) {
    using namespace report_detail;
    ReportBundle b;
    try {
        const auto stages = get<Json>(j, "stages");
        for (const auto& name : stage_names()) b.set_stage(name, parse_stage_status(get<std::string>(stages, name.c_str())));
        if (j.contains("failed_stage")) {
            const auto& err = get<Json>(j, "error");
            b.error = StageError{get<std::string>(j, "failed_stage"), get<std::string>(err, "code"),
                                 get<std::string>(err, "message")};
        }
        const auto& prov = get<Json>(j, "provenance");
        b.provenance.config_hash = get<std::string>(prov, "config_hash");
        b.provenance.tool_version = get<std::string>(prov, "tool_version");
        const auto& seeds = get<Json>(prov, "seeds");
        if (!seeds.at("cluster").is_null()) b.provenance.cluster_seed = seeds.at("cluster").get<std::uint64_t>();
        if (!seeds.at("bootstrap").is_null()) b.provenance.bootstrap_seed = seeds.at("bootstrap").get<std::uint64_t>();

        const auto& dea = get<Json>(j, "dea");
        for (const auto& t : get<Json>(dea, "transforms"))
            b.transforms.push_back({get<std::string>(t, "variable"), parse_undesirable_method(get<std::string>(t, "method"))});
        for (const auto& a : get<Json>(dea, "analyses")) {
            DeaAnalysisReport r;
            r.name = get<std::string>(a, "name");
            r.spec.input_vars = get<std::vector<std::string>>(a, "inputs");
            r.spec.output_vars = get<std::vector<std::string>>(a, "outputs");
            r.spec.returns_to_scale = parse_returns_to_scale(get<std::string>(a, "returns_to_scale"));
            r.spec.orientation = parse_orientation(get<std::string>(a, "orientation"));
            r.efficiency.dmus = get<std::vector<std::string>>(a, "dmus");
            r.efficiency.periods = get<std::vector<std::string>>(a, "periods");
            r.efficiency.returns_to_scale = r.spec.returns_to_scale;
            r.efficiency.orientation = r.spec.orientation;
            r.efficiency.scores = parse_matrix(get<Json>(a, "scores"), static_cast<Eigen::Index>(r.efficiency.periods.size()));
            r.efficiency.means = get<std::vector<double>>(a, "means");
            for (const auto& w : get<Json>(a, "warnings"))
                r.warnings.push_back({get<std::string>(w, "code"), get<std::string>(w, "message"), {}});
            b.dea.push_back(std::move(r));
        }

        if (j.contains("cluster")) {
            const auto& cl = j.at("cluster");
            const auto& s = get<Json>(cl, "settings");
            b.cluster_settings = SweepOptions{get<std::size_t>(s, "k_max"), get<std::size_t>(s, "k_min"),
                                              get<std::size_t>(s, "restarts"), get<std::uint64_t>(s, "seed"),
                                              get<double>(s, "significance")};
            for (const auto& a : get<Json>(cl, "analyses")) {
                ClusterAnalysisReport r;
                r.name = get<std::string>(a, "name");
                if (!a.at("selected_k").is_null()) r.sweep.selected_k = a.at("selected_k").get<std::size_t>();
                r.sweep.selection_rule = get<std::string>(a, "selection_rule");
                r.sweep.significance = get<double>(a, "significance");
                r.sweep.flags = get<std::vector<std::string>>(a, "flags");
                for (const auto& e : get<Json>(a, "entries")) {
                    KSweepEntry entry;
                    entry.k = get<std::size_t>(e, "k");
                    entry.resolved = get<bool>(e, "resolved");
                    auto& sol = entry.solution;
                    sol.k = entry.k;
                    sol.assignments = get<std::vector<std::size_t>>(e, "assignments");
                    sol.centroids = parse_matrix(get<Json>(e, "centroids"));
                    sol.sse_within = get<double>(e, "sse_within");
                    sol.restarts_used = get<std::size_t>(e, "restarts_used");
                    sol.seed = get<std::uint64_t>(e, "seed");
                    sol.winning_restart = get<std::size_t>(e, "winning_restart");
                    sol.iterations = get<std::size_t>(e, "iterations");
                    sol.sse_trace = get<std::vector<double>>(e, "sse_trace");
                    const auto& an = get<Json>(e, "anova");
                    entry.anova.df_between = get<int>(an, "df_between");
                    entry.anova.df_within = get<int>(an, "df_within");
                    entry.anova.ss_between = get<double>(an, "ss_between");
                    entry.anova.ss_within = get<double>(an, "ss_within");
                    entry.anova.perfect_separation = get<bool>(an, "perfect_separation");
                    entry.anova.f_value = get_double(an, "f_value", std::numeric_limits<double>::infinity());
                    entry.anova.p_value = get<double>(an, "p_value");
                    r.sweep.entries.push_back(std::move(entry));
                }
                b.clusters.push_back(std::move(r));
            }
            if (cl.contains("correspondence")) {
                const auto& c = cl.at("correspondence");
                CorrespondenceTable t;
                t.analyses = get<std::vector<std::string>>(c, "analyses");
                for (const auto& row : get<Json>(c, "rows")) {
                    t.dmus.push_back(get<std::string>(row, "dmu"));
                    std::vector<std::optional<std::size_t>> labels;
                    for (const auto& l : get<Json>(row, "clusters"))
                        labels.push_back(l.is_null() ? std::nullopt : std::optional<std::size_t>(l.get<std::size_t>()));
                    t.clusters.push_back(std::move(labels));
                }
                for (const auto& p : get<Json>(c, "pairs"))
                    t.pairs.push_back({get<std::string>(p, "first"), get<std::string>(p, "second"),
                                       get<std::vector<std::vector<std::size_t>>>(p, "contingency"),
                                       get<std::size_t>(p, "agreement"), get<std::size_t>(p, "total")});
                b.correspondence = std::move(t);
            }
        }

        if (j.contains("pls")) {
            const auto& pls = j.at("pls");
            const auto& s = get<Json>(pls, "settings");
            b.pls_settings = PlsSettings{parse_inner_scheme(get<std::string>(s, "inner_scheme")),
                                         get<std::size_t>(s, "replicates"), get<std::uint64_t>(s, "seed"),
                                         get<bool>(s, "joint")};
            for (const auto& m : get<Json>(pls, "models")) {
                PlsModelReport r;
                r.name = get<std::string>(m, "name");
                r.spec = parse_path_spec(get<Json>(m, "spec"));
                r.observations = get<std::size_t>(m, "observations");
                auto& e = r.estimates;
                for (const auto& p : get<Json>(m, "paths")) {
                    PathCoefficient c{get<std::string>(p, "from"), get<std::string>(p, "to"), get<double>(p, "beta"),
                                      get_optional_double(p, "std_error"), get_optional_double(p, "t_statistic"),
                                      get_optional_double(p, "p_value")};
                    // A zero standard error is stored with a null t; restore its infinity.
                    if (c.std_error && *c.std_error == 0.0 && !c.t_statistic)
                        c.t_statistic = c.beta == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.beta);
                    e.paths.push_back(std::move(c));
                }
                for (const auto& r2 : get<Json>(m, "r_squared"))
                    e.r_squared.emplace_back(get<std::string>(r2, "latent"), get<double>(r2, "value"));
                for (const auto& i : get<Json>(m, "indicators"))
                    e.indicators.push_back({get<std::string>(i, "latent"), get<std::string>(i, "indicator"),
                                            get<double>(i, "weight"), get<double>(i, "loading")});
                for (const auto& blk : r.spec.blocks) e.latent_names.push_back(blk.name);
                e.converged = get<bool>(m, "converged");
                e.iterations = get<std::size_t>(m, "iterations");
                e.last_weight_change = get<double>(m, "last_weight_change");
                if (!m.at("bootstrap").is_null()) {
                    const auto& bo = m.at("bootstrap");
                    e.bootstrap = BootstrapInfo{get<std::size_t>(bo, "replicates"), get<std::uint64_t>(bo, "seed"),
                                                get<std::size_t>(bo, "redraws")};
                }
                b.pls_models.push_back(std::move(r));
            }
            for (const auto& c : get<Json>(pls, "cobb_douglas")) {
                CobbDouglasReport r;
                r.ict_variable = get<std::string>(c, "ict_variable");
                r.target = get<std::string>(c, "target");
                r.observations = get<std::size_t>(c, "observations");
                r.fit.columns = get<std::vector<std::string>>(c, "columns");
                r.fit.coefficients = parse_vector(get<Json>(c, "coefficients"));
                r.fit.std_errors = parse_vector(get<Json>(c, "std_errors"));
                r.fit.r_squared = get<double>(c, "r_squared");
                r.fit.df_residual = get<int>(c, "df_residual");
                b.cobb_douglas.push_back(std::move(r));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    return b;
}

inline std::string to_json_text(const ReportBundle& b) { return to_json(b).dump(2) + "\n"; }

inline ReportBundle parse_report(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("report is not valid JSON: ") + e.what());
    }
    return bundle_from_json(j);
}

// ---------------------------------------------------------------------------
// Text and CSV rendering

inline constexpr int table_decimals = 7;

/// `*` for p < 0.001, `**` for p < 0.01; nothing otherwise.
inline std::string significance_marker(std::optional<double> p) {
    if (!p) return "";
    if (*p < 0.001) return "*";
    if (*p < 0.01) return "**";
    return "";
}

/// Path coefficient cell for the text grid, e.g. `-0.813*`.
inline std::string beta_cell(double beta, std::optional<double> p) {
    return csv::format_fixed(beta, 3) + significance_marker(p);
}

namespace report_detail {

inline std::string fixed(double v) { return csv::format_fixed(v, table_decimals); }

inline std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : ""; }

// Left-aligns the first column, right-aligns the rest.
inline std::string aligned(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        if (r.size() > width.size()) width.resize(r.size(), 0);
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream os;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) line += "  ";
            const std::string pad(width[c] - r[c].size(), ' ');
            line += c == 0 ? r[c] + pad : pad + r[c];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        os << line << '\n';
    }
    return os.str();
}

inline std::string csv_table(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) out += ',';
            out += csv::quote_field(r[c]);
        }
        out += '\n';
    }
    return out;
}

inline std::vector<std::vector<std::string>> efficiency_rows(const DeaAnalysisReport& a) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"dmu"};
    for (const auto& p : a.efficiency.periods) head.push_back(p);
    head.push_back("mean");
    rows.push_back(head);
    for (std::size_t d = 0; d < a.efficiency.dmus.size(); ++d) {
        std::vector<std::string> r{a.efficiency.dmus[d]};
        for (Eigen::Index p = 0; p < a.efficiency.scores.cols(); ++p)
            r.push_back(fixed(a.efficiency.scores(static_cast<Eigen::Index>(d), p)));
        r.push_back(fixed(a.efficiency.means[d]));
        rows.push_back(r);
    }
    return rows;
}

inline std::string f_text(const AnovaResult& a) { return a.perfect_separation ? "inf" : fixed(a.f_value); }

inline std::vector<std::vector<std::string>> sweep_rows(const ClusterAnalysisReport& c) {
    std::vector<std::vector<std::string>> rows{
        {"k", "df_between", "df_within", "ss_between", "ss_within", "F", "p_value", "sse_within", "resolved", "selected"}};
    for (const auto& e : c.sweep.entries)
        rows.push_back({std::to_string(e.k), std::to_string(e.anova.df_between), std::to_string(e.anova.df_within),
                        fixed(e.anova.ss_between), fixed(e.anova.ss_within), f_text(e.anova), fixed(e.anova.p_value),
                        fixed(e.solution.sse_within), e.resolved ? "yes" : "no",
                        c.sweep.selected_k == e.k ? "yes" : "no"});
    return rows;
}

inline std::vector<std::vector<std::string>> membership_rows(const ClusterAnalysisReport& c, const DeaAnalysisReport& a) {
    std::vector<std::vector<std::string>> rows{{"dmu", "cluster", "mean_efficiency"}};
    const auto* sel = c.sweep.selected();
    for (std::size_t d = 0; d < a.efficiency.dmus.size(); ++d)
        rows.push_back({a.efficiency.dmus[d], sel ? std::to_string(sel->solution.assignments[d] + 1) : "",
                        fixed(a.efficiency.means[d])});
    return rows;
}

inline std::vector<std::vector<std::string>> centroid_rows(const ClusterAnalysisReport& c) {
    std::vector<std::vector<std::string>> rows{{"cluster", "size", "centroid"}};
    const auto* sel = c.sweep.selected();
    if (!sel) return rows;
    const auto sizes = sel->solution.cluster_sizes();
    for (std::size_t k = 0; k < sel->k; ++k)
        rows.push_back({std::to_string(k + 1), std::to_string(sizes[k]), fixed(sel->solution.centroids(static_cast<Eigen::Index>(k), 0))});
    return rows;
}

inline std::vector<std::vector<std::string>> correspondence_rows(const CorrespondenceTable& t) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"dmu"};
    for (const auto& a : t.analyses) head.push_back(a);
    rows.push_back(head);
    for (std::size_t d = 0; d < t.dmus.size(); ++d) {
        std::vector<std::string> r{t.dmus[d]};
        for (const auto& l : t.clusters[d]) r.push_back(l ? std::to_string(*l + 1) : "");
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<std::vector<std::string>> contingency_rows(const CorrespondencePair& p) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{p.first + " \\ " + p.second};
    if (!p.contingency.empty())
        for (std::size_t c = 0; c < p.contingency[0].size(); ++c) head.push_back(std::to_string(c + 1));
    rows.push_back(head);
    for (std::size_t r = 0; r < p.contingency.size(); ++r) {
        std::vector<std::string> row{std::to_string(r + 1)};
        for (auto v : p.contingency[r]) row.push_back(std::to_string(v));
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<std::vector<std::string>> path_rows(const std::vector<PlsModelReport>& models) {
    std::vector<std::vector<std::string>> rows{{"model", "from", "to", "beta", "std_error", "t_statistic", "p_value"}};
    for (const auto& m : models)
        for (const auto& p : m.estimates.paths)
            rows.push_back({m.name, p.from, p.to, fixed(p.beta), fixed(p.std_error),
                            p.t_statistic && std::isinf(*p.t_statistic) ? (*p.t_statistic > 0 ? "inf" : "-inf")
                                                                        : fixed(p.t_statistic),
                            fixed(p.p_value)});
    return rows;
}

// Predictors down the side, outcomes across the top.
inline std::vector<std::vector<std::string>> beta_grid_rows(const std::vector<PlsModelReport>& models, bool text) {
    std::vector<std::string> from, to;
    for (const auto& m : models)
        for (const auto& p : m.estimates.paths) {
            if (std::find(from.begin(), from.end(), p.from) == from.end()) from.push_back(p.from);
            if (std::find(to.begin(), to.end(), p.to) == to.end()) to.push_back(p.to);
        }
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{""};
    if (text) {
        head.insert(head.end(), to.begin(), to.end());
    } else {
        head = {"from"};
        for (const auto& t : to) {
            head.push_back(t + "_beta");
            head.push_back(t + "_p");
        }
    }
    rows.push_back(head);
    for (const auto& f : from) {
        std::vector<std::string> r{f};
        for (const auto& t : to) {
            const PathCoefficient* found = nullptr;
            for (const auto& m : models)
                for (const auto& p : m.estimates.paths)
                    if (!found && p.from == f && p.to == t) found = &p;
            if (text) {
                r.push_back(found ? beta_cell(found->beta, found->p_value) : "");
            } else {
                r.push_back(found ? fixed(found->beta) : "");
                r.push_back(found ? fixed(found->p_value) : "");
            }
        }
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<std::vector<std::string>> cobb_douglas_rows(const std::vector<CobbDouglasReport>& fits) {
    std::vector<std::vector<std::string>> rows{{"ict_variable", "term", "coefficient", "std_error"}};
    for (const auto& c : fits)
        for (std::size_t i = 0; i < c.fit.columns.size(); ++i)
            rows.push_back({c.ict_variable, c.fit.columns[i], fixed(c.fit.coefficients(static_cast<Eigen::Index>(i))),
                            fixed(c.fit.std_errors(static_cast<Eigen::Index>(i)))});
    return rows;
}

}  // namespace report_detail

inline std::string render_text(const ReportBundle& b) {
    using namespace report_detail;
    std::ostringstream os;
    os << tool_name << ' ' << tool_version << " report\n";
    os << "status: " << b.status() << '\n';
    os << "config hash: " << b.provenance.config_hash << '\n';
    for (const auto& [n, s] : b.stages) os << "stage " << n << ": " << to_string(s) << '\n';
    if (b.error) os << "error in stage " << b.error->stage << " [" << b.error->code << "]: " << b.error->message << '\n';
    for (const auto& t : b.transforms) os << "transform: " << t.variable << " (" << to_string(t.method) << ")\n";

    for (const auto& a : b.dea) {
        os << "\n== Efficiency: " << a.name << " (" << to_string(a.spec.returns_to_scale) << ", "
           << to_string(a.spec.orientation) << " orientation) ==\n";
        for (const auto& w : a.warnings) os << "warning " << w.code << ": " << w.message << '\n';
        os << aligned(efficiency_rows(a));
    }

    if (!b.clusters.empty()) {
        os << "\nNote: " << anova_caveat << '\n';
        for (const auto& c : b.clusters) {
            os << "\n== Clusters: " << c.name << " ==\n";
            os << "selection rule: " << c.sweep.selection_rule << ", selected k: "
               << (c.sweep.selected_k ? std::to_string(*c.sweep.selected_k) : "none") << '\n';
            if (!c.sweep.flags.empty()) {
                os << "flags:";
                for (const auto& f : c.sweep.flags) os << ' ' << f;
                os << '\n';
            }
            os << aligned(sweep_rows(c));
            if (c.sweep.selected()) {
                os << '\n' << aligned(centroid_rows(c));
                os << '\n' << aligned(membership_rows(c, b.dea_analysis(c.name)));
            }
        }
    }
    if (b.correspondence && !b.correspondence->analyses.empty()) {
        os << "\n== Cluster correspondence ==\n" << aligned(correspondence_rows(*b.correspondence));
        for (const auto& p : b.correspondence->pairs) {
            os << '\n' << aligned(contingency_rows(p));
            os << "agreement " << p.first << " vs " << p.second << ": " << p.agreement << " of " << p.total << '\n';
        }
    }

    if (!b.pls_models.empty()) {
        os << "\n== PLS path coefficients ==\n" << aligned(beta_grid_rows(b.pls_models, true));
        os << "Note: * p < 0.001, ** p < 0.01 (bootstrap-t, n - 1 df)\n\n";
        os << aligned(path_rows(b.pls_models));
        for (const auto& m : b.pls_models) {
            if (!m.estimates.converged) os << "warning: model " << m.name << " did not converge\n";
        }
    }
    if (!b.cobb_douglas.empty()) {
        os << "\n== Cobb-Douglas OLS (target: " << b.cobb_douglas.front().target << ") ==\n"
           << aligned(cobb_douglas_rows(b.cobb_douglas));
    }
    return os.str();
}

/// One (file name, content) pair per table.
inline std::vector<std::pair<std::string, std::string>> render_csv(const ReportBundle& b) {
    using namespace report_detail;
    std::vector<std::pair<std::string, std::string>> files;
    std::vector<std::vector<std::string>> stages{{"stage", "status"}};
    for (const auto& [n, s] : b.stages) stages.push_back({n, to_string(s)});
    files.emplace_back("stages.csv", csv_table(stages));
    for (const auto& a : b.dea) files.emplace_back("efficiency_" + a.name + ".csv", csv_table(efficiency_rows(a)));
    for (const auto& c : b.clusters) {
        files.emplace_back("cluster_" + c.name + "_sweep.csv", csv_table(sweep_rows(c)));
        files.emplace_back("cluster_" + c.name + "_membership.csv", csv_table(membership_rows(c, b.dea_analysis(c.name))));
        files.emplace_back("cluster_" + c.name + "_centroids.csv", csv_table(centroid_rows(c)));
    }
    if (b.correspondence && !b.correspondence->analyses.empty()) {
        files.emplace_back("correspondence.csv", csv_table(correspondence_rows(*b.correspondence)));
        for (const auto& p : b.correspondence->pairs) {
            auto rows = contingency_rows(p);
            rows.push_back({"agreement", std::to_string(p.agreement)});
            rows.push_back({"total", std::to_string(p.total)});
            files.emplace_back("correspondence_" + p.first + "_" + p.second + ".csv", csv_table(rows));
        }
    }
    if (!b.pls_models.empty()) {
        files.emplace_back("pls_paths.csv", csv_table(path_rows(b.pls_models)));
        files.emplace_back("pls_grid.csv", csv_table(beta_grid_rows(b.pls_models, false)));
    }
    if (!b.cobb_douglas.empty()) files.emplace_back("cobb_douglas.csv", csv_table(cobb_douglas_rows(b.cobb_douglas)));
    return files;
}

/// Writes `content` to `path` via a temporary file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw FilesystemError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FilesystemError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw FilesystemError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw FilesystemError("cannot move report into place at " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FilesystemError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes the bundle in `format` (csv, json or text) under `directory` and
/// returns the paths written.
inline std::vector<std::filesystem::path> emit_report(const ReportBundle& b, const std::filesystem::path& directory,
                                                      const std::string& format) {
    std::vector<std::filesystem::path> written;
    if (format == "json") {
        written.push_back(directory / "report.json");
        write_atomic(written.back(), to_json_text(b));
    } else if (format == "text") {
        written.push_back(directory / "report.txt");
        write_atomic(written.back(), render_text(b));
    } else if (format == "csv") {
        for (const auto& [name, content] : render_csv(b)) {
            written.push_back(directory / name);
            write_atomic(written.back(), content);
        }
    } else {
        throw UsageError("unknown report format '" + format + "' (expected csv, json or text)");
    }
    return written;
}

}  // namespace effpipe

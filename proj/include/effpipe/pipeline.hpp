#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "effpipe/cluster.hpp"
#include "effpipe/dea.hpp"
#include "effpipe/panel_data.hpp"
#include "effpipe/pls.hpp"
#include "effpipe/report.hpp"
#include "effpipe/synthetic.hpp"

namespace effpipe {

// ---------------------------------------------------------------------------
// Configuration

struct DatasetConfig {
    std::filesystem::path path;  // resolved against the config file's directory
    std::vector<VariableDef> schema;
    UndesirableMethod undesirable_method = UndesirableMethod::max_minus;
};

struct DeaAnalysisConfig {
    std::string name;
    DeaSpec spec;
    std::vector<std::string> periods;  // empty: all
};

struct ClusterConfig {
    SweepOptions options;
    bool seed_given = false;
};

struct PlsModelConfig {
    std::string name;
    PathModelSpec spec;
};

struct CobbDouglasConfig {
    std::vector<std::string> ict_vars;
    std::vector<std::string> health_vars;
    std::string target_analysis;
};

struct PlsConfig {
    std::vector<PlsModelConfig> models;
    std::vector<std::string> exogenous;
    bool joint = false;
    InnerScheme inner_scheme = InnerScheme::path_weighting;
    std::size_t replicates = 500;
    std::optional<std::uint64_t> seed;
    std::optional<CobbDouglasConfig> cobb_douglas;
};

struct OutputConfig {
    std::filesystem::path directory = "reports";
    std::vector<std::string> formats{"json"};
};

struct PipelineConfig {
    DatasetConfig dataset;
    std::vector<DeaAnalysisConfig> dea;
    std::optional<ClusterConfig> cluster;
    std::optional<PlsConfig> pls;
    OutputConfig output;
    std::string hash;  // of the config file bytes
};

/// 64-bit FNV-1a over the bytes, rendered "fnv1a64:<16 hex digits>".
inline std::string config_hash(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016" PRIx64, h);
    return buf;
}

namespace pipeline_detail {

using report_detail::get;

inline bool present(const Json& j, const char* key) { return j.contains(key) && !j.at(key).is_null(); }

inline bool section_empty(const Json& j, const char* key) {
    return !present(j, key) || (j.at(key).is_object() && j.at(key).empty());
}

// One separate model per exogenous variable (or one joint model), each a
// single-indicator block pointing at every endogenous variable.
inline std::vector<PlsModelConfig> shorthand_models(const std::vector<std::string>& exo, const std::vector<std::string>& endo,
                                                    bool joint, InnerScheme scheme) {
    auto model = [&](const std::string& name, const std::vector<std::string>& sources) {
        PlsModelConfig m{name, {}};
        for (const auto& x : sources) m.spec.blocks.push_back({x, {x}});
        for (const auto& y : endo) m.spec.blocks.push_back({y, {y}});
        for (const auto& x : sources)
            for (const auto& y : endo) m.spec.paths.push_back({x, y});
        m.spec.inner_scheme = scheme;
        return m;
    };
    std::vector<PlsModelConfig> out;
    if (joint) {
        out.push_back(model("joint", exo));
    } else {
        for (const auto& x : exo) out.push_back(model(x, {x}));
    }
    return out;
}

}  // namespace pipeline_detail

/// Parses a config document. `base` is the directory relative paths are
/// resolved against. Structural problems raise ParseError; semantic ones
/// are left to validate_config.
inline PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base = {}) {
    using namespace pipeline_detail;
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config: top level must be an object");
    PipelineConfig c;
    c.hash = config_hash(text);
    try {
        const auto& ds = get<Json>(j, "dataset");
        c.dataset.path = base / get<std::string>(ds, "path");
        for (const auto& v : get<Json>(ds, "schema")) {
            VariableDef def{get<std::string>(v, "name"), parse_role(get<std::string>(v, "role"))};
            if (present(v, "direction")) def.direction = parse_direction(get<std::string>(v, "direction"));
            c.dataset.schema.push_back(def);
        }
        if (present(ds, "undesirable_method"))
            c.dataset.undesirable_method = parse_undesirable_method(get<std::string>(ds, "undesirable_method"));

        for (const auto& a : get<Json>(get<Json>(j, "dea"), "analyses")) {
            DeaAnalysisConfig d;
            d.name = get<std::string>(a, "name");
            d.spec.input_vars = get<std::vector<std::string>>(a, "inputs");
            d.spec.output_vars = get<std::vector<std::string>>(a, "outputs");
            if (present(a, "returns_to_scale"))
                d.spec.returns_to_scale = parse_returns_to_scale(get<std::string>(a, "returns_to_scale"));
            if (present(a, "orientation")) d.spec.orientation = parse_orientation(get<std::string>(a, "orientation"));
            if (present(a, "periods")) d.periods = get<std::vector<std::string>>(a, "periods");
            c.dea.push_back(std::move(d));
        }

        if (!section_empty(j, "cluster")) {
            const auto& s = j.at("cluster");
            ClusterConfig cc;
            if (present(s, "k_max")) cc.options.k_max = get<std::size_t>(s, "k_max");
            if (present(s, "k_min")) cc.options.k_min = get<std::size_t>(s, "k_min");
            if (present(s, "restarts")) cc.options.restarts = get<std::size_t>(s, "restarts");
            if (present(s, "significance")) cc.options.significance = get<double>(s, "significance");
            if (present(s, "seed")) {
                cc.options.seed = get<std::uint64_t>(s, "seed");
                cc.seed_given = true;
            }
            c.cluster = cc;
        }

        if (!section_empty(j, "pls")) {
            const auto& s = j.at("pls");
            PlsConfig p;
            if (present(s, "inner_scheme")) p.inner_scheme = parse_inner_scheme(get<std::string>(s, "inner_scheme"));
            if (present(s, "joint")) p.joint = get<bool>(s, "joint");
            if (present(s, "models")) {
                for (const auto& m : get<Json>(s, "models")) {
                    PlsModelConfig mc{get<std::string>(m, "name"), report_detail::parse_path_spec(m)};
                    if (!present(m, "inner_scheme")) mc.spec.inner_scheme = p.inner_scheme;
                    p.models.push_back(std::move(mc));
                }
            } else {
                p.exogenous = get<std::vector<std::string>>(s, "exogenous");
                p.models = shorthand_models(p.exogenous, get<std::vector<std::string>>(s, "endogenous"), p.joint,
                                            p.inner_scheme);
            }
            if (present(s, "bootstrap")) {
                const auto& b = s.at("bootstrap");
                if (present(b, "replicates")) p.replicates = get<std::size_t>(b, "replicates");
                if (present(b, "seed")) p.seed = get<std::uint64_t>(b, "seed");
            }
            if (present(s, "cobb_douglas")) {
                const auto& cd = s.at("cobb_douglas");
                CobbDouglasConfig cdc;
                cdc.ict_vars = present(cd, "ict_vars") ? get<std::vector<std::string>>(cd, "ict_vars") : p.exogenous;
                cdc.health_vars = get<std::vector<std::string>>(cd, "health_vars");
                cdc.target_analysis = get<std::string>(cd, "target_analysis");
                p.cobb_douglas = cdc;
            }
            c.pls = std::move(p);
        }

        if (present(j, "output")) {
            const auto& o = j.at("output");
            if (present(o, "directory")) c.output.directory = base / get<std::string>(o, "directory");
            if (present(o, "formats")) c.output.formats = get<std::vector<std::string>>(o, "formats");
        } else {
            c.output.directory = base / c.output.directory;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path), path.parent_path());
}

/// Semantic checks that need no data: every referenced variable is in the
/// schema and every stochastic stage has a seed.
inline ValidationReport validate_config(const PipelineConfig& c) {
    ValidationReport r;
    auto error = [&](const std::string& code, const std::string& msg, const std::string& var = "") {
        r.errors.push_back({code, msg, {"", "", var}});
    };
    std::set<std::string> schema;
    for (const auto& v : c.dataset.schema)
        if (!schema.insert(v.name).second) error("DUPLICATE_VARIABLE", "schema lists '" + v.name + "' twice", v.name);
    auto require = [&](const std::string& var, const std::string& where) {
        if (!schema.count(var)) error("UNKNOWN_VARIABLE", where + " references unknown variable '" + var + "'", var);
    };

    if (c.dea.empty()) error("NO_ANALYSES", "dea stage needs at least one analysis");
    std::set<std::string> names;
    for (const auto& a : c.dea) {
        if (a.name.empty()) error("BAD_NAME", "dea analysis with empty name");
        if (!names.insert(a.name).second) error("DUPLICATE_ANALYSIS", "dea analysis '" + a.name + "' defined twice");
        for (const auto& v : a.spec.input_vars) require(v, "dea analysis '" + a.name + "'");
        for (const auto& v : a.spec.output_vars) require(v, "dea analysis '" + a.name + "'");
        if (a.spec.input_vars.empty() || a.spec.output_vars.empty())
            error("EMPTY_SPEC", "dea analysis '" + a.name + "' needs inputs and outputs");
    }

    if (c.cluster) {
        const auto& o = c.cluster->options;
        if (!c.cluster->seed_given) error("MISSING_SEED", "cluster stage has no seed");
        if (o.k_min < 2 || o.k_max < o.k_min) error("BAD_K_RANGE", "cluster stage needs k_max >= k_min >= 2");
        if (o.restarts == 0) error("BAD_RESTARTS", "cluster stage needs restarts >= 1");
        if (!(o.significance > 0.0 && o.significance < 1.0))
            error("BAD_SIGNIFICANCE", "cluster significance must lie in (0, 1)");
    }

    if (c.pls) {
        const auto& p = *c.pls;
        if (!p.seed) error("MISSING_SEED", "pls bootstrap has no seed");
        if (p.replicates < 100) error("BAD_REPLICATES", "pls bootstrap needs at least 100 replicates");
        if (p.models.empty()) error("NO_MODELS", "pls stage has no models");
        std::set<std::string> model_names;
        for (const auto& m : p.models) {
            if (!model_names.insert(m.name).second) error("DUPLICATE_MODEL", "pls model '" + m.name + "' defined twice");
            for (const auto& b : m.spec.blocks)
                for (const auto& v : b.indicators) require(v, "pls model '" + m.name + "'");
            try {
                m.spec.check();
            } catch (const Error& e) {
                error("BAD_MODEL", "pls model '" + m.name + "': " + e.what());
            }
        }
        if (p.cobb_douglas) {
            const auto& cd = *p.cobb_douglas;
            if (cd.ict_vars.empty()) error("EMPTY_SPEC", "cobb_douglas needs ict_vars");
            if (cd.health_vars.empty()) error("EMPTY_SPEC", "cobb_douglas needs health_vars");
            for (const auto& v : cd.ict_vars) require(v, "cobb_douglas");
            for (const auto& v : cd.health_vars) require(v, "cobb_douglas");
            if (!names.count(cd.target_analysis))
                error("UNKNOWN_ANALYSIS", "cobb_douglas target '" + cd.target_analysis + "' is not a dea analysis");
        }
    }

    for (const auto& f : c.output.formats)
        if (f != "csv" && f != "json" && f != "text") error("BAD_FORMAT", "unknown output format '" + f + "'");
    return r;
}

/// Replaces every stochastic stage's seed.
inline void override_seeds(PipelineConfig& c, std::uint64_t seed) {
    if (c.cluster) {
        c.cluster->options.seed = seed;
        c.cluster->seed_given = true;
    }
    if (c.pls) c.pls->seed = seed;
}

inline PanelDataset load_dataset(const PipelineConfig& c) {
    std::ifstream in(c.dataset.path, std::ios::binary);
    if (!in) throw FilesystemError("cannot read dataset " + c.dataset.path.string());
    return load_panel(in, c.dataset.schema);
}

/// The panel DEA sees: undesirable variables used as DEA outputs are
/// transformed once each, in the order they are first referenced.
inline PanelDataset dea_panel(const PanelDataset& raw, const PipelineConfig& c, std::vector<UndesirableTransform>* applied = nullptr) {
    PanelDataset panel = raw;
    std::vector<std::string> done;
    for (const auto& a : c.dea) {
        for (const auto& v : a.spec.output_vars) {
            const auto idx = panel.find_variable(v);
            if (!idx || panel.variables()[*idx].direction != Direction::undesirable) continue;
            if (std::find(done.begin(), done.end(), v) != done.end()) continue;
            panel = transform_undesirable(panel, v, c.dataset.undesirable_method);
            done.push_back(v);
            if (applied) applied->push_back({v, c.dataset.undesirable_method});
        }
    }
    return panel;
}

/// Dataset checks for the `validate` command: config checks plus DEA
/// admissibility of every analysis on the transformed panel.
inline ValidationReport validate_all(const PipelineConfig& c) {
    ValidationReport r = validate_config(c);
    if (!r.ok()) return r;
    const PanelDataset panel = dea_panel(load_dataset(c), c);
    for (const auto& a : c.dea) {
        const auto sub = validate_for_dea(panel, a.spec);
        for (auto e : sub.errors) {
            e.message = a.name + ": " + e.message;
            r.errors.push_back(std::move(e));
        }
        for (auto w : sub.warnings) {
            w.message = a.name + ": " + w.message;
            r.warnings.push_back(std::move(w));
        }
    }
    return r;
}

inline void require_valid(const PipelineConfig& c) {
    const auto r = validate_config(c);
    if (r.ok()) return;
    std::ostringstream msg;
    msg << "config is invalid:\n" << r;
    throw ValidationError(msg.str());
}

// ---------------------------------------------------------------------------
// Stages

inline void set_provenance(ReportBundle& b, const PipelineConfig& c) {
    b.provenance.config_hash = c.hash;
    b.provenance.tool_version = tool_version;
    b.provenance.cluster_seed = c.cluster ? std::optional<std::uint64_t>(c.cluster->options.seed) : std::nullopt;
    b.provenance.bootstrap_seed = c.pls ? c.pls->seed : std::nullopt;
}

inline void run_dea_stage(const PipelineConfig& c, const PanelDataset& raw, ReportBundle& b,
                          const std::vector<std::string>& period_override = {}) {
    b.transforms.clear();
    b.dea.clear();
    const PanelDataset panel = dea_panel(raw, c, &b.transforms);
    for (const auto& a : c.dea) {
        DeaAnalysisReport r;
        r.name = a.name;
        r.spec = a.spec;
        r.efficiency = run_panel_dea(panel, a.spec, period_override.empty() ? a.periods : period_override);
        r.warnings = validate_for_dea(panel, a.spec).warnings;
        b.dea.push_back(std::move(r));
    }
}

inline void run_cluster_stage(const PipelineConfig& c, ReportBundle& b) {
    b.cluster_settings = c.cluster->options;
    b.clusters.clear();
    for (const auto& a : b.dea) b.clusters.push_back({a.name, sweep_k(a.efficiency.means, c.cluster->options)});
    b.correspondence = build_correspondence(b.dea, b.clusters);
}

/// Target of the Cobb-Douglas regression: log of the named analysis's
/// score, pooled over (dmu, period) in the design's row order.
inline Eigen::VectorXd cobb_douglas_target(const PanelDataset& panel, const DeaAnalysisReport& a) {
    if (a.efficiency.dmus != panel.dmus() || a.efficiency.periods != panel.periods())
        throw UsageError("cobb_douglas target '" + a.name + "' must cover every DMU and period of the dataset");
    Eigen::VectorXd y(a.efficiency.scores.size());
    Eigen::Index r = 0;
    for (Eigen::Index d = 0; d < a.efficiency.scores.rows(); ++d)
        for (Eigen::Index p = 0; p < a.efficiency.scores.cols(); ++p) y(r++) = std::log(a.efficiency.scores(d, p));
    return y;
}

inline void run_pls_stage(const PipelineConfig& c, const PanelDataset& raw, ReportBundle& b) {
    const auto& p = *c.pls;
    b.pls_settings = PlsSettings{p.inner_scheme, p.replicates, *p.seed, p.joint};
    b.pls_models.clear();
    b.cobb_douglas.clear();
    for (const auto& m : p.models) {
        std::vector<std::string> vars;
        for (const auto& blk : m.spec.blocks) vars.insert(vars.end(), blk.indicators.begin(), blk.indicators.end());
        const DataMatrix data = pooled_observations(raw, vars);
        PlsModelReport r{m.name, m.spec, static_cast<std::size_t>(data.rows()),
                         bootstrap_significance(data, m.spec, p.replicates, *p.seed)};
        r.estimates.latent_scores.resize(0, 0);
        b.pls_models.push_back(std::move(r));
    }
    if (p.cobb_douglas) {
        const auto& cd = *p.cobb_douglas;
        const Eigen::VectorXd y = cobb_douglas_target(raw, b.dea_analysis(cd.target_analysis));
        for (const auto& ict : cd.ict_vars) {
            const DesignMatrix design = with_intercept(build_cobb_douglas_design(raw, ict, cd.health_vars));
            b.cobb_douglas.push_back({ict, "log(" + cd.target_analysis + " efficiency)",
                                      static_cast<std::size_t>(design.rows()), ols(design, y)});
        }
    }
}

inline bool stage_configured(const PipelineConfig& c, std::string_view stage) {
    if (stage == "dea") return true;
    if (stage == "cluster") return c.cluster.has_value();
    return c.pls.has_value();
}

/// Runs one stage on `b`, recording its status. A stage whose predecessor
/// was skipped, or that is not configured, is skipped. Errors are captured
/// into the bundle rather than thrown.
inline void run_stage(std::string_view stage, const PipelineConfig& c, const PanelDataset* raw, ReportBundle& b,
                      const std::vector<std::string>& period_override = {}) {
    const auto& names = stage_names();
    const auto pos = static_cast<std::size_t>(std::find(names.begin(), names.end(), stage) - names.begin());
    if (pos == names.size()) throw UsageError("unknown stage '" + std::string(stage) + "'");
    if (pos > 0) {
        const auto prior = b.stage(names[pos - 1]);
        if (prior == StageStatus::failed || prior == StageStatus::not_run)
            throw UsageError("stage " + std::string(stage) + " needs a completed " + names[pos - 1] + " stage first");
        if (prior == StageStatus::skipped) {
            b.set_stage(stage, StageStatus::skipped);
            return;
        }
    }
    if (!stage_configured(c, stage)) {
        b.set_stage(stage, StageStatus::skipped);
        return;
    }
    try {
        if (stage == "dea") run_dea_stage(c, *raw, b, period_override);
        else if (stage == "cluster") run_cluster_stage(c, b);
        else run_pls_stage(c, *raw, b);
        b.set_stage(stage, StageStatus::complete);
    } catch (const Error& e) {
        b.set_stage(stage, StageStatus::failed);
        b.error = StageError{std::string(stage), e.code(), e.what()};
    }
}

/// Fresh bundle for a config: provenance filled, every stage not_run.
inline ReportBundle start_bundle(const PipelineConfig& c) {
    ReportBundle b;
    set_provenance(b, c);
    return b;
}

/// Runs the three stages in order. Stops at the first failing stage and
/// returns what was computed so far; the bundle's status says which.
inline ReportBundle run_pipeline(const PipelineConfig& c, const PanelDataset& raw) {
    require_valid(c);
    ReportBundle b = start_bundle(c);
    for (const auto& s : stage_names()) {
        run_stage(s, c, &raw, b);
        if (b.error) break;
    }
    return b;
}

inline ReportBundle run_pipeline(const PipelineConfig& c) { return run_pipeline(c, load_dataset(c)); }

/// Writes report.json plus each requested format to `directory`.
inline std::vector<std::filesystem::path> write_reports(const ReportBundle& b, const std::filesystem::path& directory,
                                                        const std::vector<std::string>& formats) {
    std::vector<std::filesystem::path> written;
    bool json = false;
    for (const auto& f : formats) {
        json |= f == "json";
        auto w = emit_report(b, directory, f);
        written.insert(written.end(), w.begin(), w.end());
    }
    if (!json) {
        auto w = emit_report(b, directory, "json");
        written.insert(written.end(), w.begin(), w.end());
    }
    return written;
}

// ---------------------------------------------------------------------------
// Demo

/// Config for the synthetic demo panel, as JSON text.
inline std::string demo_config_text(const std::string& panel_file = "demo_panel.csv",
                                    const std::string& output_dir = "reports") {
    Json schema = Json::array();
    for (const auto& v : synthetic::schema())
        schema.push_back({{"name", v.name}, {"role", to_string(v.role)}, {"direction", to_string(v.direction)}});
    Json j;
    j["dataset"] = {{"path", panel_file}, {"schema", schema}, {"undesirable_method", "reciprocal"}};
    j["dea"]["analyses"] = Json::array(
        {{{"name", "ict"}, {"inputs", synthetic::ict_inputs}, {"outputs", synthetic::ict_outputs},
          {"returns_to_scale", "CRS"}, {"orientation", "input"}},
         {{"name", "health"}, {"inputs", synthetic::health_inputs}, {"outputs", synthetic::health_outputs},
          {"returns_to_scale", "CRS"}, {"orientation", "input"}}});
    j["cluster"] = {{"k_max", 6}, {"k_min", 3}, {"restarts", 32}, {"seed", 2007}, {"significance", 0.05}};
    j["pls"] = {{"exogenous", synthetic::pls_exogenous},
                {"endogenous", synthetic::pls_endogenous},
                {"joint", false},
                {"inner_scheme", "path_weighting"},
                {"bootstrap", {{"replicates", 500}, {"seed", 2007}}},
                {"cobb_douglas", {{"health_vars", synthetic::pls_endogenous}, {"target_analysis", "health"}}}};
    j["output"] = {{"directory", output_dir}, {"formats", {"json", "csv", "text"}}};
    return j.dump(2) + "\n";
}

/// Writes demo_panel.csv and demo_config.json into `directory` and returns
/// the config path.
inline std::filesystem::path write_demo(const std::filesystem::path& directory, std::uint64_t seed = 2007) {
    std::ostringstream panel;
    write_panel(panel, synthetic::make_panel(seed));
    write_atomic(directory / "demo_panel.csv", panel.str());
    const auto config = directory / "demo_config.json";
    write_atomic(config, demo_config_text());
    return config;
}

}  // namespace effpipe

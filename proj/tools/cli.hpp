#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "depcost/dataset.hpp"
#include "depcost/design.hpp"
#include "depcost/error.hpp"
#include "depcost/estimate.hpp"
#include "depcost/published.hpp"
#include "depcost/simgen.hpp"
#include "depcost/spec.hpp"
#include "depcost/welfare.hpp"

namespace depcost::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

// ---------------------------------------------------------------------------
// Config

struct ModelRequest {
    ModelName name = ModelName::MNL1;
    /// Starting-value overrides keyed by parameter name.
    json start = json::object();
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    std::string data_path;
    char delimiter = ',';
    ColumnMapping columns;
    std::string lexicographic_rule = "none";
    double income_threshold = 75000.0;

    std::vector<ModelRequest> models;
    TransformKind transform = TransformKind::BoxCox;
    DrawConfig draws;
    bool draws_seed_set = false;
    OptimizerOptions optimizer;

    double dcf_t_max = 30.0;
    double dcf_step = 0.5;
    CostUnit unit = CostUnit::Total12Month;
    std::vector<int> ch{0, 1};
    double quadrature_tolerance = 1e-6;
    std::optional<int> degree;

    PopulationConfig population;

    std::string design_path;
    LevelSets levels;
    ParameterVector priors = published_estimates(ModelName::MNL1);
    double bill_reference = 150.0;
    int improve_budget = 0;

    ModelName truth_model = ModelName::MNL1;
    json truth_params = json::object();

    std::size_t replications = 50;

    std::vector<std::string> results;
    std::vector<std::string> curves;
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
}

inline ModelRequest parse_model_request(const json& m) {
    ModelRequest r;
    if (m.is_string()) {
        r.name = parse_model_name(m.get<std::string>());
        return r;
    }
    check_keys(m, {"name", "start"}, "models[]");
    r.name = parse_model_name(m.at("name").get<std::string>());
    if (m.contains("start")) r.start = m.at("start");
    return r;
}

inline std::vector<ModelRequest> all_models() {
    std::vector<ModelRequest> out;
    for (auto m : kAllModels) out.push_back({m, json::object()});
    return out;
}

inline std::vector<std::string> string_list(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError("'" + where + "' must be a list");
    std::vector<std::string> out;
    for (const auto& v : j) out.push_back(v.get<std::string>());
    return out;
}

inline char parse_delimiter(const std::string& s) {
    if (s == "\\t" || s == "tab") return '\t';
    if (s.size() != 1) throw ConfigError("delimiter must be a single character");
    return s[0];
}

} // namespace detail

/// Strict parse: every key must be known.
inline RunConfig parse_config(const json& j) {
    using detail::check_keys;
    RunConfig c;
    c.models = detail::all_models();
    check_keys(j,
               {"seed", "out_dir", "data", "models", "transform", "draws", "optimizer", "dcf", "population", "design",
                "truth", "recover", "results", "curves"},
               "");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"path", "delimiter", "columns", "lexicographic_rule", "income_threshold"}, "data");
        if (d.contains("path")) c.data_path = d.at("path").get<std::string>();
        if (d.contains("delimiter")) c.delimiter = detail::parse_delimiter(d.at("delimiter").get<std::string>());
        if (d.contains("lexicographic_rule")) c.lexicographic_rule = d.at("lexicographic_rule").get<std::string>();
        if (d.contains("income_threshold")) c.income_threshold = d.at("income_threshold").get<double>();
        if (d.contains("columns")) {
            const auto& cols = d.at("columns");
            auto& m = c.columns;
            std::map<std::string, std::string*> slots{
                {"respondent_id", &m.respondent_id}, {"block", &m.block},     {"scenario", &m.scenario},
                {"dt", &m.dt},                       {"wt", &m.wt},           {"bill", &m.bill},
                {"pct_increase", &m.pct_increase},   {"cost", &m.cost},       {"choice", &m.choice},
                {"income_bracket", &m.income},       {"household_size", &m.household_size},
                {"children", &m.children},           {"age", &m.age},         {"gender", &m.gender},
                {"storm", &m.storm}};
            std::set<std::string> names;
            for (const auto& [k, v] : slots) names.insert(k);
            check_keys(cols, names, "data.columns");
            for (auto it = cols.begin(); it != cols.end(); ++it) *slots.at(it.key()) = it->get<std::string>();
        }
    }
    if (j.contains("models")) {
        const auto& ms = j.at("models");
        if (!ms.is_array() || ms.empty()) throw ConfigError("'models' must be a non-empty list");
        c.models.clear();
        for (const auto& m : ms) c.models.push_back(detail::parse_model_request(m));
    }
    if (j.contains("transform")) c.transform = parse_transform_kind(j.at("transform").get<std::string>());
    if (j.contains("draws")) {
        c.draws = draws_from_json(j.at("draws"));
        c.draws_seed_set = j.at("draws").contains("seed");
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        check_keys(o, {"max_iterations", "gradient_tolerance"}, "optimizer");
        if (o.contains("max_iterations")) c.optimizer.max_iterations = o.at("max_iterations").get<int>();
        if (o.contains("gradient_tolerance")) c.optimizer.gradient_tolerance = o.at("gradient_tolerance").get<double>();
        if (c.optimizer.max_iterations < 0 || !(c.optimizer.gradient_tolerance > 0.0))
            throw ConfigError("optimizer settings out of range");
    }
    if (j.contains("dcf")) {
        const auto& d = j.at("dcf");
        check_keys(d, {"t_max", "step", "unit", "ch", "quadrature_tolerance", "degree"}, "dcf");
        if (d.contains("t_max")) c.dcf_t_max = d.at("t_max").get<double>();
        if (d.contains("step")) c.dcf_step = d.at("step").get<double>();
        if (d.contains("unit")) c.unit = parse_cost_unit(d.at("unit").get<std::string>());
        if (d.contains("ch")) {
            const auto& ch = d.at("ch");
            c.ch.clear();
            if (ch.is_array())
                for (const auto& v : ch) c.ch.push_back(v.get<int>());
            else
                c.ch.push_back(ch.get<int>());
            for (int v : c.ch)
                if (v != 0 && v != 1) throw ConfigError("dcf.ch entries must be 0 or 1");
        }
        if (d.contains("quadrature_tolerance")) c.quadrature_tolerance = d.at("quadrature_tolerance").get<double>();
        if (d.contains("degree")) c.degree = d.at("degree").get<int>();
    }
    if (j.contains("population")) {
        const auto& p = j.at("population");
        check_keys(p, {"n_respondents", "children_flag_rate", "income_split_rate", "bill"}, "population");
        if (p.contains("n_respondents")) c.population.n_respondents = p.at("n_respondents").get<std::size_t>();
        if (p.contains("children_flag_rate")) c.population.children_flag_rate = p.at("children_flag_rate").get<double>();
        if (p.contains("income_split_rate")) c.population.income_split_rate = p.at("income_split_rate").get<double>();
        if (p.contains("bill")) {
            const auto& b = p.at("bill");
            check_keys(b, {"family", "median", "log_scale", "min", "max", "value"}, "population.bill");
            auto& bd = c.population.bill;
            if (b.contains("family")) {
                const auto f = b.at("family").get<std::string>();
                if (f == "lognormal")
                    bd.family = BillFamily::LogNormal;
                else if (f == "degenerate")
                    bd.family = BillFamily::Degenerate;
                else
                    throw ConfigError("unknown bill family '" + f + "'");
            }
            if (b.contains("median")) bd.median = b.at("median").get<double>();
            if (b.contains("log_scale")) bd.log_scale = b.at("log_scale").get<double>();
            if (b.contains("min")) bd.min = b.at("min").get<double>();
            if (b.contains("max")) bd.max = b.at("max").get<double>();
            if (b.contains("value")) bd.value = b.at("value").get<double>();
        }
    }
    if (j.contains("design")) {
        const auto& d = j.at("design");
        check_keys(d, {"path", "levels", "priors", "bill_reference", "improve_budget"}, "design");
        if (d.contains("path")) c.design_path = d.at("path").get<std::string>();
        if (d.contains("levels")) {
            const auto& l = d.at("levels");
            check_keys(l, {"dt", "wt", "p"}, "design.levels");
            if (l.contains("dt")) c.levels.dt = l.at("dt").get<std::vector<double>>();
            if (l.contains("wt")) c.levels.wt = l.at("wt").get<std::vector<double>>();
            if (l.contains("p")) c.levels.pct = l.at("p").get<std::vector<double>>();
        }
        if (d.contains("priors"))
            c.priors = params_from_json(make_spec(ModelName::MNL1), d.at("priors"), c.priors);
        if (d.contains("bill_reference")) c.bill_reference = d.at("bill_reference").get<double>();
        if (d.contains("improve_budget")) c.improve_budget = d.at("improve_budget").get<int>();
        if (c.improve_budget < 0) throw ConfigError("design.improve_budget must be non-negative");
    }
    if (j.contains("truth")) {
        const auto& t = j.at("truth");
        check_keys(t, {"model", "params"}, "truth");
        if (t.contains("model")) c.truth_model = parse_model_name(t.at("model").get<std::string>());
        if (t.contains("params")) c.truth_params = t.at("params");
    }
    if (j.contains("recover")) {
        const auto& r = j.at("recover");
        check_keys(r, {"replications"}, "recover");
        if (r.contains("replications")) c.replications = r.at("replications").get<std::size_t>();
    }
    if (j.contains("results")) c.results = detail::string_list(j.at("results"), "results");
    if (j.contains("curves")) c.curves = detail::string_list(j.at("curves"), "curves");
    return c;
}

inline ParameterVector truth_params(const RunConfig& c, const UtilitySpec& spec) {
    return params_from_json(spec, c.truth_params, published_estimates(c.truth_model));
}

inline DCFConfig dcf_config(const RunConfig& c, int ch) {
    DCFConfig d;
    d.time_grid = uniform_grid(c.dcf_t_max, c.dcf_step);
    d.unit = c.unit;
    d.ch = ch;
    d.transform_variant = c.transform;
    d.quadrature_tolerance = c.quadrature_tolerance;
    validate(d);
    return d;
}

/// The fully resolved configuration, as embedded in every artifact.
inline json to_json(const RunConfig& c) {
    json models = json::array();
    for (const auto& m : c.models) models.push_back({{"name", to_string(m.name)}, {"start", m.start}});
    const auto& cols = c.columns;
    const auto& b = c.population.bill;
    return {{"seed", c.seed},
            {"out_dir", c.out_dir},
            {"data",
             {{"path", c.data_path},
              {"delimiter", std::string(1, c.delimiter)},
              {"lexicographic_rule", c.lexicographic_rule},
              {"income_threshold", c.income_threshold},
              {"columns",
               {{"respondent_id", cols.respondent_id}, {"block", cols.block}, {"scenario", cols.scenario},
                {"dt", cols.dt}, {"wt", cols.wt}, {"bill", cols.bill}, {"pct_increase", cols.pct_increase},
                {"cost", cols.cost}, {"choice", cols.choice}, {"income_bracket", cols.income},
                {"household_size", cols.household_size}, {"children", cols.children}, {"age", cols.age},
                {"gender", cols.gender}, {"storm", cols.storm}}}}},
            {"models", models},
            {"transform", to_string(c.transform)},
            {"draws", draws_to_json(c.draws)},
            {"optimizer",
             {{"max_iterations", c.optimizer.max_iterations}, {"gradient_tolerance", c.optimizer.gradient_tolerance}}},
            {"dcf",
             {{"t_max", c.dcf_t_max},
              {"step", c.dcf_step},
              {"unit", to_string(c.unit)},
              {"ch", c.ch},
              {"quadrature_tolerance", c.quadrature_tolerance},
              {"degree", c.degree ? json(*c.degree) : json()}}},
            {"population",
             {{"n_respondents", c.population.n_respondents},
              {"children_flag_rate", c.population.children_flag_rate},
              {"income_split_rate", c.population.income_split_rate},
              {"bill",
               {{"family", b.family == BillFamily::LogNormal ? "lognormal" : "degenerate"},
                {"median", b.median},
                {"log_scale", b.log_scale},
                {"min", b.min},
                {"max", b.max},
                {"value", b.value}}}}},
            {"design",
             {{"path", c.design_path},
              {"levels", {{"dt", c.levels.dt}, {"wt", c.levels.wt}, {"p", c.levels.pct}}},
              {"priors", params_to_json(make_spec(ModelName::MNL1), c.priors)},
              {"bill_reference", c.bill_reference},
              {"improve_budget", c.improve_budget}}},
            {"truth", {{"model", to_string(c.truth_model)}, {"params", c.truth_params}}},
            {"recover", {{"replications", c.replications}}},
            {"results", c.results},
            {"curves", c.curves}};
}

// ---------------------------------------------------------------------------
// Audit trail

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw NumericalError("sha256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return out.str();
}

/// Collects the inputs one command reads; the hash covers the resolved
/// config and the bytes of every input file, in the order read.
class Audit {
  public:
    Audit(std::string command, const RunConfig& config) : command_(std::move(command)), config_(to_json(config)) {}

    std::string read(const fs::path& p) {
        auto bytes = read_file(p);
        files_.push_back({{"path", p.string()}, {"sha256", sha256_hex(bytes)}});
        blob_ += p.string() + '\0' + bytes + '\0';
        return bytes;
    }

    std::string hash() const { return sha256_hex(config_.dump() + '\0' + blob_); }

    json block() const {
        return {{"command", command_}, {"config", config_}, {"inputs", files_}, {"input_sha256", hash()}};
    }

    std::vector<std::string> comment_lines() const {
        return {"command: " + command_, "config: " + config_.dump(), "inputs: " + files_.dump(),
                "input_sha256: " + hash()};
    }

  private:
    std::string command_;
    json config_;
    json files_ = json::array();
    std::string blob_;
};

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
    if (!out) throw DataError("write failed for " + p.string());
}

inline void write_json(const fs::path& p, json body, const Audit& audit) {
    body["audit"] = audit.block();
    write_text(p, body.dump(2) + "\n");
}

inline std::string with_comments(const std::vector<std::string>& lines, const std::string& body) {
    std::string out;
    for (const auto& l : lines) out += "# " + l + "\n";
    return out + body;
}

// ---------------------------------------------------------------------------
// Commands

struct Context {
    RunConfig config;
    unsigned workers = 1;
    std::ostream& log = std::cerr;
    std::ostream& out = std::cout;

    fs::path out_dir() const { return fs::path(config.out_dir); }
};

inline void announce(Context& ctx, const std::string& what, const fs::path& p) {
    ctx.log << what << ": " << fs::weakly_canonical(fs::absolute(p)).string() << "\n";
}

inline void prepare_out_dir(Context& ctx) {
    announce(ctx, "output directory", ctx.out_dir());
    fs::create_directories(ctx.out_dir());
}

inline Design load_design(Context& ctx, Audit& audit) {
    if (ctx.config.design_path.empty()) return balanced_design(ctx.config.levels);
    std::istringstream in(audit.read(ctx.config.design_path));
    return read_design(in, ctx.config.levels, ctx.config.design_path);
}

inline int cmd_simulate(Context& ctx) {
    const auto& c = ctx.config;
    if (!c.design_path.empty()) announce(ctx, "design", c.design_path);
    prepare_out_dir(ctx);
    Audit audit("simulate", c);
    const auto design = load_design(ctx, audit);
    const auto spec = make_spec(c.truth_model, c.transform);
    const auto truth = truth_params(c, spec);
    PopulationConfig pc = c.population;
    pc.seed = mix_seed(c.seed, 0);
    const auto data = simulate_choices(generate_population(pc, design), spec, truth, mix_seed(c.seed, 1));
    std::ostringstream body;
    auto lines = audit.comment_lines();
    lines.push_back("truth: " + params_to_json(spec, truth).dump());
    write_dataset(body, data, ',', lines);
    const auto path = ctx.out_dir() / "simulated.csv";
    write_text(path, body.str());
    ctx.out << path.string() << ": " << data.n_respondents() << " respondents, " << data.n_observations()
            << " observations\n";
    return kOk;
}

inline EstimationResult load_result(Audit& audit, const fs::path& p) {
    try {
        return result_from_json(json::parse(audit.read(p)));
    } catch (const json::exception& e) {
        throw DataError(p.string() + ": not an estimation result (" + e.what() + ")");
    }
}

inline std::string result_file(ModelName m) { return "estimate_" + to_string(m) + ".json"; }

inline int cmd_estimate(Context& ctx) {
    const auto& c = ctx.config;
    if (c.data_path.empty()) throw ConfigError("estimate needs data.path");
    announce(ctx, "data", c.data_path);
    prepare_out_dir(ctx);
    Audit audit("estimate", c);
    LoadOptions lo;
    lo.columns = c.columns;
    lo.delimiter = c.delimiter;
    std::istringstream in(audit.read(c.data_path));
    const auto raw = parse_dataset(in, lo, c.data_path);
    LexRule rule;
    rule.name = c.lexicographic_rule;
    const auto filtered = filter_lexicographic(raw, rule);
    if (!filtered.excluded.empty())
        ctx.log << "lexicographic rule '" << rule.name << "' excluded " << filtered.excluded.size()
                << " respondents\n";
    std::optional<IncomeSplit> split;

    DrawConfig draws = c.draws;
    if (!c.draws_seed_set) draws.seed = c.seed;
    FitOptions fo;
    fo.optimizer = c.optimizer;
    fo.workers = ctx.workers;

    for (const auto& req : c.models) {
        const ChoiceDataset* data = &filtered.data;
        if (req.name == ModelName::MNL1Low || req.name == ModelName::MNL1High) {
            if (!split) split = split_by_income(filtered.data, c.income_threshold);
            data = req.name == ModelName::MNL1Low ? &split->low : &split->high;
        }
        const auto spec = make_spec(req.name, c.transform);
        ParameterVector start = req.start.empty() ? auto_start(spec, *data, fo)
                                                  : params_from_json(spec, req.start, auto_start(spec, *data, fo));
        const auto r = fit(spec, *data, draws, start, fo);
        auto body = to_json(r);
        body["excluded_respondents"] = filtered.excluded;
        const auto path = ctx.out_dir() / result_file(req.name);
        write_json(path, body, audit);
        ctx.out << std::left << std::setw(10) << to_string(req.name) << " LL=" << std::setprecision(10) << r.ll_final
                << " converged=" << (r.converged ? "true" : "false") << " -> " << path.string() << "\n";
    }
    return kOk;
}

/// Result files named in the config, else any estimate_*.json from the output directory.
inline std::vector<fs::path> result_inputs(const Context& ctx) {
    std::vector<fs::path> out;
    if (!ctx.config.results.empty()) {
        for (const auto& r : ctx.config.results) out.emplace_back(r);
        return out;
    }
    if (!fs::exists(ctx.out_dir())) return out;
    for (const auto& req : ctx.config.models) {
        const auto p = ctx.out_dir() / result_file(req.name);
        if (fs::exists(p)) out.push_back(p);
    }
    return out;
}

inline int cmd_dcf(Context& ctx) {
    const auto& c = ctx.config;
    const auto inputs = result_inputs(ctx);
    for (const auto& p : inputs) announce(ctx, "results", p);
    prepare_out_dir(ctx);
    Audit audit("dcf", c);
    struct Source {
        UtilitySpec spec;
        ParameterVector params;
        std::string origin;
    };
    std::vector<Source> sources;
    for (const auto& p : inputs) {
        const auto r = load_result(audit, p);
        sources.push_back({with_variant(r.spec, c.transform), r.estimates, p.string()});
    }
    if (inputs.empty()) {
        ctx.log << "no result files; using published point estimates\n";
        for (const auto& req : c.models)
            sources.push_back({make_spec(req.name, c.transform), published_estimates(req.name), "published"});
    }
    for (const auto& s : sources) {
        for (int ch : c.ch) {
            if (ch == 1 && !s.spec.has_children_interaction) continue;
            const auto curve = dcf_curve(s.spec, s.params, dcf_config(c, ch));
            std::ostringstream body;
            write_curve(body, curve);
            auto lines = audit.comment_lines();
            lines.push_back("parameters: " + s.origin + " " + params_to_json(s.spec, s.params).dump());
            lines.push_back("transform: " + to_string(curve.transform));
            const auto path = ctx.out_dir() / ("dcf_" + s.spec.label() + "_ch" + std::to_string(ch) + ".csv");
            write_text(path, with_comments(lines, body.str()));
            ctx.out << std::left << std::setw(10) << s.spec.label() << " ch=" << ch << " DCF(" << curve.times.back()
                    << ")=" << std::setprecision(10) << curve.costs.back() << " " << to_string(c.unit) << " -> "
                    << path.string() << "\n";
        }
    }
    return kOk;
}

inline int cmd_fit_curve(Context& ctx) {
    const auto& c = ctx.config;
    std::vector<fs::path> inputs;
    for (const auto& s : c.curves) inputs.emplace_back(s);
    if (inputs.empty() && fs::exists(ctx.out_dir())) {
        for (const auto& e : fs::directory_iterator(ctx.out_dir())) {
            const auto name = e.path().filename().string();
            if (name.rfind("dcf_", 0) == 0 && e.path().extension() == ".csv") inputs.push_back(e.path());
        }
        std::sort(inputs.begin(), inputs.end());
    }
    if (inputs.empty()) throw ConfigError("fit-curve needs curve files (run dcf first or set 'curves')");
    for (const auto& p : inputs) announce(ctx, "curve", p);
    prepare_out_dir(ctx);
    Audit audit("fit-curve", c);
    for (const auto& p : inputs) {
        std::istringstream in(audit.read(p));
        auto curve = read_curve(in, p.string());
        const auto spec = make_spec(curve.spec_name, c.transform);
        curve.transform = with_variant(spec, c.transform).transform.kind;
        const int degree = c.degree.value_or(default_poly_degree(spec));
        const auto f = fit_polynomial(curve, degree);
        auto body = to_json(f, curve);
        body["source_curve"] = p.string();
        const auto path = ctx.out_dir() / ("polyfit_" + p.stem().string().substr(4) + ".json");
        write_json(path, body, audit);
        ctx.out << std::left << std::setw(16) << p.stem().string().substr(4) << " degree=" << degree
                << " adjR2=" << std::setprecision(6) << f.adj_r_squared << " -> " << path.string() << "\n";
    }
    return kOk;
}

inline int cmd_design_eval(Context& ctx) {
    const auto& c = ctx.config;
    if (!c.design_path.empty()) announce(ctx, "design", c.design_path);
    prepare_out_dir(ctx);
    Audit audit("design-eval", c);
    const auto design = load_design(ctx, audit);
    validate(design);
    auto describe = [&](const Design& d) {
        const auto e = d_error(d, c.priors, c.bill_reference);
        return json{{"d_error", e.singular ? json() : json(e.value)},
                    {"singular", e.singular},
                    {"information_rank", e.rank},
                    {"balance", to_json(level_balance_report(d))},
                    {"n_scenarios", d.scenarios.size()},
                    {"n_blocks", d.block_ids().size()}};
    };
    json body{{"design", describe(design)}};
    if (c.improve_budget > 0) {
        const auto imp = improve_design(design, c.priors, c.improve_budget, c.seed, c.bill_reference);
        json trace = json::array();
        for (double v : imp.trace) trace.push_back(std::isfinite(v) ? json(v) : json());
        body["improved"] = describe(imp.design);
        body["improved"]["accepted_swaps"] = imp.accepted;
        body["improved"]["trace"] = trace;
        std::ostringstream csv;
        write_design(csv, imp.design);
        write_text(ctx.out_dir() / "design_improved.csv", with_comments(audit.comment_lines(), csv.str()));
    }
    const auto path = ctx.out_dir() / "design_eval.json";
    write_json(path, body, audit);
    const auto& dj = body["design"]["d_error"];
    ctx.out << "D-error=" << (dj.is_null() ? std::string("singular") : dj.dump()) << " -> " << path.string() << "\n";
    return kOk;
}

inline int cmd_recover(Context& ctx) {
    const auto& c = ctx.config;
    if (!c.design_path.empty()) announce(ctx, "design", c.design_path);
    prepare_out_dir(ctx);
    Audit audit("recover", c);
    const auto design = load_design(ctx, audit);
    const auto spec = make_spec(c.truth_model, c.transform);
    const auto truth = truth_params(c, spec);
    PopulationConfig pc = c.population;
    pc.seed = c.seed;
    RecoveryOptions ro;
    ro.fit.optimizer = c.optimizer;
    ro.workers = ctx.workers;
    DrawConfig draws = c.draws;
    const auto rep = recovery_experiment(spec, truth, pc, design, draws, c.replications, ro);
    auto body = to_json(rep);
    json fits = json::array();
    for (const auto& f : rep.fits) fits.push_back(to_json(f));
    body["fits"] = fits;
    const auto path = ctx.out_dir() / ("recover_" + spec.label() + ".json");
    write_json(path, body, audit);
    ctx.out << spec.label() << ": " << rep.converged << "/" << rep.replications << " converged\n";
    for (const auto& p : rep.parameters)
        ctx.out << "  " << std::left << std::setw(10) << p.name << " truth=" << p.truth << " bias=" << p.bias
                << " meanSE=" << p.mean_se << " coverage=" << p.coverage << "\n";
    ctx.out << "-> " << path.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// Report

inline std::string cell(const EstimationResult& r, Param p) {
    const auto layout = param_layout(r.spec);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i] != p) continue;
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << r.values[i];
        if (std::isfinite(r.t_stats[i])) s << " (" << std::setprecision(2) << r.t_stats[i] << ")";
        return s.str();
    }
    return "";
}

/// Table with one column per result: estimate (t-stat) rows, then fit rows.
inline std::string report_table(const std::vector<EstimationResult>& results) {
    std::vector<std::pair<std::string, std::vector<std::string>>> rows;
    auto param_row = [&](const std::string& label, Param p) {
        std::vector<std::string> cells;
        for (const auto& r : results) cells.push_back(cell(r, p));
        rows.emplace_back(label, cells);
    };
    param_row("Constant", Param::ASC);
    param_row("Cost", Param::BetaC);
    param_row("Deprivation Time", Param::BetaT);
    param_row("Box-Cox parameter", Param::Tau);
    param_row("Exponential time", Param::BetaTExp);
    param_row("Children-time", Param::DeltaCHT);
    param_row("Standard deviation, panel effect", Param::SigmaXi);
    auto stat_row = [&](const std::string& label, auto value) {
        std::vector<std::string> cells;
        for (const auto& r : results) cells.push_back(value(r));
        rows.emplace_back(label, cells);
    };
    auto fixed = [](double v, int prec) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(prec) << v;
        return s.str();
    };
    stat_row("N observations", [](const EstimationResult& r) { return std::to_string(r.n_obs); });
    stat_row("N respondents", [](const EstimationResult& r) { return std::to_string(r.n_respondents); });
    stat_row("Log-likelihood", [&](const EstimationResult& r) { return fixed(r.ll_final, 2); });
    stat_row("Null log-likelihood", [&](const EstimationResult& r) { return fixed(r.ll_null, 2); });
    stat_row("Adjusted rho-square", [&](const EstimationResult& r) { return fixed(r.adj_rho_sq, 4); });
    stat_row("Converged", [](const EstimationResult& r) { return std::string(r.converged ? "yes" : "no"); });

    std::size_t label_w = 0;
    for (const auto& [l, c] : rows) label_w = std::max(label_w, l.size());
    std::vector<std::size_t> col_w;
    for (const auto& r : results) col_w.push_back(r.spec.label().size());
    for (const auto& [l, c] : rows)
        for (std::size_t i = 0; i < c.size(); ++i) col_w[i] = std::max(col_w[i], c[i].size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(label_w)) << "";
    for (std::size_t i = 0; i < results.size(); ++i)
        out << "  " << std::right << std::setw(static_cast<int>(col_w[i])) << results[i].spec.label();
    out << "\n";
    for (const auto& [l, c] : rows) {
        out << std::left << std::setw(static_cast<int>(label_w)) << l;
        for (std::size_t i = 0; i < c.size(); ++i) out << "  " << std::right << std::setw(static_cast<int>(col_w[i])) << c[i];
        out << "\n";
    }
    out << "\nCells: estimate (t-statistic). Adjusted rho-square = 1 - (LL - K) / LL0 with the equal-shares\n"
           "null LL0 = N ln 0.5. Published tables computed under an unstated null can differ: for\n"
           "LL = -1494.71, K = 3, N = 2720 this convention gives "
        << fixed(adjusted_rho_square(-1494.71, equal_shares_null(2720), 3), 4)
        << ", whereas 0.271 is printed in the source table.\n";
    return out.str();
}

inline int cmd_report(Context& ctx) {
    const auto inputs = result_inputs(ctx);
    if (inputs.empty()) throw ConfigError("report needs result files (run estimate first or set 'results')");
    for (const auto& p : inputs) announce(ctx, "results", p);
    prepare_out_dir(ctx);
    Audit audit("report", ctx.config);
    std::vector<EstimationResult> results;
    for (const auto& p : inputs) results.push_back(load_result(audit, p));
    const auto table = report_table(results);
    const auto path = ctx.out_dir() / "report.txt";
    write_text(path, with_comments(audit.comment_lines(), table));
    ctx.out << table;
    return kOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"simulate", "estimate", "dcf", "fit-curve", "design-eval", "recover",
                                            "report"};
    return c;
}

inline int dispatch(const std::string& command, Context& ctx) {
    if (command == "simulate") return cmd_simulate(ctx);
    if (command == "estimate") return cmd_estimate(ctx);
    if (command == "dcf") return cmd_dcf(ctx);
    if (command == "fit-curve") return cmd_fit_curve(ctx);
    if (command == "design-eval") return cmd_design_eval(ctx);
    if (command == "recover") return cmd_recover(ctx);
    if (command == "report") return cmd_report(ctx);
    throw ConfigError("unknown command '" + command + "'");
}

/// Parses flags, loads the config, runs one command, and maps errors to exit codes.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Deprivation cost estimation from stated-preference choices"};
    app.require_subcommand(1);
    std::string config_path, model, out_dir, unit, transform;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> draws;
    unsigned workers = 1;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--model", model, "model name(s), comma separated");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--draws", draws, "simulation draws per respondent");
    app.add_option("--unit", unit, "cost unit")->check(CLI::IsMember({"monthly", "total12"}));
    app.add_option("--transform", transform, "tau transform variant")->check(CLI::IsMember({"boxcox", "power"}));
    app.add_option("--workers", workers, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    app.fallthrough();
    for (const auto& c : commands()) app.add_subcommand(c, "");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfig;
    }

    try {
        json j = json::object();
        if (!config_path.empty()) {
            err << "config: " << fs::weakly_canonical(fs::absolute(config_path)).string() << "\n";
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot open config " + config_path);
            try {
                j = json::parse(in);
            } catch (const json::parse_error& e) {
                throw ConfigError(std::string("config is not valid JSON: ") + e.what());
            }
        }
        Context ctx{parse_config(j), workers, err, out};
        auto& c = ctx.config;
        if (seed) c.seed = *seed;
        if (!out_dir.empty()) c.out_dir = out_dir;
        if (draws) {
            c.draws.n_draws = *draws;
            validate(c.draws);
        }
        if (!unit.empty()) c.unit = parse_cost_unit(unit);
        if (!transform.empty()) c.transform = parse_transform_kind(transform);
        if (!model.empty()) {
            c.models.clear();
            std::stringstream s(model);
            std::string name;
            while (std::getline(s, name, ',')) c.models.push_back({parse_model_name(csv::trim(name)), json::object()});
            c.truth_model = c.models.front().name;
        }
        const auto& sub = app.get_subcommands().front()->get_name();
        return dispatch(sub, ctx);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kData;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        err << "numerical error: " << e.what() << "\n";
        return kNumerical;
    }
}

} // namespace depcost::cli

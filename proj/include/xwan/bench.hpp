#pragma once

// Benchmark front end: JSON run configs (schema-validated, unknown keys
// rejected), CSV metrics, JSON summaries, solution-grid heatmaps as
// self-contained SVG, and the train/compare/sweep orchestration behind the
// command-line tool. Formats are plain text and written with fixed precision
// so identical runs produce identical bytes.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xwan/trainer.hpp"

namespace xwan::bench {

namespace fs = std::filesystem;
using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDiverged = 2;

// --- run configuration ----------------------------------------------------------------

struct DomainOverride {
    bool present = false;
    std::string kind;  // hypercube | ball | hourglass
    int dim = 0;
    std::vector<double> center;
    double radius = 0.5;
    double horizon = 1.0;
};

struct RunConfig {
    trainer::TrainConfig train;
    DomainOverride domain_override;
    std::string out_dir;
};

namespace detail {

inline void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
            throw ConfigError("config: unknown key '" + where + key + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Parse and validate a run config document. Defaults mirror the benchmark
/// hyperparameter table; unknown keys anywhere are rejected.
inline RunConfig parse_config(const json& j) {
    RunConfig rc;
    detail::require_keys(j, "", {"problem", "domain", "model", "training", "eval", "output"});
    if (j.contains("problem")) {
        const auto& p = j.at("problem");
        detail::require_keys(p, "problem.", {"preset", "dim"});
        detail::read(p, "preset", rc.train.preset);
        detail::read(p, "dim", rc.train.dim);
    }
    if (j.contains("domain")) {
        const auto& d = j.at("domain");
        detail::require_keys(d, "domain.", {"kind", "dim", "center", "radius", "horizon"});
        if (d.contains("kind")) {
            rc.domain_override.present = true;
            detail::read(d, "kind", rc.domain_override.kind);
            rc.domain_override.dim = rc.train.dim;
            detail::read(d, "dim", rc.domain_override.dim);
            detail::read(d, "center", rc.domain_override.center);
            detail::read(d, "radius", rc.domain_override.radius);
            detail::read(d, "horizon", rc.domain_override.horizon);
        } else if (!d.empty()) {
            throw ConfigError("config: domain override needs a 'kind'");
        }
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::require_keys(m, "model.",
                             {"primal_kind", "dnn_hidden", "phi_hidden", "xnode_h_dim", "xnode_vec_hidden",
                              "xnode_init_hidden", "substeps"});
        if (m.contains("primal_kind"))
            rc.train.primal_kind = trainer::primal_kind_from_string(m.at("primal_kind").get<std::string>());
        detail::read(m, "dnn_hidden", rc.train.dnn_hidden);
        detail::read(m, "phi_hidden", rc.train.phi_hidden);
        detail::read(m, "xnode_h_dim", rc.train.xnode_h_dim);
        detail::read(m, "xnode_vec_hidden", rc.train.xnode_vec_hidden);
        detail::read(m, "xnode_init_hidden", rc.train.xnode_init_hidden);
        detail::read(m, "substeps", rc.train.substeps);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        detail::require_keys(t, "training.",
                             {"n_r", "n_b", "n_t", "k_u", "k_phi", "alpha", "gamma", "tau_primal", "tau_eta",
                              "max_epochs", "epsilon", "seed", "threads"});
        detail::read(t, "n_r", rc.train.n_r);
        detail::read(t, "n_b", rc.train.n_b);
        detail::read(t, "n_t", rc.train.n_t);
        detail::read(t, "k_u", rc.train.k_u);
        detail::read(t, "k_phi", rc.train.k_phi);
        detail::read(t, "alpha", rc.train.alpha);
        detail::read(t, "gamma", rc.train.gamma);
        detail::read(t, "tau_primal", rc.train.tau_primal);
        detail::read(t, "tau_eta", rc.train.tau_eta);
        detail::read(t, "max_epochs", rc.train.max_epochs);
        detail::read(t, "epsilon", rc.train.epsilon);
        detail::read(t, "seed", rc.train.seed);
        detail::read(t, "threads", rc.train.threads);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::require_keys(e, "eval.", {"points", "trials", "every", "stop_points"});
        detail::read(e, "points", rc.train.eval_points);
        detail::read(e, "trials", rc.train.eval_trials);
        detail::read(e, "every", rc.train.eval_every);
        detail::read(e, "stop_points", rc.train.eval_points_stop);
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        detail::require_keys(o, "output.", {"dir"});
        detail::read(o, "dir", rc.out_dir);
    }
    rc.train.validate();
    return rc;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config: parse failure in '" + path + "': " + e.what());
    }
    return parse_config(j);
}

inline json config_echo(const RunConfig& rc) {
    const auto& t = rc.train;
    json j = {{"problem", {{"preset", t.preset}, {"dim", t.dim}}},
              {"model",
               {{"primal_kind", trainer::to_string(t.primal_kind)},
                {"dnn_hidden", t.dnn_hidden},
                {"phi_hidden", t.phi_hidden},
                {"xnode_h_dim", t.xnode_h_dim},
                {"xnode_vec_hidden", t.xnode_vec_hidden},
                {"xnode_init_hidden", t.xnode_init_hidden},
                {"substeps", t.substeps}}},
              {"training",
               {{"n_r", t.n_r},
                {"n_b", t.n_b},
                {"n_t", t.n_t},
                {"k_u", t.k_u},
                {"k_phi", t.k_phi},
                {"alpha", t.resolved_alpha()},
                {"gamma", t.resolved_gamma()},
                {"tau_primal", t.resolved_tau_primal()},
                {"tau_eta", t.tau_eta},
                {"max_epochs", t.max_epochs},
                {"epsilon", t.epsilon},
                {"seed", t.seed},
                {"threads", t.threads}}},
              {"eval",
               {{"points", t.eval_points},
                {"trials", t.eval_trials},
                {"every", t.eval_every},
                {"stop_points", t.eval_points_stop}}},
              {"output", {{"dir", rc.out_dir}}}};
    if (rc.domain_override.present) {
        json d = {{"kind", rc.domain_override.kind}, {"dim", rc.domain_override.dim}, {"horizon", rc.domain_override.horizon}};
        if (rc.domain_override.kind == "ball") {
            d["center"] = rc.domain_override.center;
            d["radius"] = rc.domain_override.radius;
        }
        j["domain"] = d;
    }
    return j;
}

/// Build the preset, applying any domain override (the manufactured data are
/// closed forms, so they remain exact on the overridden domain).
inline pde::Preset build_preset(const RunConfig& rc) {
    auto preset = pde::make_preset(rc.train.preset, rc.train.dim);
    if (rc.domain_override.present) {
        const auto& o = rc.domain_override;
        domain::DomainSpec dom;
        if (o.kind == "hypercube") {
            dom = domain::make_cube(o.dim > 0 ? o.dim : rc.train.dim, o.horizon);
        } else if (o.kind == "ball") {
            auto c = o.center;
            if (c.empty()) c.assign(static_cast<std::size_t>(o.dim > 0 ? o.dim : rc.train.dim), 0.5);
            dom = domain::make_ball(c, o.radius, o.horizon);
        } else if (o.kind == "hourglass") {
            dom = domain::make_hourglass();
        } else {
            throw ConfigError("config: unknown domain kind '" + o.kind + "'");
        }
        if (dom.dim() != preset.domain.dim())
            throw ConfigError("config: domain override dimension does not match the problem");
        preset.domain = dom;
    }
    return preset;
}

// --- metrics and summaries --------------------------------------------------------------

inline void write_metrics_csv(const fs::path& path, const std::vector<trainer::MetricsRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bench: cannot write " + path.string());
    out << "epoch,wall_time_s,l_int,l_bdry,l_init,total,rel_err,rel_err_se\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << detail::fmt(r.wall_s) << ',' << detail::fmt(r.loss.l_int) << ','
            << detail::fmt(r.loss.l_bdry) << ',' << detail::fmt(r.loss.l_init) << ','
            << detail::fmt(r.loss.total) << ',' << detail::fmt(r.rel_err) << ',' << detail::fmt(r.rel_err_se)
            << '\n';
    }
}

inline json summary_json(const RunConfig& rc, const trainer::TrainResult& result) {
    auto [n_eps, t_eps] = trainer::n_epsilon_t_epsilon(result.history, rc.train.epsilon);
    json j = {{"preset", rc.train.preset},
              {"primal_kind", trainer::to_string(rc.train.primal_kind)},
              {"seed", rc.train.seed},
              {"epsilon", rc.train.epsilon},
              {"final_rel_err", result.final_rel_err},
              {"final_rel_err_se", result.final_rel_err_se},
              {"n_epsilon", n_eps ? json(*n_eps) : json(nullptr)},
              {"t_epsilon_s", t_eps ? json(*t_eps) : json(nullptr)},
              {"epochs_run", result.epochs_run},
              {"wall_time_s", result.wall_s},
              {"time_per_epoch_s", result.time_per_epoch()},
              {"stop_reason", trainer::to_string(result.stop)},
              {"divergence_retries", result.divergence_retries},
              {"config", json()}};
    j["config"] = config_echo(rc);
    return j;
}

/// Schema check used both before writing and after reading summaries back.
inline void validate_summary(const json& j) {
    const char* required_numbers[] = {"final_rel_err", "final_rel_err_se", "epochs_run",
                                      "wall_time_s",   "time_per_epoch_s", "epsilon"};
    for (const char* k : required_numbers)
        if (!j.contains(k) || !j.at(k).is_number()) throw ConfigError(std::string("summary: bad field '") + k + "'");
    for (const char* k : {"preset", "primal_kind", "stop_reason"})
        if (!j.contains(k) || !j.at(k).is_string()) throw ConfigError(std::string("summary: bad field '") + k + "'");
    for (const char* k : {"n_epsilon", "t_epsilon_s"})
        if (!j.contains(k) || (!j.at(k).is_null() && !j.at(k).is_number()))
            throw ConfigError(std::string("summary: bad field '") + k + "'");
    if (!j.contains("config") || !j.at("config").is_object()) throw ConfigError("summary: bad field 'config'");
    parse_config(j.at("config"));  // config echo must itself be a valid config
}

// --- solution grids and heatmaps -----------------------------------------------------------

/// Values of a predictor on a 2-d slice at fixed time; remaining coordinates
/// pinned to 0. Cells the predictor cannot evaluate hold NaN.
struct SolutionGrid {
    int nx = 0, ny = 0;
    int axis1 = 0, axis2 = 1;
    double t = 1.0;
    double lo1 = 0.0, hi1 = 1.0, lo2 = 0.0, hi2 = 1.0;
    std::vector<double> values;          // nx * ny, row-major in axis2 (rows) over axis1 (cols)
    std::vector<double> error;           // same shape; empty when no reference

    double at(int i, int j) const { return values[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)]; }
};

inline SolutionGrid eval_grid(const std::function<double(double, const double*)>& predictor,
                              const std::function<double(double, const double*)>* reference, int dim,
                              const domain::Box& box, double t, int nx, int ny, int axis1 = 0, int axis2 = 1) {
    if (axis1 == axis2 || axis1 >= dim || axis2 >= dim) throw ConfigError("bench: bad grid axes");
    SolutionGrid g;
    g.nx = nx;
    g.ny = ny;
    g.axis1 = axis1;
    g.axis2 = axis2;
    g.t = t;
    g.lo1 = box.lo[static_cast<std::size_t>(axis1)];
    g.hi1 = box.hi[static_cast<std::size_t>(axis1)];
    g.lo2 = box.lo[static_cast<std::size_t>(axis2)];
    g.hi2 = box.hi[static_cast<std::size_t>(axis2)];
    g.values.resize(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    if (reference) g.error.resize(g.values.size());
    std::vector<double> x(static_cast<std::size_t>(dim), 0.0);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            x.assign(static_cast<std::size_t>(dim), 0.0);
            x[static_cast<std::size_t>(axis1)] = nx == 1 ? g.lo1 : g.lo1 + (g.hi1 - g.lo1) * i / (nx - 1);
            x[static_cast<std::size_t>(axis2)] = ny == 1 ? g.lo2 : g.lo2 + (g.hi2 - g.lo2) * j / (ny - 1);
            const double v = predictor(t, x.data());
            g.values[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)] = v;
            if (reference)
                g.error[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)] =
                    std::abs(v - (*reference)(t, x.data()));
        }
    }
    return g;
}

inline void write_grid_csv(const SolutionGrid& g, std::span<const double> data, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bench: cannot write " + path.string());
    out << "x" << g.axis1 + 1 << "\\x" << g.axis2 + 1;
    for (int i = 0; i < g.nx; ++i)
        out << ',' << detail::fmt(g.nx == 1 ? g.lo1 : g.lo1 + (g.hi1 - g.lo1) * i / (g.nx - 1));
    out << '\n';
    for (int j = 0; j < g.ny; ++j) {
        out << detail::fmt(g.ny == 1 ? g.lo2 : g.lo2 + (g.hi2 - g.lo2) * j / (g.ny - 1));
        for (int i = 0; i < g.nx; ++i)
            out << ',' << detail::fmt(data[static_cast<std::size_t>(j) * static_cast<std::size_t>(g.nx) + static_cast<std::size_t>(i)]);
        out << '\n';
    }
}

namespace detail {

/// 256-step linear color map through dark blue, cyan, yellow, red.
inline std::string heat_color(double u) {
    static const double stops[4][3] = {{13, 8, 135}, {33, 145, 140}, {253, 231, 37}, {190, 0, 38}};
    u = std::clamp(u, 0.0, 1.0);
    const int idx = static_cast<int>(std::round(u * 255.0));
    const double s = idx / 255.0 * 3.0;
    const int seg = std::min(2, static_cast<int>(s));
    const double f = s - seg;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(std::round(stops[seg][0] + f * (stops[seg + 1][0] - stops[seg][0]))),
                  static_cast<int>(std::round(stops[seg][1] + f * (stops[seg + 1][1] - stops[seg][1]))),
                  static_cast<int>(std::round(stops[seg][2] + f * (stops[seg + 1][2] - stops[seg][2]))));
    return buf;
}

}  // namespace detail

/// Rect-per-cell SVG with min/max annotated; NaN cells rendered gray.
inline void emit_heatmap(const SolutionGrid& g, std::span<const double> data, const fs::path& path,
                         const std::string& title) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : data)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 0.0;
    }
    const int cell = 10, margin = 40, footer = 30;
    const int w = margin * 2 + g.nx * cell, h = margin + footer + g.ny * cell;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bench: cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    out << "<text x=\"" << margin << "\" y=\"20\" font-family=\"monospace\" font-size=\"12\">" << title
        << "</text>\n";
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const double v = data[static_cast<std::size_t>(j) * static_cast<std::size_t>(g.nx) + static_cast<std::size_t>(i)];
            std::string fill = "#b0b0b0";
            if (std::isfinite(v)) fill = detail::heat_color(hi > lo ? (v - lo) / (hi - lo) : 0.5);
            // y axis points up: row j sits near the bottom for low x2
            const int px = margin + i * cell;
            const int py = margin + (g.ny - 1 - j) * cell;
            out << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\"" << cell << "\" height=\"" << cell
                << "\" fill=\"" << fill << "\"/>\n";
        }
    }
    out << "<text x=\"" << margin << "\" y=\"" << margin + g.ny * cell + 20
        << "\" font-family=\"monospace\" font-size=\"12\">min " << detail::fmt(lo) << "  max " << detail::fmt(hi)
        << "</text>\n";
    out << "</svg>\n";
}

// --- commands -----------------------------------------------------------------------------

namespace detail {

inline int prepare_out_dir(const fs::path& dir, bool force) {
    std::error_code ec;
    if (fs::exists(dir) && !fs::is_empty(dir, ec) && !force) {
        std::cerr << "error: output directory '" << dir.string() << "' is not empty (use --force)\n";
        return kExitConfig;
    }
    fs::create_directories(dir, ec);
    if (ec) {
        std::cerr << "error: cannot create '" << dir.string() << "': " << ec.message() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}

inline void write_run_outputs(const fs::path& dir, const RunConfig& rc, const trainer::TrainResult& result) {
    write_metrics_csv(dir / "metrics.csv", result.history);
    json params = {{"primal", result.model->params_to_json()},
                   {"phi", nets::to_json(result.phi)}};
    std::ofstream pout(dir / "params.json");
    pout << params.dump(2) << '\n';
    json summary = summary_json(rc, result);
    validate_summary(summary);
    std::ofstream sout(dir / "summary.json");
    sout << summary.dump(2) << '\n';
}

struct RunOutcome {
    trainer::TrainResult result;
    RunConfig rc;
};

inline RunOutcome run_one(RunConfig rc, const fs::path& dir) {
    auto preset = build_preset(rc);
    std::ofstream eout(dir / "config_echo.json");
    eout << config_echo(rc).dump(2) << '\n';
    eout.close();
    auto result = trainer::train(rc.train, preset);
    write_run_outputs(dir, rc, result);
    return {std::move(result), std::move(rc)};
}

}  // namespace detail

struct CliOptions {
    std::string config_path, out_dir, params_path, sweep_path;
    bool force = false, use_exact = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    double t = 1.0;
    int nx = 50, ny = 50, axis1 = 0, axis2 = 1;
};

inline RunConfig configure(const CliOptions& opt) {
    RunConfig rc = load_config(opt.config_path);
    if (!opt.out_dir.empty()) rc.out_dir = opt.out_dir;
    if (rc.out_dir.empty()) throw ConfigError("config: no output directory (set output.dir or --out)");
    if (opt.seed) rc.train.seed = *opt.seed;
    if (opt.threads) rc.train.threads = *opt.threads;
    rc.train.validate();
    return rc;
}

inline int cmd_train(const CliOptions& opt) {
    try {
        RunConfig rc = configure(opt);
        const fs::path dir(rc.out_dir);
        if (int e = detail::prepare_out_dir(dir, opt.force); e != kExitOk) return e;
        auto outcome = detail::run_one(rc, dir);
        if (outcome.result.stop == trainer::StopReason::Diverged) {
            std::cerr << "error: training diverged after " << outcome.result.divergence_retries << " retries\n";
            return kExitDiverged;
        }
        std::cout << "final_rel_err " << outcome.result.final_rel_err << " (epochs " << outcome.result.epochs_run
                  << ", " << trainer::to_string(outcome.result.stop) << ")\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

inline void write_compare_csv(const fs::path& path, const std::vector<std::pair<std::string, detail::RunOutcome>>& rows,
                              double epsilon) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bench: cannot write " + path.string());
    out << "model,relative_error,relative_error_se,time_per_epoch_s,n_epsilon,t_epsilon_s,stop_reason\n";
    for (const auto& [name, outcome] : rows) {
        auto [n_eps, t_eps] = trainer::n_epsilon_t_epsilon(outcome.result.history, epsilon);
        out << name << ',' << detail::fmt(outcome.result.final_rel_err) << ','
            << detail::fmt(outcome.result.final_rel_err_se) << ',' << detail::fmt(outcome.result.time_per_epoch())
            << ',' << (n_eps ? std::to_string(*n_eps) : "not_reached") << ','
            << (t_eps ? detail::fmt(*t_eps) : "not_reached") << ',' << trainer::to_string(outcome.result.stop)
            << '\n';
    }
}

/// Train both primal kinds with the shared seed and plan streams, then emit
/// the side-by-side comparison table.
inline int cmd_compare(const CliOptions& opt) {
    try {
        std::ifstream in(opt.config_path);
        if (!in) throw ConfigError("config: cannot read '" + opt.config_path + "'");
        json j;
        in >> j;
        if (j.contains("model") && j.at("model").contains("primal_kind"))
            throw ConfigError("config: compare chooses the primal kinds itself; drop model.primal_kind");
        RunConfig base = parse_config(j);
        if (!opt.out_dir.empty()) base.out_dir = opt.out_dir;
        if (base.out_dir.empty()) throw ConfigError("config: no output directory (set output.dir or --out)");
        if (opt.seed) base.train.seed = *opt.seed;
        if (opt.threads) base.train.threads = *opt.threads;
        const fs::path dir(base.out_dir);
        if (int e = detail::prepare_out_dir(dir, opt.force); e != kExitOk) return e;

        std::vector<std::pair<std::string, detail::RunOutcome>> rows;
        for (auto kind : {trainer::PrimalKind::Xnode, trainer::PrimalKind::Dnn}) {
            RunConfig rc = base;
            rc.train.primal_kind = kind;
            rc.out_dir = (dir / trainer::to_string(kind)).string();
            fs::create_directories(rc.out_dir);
            rows.emplace_back(trainer::to_string(kind), detail::run_one(rc, rc.out_dir));
        }
        write_compare_csv(dir / "compare.csv", rows, base.train.epsilon);
        bool diverged = false;
        for (const auto& [name, outcome] : rows) {
            std::cout << name << ": final_rel_err " << outcome.result.final_rel_err << " epochs "
                      << outcome.result.epochs_run << '\n';
            diverged |= outcome.result.stop == trainer::StopReason::Diverged;
        }
        return diverged ? kExitDiverged : kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

// --- sweeps --------------------------------------------------------------------------------

struct SweepSpec {
    struct Parameter {
        std::string path;  // dotted config path, e.g. training.tau_primal
        std::vector<json> values;
    };
    std::vector<Parameter> parameters;
};

inline SweepSpec load_sweep_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("sweep: cannot read '" + path + "'");
    json j;
    in >> j;
    detail::require_keys(j, "sweep.", {"parameters"});
    SweepSpec spec;
    for (const auto& p : j.at("parameters")) {
        detail::require_keys(p, "sweep.parameters.", {"path", "values"});
        SweepSpec::Parameter param;
        param.path = p.at("path").get<std::string>();
        for (const auto& v : p.at("values")) param.values.push_back(v);
        if (param.values.empty()) throw ConfigError("sweep: empty value list for " + param.path);
        spec.parameters.push_back(std::move(param));
    }
    if (spec.parameters.empty()) throw ConfigError("sweep: no parameters");
    return spec;
}

namespace detail {

inline void apply_override(json& config, const std::string& dotted, const json& value) {
    json* node = &config;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

}  // namespace detail

/// Cross product of the sweep grids; one run directory and summary row per
/// combination. Runs execute concurrently up to the configured thread count.
inline int cmd_sweep(const CliOptions& opt) {
    try {
        std::ifstream in(opt.config_path);
        if (!in) throw ConfigError("config: cannot read '" + opt.config_path + "'");
        json base;
        in >> base;
        SweepSpec spec = load_sweep_spec(opt.sweep_path);

        // validate every parameter path against the schema before any compute
        for (const auto& p : spec.parameters) {
            json probe = base;
            detail::apply_override(probe, p.path, p.values.front());
            parse_config(probe);  // throws on unknown keys
        }

        std::vector<std::size_t> shape, index(spec.parameters.size(), 0);
        std::size_t total = 1;
        for (const auto& p : spec.parameters) {
            shape.push_back(p.values.size());
            total *= p.values.size();
        }

        std::string out_root = !opt.out_dir.empty() ? opt.out_dir : parse_config(base).out_dir;
        if (out_root.empty()) throw ConfigError("config: no output directory (set output.dir or --out)");
        const fs::path dir(out_root);
        if (int e = detail::prepare_out_dir(dir, opt.force); e != kExitOk) return e;

        struct Row {
            std::vector<json> values;
            trainer::TrainResult result;
            double epsilon;
        };
        std::vector<Row> rows(total);
        const int max_workers = opt.threads.value_or(parse_config(base).train.threads);

        std::vector<std::future<void>> futures;
        for (std::size_t run = 0; run < total; ++run) {
            std::size_t rem = run;
            std::vector<json> values(spec.parameters.size());
            json cfg = base;
            for (std::size_t p = 0; p < spec.parameters.size(); ++p) {
                const std::size_t i = rem % shape[p];
                rem /= shape[p];
                values[p] = spec.parameters[p].values[i];
                detail::apply_override(cfg, spec.parameters[p].path, values[p]);
            }
            char sub[32];
            std::snprintf(sub, sizeof sub, "run_%03zu", run);
            RunConfig rc = parse_config(cfg);
            if (opt.seed) rc.train.seed = *opt.seed;
            rc.out_dir = (dir / sub).string();
            fs::create_directories(rc.out_dir);

            auto work = [run, rc = std::move(rc), values = std::move(values), &rows]() mutable {
                auto outcome = detail::run_one(rc, rc.out_dir);
                rows[run] = {std::move(values), std::move(outcome.result), rc.train.epsilon};
            };
            if (max_workers > 1) {
                futures.push_back(std::async(std::launch::async, std::move(work)));
                if (futures.size() >= static_cast<std::size_t>(max_workers)) {
                    for (auto& f : futures) f.get();
                    futures.clear();
                }
            } else {
                work();
            }
        }
        for (auto& f : futures) f.get();

        std::ofstream csv(dir / "sweep.csv");
        for (const auto& p : spec.parameters) csv << p.path << ',';
        csv << "final_rel_err,n_epsilon,t_epsilon_s,stop_reason\n";
        for (const auto& row : rows) {
            for (const auto& v : row.values) csv << v.dump() << ',';
            auto [n_eps, t_eps] = trainer::n_epsilon_t_epsilon(row.result.history, row.epsilon);
            csv << detail::fmt(row.result.final_rel_err) << ','
                << (n_eps ? std::to_string(*n_eps) : "not_reached") << ','
                << (t_eps ? detail::fmt(*t_eps) : "not_reached") << ',' << trainer::to_string(row.result.stop)
                << '\n';
        }

        if (spec.parameters.size() == 2) {
            // grid CSV (rows = second parameter, cols = first) for heatmap rendering
            std::ofstream grid(dir / "sweep_grid.csv");
            grid << spec.parameters[1].path << "\\" << spec.parameters[0].path;
            for (const auto& v : spec.parameters[0].values) grid << ',' << v.dump();
            grid << '\n';
            for (std::size_t j = 0; j < shape[1]; ++j) {
                grid << spec.parameters[1].values[j].dump();
                for (std::size_t i = 0; i < shape[0]; ++i)
                    grid << ',' << detail::fmt(rows[j * shape[0] + i].result.final_rel_err);
                grid << '\n';
            }
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

// --- heatmaps of solutions -------------------------------------------------------------------

inline std::unique_ptr<primal::Primal> load_primal(const json& params, const pde::Preset& preset,
                                                   const RunConfig& rc) {
    const std::string kind = params.at("primal").at("kind").get<std::string>();
    std::unique_ptr<primal::Primal> model;
    if (kind == "dnn") {
        model = std::make_unique<primal::DnnPrimal>(nets::MlpConfig{preset.domain.dim() + 1, rc.train.dnn_hidden, 1}, 0);
    } else if (kind == "xnode") {
        model = std::make_unique<primal::XnodePrimal>(
            xnode::XNodeConfig{rc.train.xnode_h_dim, preset.domain.dim(), rc.train.xnode_init_hidden,
                               rc.train.xnode_vec_hidden},
            &preset.problem, &preset.domain, 0, rc.train.n_t, rc.train.substeps);
    } else {
        throw ConfigError("params: unknown primal kind '" + kind + "'");
    }
    model->params_from_json(params.at("primal"));
    return model;
}

/// Render u-hat (and |u - u-hat| when the preset has an exact solution) at a
/// fixed time over a 2-d slice, as SVG plus the raw grid CSV.
inline int cmd_heatmap(const CliOptions& opt) {
    try {
        RunConfig rc = configure(opt);
        const fs::path dir(rc.out_dir);
        if (int e = detail::prepare_out_dir(dir, opt.force); e != kExitOk) return e;
        auto preset = build_preset(rc);
        const int dim = preset.domain.dim();
        auto box = domain::omega_max(preset.domain);

        std::unique_ptr<primal::Primal> model;
        std::function<double(double, const double*)> predictor;
        if (opt.use_exact || opt.params_path.empty()) {
            if (!preset.problem.exact) throw ConfigError("bench: preset has no exact solution to plot");
            predictor = preset.problem.exact->u;
        } else {
            std::ifstream pin(opt.params_path);
            if (!pin) throw ConfigError("bench: cannot read params '" + opt.params_path + "'");
            json params;
            pin >> params;
            model = load_primal(params, preset, rc);
            predictor = [&model](double t, const double* x) { return model->predict(t, x); };
        }

        const std::function<double(double, const double*)>* reference = nullptr;
        if (preset.problem.exact && !(opt.use_exact || opt.params_path.empty())) reference = &preset.problem.exact->u;

        SolutionGrid grid;
        if (dim == 1) {
            // plot over (t, x1)
            auto tx_pred = [&](double, const double* p) { return predictor(p[0], p + 1); };
            domain::Box tx_box{{0.0, box.lo[0]}, {preset.domain.horizon, box.hi[0]}};
            std::function<double(double, const double*)> tx_ref;
            if (reference) tx_ref = [&](double, const double* p) { return (*reference)(p[0], p + 1); };
            grid = eval_grid(tx_pred, reference ? &tx_ref : nullptr, 2, tx_box, 0.0, opt.nx, opt.ny, 0, 1);
            grid.t = std::numeric_limits<double>::quiet_NaN();
        } else {
            grid = eval_grid(predictor, reference, dim, box, opt.t, opt.nx, opt.ny, opt.axis1, opt.axis2);
        }

        write_grid_csv(grid, grid.values, dir / "solution.csv");
        emit_heatmap(grid, grid.values, dir / "solution.svg", "u  t=" + detail::fmt(grid.t));
        if (!grid.error.empty()) {
            write_grid_csv(grid, grid.error, dir / "error.csv");
            emit_heatmap(grid, grid.error, dir / "error.svg", "|u - u_hat|  t=" + detail::fmt(grid.t));
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

inline int cmd_presets() {
    std::cout << "available problem presets:\n";
    for (const auto& name : pde::preset_names()) {
        const int dim = name == "example4" ? 1 : (name == "example3" ? 4 : 5);
        auto preset = pde::make_preset(name, dim);
        std::cout << "  " << name << " (default d=" << dim << "): " << preset.description << '\n';
    }
    return kExitOk;
}

}  // namespace xwan::bench

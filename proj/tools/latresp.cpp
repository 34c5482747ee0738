// latresp: command-line driver for datasets, training and latent-response analysis.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "latresp/checkpoint.hpp"
#include "latresp/data.hpp"
#include "latresp/geometry.hpp"
#include "latresp/interp.hpp"
#include "latresp/response.hpp"
#include "latresp/stats.hpp"
#include "latresp/vae.hpp"
#include "latresp/version.hpp"

namespace fs = std::filesystem;
using namespace latresp;
using json = nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
std::string to_text(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
        return v;
    } else if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
        return csv::format(v);
    } else if constexpr (requires { v.begin(); }) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ",") + to_text(x);
        return s;
    } else {
        return std::to_string(v);
    }
}

/// One subcommand: its CLI11 app, the resolved-value printers used for the manifest,
/// and the action to run.
struct Command {
    CLI::App* app = nullptr;
    std::vector<std::pair<std::string, std::function<std::string()>>> resolved;
    std::function<void()> run;
    std::string out_dir;

    template <typename T>
    CLI::Option* opt(const std::string& name, T& var, const std::string& desc) {
        auto* o = app->add_option(name, var, desc)->capture_default_str();
        if constexpr (requires { var.begin(); } && !std::is_same_v<T, std::string>) o->delimiter(',');
        resolved.emplace_back(key(o), [&var] { return to_text(var); });
        return o;
    }
    CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
        auto* o = app->add_flag(name, var, desc);
        resolved.emplace_back(key(o), [&var] { return to_text(var); });
        return o;
    }
    static std::string key(const CLI::Option* o) {
        return o->get_lnames().empty() ? o->get_name() : o->get_lnames().front();
    }
    bool given(const std::string& name) const { return app->count(name) > 0; }
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

/// Rerunnable as `latresp --config <dir>/manifest.ini`. Only explicitly given options are
/// active; resolved values (including preset and default ones) are listed as comments.
void write_manifest(const Command& cmd) {
    auto f = csv::open_out(join_path(cmd.out_dir, "manifest.ini"));
    f << "# latresp " << kVersion << '\n';
    f << "# resolved values:\n";
    for (const auto& [name, value] : cmd.resolved) f << "#   " << name << " = " << value() << '\n';
    f << '[' << cmd.app->get_name() << "]\n";
    f << cmd.app->config_to_str(false, false);
    if (!f) throw DataError("write failed for manifest");
}

void write_json(const std::string& path, const json& j) {
    auto f = csv::open_out(path);
    f << j.dump(2) << '\n';
    if (!f) throw DataError("write failed for '" + path + "'");
}

Checkpoint load_model(const std::string& path) { return load_checkpoint(path); }

Dataset load_data(const std::string& path, const VaeModel* model = nullptr) {
    Dataset ds = read_csv(path);
    if (model && ds.obs_dim() != model->obs_dim)
        throw DataError("dataset '" + path + "' has " + std::to_string(ds.obs_dim()) + " columns, model expects " +
                        std::to_string(model->obs_dim));
    return ds;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows; ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

std::vector<std::string> factor_names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < n; ++c) out.push_back("y" + std::to_string(c + 1));
    return out;
}

// ---------------------------------------------------------------- gen-data

void add_gen_data(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("gen-data", "Generate a synthetic dataset (helix or factors)");
    static std::string kind;
    static std::size_t n = 1024;
    static double sigma = 0.1, a1 = 1.0, a2 = 1.0, a3 = 1.0, omega = 1.0;
    static std::uint64_t seed = 0;
    static FactorConfig fc;
    c.opt("kind,--kind", kind, "helix or factors")->required()->check(CLI::IsMember({"helix", "factors"}));
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--seed", seed, "seed (helix sampling, factor embedding)");
    c.opt("--n", n, "helix sample count")->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
    c.opt("--sigma", sigma, "observation noise scale (default 0 for factors)")->check(CLI::NonNegativeNumber);
    c.opt("--a1", a1, "helix x amplitude");
    c.opt("--a2", a2, "helix y amplitude");
    c.opt("--a3", a3, "helix z extent");
    c.opt("--omega", omega, "helix angular frequency");
    c.opt("--cardinalities", fc.cardinalities, "factor cardinalities");
    c.opt("--obs-dim", fc.obs_dim, "factor observation dimension");
    c.opt("--code-dim", fc.code_dim, "code dimension per factor");
    c.opt("--hidden-width", fc.hidden_width, "mixing network width (0 = linear)");
    c.flag("--ordinal,!--no-ordinal", fc.ordinal, "order factor codes along their first coordinate");
    c.run = [&c] {
        Dataset ds;
        if (kind == "helix") {
            HelixConfig h;
            h.n = n;
            h.sigma = sigma;
            h.a1 = a1;
            h.a2 = a2;
            h.a3 = a3;
            h.omega = omega;
            h.seed = seed;
            ds = gen_helix(h);
        } else {
            FactorConfig f = fc;
            if (!c.given("--sigma")) sigma = 0.0;
            f.sigma = sigma;
            f.embed_seed = seed;
            ds = gen_factors(f);
        }
        write_csv(join_path(c.out_dir, "data.csv"), ds);
        std::cerr << "wrote " << ds.size() << " rows to " << join_path(c.out_dir, "data.csv") << '\n';
    };
}

// ---------------------------------------------------------------- train

void add_train(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("train", "Train a VAE on a dataset CSV");
    static std::string data, preset = "helix", resume;
    static TrainConfig tc;
    c.opt("--data", data, "dataset CSV")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--preset", preset, "helix or factors; fills options not given explicitly")
        ->check(CLI::IsMember({"helix", "factors"}));
    c.opt("--resume", resume, "continue from this checkpoint (architecture flags ignored)");
    c.opt("--steps", tc.steps, "optimizer steps");
    c.opt("--batch", tc.batch_size, "minibatch size");
    c.opt("--lr", tc.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    c.opt("--beta", tc.beta, "KL weight")->check(CLI::NonNegativeNumber);
    c.opt("--latent", tc.latent_dim, "latent dimension")->check(CLI::PositiveNumber);
    c.opt("--hidden", tc.hidden, "hidden layer widths");
    c.opt("--seed", tc.seed, "seed for init, batches and noise");
    c.run = [&c] {
        const TrainConfig p = preset == "factors" ? TrainConfig::factor_preset() : TrainConfig::helix_preset();
        if (!c.given("--steps")) tc.steps = p.steps;
        if (!c.given("--batch")) tc.batch_size = p.batch_size;
        if (!c.given("--lr")) tc.lr = p.lr;
        if (!c.given("--beta")) tc.beta = p.beta;
        if (!c.given("--latent")) tc.latent_dim = p.latent_dim;
        if (!c.given("--hidden")) tc.hidden = p.hidden;

        const Dataset ds = load_data(data);
        VaeModel model;
        AdamState opt;
        std::size_t prior_steps = 0;
        if (!resume.empty()) {
            Checkpoint ck = load_model(resume);
            model = std::move(ck.model);
            if (ck.optimizer) opt = *ck.optimizer;
            prior_steps = opt.step;
            if (ds.obs_dim() != model.obs_dim)
                throw DataError("dataset has " + std::to_string(ds.obs_dim()) + " columns, checkpoint expects " +
                                std::to_string(model.obs_dim));
        } else {
            model = make_vae(ds.obs_dim(), tc, fit_normalizer(ds.observations));
        }
        TrainResult r;
        auto write_trace = [&](const std::vector<double>& trace) {
            auto f = csv::open_out(join_path(c.out_dir, "loss.csv"));
            f << "step,loss\n";
            for (std::size_t i = 0; i < trace.size(); ++i) f << prior_steps + i << ',' << csv::format(trace[i]) << '\n';
        };
        try {
            r = train(std::move(model), ds.observations, tc, std::move(opt));
        } catch (const TrainingDiverged& e) {
            write_trace(e.trace());
            throw;
        }
        write_trace(r.loss_trace);
        Checkpoint ck{r.model, r.optimizer, json::object()};
        ck.meta["steps_total"] = r.optimizer.step;
        ck.meta["final_mse"] = reconstruction_mse(r.model, ds.observations);
        if (!r.loss_trace.empty()) ck.meta["final_loss"] = r.loss_trace.back();
        save_checkpoint(join_path(c.out_dir, "model.json"), ck);
        std::cerr << "trained " << tc.steps << " steps; reconstruction mse " << csv::format(ck.meta["final_mse"].get<double>())
                  << '\n';
    };
}

// ---------------------------------------------------------------- matrices and scores

struct McFlags {
    std::size_t samples = 10000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

void add_mc_flags(Command& c, McFlags& f) {
    c.opt("--samples", f.samples, "Monte-Carlo draws")->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
    c.opt("--seed", f.seed, "Monte-Carlo seed");
    c.opt("--workers", f.workers, "worker threads (results do not depend on it)");
}

McOptions mc_options(const McFlags& f) { return McOptions{f.samples, f.seed, f.workers}; }

void add_matrix(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("matrix", "Latent response matrix M");
    static std::string model_path, data, source = "prior";
    static McFlags mc;
    c.opt("--model", model_path, "checkpoint")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--data", data, "dataset CSV (needed for the aggregate-posterior source)");
    c.opt("--source", source, "prior or aggregate-posterior")->check(CLI::IsMember({"prior", "aggregate-posterior"}));
    add_mc_flags(c, mc);
    c.run = [&c] {
        const Checkpoint ck = load_model(model_path);
        std::optional<Dataset> ds;
        if (!data.empty()) ds = load_data(data, &ck.model);
        const auto src = intervention_source_from_string(source);
        const ResponseMatrix m = response_matrix(ck.model, mc_options(mc), src, ds ? &*ds : nullptr);
        const auto names = dim_names(ck.model.latent_dim);
        write_matrix_csv(join_path(c.out_dir, "matrix.csv"), m.entries, names, names, "intervened");
        json rep;
        rep["kind"] = "response_matrix";
        rep["samples"] = m.sample_count;
        rep["source"] = std::string(to_string(m.source));
        rep["seed"] = m.seed;
        rep["entries"] = matrix_json(m.entries);
        std::vector<double> diag;
        for (std::size_t j = 0; j < m.entries.rows; ++j) diag.push_back(m.entries(j, j));
        rep["diagonal"] = diag;
        write_json(join_path(c.out_dir, "matrix_report.json"), rep);
    };
}

struct CondFlags {
    std::string model, data, sampling = "mean";
    std::size_t bins = 10;
    McFlags mc{1000, 0, 1};
};

void add_cond_flags(Command& c, CondFlags& f) {
    c.opt("--model", f.model, "checkpoint")->required();
    c.opt("--data", f.data, "labeled dataset CSV")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--bins", f.bins, "bins for continuous factors")->check(CLI::PositiveNumber);
    c.opt("--sampling", f.sampling, "latent points from encoder means or posterior draws")
        ->check(CLI::IsMember({"mean", "draw"}));
    add_mc_flags(c, f.mc);
}

json cond_report(const ConditionedResponseMatrix& m, const CondFlags& f) {
    json rep;
    const CdsScore s = cds(m);
    rep["kind"] = "conditioned_response_matrix";
    rep["samples_per_factor"] = f.mc.samples;
    rep["seed"] = m.seed;
    rep["sampling"] = std::string(to_string(m.sampling));
    rep["continuous_bins"] = f.bins;
    rep["strata_counts"] = m.strata_counts;
    rep["entries"] = matrix_json(m.entries);
    rep["cds_raw"] = s.raw;
    rep["cds"] = s.rescaled;
    rep["retained_columns"] = s.retained_columns;
    return rep;
}

ConditionedResponseMatrix run_cond(const CondFlags& f, const VaeModel& model, const Dataset& ds) {
    if (!ds.has_labels()) throw DataError("dataset '" + f.data + "' has no factor labels");
    return conditioned_response_matrix(model, ds, mc_options(f.mc), f.bins, latent_sampling_from_string(f.sampling));
}

void add_cond_matrix(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("cond-matrix", "Conditioned response matrix M* and its CDS");
    static CondFlags f;
    add_cond_flags(c, f);
    c.run = [&c] {
        const Checkpoint ck = load_model(f.model);
        const Dataset ds = load_data(f.data, &ck.model);
        const auto m = run_cond(f, ck.model, ds);
        write_matrix_csv(join_path(c.out_dir, "cond_matrix.csv"), m.entries, factor_names(m.entries.rows),
                         dim_names(m.entries.cols), "factor");
        write_json(join_path(c.out_dir, "cond_matrix_report.json"), cond_report(m, f));
    };
}

void add_cds(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("cds", "Causal disentanglement score");
    static CondFlags f;
    add_cond_flags(c, f);
    c.run = [&c] {
        const Checkpoint ck = load_model(f.model);
        const Dataset ds = load_data(f.data, &ck.model);
        const json rep = cond_report(run_cond(f, ck.model, ds), f);
        write_json(join_path(c.out_dir, "cds.json"), rep);
        std::cout << "cds " << csv::format(rep["cds"].get<double>()) << " raw " << csv::format(rep["cds_raw"].get<double>())
                  << '\n';
    };
}

void add_responsibility(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("responsibility", "Lasso responsibility matrix (factor x latent)");
    static std::string model_path, data;
    static double lambda = 0.01;
    c.opt("--model", model_path, "checkpoint")->required();
    c.opt("--data", data, "labeled dataset CSV")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--lambda", lambda, "L1 penalty")->check(CLI::NonNegativeNumber);
    c.run = [&c] {
        const Checkpoint ck = load_model(model_path);
        const Dataset ds = load_data(data, &ck.model);
        const ResponsibilityMatrix r = responsibility_matrix(ck.model, ds, lambda);
        write_matrix_csv(join_path(c.out_dir, "responsibility.csv"), r.entries, factor_names(r.entries.rows),
                         dim_names(r.entries.cols), "factor");
        json rep;
        rep["kind"] = "responsibility_matrix";
        rep["lambda"] = r.lambda;
        rep["entries"] = matrix_json(r.entries);
        rep["warnings"] = r.warnings;
        write_json(join_path(c.out_dir, "responsibility_report.json"), rep);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    };
}

// ---------------------------------------------------------------- maps

struct SliceFlags {
    std::vector<std::size_t> dims{0, 1};
    std::vector<double> range{-3.0, 3.0};
    std::vector<double> anchor;
    std::size_t res = 64;
    std::size_t workers = 1;
};

void add_slice_flags(Command& c, SliceFlags& f) {
    c.opt("--dims", f.dims, "two latent dims spanning the slice");
    c.opt("--range", f.range, "lo,hi for both axes");
    c.opt("--anchor", f.anchor, "full latent vector for off-slice coordinates (default 0)");
    c.opt("--res", f.res, "grid resolution");
    c.opt("--workers", f.workers, "worker threads (results do not depend on it)");
}

SliceSpec slice_spec(const SliceFlags& f, std::size_t latent_dim) {
    if (f.dims.size() != 2) throw UsageError("--dims needs exactly two values");
    if (f.range.size() != 2) throw UsageError("--range needs exactly two values");
    SliceSpec s;
    s.dim_x = f.dims[0];
    s.dim_y = f.dims[1];
    s.lo = f.range[0];
    s.hi = f.range[1];
    s.resolution = f.res;
    s.anchor = f.anchor;
    s.validate(latent_dim);
    return s;
}

void add_map(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("map", "Divergence, mean-curvature and norm maps on a latent slice");
    static std::string model_path;
    static SliceFlags sf;
    static double eps = 1e-3;
    c.opt("--model", model_path, "checkpoint")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--eps", eps, "normalization guard for the curvature map")->check(CLI::PositiveNumber);
    add_slice_flags(c, sf);
    c.run = [&c] {
        const Checkpoint ck = load_model(model_path);
        const ResponseGrid g = eval_grid(ck.model, slice_spec(sf, ck.model.latent_dim), sf.workers);
        for (const ScalarMap& m : {divergence(g), mean_curvature(g, eps), norm_map(g)}) {
            const std::string stem(to_string(m.kind));
            write_map_csv(join_path(c.out_dir, stem + ".csv"), m);
            write_map_pgm(join_path(c.out_dir, stem + ".pgm"), m);
            if (m.singular_count() > 0)
                std::cerr << stem << ": " << m.singular_count() << " singular node(s) flagged\n";
        }
        write_field_csv(join_path(c.out_dir, "field.csv"), g);
    };
}

void add_field(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("field", "Response field u(z) on a latent slice");
    static std::string model_path;
    static SliceFlags sf;
    c.opt("--model", model_path, "checkpoint")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    add_slice_flags(c, sf);
    c.run = [&c] {
        const Checkpoint ck = load_model(model_path);
        write_field_csv(join_path(c.out_dir, "field.csv"),
                        eval_grid(ck.model, slice_spec(sf, ck.model.latent_dim), sf.workers));
    };
}

// ---------------------------------------------------------------- interpolation

std::vector<double> endpoint(const std::vector<double>& coords, long row, const std::optional<Dataset>& ds,
                             const VaeModel& model, const char* which) {
    if (row >= 0) {
        if (!ds) throw UsageError(std::string("--") + which + "-row needs --data");
        if (static_cast<std::size_t>(row) >= ds->size())
            throw DataError(std::string(which) + " row " + std::to_string(row) + " outside dataset of " +
                            std::to_string(ds->size()) + " rows");
        return encode(model, ds->observations.row(static_cast<std::size_t>(row))).mu;
    }
    if (coords.empty()) throw UsageError(std::string("give --") + which + " or --" + which + "-row");
    require_dim(coords.size(), model.latent_dim, which);
    return coords;
}

void add_interp(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("interp", "Straight and curvature-guided latent interpolation");
    static std::string model_path, map_path, data;
    static std::vector<double> from, to;
    static long from_row = -1, to_row = -1;
    static double gamma = 2.0, step = 0.0, eps = 1e-3;
    static SliceFlags sf;
    c.opt("--model", model_path, "checkpoint")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--map", map_path, "mean-curvature map CSV (computed from the slice flags when absent)");
    c.opt("--data", data, "dataset CSV for row endpoints");
    c.opt("--from", from, "start latent vector");
    c.opt("--to", to, "end latent vector");
    c.opt("--from-row", from_row, "start at the encoded mean of this dataset row");
    c.opt("--to-row", to_row, "end at the encoded mean of this dataset row");
    c.opt("--gamma", gamma, "curvature weight exponent")->check(CLI::NonNegativeNumber);
    c.opt("--step", step, "straight-path spacing (default: map grid step)")->check(CLI::NonNegativeNumber);
    c.opt("--eps", eps, "curvature normalization guard when computing the map")->check(CLI::PositiveNumber);
    add_slice_flags(c, sf);
    c.run = [&c] {
        const Checkpoint ck = load_model(model_path);
        const VaeModel& model = ck.model;
        std::optional<Dataset> ds;
        if (!data.empty()) ds = load_data(data, &model);
        const auto a = endpoint(from, from_row, ds, model, "from");
        const auto b = endpoint(to, to_row, ds, model, "to");
        ScalarMap h;
        if (!map_path.empty()) {
            h = read_map_csv(map_path);
            if (h.kind != MapKind::MeanCurvature) throw DataError("'" + map_path + "' is not a mean-curvature map");
        } else {
            h = mean_curvature(eval_grid(model, slice_spec(sf, model.latent_dim), sf.workers), eps);
        }
        const LatentPath guided = curvature_path(h, a, b, gamma);
        double dist = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) dist += (b[j] - a[j]) * (b[j] - a[j]);
        dist = std::sqrt(dist);
        const double spacing = step > 0.0 ? step : h.spec.step();
        const auto count = static_cast<std::size_t>(std::ceil(dist / spacing)) + 1;
        const LatentPath straight = straight_path(a, b, std::max<std::size_t>(count, 2));
        const AmbientMetrics ms = ambient_metrics(model, straight);
        const AmbientMetrics mg = ambient_metrics(model, guided);
        write_path_csv(join_path(c.out_dir, "path_straight.csv"), straight, ms);
        write_path_csv(join_path(c.out_dir, "path_curvature.csv"), guided, mg);
        json rep;
        rep["from"] = a;
        rep["to"] = b;
        rep["gamma"] = gamma;
        auto summary = [](const LatentPath& p, const AmbientMetrics& m) {
            return json{{"waypoints", p.waypoints.size()},
                        {"latent_length", euclidean_length(p)},
                        {"cost", p.cost},
                        {"ambient_length", m.total_length},
                        {"max_jump", m.max_jump}};
        };
        rep["straight"] = summary(straight, ms);
        rep["curvature"] = summary(guided, mg);
        write_json(join_path(c.out_dir, "interp_report.json"), rep);
        std::cout << "max jump: straight " << csv::format(ms.max_jump) << ", curvature " << csv::format(mg.max_jump)
                  << '\n';
    };
}

// ---------------------------------------------------------------- diagnose

void add_diagnose(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("diagnose", "First-order expansion of the latent response around observations");
    static std::string model_path, data;
    static std::size_t row = 0, pairs = 0;
    static double scale = 0.2;
    static std::uint64_t seed = 0;
    c.opt("--model", model_path, "checkpoint")->required();
    c.opt("--data", data, "dataset CSV")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--row", row, "dataset row for the detailed report");
    c.opt("--scale", scale, "norm of the latent offset u")->check(CLI::NonNegativeNumber);
    c.opt("--pairs", pairs, "random (row, u) pairs for the scaling experiment (0: use --row only)");
    c.opt("--seed", seed, "seed for u directions and row picks");
    c.run = [&c] {
        const Checkpoint ck = load_model(model_path);
        const VaeModel& model = ck.model;
        const Dataset ds = load_data(data, &model);
        if (row >= ds.size())
            throw DataError("row " + std::to_string(row) + " outside dataset of " + std::to_string(ds.size()) + " rows");
        auto direction = [&](std::size_t i) {
            Rng rng = Rng::at(seed, "diagnose", i);
            auto u = rng.normal_vector(model.latent_dim);
            const double n = norm2(u);
            for (auto& v : u) v *= scale / n;
            return std::pair{u, rng};
        };
        const auto u = direction(0).first;
        const ExpansionReport r = expansion_diagnostic(model, ds.observations.row(row), u);
        json rep;
        rep["row"] = row;
        rep["scale"] = scale;
        rep["u"] = u;
        rep["s"] = r.s;
        rep["s_hat"] = r.s_hat;
        rep["term1"] = r.term1;
        rep["term2"] = r.term2;
        rep["term3"] = r.term3;
        rep["residual"] = r.residual;
        rep["residual_norm"] = r.residual_norm;
        rep["epsilon"] = r.epsilon;
        rep["epsilon_norm"] = r.epsilon_norm;

        const std::size_t n = pairs == 0 ? 1 : pairs;
        double full = 0.0, half = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto [ui, rng] = direction(i);
            const std::size_t ri = pairs == 0 ? row : rng.index(ds.size());
            const auto x = ds.observations.row(ri);
            full += expansion_diagnostic(model, x, ui).residual_norm;
            for (auto& v : ui) v *= 0.5;
            half += expansion_diagnostic(model, x, ui).residual_norm;
        }
        full /= static_cast<double>(n);
        half /= static_cast<double>(n);
        rep["scaling"] = {{"pairs", n},
                          {"mean_residual", full},
                          {"mean_residual_half", half},
                          {"ratio", half > 0.0 ? full / half : 0.0}};
        write_json(join_path(c.out_dir, "diagnose.json"), rep);
        std::cout << "residual " << csv::format(r.residual_norm) << ", halving ratio "
                  << csv::format(half > 0.0 ? full / half : 0.0) << '\n';
    };
}

// ---------------------------------------------------------------- sweep

void add_sweep(CLI::App& root, std::vector<Command>& cmds) {
    auto& c = cmds.emplace_back();
    c.app = root.add_subcommand("sweep", "Train over a beta grid and seeds, tabulating CDS");
    static std::string data;
    static std::vector<double> betas{0.5, 1.0, 2.0, 4.0};
    static std::vector<std::uint64_t> seeds{0, 1, 2};
    static TrainConfig tc = TrainConfig::factor_preset();
    static CondFlags f;
    c.opt("--data", data, "labeled dataset CSV")->required();
    c.opt("--out", c.out_dir, "output directory")->required();
    c.opt("--betas", betas, "beta values");
    c.opt("--seeds", seeds, "training seeds");
    c.opt("--steps", tc.steps, "optimizer steps per run");
    c.opt("--batch", tc.batch_size, "minibatch size");
    c.opt("--lr", tc.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    c.opt("--latent", tc.latent_dim, "latent dimension")->check(CLI::PositiveNumber);
    c.opt("--hidden", tc.hidden, "hidden layer widths");
    c.opt("--samples", f.mc.samples, "conditioned-matrix draws per factor");
    c.opt("--mc-seed", f.mc.seed, "conditioned-matrix seed");
    c.opt("--bins", f.bins, "bins for continuous factors")->check(CLI::PositiveNumber);
    c.opt("--sampling", f.sampling, "mean or draw")->check(CLI::IsMember({"mean", "draw"}));
    c.opt("--workers", f.mc.workers, "worker threads (results do not depend on it)");
    c.run = [&c] {
        if (betas.empty() || seeds.empty()) throw UsageError("sweep needs at least one beta and one seed");
        f.data = data;
        const Dataset ds = load_data(data);
        if (!ds.has_labels()) throw DataError("dataset '" + data + "' has no factor labels");
        auto runs = csv::open_out(join_path(c.out_dir, "sweep_runs.csv"));
        runs << "beta,seed,cds,cds_raw,mse,final_loss\n";
        std::vector<double> mean_cds;
        for (double beta : betas) {
            double acc = 0.0;
            for (auto seed : seeds) {
                TrainConfig cfg = tc;
                cfg.beta = beta;
                cfg.seed = seed;
                const TrainResult r = train(make_vae(ds.obs_dim(), cfg, fit_normalizer(ds.observations)), ds.observations, cfg);
                const CdsScore s = cds(run_cond(f, r.model, ds));
                runs << csv::format(beta) << ',' << seed << ',' << csv::format(s.rescaled) << ',' << csv::format(s.raw)
                     << ',' << csv::format(reconstruction_mse(r.model, ds.observations)) << ','
                     << csv::format(r.loss_trace.empty() ? 0.0 : r.loss_trace.back()) << '\n';
                acc += s.rescaled;
                std::cerr << "beta " << beta << " seed " << seed << ": cds " << s.rescaled << '\n';
            }
            mean_cds.push_back(acc / static_cast<double>(seeds.size()));
        }
        auto summary = csv::open_out(join_path(c.out_dir, "sweep.csv"));
        summary << "beta,mean_cds\n";
        for (std::size_t i = 0; i < betas.size(); ++i)
            summary << csv::format(betas[i]) << ',' << csv::format(mean_cds[i]) << '\n';
        json rep;
        rep["betas"] = betas;
        rep["seeds"] = seeds;
        rep["mean_cds"] = mean_cds;
        rep["spearman"] = betas.size() > 1 ? spearman(betas, mean_cds) : 0.0;
        write_json(join_path(c.out_dir, "sweep_report.json"), rep);
        std::cout << "spearman(beta, mean cds) = " << csv::format(rep["spearman"].get<double>()) << '\n';
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent response analysis for variational autoencoders"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "read options from an ini file (e.g. a manifest.ini)");
    app.require_subcommand(1);
    std::vector<Command> cmds;
    cmds.reserve(16);
    add_gen_data(app, cmds);
    add_train(app, cmds);
    add_matrix(app, cmds);
    add_cond_matrix(app, cmds);
    add_cds(app, cmds);
    add_responsibility(app, cmds);
    add_map(app, cmds);
    add_field(app, cmds);
    add_interp(app, cmds);
    add_diagnose(app, cmds);
    add_sweep(app, cmds);
    for (auto& c : cmds) c.app->configurable();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    for (auto& c : cmds) {
        if (!c.app->parsed()) continue;
        try {
            ensure_dir(c.out_dir);
            c.run();
            write_manifest(c);
            return 0;
        } catch (const UsageError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitUsage;
        } catch (const NumericalError& e) {
            std::cerr << "numerical failure: " << e.what() << '\n';
            return kExitNumeric;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitData;
        }
    }
    return kExitUsage;
}

// patsvd command-line front end: assembles the forward model, factorizes it,
// generates phantom datasets, trains the projected network and evaluates
// reconstructions. See README.md for a walkthrough.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "patsvd/fd_wave.hpp"
#include "patsvd/io.hpp"
#include "patsvd/network.hpp"
#include "patsvd/phantom.hpp"
#include "patsvd/pipeline.hpp"
#include "patsvd/svd.hpp"
#include "patsvd/system_matrix.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace patsvd;

namespace {

struct GridFlags {
    // desk-profile defaults; --kb-a 0.055 recovers the full-scale blob size
    int n = 32;
    double kb_a = 0.25, kb_gamma = 7.0;
    int kb_m = 2;

    void attach(CLI::App* cmd) {
        cmd->add_option("--grid-n", n, "basis grid side count N");
        cmd->add_option("--kb-a", kb_a, "Kaiser-Bessel support radius");
        cmd->add_option("--kb-gamma", kb_gamma, "Kaiser-Bessel taper");
        cmd->add_option("--kb-m", kb_m, "Kaiser-Bessel smoothness order");
    }

    BasisGrid grid() const { return {n, {kb_a, kb_gamma, kb_m}}; }
};

struct GeomFlags {
    int detectors = 64, times = 96;
    double horizon = 3.75;

    void attach(CLI::App* cmd) {
        cmd->add_option("--detectors", detectors, "detector count N_s");
        cmd->add_option("--times", times, "time sample count N_t");
        cmd->add_option("--horizon", horizon, "time horizon T");
    }

    MeasurementGeometry geometry() const { return {detectors, times, horizon}; }
};

TruncationPolicy resolve_policy(const SvdFactors& f, std::optional<double> alpha,
                                std::optional<int> kept) {
    if (alpha && kept) throw CLI::ValidationError("--alpha and --kept are mutually exclusive");
    if (alpha) return {*alpha};
    if (kept) return TruncationPolicy::keep(f, *kept);
    throw CLI::ValidationError("one of --alpha or --kept is required");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Limited-view photoacoustic reconstruction via truncated SVD and a projected network"};
    app.require_subcommand(1);

    // ---- assemble ----------------------------------------------------------
    auto* assemble = app.add_subcommand("assemble", "assemble the forward system matrix");
    GridFlags agrid;
    GeomFlags ageom;
    agrid.attach(assemble);
    ageom.attach(assemble);
    int resolution = 8;
    std::string out_path = "matrix.bin";
    assemble->add_option("--resolution", resolution, "distance samples per time step");
    assemble->add_option("-o,--output", out_path, "output matrix container");
    assemble->callback([&] {
        io::save_system_matrix(out_path,
                               assemble_system_matrix(agrid.grid(), ageom.geometry(), resolution));
        std::cout << "wrote " << out_path << "\n";
    });

    // ---- svd ---------------------------------------------------------------
    auto* svd = app.add_subcommand("svd", "factorize a system matrix");
    std::string svd_in = "matrix.bin", svd_out = "factors.bin", backend = "deterministic";
    double rank_cutoff = 1e-12;
    int randomized_rank = 400;
    uint64_t svd_seed = 0;
    svd->add_option("-i,--input", svd_in, "system matrix container");
    svd->add_option("-o,--output", svd_out, "output factors container");
    svd->add_option("--backend", backend, "deterministic | randomized")
        ->check(CLI::IsMember({"deterministic", "randomized"}));
    svd->add_option("--rank-cutoff", rank_cutoff, "relative numerical-rank cutoff");
    svd->add_option("--randomized-rank", randomized_rank, "target rank for the randomized backend");
    svd->add_option("--seed", svd_seed, "sketch seed for the randomized backend");
    svd->callback([&] {
        const SystemMatrix a = io::load_system_matrix(svd_in);
        const SvdFactors f =
            backend == "randomized"
                ? svd_factorize_randomized(a.entries, randomized_rank, svd_seed, 10, 2, rank_cutoff)
                : svd_factorize(a.entries, rank_cutoff);
        json meta = io::grid_metadata(a.grid);
        meta.update(io::geometry_metadata(a.geometry));
        io::save_factors(svd_out, f, meta);
        std::cout << "wrote " << svd_out << " (rank " << f.rank() << ")\n";
    });

    // ---- phantoms -----------------------------------------------------------
    auto* phantoms = app.add_subcommand("phantoms", "generate random phantom coefficient images");
    GridFlags pgrid;
    pgrid.attach(phantoms);
    int count = 50;
    uint64_t seed = 2024;
    std::string role_str = "test", dataset_dir = "dataset";
    double rho = 0.0;
    bool export_pgm = false;
    phantoms->add_option("--count", count, "number of phantoms");
    phantoms->add_option("--seed", seed, "master seed");
    phantoms->add_option("--role", role_str, "train | validation | test")
        ->check(CLI::IsMember({"train", "validation", "test"}));
    phantoms->add_option("--rho", rho, "noise fraction recorded for the later simulate step");
    phantoms->add_option("-o,--output", dataset_dir, "output dataset directory");
    phantoms->add_flag("--pgm", export_pgm, "also export phantoms as PGM images");
    phantoms->callback([&] {
        const BasisGrid grid = pgrid.grid();
        Dataset ds;
        ds.role = role_from_tag(role_str);
        ds.rho = (ds.role == Role::train) ? 0.0 : rho;
        ds.master_seed = seed;
        ds.grid_n = grid.n;
        for (int i = 0; i < count; ++i)
            ds.x.push_back(generate_phantom(phantom_seed(seed, ds.role, i), grid));
        io::save_dataset(dataset_dir, ds);
        if (export_pgm)
            for (int i = 0; i < count; ++i) {
                char name[64];
                std::snprintf(name, sizeof name, "phantom_%04d.pgm", i);
                io::save_pgm((fs::path(dataset_dir) / name).string(), ds.x[i], grid.n);
            }
        std::cout << "wrote " << count << " phantoms to " << dataset_dir << "\n";
    });

    // ---- simulate ------------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "apply the forward model (plus noise) to a dataset");
    std::string sim_dataset = "dataset", sim_matrix = "matrix.bin";
    simulate->add_option("--dataset", sim_dataset, "dataset directory from 'phantoms'");
    simulate->add_option("--matrix", sim_matrix, "system matrix container");
    simulate->callback([&] {
        Dataset ds = io::load_dataset(sim_dataset);
        const SystemMatrix a = io::load_system_matrix(sim_matrix);
        if (ds.grid_n != a.grid.n)
            throw std::runtime_error("simulate: dataset grid does not match the matrix grid");
        ds.y.clear();
        for (size_t i = 0; i < ds.x.size(); ++i) {
            Vector y = forward_apply(a, ds.x[i]);
            if (ds.rho > 0.0) y = add_noise(y, ds.rho, noise_seed(ds.master_seed, ds.role, i));
            ds.y.push_back(std::move(y));
        }
        io::save_dataset(sim_dataset, ds);
        std::cout << "simulated " << ds.size() << " measurements (rho " << ds.rho << ")\n";
    });

    // ---- train ----------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train the projected network");
    std::string train_dataset = "dataset_train", train_factors = "factors.bin",
                model_out = "model.bin";
    std::optional<double> train_alpha;
    std::optional<int> train_kept;
    TrainConfig tcfg;
    std::vector<int> widths = {16, 32, 64};
    train_cmd->add_option("--dataset", train_dataset, "training dataset directory");
    train_cmd->add_option("--factors", train_factors, "SVD factors container");
    train_cmd->add_option("--alpha", train_alpha, "truncation threshold (on sigma^2)");
    train_cmd->add_option("--kept", train_kept, "kept singular-component count");
    train_cmd->add_option("--epochs", tcfg.epochs, "training epochs");
    train_cmd->add_option("--lr", tcfg.learning_rate, "learning rate");
    train_cmd->add_option("--momentum", tcfg.momentum, "heavy-ball momentum");
    train_cmd->add_option("--batch", tcfg.batch_size, "mini-batch size");
    train_cmd->add_option("--seed", tcfg.seed, "training seed");
    train_cmd->add_option("--widths", widths, "per-level channel counts");
    train_cmd->add_option("-o,--output", model_out, "output model container");
    train_cmd->callback([&] {
        const SvdFactors f = io::load_factors(train_factors);
        const Dataset ds = io::load_dataset(train_dataset);
        const TruncationPolicy policy = resolve_policy(f, train_alpha, train_kept);
        UNet::Config arch{ds.grid_n, widths};
        const TrainResult tr = train(ds, f, policy, arch, tcfg);
        io::save_network(model_out, tr.net, policy.alpha, io::file_checksum(train_factors));
        std::cout << "trained " << tcfg.epochs << " epochs; final loss "
                  << tr.epoch_loss.back() << "; wrote " << model_out << "\n";
    });

    // ---- reconstruct ------------------------------------------------------------
    auto* recon = app.add_subcommand("reconstruct", "reconstruct a dataset with one method");
    std::string rec_dataset = "dataset_test", rec_factors = "factors.bin", rec_model,
                rec_method = "tsvd", rec_out = "recon";
    std::optional<double> rec_alpha;
    std::optional<int> rec_kept;
    recon->add_option("--dataset", rec_dataset, "dataset directory with measurements");
    recon->add_option("--factors", rec_factors, "SVD factors container");
    recon->add_option("--model", rec_model, "network container (for --method net)");
    recon->add_option("--method", rec_method, "pinv | tsvd | optimal-tsvd | net")
        ->check(CLI::IsMember({"pinv", "tsvd", "optimal-tsvd", "net"}));
    recon->add_option("--alpha", rec_alpha, "truncation threshold (on sigma^2)");
    recon->add_option("--kept", rec_kept, "kept singular-component count");
    recon->add_option("-o,--output", rec_out, "output directory");
    recon->callback([&] {
        const SvdFactors f = io::load_factors(rec_factors);
        const Dataset ds = io::load_dataset(rec_dataset);
        std::optional<UNet> net;
        TruncationPolicy policy;
        if (rec_method == "net") {
            if (rec_model.empty()) throw CLI::ValidationError("--model required for --method net");
            io::LoadedNetwork ln = io::load_network(rec_model);
            if (ln.factors_checksum != io::file_checksum(rec_factors))
                throw std::runtime_error("model was trained against different SVD factors");
            policy.alpha = ln.alpha;
            net = std::move(ln.net);
        } else if (rec_method != "pinv") {
            policy = resolve_policy(f, rec_alpha, rec_kept);
        }
        const std::vector<Vector> xhat =
            reconstruct_dataset(rec_method, ds, f, policy, net ? &*net : nullptr);
        fs::create_directories(rec_out);
        for (size_t i = 0; i < xhat.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "recon_%04zu.f64", i);
            io::save_raw_vector((fs::path(rec_out) / name).string(), xhat[i]);
            std::snprintf(name, sizeof name, "recon_%04zu.pgm", i);
            io::save_pgm((fs::path(rec_out) / name).string(), xhat[i], ds.grid_n);
        }
        std::cout << "wrote " << xhat.size() << " reconstructions to " << rec_out << "\n";
    });

    // ---- evaluate ------------------------------------------------------------
    auto* eval = app.add_subcommand("evaluate", "mean relative error of one or more methods");
    std::string ev_dataset = "dataset_test", ev_factors = "factors.bin", ev_model,
                ev_report = "report.json";
    std::vector<std::string> ev_methods = {"tsvd", "optimal-tsvd"};
    std::optional<double> ev_alpha;
    std::optional<int> ev_kept;
    eval->add_option("--dataset", ev_dataset, "test dataset directory");
    eval->add_option("--factors", ev_factors, "SVD factors container");
    eval->add_option("--model", ev_model, "network container (needed for method net)");
    eval->add_option("--methods", ev_methods, "methods to evaluate");
    eval->add_option("--alpha", ev_alpha, "truncation threshold (on sigma^2)");
    eval->add_option("--kept", ev_kept, "kept singular-component count");
    eval->add_option("-o,--output", ev_report, "report JSON path");
    eval->callback([&] {
        const SvdFactors f = io::load_factors(ev_factors);
        const Dataset ds = io::load_dataset(ev_dataset);
        std::optional<UNet> net;
        TruncationPolicy policy;
        if (!ev_model.empty()) {
            io::LoadedNetwork ln = io::load_network(ev_model);
            policy.alpha = ln.alpha;
            net = std::move(ln.net);
        }
        if (ev_alpha || ev_kept) policy = resolve_policy(f, ev_alpha, ev_kept);
        json jreport = json::array();
        for (const std::string& method : ev_methods) {
            const std::vector<Vector> xhat =
                reconstruct_dataset(method, ds, f, policy, net ? &*net : nullptr);
            const EvalReport rep =
                evaluate_pairs(method, ev_dataset, policy.kept_count(f), xhat, ds.x);
            jreport.push_back(json{{"method", rep.method},
                                   {"dataset", rep.dataset_id},
                                   {"kept", rep.kept},
                                   {"mean_relative_error", rep.mean},
                                   {"per_sample", rep.per_sample}});
            std::cout << method << ": mean relative error " << rep.mean << "\n";
        }
        std::ofstream os(ev_report);
        os << jreport.dump(2) << "\n";
    });

    // ---- oracle -----------------------------------------------------------------
    auto* oracle = app.add_subcommand("oracle", "finite-difference trace for one basis function");
    GridFlags ogrid;
    GeomFlags ogeom;
    ogrid.attach(oracle);
    ogeom.attach(oracle);
    int basis_index = 0;
    FdConfig fd_cfg;
    std::string oracle_out = "oracle_trace.csv";
    oracle->add_option("--basis-index", basis_index, "basis function linear index");
    oracle->add_option("--fd-h", fd_cfg.h, "FD spatial step");
    oracle->add_option("--fd-cfl", fd_cfg.cfl, "FD CFL ratio");
    oracle->add_option("--fd-half-width", fd_cfg.half_width, "FD domain half-width");
    oracle->add_option("-o,--output", oracle_out, "output CSV");
    oracle->callback([&] {
        const BasisGrid grid = ogrid.grid();
        const MeasurementGeometry geom = ogeom.geometry();
        const Vector column = oracle_column(basis_index, grid, geom, fd_cfg);
        std::vector<std::vector<double>> rows;
        for (int n = 0; n < geom.num_detectors; ++n)
            for (int j = 0; j < geom.num_times; ++j)
                rows.push_back({double(n), geom.time_sample(j), column[geom.row_index(n, j)]});
        io::save_csv(oracle_out, {"detector", "time", "pressure"}, rows);
        std::cout << "wrote " << oracle_out << "\n";
    });

    // ---- pipeline ------------------------------------------------------------------
    auto* pipe = app.add_subcommand("pipeline", "run the full desk-scale workflow");
    std::string config_path;
    RunConfig rc;
    GridFlags pl_grid;
    GeomFlags pl_geom;
    pl_grid.attach(pipe);
    pl_geom.attach(pipe);
    std::optional<double> pl_alpha;
    std::optional<int> pl_kept;
    pipe->add_option("--config", config_path, "JSON config file (flags override it)");
    pipe->add_option("--train-count", rc.train_count, "training phantoms");
    pipe->add_option("--validation-count", rc.validation_count, "validation phantoms");
    pipe->add_option("--test-count", rc.test_count, "test phantoms");
    pipe->add_option("--rho", rc.rho, "test noise fraction");
    pipe->add_option("--seed", rc.seed, "master seed");
    pipe->add_option("--alpha", pl_alpha, "explicit truncation threshold");
    pipe->add_option("--kept", pl_kept, "explicit kept count");
    pipe->add_option("--svd-backend", rc.svd_backend, "deterministic | randomized")
        ->check(CLI::IsMember({"deterministic", "randomized"}));
    pipe->add_option("--epochs", rc.train_cfg.epochs, "training epochs");
    pipe->add_option("--lr", rc.train_cfg.learning_rate, "learning rate");
    pipe->add_option("--momentum", rc.train_cfg.momentum, "momentum");
    pipe->add_option("--batch", rc.train_cfg.batch_size, "batch size");
    pipe->add_option("--methods", rc.methods, "methods to evaluate");
    pipe->add_option("--resolution", rc.table_resolution, "profile table resolution");
    pipe->add_option("-o,--out-dir", rc.out_dir, "output directory");
    pipe->callback([&] {
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw std::runtime_error("cannot open config '" + config_path + "'");
            const json j = json::parse(is);
            // file values apply only where the flag was not given
            auto set_if = [&](const char* key, auto& target, const CLI::Option* opt) {
                using T = std::decay_t<decltype(target)>;
                if (j.contains(key) && (!opt || opt->count() == 0)) target = j.at(key).get<T>();
            };
            set_if("train_count", rc.train_count, pipe->get_option("--train-count"));
            set_if("validation_count", rc.validation_count, pipe->get_option("--validation-count"));
            set_if("test_count", rc.test_count, pipe->get_option("--test-count"));
            set_if("rho", rc.rho, pipe->get_option("--rho"));
            set_if("seed", rc.seed, pipe->get_option("--seed"));
            set_if("svd_backend", rc.svd_backend, pipe->get_option("--svd-backend"));
            set_if("epochs", rc.train_cfg.epochs, pipe->get_option("--epochs"));
            set_if("lr", rc.train_cfg.learning_rate, pipe->get_option("--lr"));
            set_if("momentum", rc.train_cfg.momentum, pipe->get_option("--momentum"));
            set_if("batch", rc.train_cfg.batch_size, pipe->get_option("--batch"));
            set_if("methods", rc.methods, pipe->get_option("--methods"));
            set_if("table_resolution", rc.table_resolution, pipe->get_option("--resolution"));
            set_if("out_dir", rc.out_dir, pipe->get_option("--out-dir"));
            set_if("grid_n", pl_grid.n, pipe->get_option("--grid-n"));
            set_if("kb_a", pl_grid.kb_a, pipe->get_option("--kb-a"));
            set_if("kb_gamma", pl_grid.kb_gamma, pipe->get_option("--kb-gamma"));
            set_if("kb_m", pl_grid.kb_m, pipe->get_option("--kb-m"));
            set_if("detectors", pl_geom.detectors, pipe->get_option("--detectors"));
            set_if("times", pl_geom.times, pipe->get_option("--times"));
            set_if("horizon", pl_geom.horizon, pipe->get_option("--horizon"));
            if (j.contains("alpha") && !pl_alpha) pl_alpha = j.at("alpha").get<double>();
            if (j.contains("kept") && !pl_kept) pl_kept = j.at("kept").get<int>();
            if (j.contains("widths")) rc.arch.widths = j.at("widths").get<std::vector<int>>();
        }
        rc.grid = pl_grid.grid();
        rc.geometry = pl_geom.geometry();
        rc.arch.input_size = rc.grid.n;
        rc.alpha = pl_alpha;
        rc.kept = pl_kept;
        rc.train_cfg.seed = rc.seed;
        const PipelineResult result = run_pipeline(rc);
        std::cout << "kept " << result.kept << " singular components\n";
        for (const EvalReport& rep : result.reports)
            std::cout << rep.method << ": mean relative error " << rep.mean << "\n";
        std::cout << "report: " << result.report_path << "\n";
    });

    // ---- emit-figures ------------------------------------------------------------
    auto* figs = app.add_subcommand("emit-figures", "reconstruction/difference images and SV decay CSV");
    std::string fg_recon = "recon", fg_dataset = "dataset_test", fg_factors = "factors.bin",
                fg_out = "figures";
    int fg_count = 3;
    figs->add_option("--recon-dir", fg_recon, "directory with recon_NNNN.f64 files");
    figs->add_option("--dataset", fg_dataset, "dataset directory with ground truth");
    figs->add_option("--factors", fg_factors, "SVD factors container");
    figs->add_option("--count", fg_count, "number of samples to render");
    figs->add_option("-o,--output", fg_out, "output directory");
    figs->callback([&] {
        const SvdFactors f = io::load_factors(fg_factors);
        const Dataset ds = io::load_dataset(fg_dataset);
        std::vector<Vector> xhat;
        for (size_t i = 0; i < ds.x.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "recon_%04zu.f64", i);
            const fs::path p = fs::path(fg_recon) / name;
            if (!fs::exists(p)) break;
            xhat.push_back(io::load_raw_vector(p.string()));
        }
        emit_figures(fg_out, f, xhat, ds.x, ds.grid_n, fg_count);
        std::cout << "wrote figures to " << fg_out << "\n";
    });

    try {
        CLI11_PARSE(app, argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

// Command-line front end: dataset generation, training, rendering,
// evaluation, and the sampling-strategy benchmark.
//
// Config precedence: built-in defaults < --config JSON file < flags.
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "nrdf/dataset.hpp"
#include "nrdf/metrics.hpp"
#include "nrdf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    // sampling
    std::string strategy = "gaussian";
    int n_samples = 16;
    double delta = 0.15;
    double sigma = 0.05;
    double sigma_min = 0.01;
    double sigma_max = 0.5;
    double k_error = 1.0;
    // training
    int iters = 20000;
    int batch_rays = 1024;
    double lr = 5e-4;
    double lambda_depth = 0.1;
    int eval_every = 0;
    int checkpoint_every = 0;
    // field
    int trunk_depth = 4;
    int trunk_width = 128;
    int l_pos = 6;
    int l_dir = 4;
    // dataset generation
    std::string scene = "cube";
    int train_views = 8;
    int test_views = 4;
    double radius = 3.0;
    double elevation = 30.0;
    int resolution = 100;
    double near = 0.5;
    double far = 6.0;
    double sigma_noise = 0.0;
    // shared
    uint64_t seed = 0;
    int workers = 1;
    std::string dataset;
    std::string out = "out";
    std::string checkpoint;

    json to_json() const {
        return json{{"strategy", strategy},   {"n_samples", n_samples},
                    {"delta", delta},         {"sigma", sigma},
                    {"sigma_min", sigma_min}, {"sigma_max", sigma_max},
                    {"k_error", k_error},     {"iters", iters},
                    {"batch_rays", batch_rays}, {"lr", lr},
                    {"lambda_depth", lambda_depth}, {"eval_every", eval_every},
                    {"checkpoint_every", checkpoint_every},
                    {"trunk_depth", trunk_depth}, {"trunk_width", trunk_width},
                    {"l_pos", l_pos},         {"l_dir", l_dir},
                    {"scene", scene},         {"train_views", train_views},
                    {"test_views", test_views}, {"radius", radius},
                    {"elevation", elevation}, {"resolution", resolution},
                    {"near", near},           {"far", far},
                    {"sigma_noise", sigma_noise}, {"seed", seed},
                    {"workers", workers},     {"dataset", dataset},
                    {"out", out},             {"checkpoint", checkpoint}};
    }

    void apply_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw CLI::ValidationError("--config", "cannot open " + path);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
        }
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
        };
        get("strategy", strategy); get("n_samples", n_samples); get("delta", delta);
        get("sigma", sigma); get("sigma_min", sigma_min); get("sigma_max", sigma_max);
        get("k_error", k_error); get("iters", iters); get("batch_rays", batch_rays);
        get("lr", lr); get("lambda_depth", lambda_depth); get("eval_every", eval_every);
        get("checkpoint_every", checkpoint_every); get("trunk_depth", trunk_depth);
        get("trunk_width", trunk_width); get("l_pos", l_pos); get("l_dir", l_dir);
        get("scene", scene); get("train_views", train_views); get("test_views", test_views);
        get("radius", radius); get("elevation", elevation); get("resolution", resolution);
        get("near", near); get("far", far); get("sigma_noise", sigma_noise);
        get("seed", seed); get("workers", workers); get("dataset", dataset);
        get("out", out); get("checkpoint", checkpoint);
    }

    nrdf::SamplingConfig sampling_config() const {
        nrdf::SamplingConfig s;
        s.strategy = nrdf::strategy_from_name(strategy);
        s.n_samples = n_samples;
        s.delta = delta;
        s.sigma_fixed = sigma;
        s.sigma_min = sigma_min;
        s.sigma_max = sigma_max;
        s.k_error = k_error;
        s.validate();
        return s;
    }

    nrdf::TrainConfig train_config() const {
        nrdf::TrainConfig t;
        t.iters = iters;
        t.batch_rays = batch_rays;
        t.lr = lr;
        t.lambda_depth = lambda_depth;
        t.seed = seed;
        t.eval_every = eval_every;
        t.checkpoint_every = checkpoint_every;
        t.workers = workers;
        t.out_dir = out;
        t.validate();
        return t;
    }

    nrdf::FieldArch field_arch() const {
        nrdf::FieldArch a;
        a.trunk_depth = trunk_depth;
        a.trunk_width = trunk_width;
        a.encoding.l_pos = l_pos;
        a.encoding.l_dir = l_dir;
        return a;
    }
};

void add_common_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--seed", cfg.seed, "master random seed");
    cmd->add_option("--workers", cfg.workers, "worker thread count");
    cmd->add_option("--out", cfg.out, "output directory");
}

void add_sampling_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--strategy", cfg.strategy,
                    "sampling strategy: global|stratified|gaussian|adaptive");
    cmd->add_option("--n-samples", cfg.n_samples, "samples per ray");
    cmd->add_option("--delta", cfg.delta, "stratified-local half-width");
    cmd->add_option("--sigma", cfg.sigma, "gaussian std-dev");
    cmd->add_option("--sigma-min", cfg.sigma_min, "adaptive sigma lower bound");
    cmd->add_option("--sigma-max", cfg.sigma_max, "adaptive sigma upper bound");
    cmd->add_option("--k-error", cfg.k_error, "adaptive sigma slope vs error");
}

void add_arch_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--trunk-depth", cfg.trunk_depth, "trunk layer count");
    cmd->add_option("--trunk-width", cfg.trunk_width, "trunk hidden units");
    cmd->add_option("--l-pos", cfg.l_pos, "position encoding frequencies");
    cmd->add_option("--l-dir", cfg.l_dir, "direction encoding frequencies");
}

nrdf::RgbdDataset load_with_errors(const RunConfig& cfg, bool need_errors) {
    if (cfg.dataset.empty())
        throw CLI::ValidationError("--dataset", "a dataset directory is required");
    nrdf::RgbdDataset ds = nrdf::load_dataset(cfg.dataset);
    if (need_errors) nrdf::ensure_error_maps(ds, cfg.dataset);
    return ds;
}

int cmd_generate(const RunConfig& cfg) {
    nrdf::SceneSpec scene = nrdf::scene_by_name(cfg.scene);
    nrdf::DatasetGenConfig g;
    g.n_train = cfg.train_views;
    g.n_test = cfg.test_views;
    g.radius = cfg.radius;
    g.elevation_deg = cfg.elevation;
    g.resolution = cfg.resolution;
    g.near = cfg.near;
    g.far = cfg.far;
    g.sigma_noise = cfg.sigma_noise;
    g.seed = cfg.seed;
    try {
        g.validate();
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    nrdf::RgbdDataset ds = nrdf::generate_dataset(scene, g);
    nrdf::save_dataset(ds, cfg.out);
    std::cout << "wrote " << ds.frames.size() << " frames to "
              << (fs::path(cfg.out) / "manifest.json").string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    nrdf::SamplingConfig scfg = cfg.sampling_config();
    nrdf::RgbdDataset ds =
        load_with_errors(cfg, scfg.strategy == nrdf::Strategy::Adaptive);
    nrdf::TrainConfig tcfg = cfg.train_config();
    nrdf::FieldParams<float> resume;
    nrdf::AdamState<float> resume_adam;
    bool resuming = !cfg.checkpoint.empty();
    long start_iter = 0;
    if (resuming) {
        resume = nrdf::load_checkpoint(cfg.checkpoint);
        resume_adam = nrdf::load_adam_state(cfg.checkpoint + ".opt", resume);
        start_iter = resume_adam.step;
    }
    nrdf::TrainResult r =
        nrdf::train(ds, tcfg, scfg, cfg.field_arch(),
                    resuming ? &resume : nullptr, resuming ? &resume_adam : nullptr,
                    start_iter);
    if (!r.log.empty()) {
        const auto& last = r.log.back();
        std::cout << "final losses: color " << last.loss_color << ", depth "
                  << last.loss_depth << ", total " << last.loss_total << "\n";
    }
    std::cout << "total wall time: " << r.total_wall_s << " s ("
              << r.network_evals << " network evaluations)\n"
              << "checkpoint: " << (fs::path(cfg.out) / "ckpt_final.nrdf").string()
              << "\n";
    return 0;
}

int cmd_render(const RunConfig& cfg, int view, int orbit) {
    if (cfg.checkpoint.empty())
        throw CLI::ValidationError("--checkpoint", "a checkpoint is required");
    nrdf::FieldParams<float> params = nrdf::load_checkpoint(cfg.checkpoint);
    nrdf::SamplingConfig scfg = cfg.sampling_config();
    fs::create_directories(cfg.out);

    auto render_one = [&](const nrdf::Camera& cam, const nrdf::DepthMap* depth,
                          double near, double far, const std::string& stem) {
        nrdf::Image color;
        nrdf::DepthMap pred_depth, acc;
        nrdf::render_image(params, cam, near, far, depth, nullptr, scfg, color,
                           pred_depth, acc, cfg.workers);
        nrdf::write_png_rgb8((fs::path(cfg.out) / (stem + ".png")).string(), color);
        nrdf::write_pfm((fs::path(cfg.out) / (stem + "_depth.pfm")).string(), pred_depth);
        nrdf::write_png_rgb8((fs::path(cfg.out) / (stem + "_depth.png")).string(),
                             nrdf::depth_visualization(pred_depth, near, far));
        std::cout << "wrote " << (fs::path(cfg.out) / (stem + ".png")).string() << "\n";
    };

    if (orbit > 0) {
        for (int i = 0; i < orbit; ++i) {
            nrdf::Camera cam = nrdf::orbit_camera(2.0 * M_PI * i / orbit, cfg.elevation,
                                                  cfg.radius, cfg.resolution);
            char stem[32];
            std::snprintf(stem, sizeof stem, "orbit_%04d", i);
            render_one(cam, nullptr, cfg.near, cfg.far, stem);
        }
        return 0;
    }
    nrdf::RgbdDataset ds = load_with_errors(cfg, false);
    if (view < 0 || view >= static_cast<int>(ds.frames.size()))
        throw CLI::ValidationError("--view", "view index out of range");
    char stem[32];
    std::snprintf(stem, sizeof stem, "view_%04d", view);
    render_one(ds.frames[view].camera, &ds.frames[view].depth, ds.near, ds.far, stem);
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.checkpoint.empty())
        throw CLI::ValidationError("--checkpoint", "a checkpoint is required");
    nrdf::FieldParams<float> params = nrdf::load_checkpoint(cfg.checkpoint);
    nrdf::SamplingConfig scfg = cfg.sampling_config();
    nrdf::RgbdDataset ds = load_with_errors(cfg, false);
    nrdf::EvalReport rep =
        nrdf::evaluate(params, ds, "test", scfg, cfg.out, cfg.workers);
    nrdf::write_report(rep, (fs::path(cfg.out) / "report.json").string(),
                       (fs::path(cfg.out) / "report.csv").string());
    std::cout << "mean psnr " << rep.mean_psnr << " dB, ssim " << rep.mean_ssim
              << ", abs_rel " << rep.mean_abs_rel << " (lpips n/a)\n";
    return 0;
}

int cmd_bench(const RunConfig& cfg) {
    nrdf::RgbdDataset ds = load_with_errors(cfg, true);
    fs::create_directories(cfg.out);
    struct Row {
        std::string name;
        nrdf::Strategy strategy;
        bool ok = false;
        double psnr = 0, ssim = 0, abs_rel = 0, wall = 0;
        uint64_t evals = 0;
        std::string error;
    };
    std::vector<Row> rows = {{"Stratified", nrdf::Strategy::StratifiedLocal},
                             {"Gaussian", nrdf::Strategy::Gaussian},
                             {"Adaptive", nrdf::Strategy::Adaptive},
                             {"NeRF", nrdf::Strategy::GlobalStratified}};
    for (auto& row : rows) {
        try {
            nrdf::SamplingConfig scfg = cfg.sampling_config();
            scfg.strategy = row.strategy;
            nrdf::TrainConfig tcfg = cfg.train_config();
            tcfg.out_dir = (fs::path(cfg.out) / row.name).string();
            tcfg.eval_every = 0;
            nrdf::TrainResult r = nrdf::train(ds, tcfg, scfg, cfg.field_arch());
            nrdf::SamplingConfig ecfg = scfg;
            ecfg.perturb = false;
            nrdf::EvalReport rep =
                nrdf::evaluate(r.params, ds, "test", ecfg, "", cfg.workers);
            row.ok = true;
            row.psnr = rep.mean_psnr;
            row.ssim = rep.mean_ssim;
            row.abs_rel = rep.mean_abs_rel;
            row.wall = r.total_wall_s;
            row.evals = r.network_evals;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    }
    std::ofstream cs(fs::path(cfg.out) / "bench.csv");
    cs << "strategy,psnr,ssim,abs_rel,wall_time,network_evals\n";
    bool any_failed = false;
    for (const auto& row : rows) {
        if (row.ok) {
            cs << row.name << "," << row.psnr << "," << row.ssim << "," << row.abs_rel
               << "," << row.wall << "," << row.evals << "\n";
            std::cout << row.name << ": psnr " << row.psnr << ", ssim " << row.ssim
                      << ", abs_rel " << row.abs_rel << ", wall " << row.wall
                      << " s, evals " << row.evals << "\n";
        } else {
            any_failed = true;
            cs << row.name << ",failed,,,,\n";
            std::cerr << row.name << " failed: " << row.error << "\n";
        }
    }
    std::cout << "wrote " << (fs::path(cfg.out) / "bench.csv").string() << "\n";
    return any_failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;

    // config file applies before flag parsing so flags win
    for (int i = 1; i < argc - 1; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                cfg.apply_file(argv[i + 1]);
            } catch (const CLI::Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }
    }

    CLI::App app{"RGB-D neural radiance field with depth-guided local sampling"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    bool print_config = false;
    app.add_flag("--print-config", print_config, "print the resolved configuration and exit");

    auto* gen = app.add_subcommand("generate", "synthesize an RGB-D dataset");
    add_common_options(gen, cfg);
    gen->add_option("--scene", cfg.scene, "scene name (cube, sphere)");
    gen->add_option("--train-views", cfg.train_views, "number of training views");
    gen->add_option("--test-views", cfg.test_views, "number of held-out views");
    gen->add_option("--res", cfg.resolution, "image resolution (square)");
    gen->add_option("--radius", cfg.radius, "camera orbit radius");
    gen->add_option("--elevation", cfg.elevation, "camera elevation in degrees");
    gen->add_option("--near", cfg.near, "near bound");
    gen->add_option("--far", cfg.far, "far bound");
    gen->add_option("--sigma-noise", cfg.sigma_noise, "gaussian depth noise std-dev");

    auto* tr = app.add_subcommand("train", "train a radiance field");
    add_common_options(tr, cfg);
    add_sampling_options(tr, cfg);
    tr->add_option("--dataset", cfg.dataset, "dataset directory");
    tr->add_option("--iters", cfg.iters, "optimization steps");
    tr->add_option("--batch", cfg.batch_rays, "rays per batch");
    tr->add_option("--lr", cfg.lr, "initial learning rate");
    tr->add_option("--lambda-depth", cfg.lambda_depth, "depth loss weight");
    tr->add_option("--eval-every", cfg.eval_every, "evaluate test split every N iters");
    tr->add_option("--checkpoint-every", cfg.checkpoint_every, "checkpoint every N iters");
    tr->add_option("--checkpoint", cfg.checkpoint, "resume from this checkpoint");
    add_arch_options(tr, cfg);

    int render_view = 0, render_orbit = 0;
    auto* rn = app.add_subcommand("render", "render views from a checkpoint");
    add_common_options(rn, cfg);
    add_sampling_options(rn, cfg);
    rn->add_option("--checkpoint", cfg.checkpoint, "checkpoint file");
    rn->add_option("--dataset", cfg.dataset, "dataset directory (for --view)");
    rn->add_option("--view", render_view, "dataset view index to render");
    rn->add_option("--orbit", render_orbit, "render N orbit poses instead");
    rn->add_option("--res", cfg.resolution, "orbit image resolution");
    rn->add_option("--radius", cfg.radius, "orbit radius");
    rn->add_option("--elevation", cfg.elevation, "orbit elevation in degrees");
    rn->add_option("--near", cfg.near, "near bound for orbit renders");
    rn->add_option("--far", cfg.far, "far bound for orbit renders");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common_options(ev, cfg);
    add_sampling_options(ev, cfg);
    ev->add_option("--checkpoint", cfg.checkpoint, "checkpoint file");
    ev->add_option("--dataset", cfg.dataset, "dataset directory");

    auto* be = app.add_subcommand("bench", "train and score all four strategies");
    add_common_options(be, cfg);
    add_sampling_options(be, cfg);
    be->add_option("--dataset", cfg.dataset, "dataset directory");
    be->add_option("--iters", cfg.iters, "optimization steps per strategy");
    be->add_option("--batch", cfg.batch_rays, "rays per batch");
    be->add_option("--lr", cfg.lr, "initial learning rate");
    be->add_option("--lambda-depth", cfg.lambda_depth, "depth loss weight");
    add_arch_options(be, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (print_config) {
        std::cout << cfg.to_json().dump(2) << "\n";
        return 0;
    }

    try {
        if (gen->parsed()) return cmd_generate(cfg);
        if (tr->parsed()) return cmd_train(cfg);
        if (rn->parsed()) return cmd_render(cfg, render_view, render_orbit);
        if (ev->parsed()) return cmd_eval(cfg);
        if (be->parsed()) return cmd_bench(cfg);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

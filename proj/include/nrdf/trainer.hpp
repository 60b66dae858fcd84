#pragma once

// Training loop: joint color + depth objective over random ray batches,
// hand-written Adam, per-phase timing, NDJSON logging, and checkpointing.

#include <chrono>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "nrdf/metrics.hpp"
#include "nrdf/renderer.hpp"

namespace nrdf {

struct TrainConfig {
    int iters = 20000;
    int batch_rays = 1024;
    double lr = 5e-4;
    bool lr_decay = true;  // exponential decay to lr*0.1 at `iters`
    double lambda_depth = 0.1;
    double acc_mask_threshold = 0.0;
    uint64_t seed = 0;
    int eval_every = 0;       // 0 = no mid-run eval
    int checkpoint_every = 0; // 0 = final checkpoint only
    int workers = 1;
    std::string out_dir;

    void validate() const {
        if (iters < 0) throw std::domain_error("train: iters must be >= 0");
        if (batch_rays < 1) throw std::domain_error("train: batch_rays must be >= 1");
        if (lr <= 0) throw std::domain_error("train: lr must be positive");
        if (lambda_depth < 0) throw std::domain_error("train: lambda_depth must be >= 0");
        if (workers < 1) throw std::domain_error("train: workers must be >= 1");
    }
};

// --- Adam ------------------------------------------------------------------

template <typename T>
struct AdamState {
    ParamGradients<T> m, v;
    long step = 0;
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    static AdamState zeros_like(const FieldParams<T>& p) {
        AdamState s;
        s.m = ParamGradients<T>::zeros_like(p);
        s.v = ParamGradients<T>::zeros_like(p);
        return s;
    }
};

template <typename T>
inline void adam_step(FieldParams<T>& params, const ParamGradients<T>& grads,
                      AdamState<T>& state, double lr_t) {
    if (!grads.all_finite())
        throw std::runtime_error("adam_step: non-finite gradients (diverged?)");
    state.step += 1;
    double bc1 = 1.0 - std::pow(AdamState<T>::beta1, state.step);
    double bc2 = 1.0 - std::pow(AdamState<T>::beta2, state.step);
    auto update = [&](MatX<T>& p, MatX<T>& m, MatX<T>& v, const MatX<T>& g) {
        m = T(AdamState<T>::beta1) * m + T(1 - AdamState<T>::beta1) * g;
        v = (T(AdamState<T>::beta2) * v.array() +
             T(1 - AdamState<T>::beta2) * g.array().square())
                .matrix();
        p.array() -= T(lr_t) * (m.array() / T(bc1)) /
                     ((v.array() / T(bc2)).sqrt() + T(AdamState<T>::eps));
    };
    auto update_vec = [&](VecX<T>& p, VecX<T>& m, VecX<T>& v, const VecX<T>& g) {
        m = T(AdamState<T>::beta1) * m + T(1 - AdamState<T>::beta1) * g;
        v = (T(AdamState<T>::beta2) * v.array() +
             T(1 - AdamState<T>::beta2) * g.array().square())
                .matrix();
        p.array() -= T(lr_t) * (m.array() / T(bc1)) /
                     ((v.array() / T(bc2)).sqrt() + T(AdamState<T>::eps));
    };
    for (size_t i = 0; i < params.trunk.size(); ++i) {
        update(params.trunk[i].weight, state.m.trunk[i].weight, state.v.trunk[i].weight,
               grads.trunk[i].weight);
        update_vec(params.trunk[i].bias, state.m.trunk[i].bias, state.v.trunk[i].bias,
                   grads.trunk[i].bias);
    }
    update(params.density_head.weight, state.m.density_head.weight,
           state.v.density_head.weight, grads.density_head.weight);
    update_vec(params.density_head.bias, state.m.density_head.bias,
               state.v.density_head.bias, grads.density_head.bias);
    update(params.color_head.weight, state.m.color_head.weight,
           state.v.color_head.weight, grads.color_head.weight);
    update_vec(params.color_head.bias, state.m.color_head.bias,
               state.v.color_head.bias, grads.color_head.bias);
}

inline double decayed_lr(const TrainConfig& cfg, long step) {
    if (!cfg.lr_decay || cfg.iters <= 0) return cfg.lr;
    return cfg.lr * std::pow(0.1, static_cast<double>(step) / cfg.iters);
}

// --- losses ----------------------------------------------------------------

template <typename T>
inline double color_loss(const MatX<T>& pred, const MatX<T>& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
        throw std::domain_error("color_loss: shape mismatch");
    if (pred.size() == 0) throw std::domain_error("color_loss: empty batch");
    return (pred - gt).template cast<double>().array().square().mean();
}

// Masked mean squared depth error. Rays fail the mask when their sensor depth
// is invalid or their rendered acc falls at or below acc_threshold; with the
// default threshold of 0 the acc test never excludes a ray (acc is strictly
// positive for any positive density), which keeps the depth signal alive early
// in training when acc is small everywhere.
template <typename T>
inline double depth_loss(const VecX<T>& pred_depth, const VecX<T>& pred_acc,
                         const VecX<T>& sensor_depth,
                         const std::vector<bool>& valid_mask,
                         double acc_threshold = 0.0) {
    if (pred_depth.size() != sensor_depth.size() ||
        pred_depth.size() != pred_acc.size() ||
        static_cast<size_t>(pred_depth.size()) != valid_mask.size())
        throw std::domain_error("depth_loss: shape mismatch");
    double sum = 0;
    long count = 0;
    for (Eigen::Index i = 0; i < pred_depth.size(); ++i) {
        if (!valid_mask[i] || !(pred_acc(i) > acc_threshold)) continue;
        double d = static_cast<double>(pred_depth(i)) - sensor_depth(i);
        sum += d * d;
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

// --- ray batches -----------------------------------------------------------

struct RayBatchEntry {
    Ray ray;
    float gt_rgb[3] = {0, 0, 0};
    double sensor_z = 0;       // planar sensor depth; <=0 invalid
    double sensor_t = 0;       // sensor depth converted to ray distance
    double error = -1;         // error-map value, <0 when unavailable
    bool depth_valid = false;
    uint64_t sample_seed = 0;  // per-ray rng stream for sampling
};

// Uniform over (train frame, pixel); deterministic per (seed, iter).
inline std::vector<RayBatchEntry> sample_ray_batch(const RgbdDataset& ds, int batch_rays,
                                                   uint64_t seed, long iter) {
    auto train = ds.split_indices("train");
    if (train.empty()) throw std::domain_error("sample_ray_batch: empty dataset");
    Rng rng(hash_combine(hash_combine(seed, hash_str("ray_batch")), static_cast<uint64_t>(iter)));
    std::vector<RayBatchEntry> batch;
    batch.reserve(batch_rays);
    for (int k = 0; k < batch_rays; ++k) {
        size_t fi = train[rng.uniform_int(static_cast<uint32_t>(train.size()))];
        const RgbdFrame& f = ds.frames[fi];
        int w = f.color.width, h = f.color.height;
        uint32_t pix = rng.uniform_int(static_cast<uint32_t>(w) * h);
        int x = static_cast<int>(pix % w), y = static_cast<int>(pix / w);
        RayBatchEntry e;
        e.ray = generate_ray(f.camera, x + 0.5, y + 0.5, ds.near, ds.far);
        const float* px = f.color.px(x, y);
        e.gt_rgb[0] = px[0];
        e.gt_rgb[1] = px[1];
        e.gt_rgb[2] = px[2];
        double d = f.depth.at(x, y);
        e.depth_valid = depth_valid(d);
        e.sensor_z = e.depth_valid ? d : 0.0;
        e.sensor_t = e.depth_valid ? d * e.ray.depth_to_t : 0.0;
        if (!ds.error_maps.empty()) {
            // error maps are aligned with the train split ordering
            auto pos = std::find(train.begin(), train.end(), fi) - train.begin();
            e.error = ds.error_maps[pos].at(x, y);
        }
        e.sample_seed = hash_combine(
            hash_combine(hash_combine(seed, static_cast<uint64_t>(fi)), pix),
            static_cast<uint64_t>(iter));
        batch.push_back(e);
    }
    return batch;
}

// --- train step ------------------------------------------------------------

struct LossBreakdown {
    double loss_color = 0;
    double loss_depth = 0;
    double loss_total = 0;
    double psnr_batch = 0;
    double wall_ms = 0;
};

struct PhaseTimes {
    double sampling_s = 0, field_s = 0, composite_s = 0, optimizer_s = 0;
};

// One optimization step. Rays are sharded across workers; each worker owns a
// private gradient buffer; buffers are reduced in shard order before the
// single-threaded Adam update, so results do not depend on thread timing.
template <typename T>
inline LossBreakdown train_step(FieldParams<T>& params, AdamState<T>& adam,
                                const std::vector<RayBatchEntry>& batch,
                                const TrainConfig& cfg, const SamplingConfig& scfg,
                                PhaseTimes* phases = nullptr,
                                uint64_t* network_evals = nullptr) {
    using clock = std::chrono::steady_clock;
    auto t_start = clock::now();
    const int B = static_cast<int>(batch.size());
    const int n = scfg.n_samples;

    // Phase 1: sampling
    auto t0 = clock::now();
    std::vector<RaySamples> samples(B);
    long valid_count = 0;
    for (int i = 0; i < B; ++i) {
        Rng rng(batch[i].sample_seed);
        samples[i] = sample_ray(batch[i].ray, batch[i].sensor_z, batch[i].error, scfg, rng);
        if (batch[i].depth_valid) ++valid_count;
    }
    auto t1 = clock::now();

    // Phase 2+3: per-shard forward, composite, backward
    int workers = std::max(1, cfg.workers);
    workers = std::min(workers, B);
    std::vector<ParamGradients<T>> shard_grads(workers);
    std::vector<double> shard_color_sq(workers, 0.0), shard_depth_sq(workers, 0.0);
    std::vector<double> shard_field_s(workers, 0.0), shard_composite_s(workers, 0.0);

    auto run_shard = [&](int shard, int b0, int b1) {
        int rows = (b1 - b0) * n;
        MatX<T> positions(rows, 3), viewdirs(rows, 3);
        for (int i = b0; i < b1; ++i) {
            MatX<T> p, v;
            ray_sample_positions<T>(batch[i].ray, samples[i].t, p, v);
            positions.middleRows((i - b0) * n, n) = p;
            viewdirs.middleRows((i - b0) * n, n) = v;
        }
        auto tf0 = clock::now();
        FieldCache<T> cache;
        field_forward(params, positions, viewdirs, &cache);
        auto tf1 = clock::now();

        VecX<T> d_density = VecX<T>::Zero(rows);
        MatX<T> d_rgb = MatX<T>::Zero(rows, 3);
        double color_sq = 0, depth_sq = 0;
        std::vector<T> t_buf(n), den_buf(n), dd_buf;
        std::vector<std::array<T, 3>> rgb_buf(n), drgb_buf;
        for (int i = b0; i < b1; ++i) {
            int off = (i - b0) * n;
            for (int s = 0; s < n; ++s) {
                t_buf[s] = static_cast<T>(samples[i].t[s]);
                den_buf[s] = cache.out.density(off + s);
                rgb_buf[s] = {cache.out.rgb(off + s, 0), cache.out.rgb(off + s, 1),
                              cache.out.rgb(off + s, 2)};
            }
            RenderResult<T> r =
                composite(t_buf, den_buf, rgb_buf, static_cast<T>(batch[i].ray.t_far));

            T d_color[3];
            for (int c = 0; c < 3; ++c) {
                double err = static_cast<double>(r.color[c]) - batch[i].gt_rgb[c];
                color_sq += err * err;
                d_color[c] = static_cast<T>(2.0 * err / (3.0 * B));
            }
            T d_depth_out = 0;
            if (batch[i].depth_valid && valid_count > 0) {
                double err = static_cast<double>(r.depth) - batch[i].sensor_t;
                depth_sq += err * err;
                d_depth_out =
                    static_cast<T>(cfg.lambda_depth * 2.0 * err / valid_count);
            }
            composite_backward(t_buf, den_buf, rgb_buf, static_cast<T>(batch[i].ray.t_far),
                               d_color, d_depth_out, T(0), dd_buf, drgb_buf);
            for (int s = 0; s < n; ++s) {
                d_density(off + s) = dd_buf[s];
                for (int c = 0; c < 3; ++c) d_rgb(off + s, c) = drgb_buf[s][c];
            }
        }
        auto tf2 = clock::now();
        shard_grads[shard] = field_backward(params, cache, d_density, d_rgb);
        auto tf3 = clock::now();
        shard_color_sq[shard] = color_sq;
        shard_depth_sq[shard] = depth_sq;
        shard_field_s[shard] = std::chrono::duration<double>(tf1 - tf0).count() +
                               std::chrono::duration<double>(tf3 - tf2).count();
        shard_composite_s[shard] = std::chrono::duration<double>(tf2 - tf1).count();
    };

    if (workers == 1) {
        run_shard(0, 0, B);
    } else {
        std::vector<std::thread> pool;
        int per = (B + workers - 1) / workers;
        for (int k = 0; k < workers; ++k) {
            int b0 = k * per, b1 = std::min(B, b0 + per);
            if (b0 < b1) pool.emplace_back(run_shard, k, b0, b1);
        }
        for (auto& th : pool) th.join();
    }
    auto t2 = clock::now();

    // ordered reduction
    ParamGradients<T>& grads = shard_grads[0];
    for (int k = 1; k < workers; ++k)
        if (!shard_grads[k].trunk.empty()) grads.add(shard_grads[k]);

    LossBreakdown lb;
    double color_sq = 0, depth_sq = 0;
    for (int k = 0; k < workers; ++k) {
        color_sq += shard_color_sq[k];
        depth_sq += shard_depth_sq[k];
    }
    lb.loss_color = color_sq / (3.0 * B);
    lb.loss_depth = valid_count > 0 ? depth_sq / valid_count : 0.0;
    lb.loss_total = lb.loss_color + cfg.lambda_depth * lb.loss_depth;
    lb.psnr_batch = lb.loss_color > 0 ? 10.0 * std::log10(1.0 / lb.loss_color) : kPsnrCap;

    auto t3 = clock::now();
    adam_step(params, grads, adam, decayed_lr(cfg, adam.step));
    auto t4 = clock::now();

    if (network_evals) *network_evals += static_cast<uint64_t>(B) * n;
    if (phases) {
        phases->sampling_s += std::chrono::duration<double>(t1 - t0).count();
        for (int k = 0; k < workers; ++k) {  // CPU time summed across shards
            phases->field_s += shard_field_s[k];
            phases->composite_s += shard_composite_s[k];
        }
        phases->optimizer_s += std::chrono::duration<double>(t4 - t3).count();
    }
    (void)t2;
    lb.wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - t_start).count();
    return lb;
}

// --- full training run -----------------------------------------------------

struct EvalPoint {
    long iter = 0;
    double train_wall_s = 0;  // training time only, eval excluded
    double psnr = 0, ssim = 0, abs_rel = 0;
};

struct TrainResult {
    FieldParams<float> params;
    std::vector<LossBreakdown> log;
    std::vector<EvalPoint> evals;
    PhaseTimes phases;
    double total_wall_s = 0;  // training only
    uint64_t network_evals = 0;
    int workers = 1;
};

// Optimizer-state sidecar so a resumed run continues bit-exactly.
inline void save_adam_state(const std::string& path, const AdamState<float>& st) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("adam state: cannot write " + path);
    os.write("NRDA", 4);
    detail::write_u32(os, static_cast<uint32_t>(st.step));
    auto dump = [&](const LinearLayer<float>& l) {
        detail::write_f32s(os, l.weight.data(), l.weight.size());
        detail::write_f32s(os, l.bias.data(), l.bias.size());
    };
    for (const auto& l : st.m.trunk) dump(l);
    dump(st.m.density_head);
    dump(st.m.color_head);
    for (const auto& l : st.v.trunk) dump(l);
    dump(st.v.density_head);
    dump(st.v.color_head);
    if (!os) throw std::runtime_error("adam state: write failed for " + path);
}

inline AdamState<float> load_adam_state(const std::string& path,
                                        const FieldParams<float>& p) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("adam state: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NRDA", 4) != 0)
        throw std::runtime_error("adam state: bad magic in " + path);
    AdamState<float> st = AdamState<float>::zeros_like(p);
    st.step = static_cast<long>(detail::read_u32(is));
    auto slurp = [&](LinearLayer<float>& l) {
        detail::read_f32s(is, l.weight.data(), l.weight.size());
        detail::read_f32s(is, l.bias.data(), l.bias.size());
    };
    for (auto& l : st.m.trunk) slurp(l);
    slurp(st.m.density_head);
    slurp(st.m.color_head);
    for (auto& l : st.v.trunk) slurp(l);
    slurp(st.v.density_head);
    slurp(st.v.color_head);
    return st;
}

inline TrainResult train(const RgbdDataset& ds, const TrainConfig& cfg,
                         const SamplingConfig& sampling_cfg, const FieldArch& arch,
                         FieldParams<float>* resume_params = nullptr,
                         AdamState<float>* resume_adam = nullptr, long start_iter = 0) {
    cfg.validate();
    SamplingConfig scfg = sampling_cfg;
    scfg.perturb = true;
    scfg.validate();
    if (ds.split_indices("train").empty())
        throw std::domain_error("train: dataset has no train frames");

    namespace fs = std::filesystem;
    std::ofstream log_os;
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        log_os.open(fs::path(cfg.out_dir) / "train_log.ndjson",
                    start_iter > 0 ? std::ios::app : std::ios::out);
        if (!log_os)
            throw std::runtime_error("train: cannot open log in " + cfg.out_dir);
        nlohmann::json header = {{"type", "header"},
                                 {"iters", cfg.iters},
                                 {"batch_rays", cfg.batch_rays},
                                 {"lr", cfg.lr},
                                 {"lambda_depth", cfg.lambda_depth},
                                 {"strategy", strategy_name(scfg.strategy)},
                                 {"n_samples", scfg.n_samples},
                                 {"seed", cfg.seed},
                                 {"workers", cfg.workers},
                                 {"start_iter", start_iter}};
        log_os << header.dump() << "\n";
    }

    TrainResult result;
    result.workers = cfg.workers;
    result.params = resume_params ? *resume_params : field_init<float>(arch, cfg.seed);
    AdamState<float> adam = resume_adam ? *resume_adam
                                        : AdamState<float>::zeros_like(result.params);

    auto maybe_checkpoint = [&](long iter, bool final) {
        if (cfg.out_dir.empty()) return;
        if (!final && (cfg.checkpoint_every <= 0 || iter % cfg.checkpoint_every != 0))
            return;
        char name[64];
        if (final)
            std::snprintf(name, sizeof name, "ckpt_final.nrdf");
        else
            std::snprintf(name, sizeof name, "ckpt_%06ld.nrdf", iter);
        std::string path = (fs::path(cfg.out_dir) / name).string();
        save_checkpoint(path, result.params);
        save_adam_state(path + ".opt", adam);
    };

    using clock = std::chrono::steady_clock;
    double train_wall = 0;
    for (long iter = start_iter; iter < cfg.iters; ++iter) {
        auto ts = clock::now();
        auto batch = sample_ray_batch(ds, cfg.batch_rays, cfg.seed, iter);
        LossBreakdown lb = train_step(result.params, adam, batch, cfg, scfg,
                                      &result.phases, &result.network_evals);
        train_wall += std::chrono::duration<double>(clock::now() - ts).count();
        lb.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - ts).count();
        result.log.push_back(lb);
        if (log_os)
            log_os << nlohmann::json{{"iter", iter + 1},
                                     {"loss_color", lb.loss_color},
                                     {"loss_depth", lb.loss_depth},
                                     {"loss_total", lb.loss_total},
                                     {"psnr_batch", lb.psnr_batch},
                                     {"wall_ms", lb.wall_ms}}
                          .dump()
                   << "\n";

        if (cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0 &&
            !ds.split_indices("test").empty()) {
            SamplingConfig ecfg = scfg;
            ecfg.perturb = false;
            EvalReport rep =
                evaluate(result.params, ds, "test", ecfg, "", cfg.workers);
            EvalPoint ep{iter + 1, train_wall, rep.mean_psnr, rep.mean_ssim,
                         rep.mean_abs_rel};
            result.evals.push_back(ep);
            if (log_os)
                log_os << nlohmann::json{{"type", "eval"},
                                         {"iter", ep.iter},
                                         {"train_wall_s", ep.train_wall_s},
                                         {"psnr", ep.psnr},
                                         {"ssim", ep.ssim},
                                         {"abs_rel", ep.abs_rel}}
                              .dump()
                       << "\n";
        }
        maybe_checkpoint(iter + 1, false);
    }
    result.total_wall_s = train_wall;
    maybe_checkpoint(cfg.iters, true);
    if (log_os)
        log_os << nlohmann::json{{"type", "summary"},
                                 {"total_wall_s", result.total_wall_s},
                                 {"network_evals", result.network_evals},
                                 {"sampling_s", result.phases.sampling_s},
                                 {"field_s", result.phases.field_s},
                                 {"composite_s", result.phases.composite_s},
                                 {"optimizer_s", result.phases.optimizer_s}}
                      .dump()
               << "\n";
    return result;
}

}  // namespace nrdf

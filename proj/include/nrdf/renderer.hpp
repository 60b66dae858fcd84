#pragma once

// Classic volume rendering: front-to-back alpha compositing of per-sample
// density and color into pixel color, expected depth, and opacity, plus the
// exact backward pass used for training.

#include <thread>

#include "nrdf/field.hpp"
#include "nrdf/sampling.hpp"

namespace nrdf {

constexpr double kDeltaFloor = 1e-6;
constexpr double kAccFloor = 1e-6;

template <typename T>
struct RenderResult {
    T color[3] = {0, 0, 0};
    T depth = 0;
    T acc = 0;
    std::vector<T> weights;
    std::vector<T> transmittance;
};

// Interval widths: delta_i = t_{i+1} - t_i, last interval runs to t_far
// (floored at kDeltaFloor). Using t_far instead of NeRF's 1e10 sentinel keeps
// the last local sample from being forced opaque.
template <typename T>
inline std::vector<T> sample_deltas(const std::vector<T>& t, T t_far) {
    size_t n = t.size();
    std::vector<T> delta(n);
    for (size_t i = 0; i + 1 < n; ++i) {
        if (t[i + 1] < t[i]) throw std::domain_error("composite: t not ascending");
        delta[i] = std::max(t[i + 1] - t[i], T(kDeltaFloor));
    }
    delta[n - 1] = std::max(t_far - t[n - 1], T(kDeltaFloor));
    return delta;
}

template <typename T>
inline RenderResult<T> composite(const std::vector<T>& t, const std::vector<T>& density,
                                 const std::vector<std::array<T, 3>>& rgb, T t_far) {
    size_t n = t.size();
    if (n == 0) throw std::domain_error("composite: empty sample set");
    if (density.size() != n || rgb.size() != n)
        throw std::domain_error("composite: size mismatch");
    std::vector<T> delta = sample_deltas(t, t_far);

    RenderResult<T> out;
    out.weights.resize(n);
    out.transmittance.resize(n);
    T trans = 1;
    T depth_num = 0;
    for (size_t i = 0; i < n; ++i) {
        if (density[i] < 0) throw std::domain_error("composite: negative density");
        T alpha = T(1) - std::exp(-density[i] * delta[i]);
        T w = trans * alpha;
        out.transmittance[i] = trans;
        out.weights[i] = w;
        for (int c = 0; c < 3; ++c) out.color[c] += w * rgb[i][c];
        depth_num += w * t[i];
        out.acc += w;
        trans *= (T(1) - alpha);
    }
    out.depth = depth_num / std::max(out.acc, T(kAccFloor));
    return out;
}

// Gradients of composite() outputs w.r.t. per-sample density and color.
// Sample positions t are treated as constants.
template <typename T>
inline void composite_backward(const std::vector<T>& t, const std::vector<T>& density,
                               const std::vector<std::array<T, 3>>& rgb, T t_far,
                               const T d_color[3], T d_depth, T d_acc,
                               std::vector<T>& d_density,
                               std::vector<std::array<T, 3>>& d_rgb) {
    size_t n = t.size();
    std::vector<T> delta = sample_deltas(t, t_far);

    // recompute forward quantities
    std::vector<T> alpha(n), trans(n), w(n);
    T tr = 1, acc = 0, depth_num = 0;
    for (size_t i = 0; i < n; ++i) {
        alpha[i] = T(1) - std::exp(-density[i] * delta[i]);
        trans[i] = tr;
        w[i] = tr * alpha[i];
        acc += w[i];
        depth_num += w[i] * t[i];
        tr *= (T(1) - alpha[i]);
    }
    T denom = std::max(acc, T(kAccFloor));
    T depth = depth_num / denom;

    d_density.assign(n, T(0));
    d_rgb.assign(n, {T(0), T(0), T(0)});

    // d(outputs)/d(w_i)
    std::vector<T> d_w(n);
    for (size_t i = 0; i < n; ++i) {
        T g = d_acc;
        for (int c = 0; c < 3; ++c) g += d_color[c] * rgb[i][c];
        if (acc > T(kAccFloor))
            g += d_depth * (t[i] - depth) / denom;
        else
            g += d_depth * t[i] / denom;
        d_w[i] = g;
        for (int c = 0; c < 3; ++c) d_rgb[i][c] = d_color[c] * w[i];
    }

    // reverse scan through w_i = T_i * alpha_i, T_{i+1} = T_i (1 - alpha_i)
    T d_trans_next = 0;
    for (int i = static_cast<int>(n) - 1; i >= 0; --i) {
        T d_alpha = d_w[i] * trans[i] - d_trans_next * trans[i];
        T d_trans = d_w[i] * alpha[i] + d_trans_next * (T(1) - alpha[i]);
        d_density[i] = d_alpha * delta[i] * std::exp(-density[i] * delta[i]);
        d_trans_next = d_trans;
    }
}

// Field evaluation points for a ray's samples; viewdir is the unit direction.
template <typename T>
inline void ray_sample_positions(const Ray& ray, const std::vector<double>& t,
                                 MatX<T>& positions, MatX<T>& viewdirs) {
    int n = static_cast<int>(t.size());
    positions.resize(n, 3);
    viewdirs.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 p = ray.origin + ray.direction * t[i];
        positions(i, 0) = static_cast<T>(p.x);
        positions(i, 1) = static_cast<T>(p.y);
        positions(i, 2) = static_cast<T>(p.z);
        viewdirs(i, 0) = static_cast<T>(ray.direction.x);
        viewdirs(i, 1) = static_cast<T>(ray.direction.y);
        viewdirs(i, 2) = static_cast<T>(ray.direction.z);
    }
}

template <typename T>
inline RenderResult<T> render_ray(const FieldParams<T>& params, const Ray& ray,
                                  const RaySamples& samples,
                                  FieldCache<T>* cache = nullptr) {
    MatX<T> positions, viewdirs;
    ray_sample_positions(ray, samples.t, positions, viewdirs);
    FieldOutput<T> out = field_forward(params, positions, viewdirs, cache);
    size_t n = samples.t.size();
    std::vector<T> t(samples.t.begin(), samples.t.end());
    std::vector<T> density(out.density.data(), out.density.data() + n);
    std::vector<std::array<T, 3>> rgb(n);
    for (size_t i = 0; i < n; ++i)
        rgb[i] = {out.rgb(i, 0), out.rgb(i, 1), out.rgb(i, 2)};
    return composite(t, density, rgb, static_cast<T>(ray.t_far));
}

// Full-frame render; perturb is forced off for deterministic evaluation.
// Rows are distributed across workers; each pixel derives its own rng stream.
inline void render_image(const FieldParams<float>& params, const Camera& cam,
                         double t_near, double t_far, const DepthMap* depth_source,
                         const DepthErrorMap* error_source, SamplingConfig cfg,
                         Image& color_out, DepthMap& depth_out, DepthMap& acc_out,
                         int workers = 1, uint64_t seed = 0) {
    cfg.perturb = false;
    cfg.validate();
    int w = cam.intrinsics.width, h = cam.intrinsics.height;
    color_out = Image(w, h);
    depth_out = DepthMap(w, h);
    acc_out = DepthMap(w, h);

    auto render_rows = [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y) {
            for (int x = 0; x < w; ++x) {
                Ray ray = generate_ray(cam, x + 0.5, y + 0.5, t_near, t_far);
                double d = depth_source ? depth_source->at(x, y) : 0.0;
                double e = error_source ? error_source->at(x, y) : -1.0;
                Rng rng(hash_combine(hash_combine(seed, y * w + x), hash_str("render")));
                RaySamples s = sample_ray(ray, d, e, cfg, rng);
                RenderResult<float> r = render_ray(params, ray, s);
                float* px = color_out.px(x, y);
                px[0] = r.color[0];
                px[1] = r.color[1];
                px[2] = r.color[2];
                // expose planar z-depth to match sensor depth maps
                depth_out.at(x, y) = static_cast<float>(r.depth / ray.depth_to_t);
                acc_out.at(x, y) = r.acc;
            }
        }
    };

    workers = std::max(1, workers);
    if (workers == 1) {
        render_rows(0, h);
    } else {
        std::vector<std::thread> pool;
        int rows_per = (h + workers - 1) / workers;
        for (int k = 0; k < workers; ++k) {
            int y0 = k * rows_per, y1 = std::min(h, y0 + rows_per);
            if (y0 < y1) pool.emplace_back(render_rows, y0, y1);
        }
        for (auto& th : pool) th.join();
    }
}

}  // namespace nrdf

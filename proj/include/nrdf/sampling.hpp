#pragma once

// Depth-guided ray sampling: global stratified baseline plus the three local
// strategies (depth-bounded stratified, Gaussian around the depth measurement,
// adaptive Gaussian scaled by a multiview depth error map).

#include <algorithm>
#include <limits>

#include "nrdf/core.hpp"
#include "nrdf/geometry.hpp"

namespace nrdf {

enum class Strategy { GlobalStratified, StratifiedLocal, Gaussian, Adaptive };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::GlobalStratified: return "global";
        case Strategy::StratifiedLocal: return "stratified";
        case Strategy::Gaussian: return "gaussian";
        case Strategy::Adaptive: return "adaptive";
    }
    return "?";
}

inline Strategy strategy_from_name(const std::string& s) {
    if (s == "global" || s == "nerf") return Strategy::GlobalStratified;
    if (s == "stratified" || s == "stratified-local") return Strategy::StratifiedLocal;
    if (s == "gaussian") return Strategy::Gaussian;
    if (s == "adaptive") return Strategy::Adaptive;
    throw std::domain_error("unknown sampling strategy: " + s);
}

struct SamplingConfig {
    Strategy strategy = Strategy::Gaussian;
    int n_samples = 16;
    double delta = 0.15;        // half-width for StratifiedLocal
    double sigma_fixed = 0.05;  // std-dev for Gaussian
    double sigma_min = 0.01;
    double sigma_max = 0.5;
    double k_error = 1.0;
    bool perturb = true;

    void validate() const {
        if (n_samples < 2) throw std::domain_error("sampling: n_samples must be >= 2");
        if (delta <= 0) throw std::domain_error("sampling: delta must be positive");
        if (!(sigma_min > 0 && sigma_min <= sigma_max))
            throw std::domain_error("sampling: need 0 < sigma_min <= sigma_max");
        if (k_error < 0) throw std::domain_error("sampling: k_error must be >= 0");
        if (sigma_fixed < 0) throw std::domain_error("sampling: sigma_fixed must be >= 0");
    }
};

struct RaySamples {
    std::vector<double> t;   // ascending, within [t_near, t_far]
    bool from_depth = false;
};

struct DepthErrorMap {
    int width = 0, height = 0;
    std::vector<float> e;
    float e_max_fill = 1.0f;

    DepthErrorMap() = default;
    DepthErrorMap(int w, int h, float fill)
        : width(w), height(h), e(static_cast<size_t>(w) * h, fill), e_max_fill(fill) {}

    float at(int x, int y) const { return e[static_cast<size_t>(y) * width + x]; }
    float& at(int x, int y) { return e[static_cast<size_t>(y) * width + x]; }
};

// Acklam's rational approximation to the standard normal quantile, used for
// deterministic (perturb=false) Gaussian sample placement.
inline double normal_quantile(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) {
        q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

inline RaySamples sample_stratified_global(double t_near, double t_far, int n,
                                           bool perturb, Rng& rng) {
    if (!(t_near < t_far)) throw std::domain_error("sampling: t_near must be < t_far");
    if (n < 2) throw std::domain_error("sampling: n must be >= 2");
    RaySamples out;
    out.t.resize(n);
    double bin = (t_far - t_near) / n;
    for (int i = 0; i < n; ++i) {
        double u = perturb ? rng.uniform() : 0.5;
        out.t[i] = t_near + (i + u) * bin;
    }
    out.from_depth = false;
    return out;
}

inline RaySamples sample_stratified_local(double depth_t, double delta, int n,
                                          double t_near, double t_far, bool perturb,
                                          Rng& rng) {
    if (depth_t <= 0) throw std::domain_error("sampling: depth_t must be positive");
    double lo = std::max(t_near, depth_t - delta);
    double hi = std::min(t_far, depth_t + delta);
    if (!(lo < hi))  // depth outside scene bounds
        return sample_stratified_global(t_near, t_far, n, perturb, rng);
    RaySamples out = sample_stratified_global(lo, hi, n, perturb, rng);
    out.from_depth = true;
    return out;
}

inline RaySamples sample_gaussian(double depth_t, double sigma, int n, double t_near,
                                  double t_far, bool perturb, Rng& rng) {
    if (depth_t <= 0) throw std::domain_error("sampling: depth_t must be positive");
    if (sigma < 0) throw std::domain_error("sampling: sigma must be >= 0");
    RaySamples out;
    out.t.resize(n);
    for (int i = 0; i < n; ++i) {
        double g;
        if (sigma == 0) {
            g = depth_t;
        } else if (perturb) {
            g = rng.normal(depth_t, sigma);
        } else {
            g = depth_t + sigma * normal_quantile((i + 0.5) / n);
        }
        out.t[i] = std::clamp(g, t_near, t_far);
    }
    std::sort(out.t.begin(), out.t.end());
    out.from_depth = true;
    return out;
}

inline double sigma_from_error(double e, const SamplingConfig& cfg) {
    if (e < 0) throw std::domain_error("sigma_from_error: e must be >= 0");
    return std::clamp(cfg.sigma_min + cfg.k_error * e, cfg.sigma_min, cfg.sigma_max);
}

inline bool depth_valid(double z_depth) {
    return std::isfinite(z_depth) && z_depth > 0.0;
}

// Dispatch on the configured strategy. pixel_depth is planar z-depth;
// conversion to ray distance uses the ray's depth_to_t factor. Invalid depth
// falls back to global stratified so background pixels keep supervision.
inline RaySamples sample_ray(const Ray& ray, double pixel_depth, double pixel_error,
                             const SamplingConfig& cfg, Rng& rng) {
    if (cfg.strategy == Strategy::GlobalStratified || !depth_valid(pixel_depth))
        return sample_stratified_global(ray.t_near, ray.t_far, cfg.n_samples,
                                        cfg.perturb, rng);
    double depth_t = pixel_depth * ray.depth_to_t;
    switch (cfg.strategy) {
        case Strategy::StratifiedLocal:
            return sample_stratified_local(depth_t, cfg.delta, cfg.n_samples,
                                           ray.t_near, ray.t_far, cfg.perturb, rng);
        case Strategy::Gaussian:
            return sample_gaussian(depth_t, cfg.sigma_fixed, cfg.n_samples,
                                   ray.t_near, ray.t_far, cfg.perturb, rng);
        case Strategy::Adaptive: {
            double e = std::isfinite(pixel_error) && pixel_error >= 0 ? pixel_error
                                                                     : cfg.sigma_max;
            return sample_gaussian(depth_t, sigma_from_error(e, cfg), cfg.n_samples,
                                   ray.t_near, ray.t_far, cfg.perturb, rng);
        }
        default:
            return sample_stratified_global(ray.t_near, ray.t_far, cfg.n_samples,
                                            cfg.perturb, rng);
    }
}

// Cross-view z-depth reprojection residual with nearest-pixel lookup.
// Pixels without cross-view evidence (or without valid depth) get e_max_fill.
inline std::vector<DepthErrorMap> compute_depth_error_maps(
    const std::vector<std::pair<Camera, const DepthMap*>>& views,
    float e_max_fill = 1.0f) {
    if (views.empty())
        throw std::domain_error("compute_depth_error_maps: need at least one view");
    std::vector<DepthErrorMap> maps;
    maps.reserve(views.size());
    for (size_t i = 0; i < views.size(); ++i) {
        const Camera& cam_i = views[i].first;
        const DepthMap& depth_i = *views[i].second;
        DepthErrorMap em(depth_i.width, depth_i.height, e_max_fill);
        for (int y = 0; y < depth_i.height; ++y) {
            for (int x = 0; x < depth_i.width; ++x) {
                float d = depth_i.at(x, y);
                if (!depth_valid(d)) continue;  // keep fill
                Vec3 p_world = backproject(cam_i, x + 0.5, y + 0.5, d);
                double acc = 0.0;
                int count = 0;
                for (size_t j = 0; j < views.size(); ++j) {
                    if (j == i) continue;
                    Projection pr = project(views[j].first, p_world);
                    if (!pr.ok()) continue;
                    const DepthMap& depth_j = *views[j].second;
                    int u = static_cast<int>(std::floor(pr.u));
                    int v = static_cast<int>(std::floor(pr.v));
                    float dj = depth_j.at(u, v);
                    if (!depth_valid(dj)) continue;
                    acc += std::abs(pr.z - dj);
                    ++count;
                }
                if (count > 0) em.at(x, y) = static_cast<float>(acc / count);
            }
        }
        maps.push_back(std::move(em));
    }
    return maps;
}

}  // namespace nrdf

#pragma once

// Image-quality metrics (PSNR, single-scale SSIM, AbsRel) and the evaluation
// driver that renders a dataset split and aggregates per-view scores.

#include <chrono>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "nrdf/dataset.hpp"
#include "nrdf/renderer.hpp"

namespace nrdf {

constexpr double kPsnrCap = 99.0;

inline double psnr(const Image& pred, const Image& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::domain_error("psnr: image dimensions differ");
    double mse = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double d = static_cast<double>(pred.data[i]) - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.data.size());
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {
// 11-tap Gaussian window, sigma 1.5, normalized.
inline const std::array<double, 11>& ssim_window() {
    static const std::array<double, 11> w = [] {
        std::array<double, 11> g{};
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            double x = i - 5;
            g[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
            sum += g[i];
        }
        for (auto& v : g) v /= sum;
        return g;
    }();
    return w;
}

// separable Gaussian filter, valid region only; `ch` selects the channel
inline std::vector<double> gauss_filter_valid(const std::vector<double>& img, int w,
                                              int h, int& ow, int& oh) {
    const auto& k = ssim_window();
    ow = w - 10;
    oh = h - 10;
    std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < 11; ++i) s += k[i] * img[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < 11; ++i) s += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = s;
        }
    return out;
}
}  // namespace detail

// Standard single-scale SSIM: 11x11 Gaussian window sigma=1.5, K1=0.01,
// K2=0.03, dynamic range 1.0; per channel, then averaged; mean over valid
// window positions.
inline double ssim(const Image& pred, const Image& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::domain_error("ssim: image dimensions differ");
    if (pred.width < 11 || pred.height < 11)
        throw std::domain_error("ssim: images must be at least 11x11");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    int w = pred.width, h = pred.height;
    double total = 0;
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> a(static_cast<size_t>(w) * h), b(a.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                a[static_cast<size_t>(y) * w + x] = pred.px(x, y)[ch];
                b[static_cast<size_t>(y) * w + x] = gt.px(x, y)[ch];
            }
        std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
        for (size_t i = 0; i < a.size(); ++i) {
            aa[i] = a[i] * a[i];
            bb[i] = b[i] * b[i];
            ab[i] = a[i] * b[i];
        }
        int ow, oh;
        auto mu_a = detail::gauss_filter_valid(a, w, h, ow, oh);
        auto mu_b = detail::gauss_filter_valid(b, w, h, ow, oh);
        auto m_aa = detail::gauss_filter_valid(aa, w, h, ow, oh);
        auto m_bb = detail::gauss_filter_valid(bb, w, h, ow, oh);
        auto m_ab = detail::gauss_filter_valid(ab, w, h, ow, oh);
        double s = 0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            double va = m_aa[i] - mu_a[i] * mu_a[i];
            double vb = m_bb[i] - mu_b[i] * mu_b[i];
            double cov = m_ab[i] - mu_a[i] * mu_b[i];
            s += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
                 ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += s / static_cast<double>(mu_a.size());
    }
    return total / 3.0;
}

inline double abs_rel(const DepthMap& pred, const DepthMap& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::domain_error("abs_rel: dimensions differ");
    double sum = 0;
    size_t count = 0;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        if (gt.data[i] <= 0) continue;
        sum += std::abs(static_cast<double>(pred.data[i]) - gt.data[i]) / gt.data[i];
        ++count;
    }
    if (count == 0) throw std::domain_error("abs_rel: no valid ground-truth depth");
    return sum / static_cast<double>(count);
}

struct ViewScore {
    int view = 0;
    double psnr = 0, ssim = 0, abs_rel = 0;
    size_t valid_depth_pixels = 0;
};

struct EvalReport {
    std::vector<ViewScore> views;
    double mean_psnr = 0, mean_ssim = 0, mean_abs_rel = 0;
    double wall_seconds = 0;

    void finalize() {
        mean_psnr = mean_ssim = mean_abs_rel = 0;
        for (const auto& v : views) {
            mean_psnr += v.psnr;
            mean_ssim += v.ssim;
            mean_abs_rel += v.abs_rel;
        }
        double n = static_cast<double>(views.size());
        if (n > 0) {
            mean_psnr /= n;
            mean_ssim /= n;
            mean_abs_rel /= n;
        }
    }
};

// Depth visualization: [near, far] mapped to grayscale, invalid = black.
inline Image depth_visualization(const DepthMap& depth, double near, double far) {
    Image vis(depth.width, depth.height);
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            float d = depth.at(x, y);
            float g = d > 0 ? static_cast<float>(std::clamp((d - near) / (far - near), 0.0, 1.0))
                            : 0.f;
            float* px = vis.px(x, y);
            px[0] = px[1] = px[2] = g;
        }
    return vis;
}

// Renders every view of `split` deterministically and scores it against
// ground truth. When out_dir is non-empty, writes per-view predictions and
// depth visualizations there.
inline EvalReport evaluate(const FieldParams<float>& params, const RgbdDataset& ds,
                           const std::string& split, const SamplingConfig& cfg,
                           const std::string& out_dir = "", int workers = 1) {
    auto idx = ds.split_indices(split);
    if (idx.empty()) throw std::domain_error("evaluate: split \"" + split + "\" is empty");
    namespace fs = std::filesystem;
    if (!out_dir.empty()) fs::create_directories(out_dir);
    auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    for (size_t k = 0; k < idx.size(); ++k) {
        const RgbdFrame& f = ds.frames[idx[k]];
        Image color;
        DepthMap depth, acc;
        render_image(params, f.camera, ds.near, ds.far, &f.depth, nullptr, cfg, color,
                     depth, acc, workers);
        ViewScore score;
        score.view = static_cast<int>(idx[k]);
        score.psnr = psnr(color, f.color);
        score.ssim = ssim(color, f.color);
        score.abs_rel = abs_rel(depth, f.depth);
        for (float d : f.depth.data)
            if (d > 0) ++score.valid_depth_pixels;
        report.views.push_back(score);
        if (!out_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "pred_%04d.png", score.view);
            write_png_rgb8((fs::path(out_dir) / name).string(), color);
            std::snprintf(name, sizeof name, "pred_depth_%04d.png", score.view);
            write_png_rgb8((fs::path(out_dir) / name).string(),
                           depth_visualization(depth, ds.near, ds.far));
        }
    }
    report.finalize();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

inline void write_report(const EvalReport& r, const std::string& json_path,
                         const std::string& csv_path) {
    nlohmann::json j;
    j["mean"] = {{"psnr", r.mean_psnr},
                 {"ssim", r.mean_ssim},
                 {"abs_rel", r.mean_abs_rel},
                 {"lpips", "n/a"}};
    j["wall_seconds"] = r.wall_seconds;
    j["views"] = nlohmann::json::array();
    for (const auto& v : r.views)
        j["views"].push_back({{"view", v.view},
                              {"psnr", v.psnr},
                              {"ssim", v.ssim},
                              {"abs_rel", v.abs_rel},
                              {"valid_depth_pixels", v.valid_depth_pixels}});
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("report: cannot write " + json_path);
    js << j.dump(2) << "\n";

    std::ofstream cs(csv_path);
    if (!cs) throw std::runtime_error("report: cannot write " + csv_path);
    cs << "view,psnr,ssim,abs_rel\n";
    for (const auto& v : r.views)
        cs << v.view << "," << v.psnr << "," << v.ssim << "," << v.abs_rel << "\n";
}

}  // namespace nrdf

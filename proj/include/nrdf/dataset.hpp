#pragma once

// Procedural RGB-D scene synthesis (analytic ray-traced primitives) and
// dataset file I/O: manifest.json + PNG color + PFM depth.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <variant>

#include "nrdf/geometry.hpp"
#include "nrdf/image_io.hpp"
#include "nrdf/sampling.hpp"

namespace nrdf {

struct SolidAlbedo {
    double rgb[3];
};
struct CheckerAlbedo {
    double rgb_a[3];
    double rgb_b[3];
    double scale = 1.0;
};
using Albedo = std::variant<SolidAlbedo, CheckerAlbedo>;

struct Sphere {
    Vec3 center;
    double radius;
};
struct Box {
    Vec3 center;
    Vec3 half_extents;
};
struct Plane {
    Vec3 point;
    Vec3 normal;  // unit
};

struct Primitive {
    std::variant<Sphere, Box, Plane> shape;
    Albedo albedo;
};

struct SceneSpec {
    std::vector<Primitive> primitives;
    Vec3 light_dir{-0.4, -0.8, -0.45};  // normalized in validate()
    double ambient = 0.25;
    bool glossy = false;  // optional Phong term (exponent 16) to force view dependence

    void validate() {
        light_dir = light_dir.normalized();
        if (ambient < 0 || ambient > 1)
            throw std::domain_error("scene: ambient must be in [0,1]");
        for (const auto& p : primitives) {
            if (auto* s = std::get_if<Sphere>(&p.shape)) {
                if (s->radius <= 0) throw std::domain_error("scene: sphere radius <= 0");
            } else if (auto* b = std::get_if<Box>(&p.shape)) {
                if (b->half_extents.x <= 0 || b->half_extents.y <= 0 ||
                    b->half_extents.z <= 0)
                    throw std::domain_error("scene: box extents <= 0");
            }
        }
    }
};

struct Hit {
    double t;
    Vec3 normal;  // outward unit
    Vec3 point;
    const Primitive* prim;
};

namespace detail {

inline bool intersect_sphere(const Sphere& s, const Vec3& o, const Vec3& d, double& t,
                             Vec3& n) {
    Vec3 oc = o - s.center;
    double b = oc.dot(d);
    double c = oc.dot(oc) - s.radius * s.radius;
    double disc = b * b - c;
    if (disc < 0) return false;
    double sq = std::sqrt(disc);
    double t0 = -b - sq, t1 = -b + sq;
    t = t0 > 1e-9 ? t0 : (t1 > 1e-9 ? t1 : -1);
    if (t < 0) return false;
    n = ((o + d * t) - s.center).normalized();
    return true;
}

inline bool intersect_box(const Box& bx, const Vec3& o, const Vec3& d, double& t,
                          Vec3& n) {
    double tmin = -1e30, tmax = 1e30;
    int axis = 0;
    double sign = 1;
    for (int i = 0; i < 3; ++i) {
        double oi = (o - bx.center)[i];
        double di = (i == 0 ? d.x : (i == 1 ? d.y : d.z));
        double hi = (i == 0 ? bx.half_extents.x
                            : (i == 1 ? bx.half_extents.y : bx.half_extents.z));
        if (std::abs(di) < 1e-12) {
            if (std::abs(oi) > hi) return false;
            continue;
        }
        double inv = 1.0 / di;
        double t0 = (-hi - oi) * inv, t1 = (hi - oi) * inv;
        double s = t0 < t1 ? -1 : 1;  // entering from the negative face?
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
            tmin = t0;
            axis = i;
            sign = (di > 0) ? -1 : 1;
            (void)s;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    if (tmax < 1e-9) return false;
    t = tmin > 1e-9 ? tmin : tmax;
    n = Vec3{axis == 0 ? sign : 0.0, axis == 1 ? sign : 0.0, axis == 2 ? sign : 0.0};
    if (tmin <= 1e-9) n = -n;  // ray starts inside
    return true;
}

inline bool intersect_plane(const Plane& pl, const Vec3& o, const Vec3& d, double& t,
                            Vec3& n) {
    double denom = pl.normal.dot(d);
    if (std::abs(denom) < 1e-12) return false;
    t = pl.normal.dot(pl.point - o) / denom;
    if (t < 1e-9) return false;
    n = denom < 0 ? pl.normal : -pl.normal;
    return true;
}

}  // namespace detail

inline std::optional<Hit> intersect_scene(const Vec3& origin, const Vec3& dir,
                                          const SceneSpec& scene) {
    std::optional<Hit> best;
    for (const auto& prim : scene.primitives) {
        double t;
        Vec3 n;
        bool ok = std::visit(
            [&](const auto& shape) {
                using S = std::decay_t<decltype(shape)>;
                if constexpr (std::is_same_v<S, Sphere>)
                    return detail::intersect_sphere(shape, origin, dir, t, n);
                else if constexpr (std::is_same_v<S, Box>)
                    return detail::intersect_box(shape, origin, dir, t, n);
                else
                    return detail::intersect_plane(shape, origin, dir, t, n);
            },
            prim.shape);
        if (ok && (!best || t < best->t))
            best = Hit{t, n, origin + dir * t, &prim};
    }
    return best;
}

inline Vec3 albedo_at(const Albedo& a, const Vec3& p) {
    if (auto* s = std::get_if<SolidAlbedo>(&a))
        return {s->rgb[0], s->rgb[1], s->rgb[2]};
    const auto& c = std::get<CheckerAlbedo>(a);
    // half-cell phase shift keeps surfaces at integer multiples of `scale`
    // (like an axis-aligned box face) in cell interiors; without it, floating
    // point noise in intersection points flips the parity per pixel
    auto cell = [&](double v) {
        return static_cast<long long>(std::floor(v / c.scale + 0.5));
    };
    bool even = ((cell(p.x) + cell(p.y) + cell(p.z)) % 2 + 2) % 2 == 0;
    const double* rgb = even ? c.rgb_a : c.rgb_b;
    return {rgb[0], rgb[1], rgb[2]};
}

// Lambertian + ambient, optional Phong specular when scene.glossy.
inline Vec3 shade(const Hit& hit, const SceneSpec& scene, const Vec3& view_dir) {
    Vec3 albedo = albedo_at(hit.prim->albedo, hit.point);
    double diffuse = std::max(0.0, hit.normal.dot(-scene.light_dir));
    double f = scene.ambient + (1.0 - scene.ambient) * diffuse;
    Vec3 rgb = albedo * f;
    if (scene.glossy) {
        Vec3 refl = scene.light_dir - hit.normal * (2.0 * scene.light_dir.dot(hit.normal));
        double spec = std::pow(std::max(0.0, refl.dot(-view_dir)), 16.0);
        rgb += Vec3{spec, spec, spec} * 0.3;
    }
    return {std::clamp(rgb.x, 0.0, 1.0), std::clamp(rgb.y, 0.0, 1.0),
            std::clamp(rgb.z, 0.0, 1.0)};
}

struct RgbdFrame {
    Image color;
    DepthMap depth;  // planar z-depth, 0 = invalid/background
    Camera camera;
    std::string split = "train";
};

struct RgbdDataset {
    std::vector<RgbdFrame> frames;
    double near = 0.5, far = 6.0;
    std::vector<DepthErrorMap> error_maps;  // aligned with train frames when present

    std::vector<size_t> split_indices(const std::string& split) const {
        std::vector<size_t> idx;
        for (size_t i = 0; i < frames.size(); ++i)
            if (frames[i].split == split) idx.push_back(i);
        return idx;
    }
};

inline RgbdFrame render_ground_truth(const SceneSpec& scene, const Camera& cam,
                                     double near, double far) {
    int w = cam.intrinsics.width, h = cam.intrinsics.height;
    RgbdFrame frame;
    frame.color = Image(w, h);
    frame.depth = DepthMap(w, h);
    frame.camera = cam;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Ray ray = generate_ray(cam, x + 0.5, y + 0.5, near, far);
            auto hit = intersect_scene(ray.origin, ray.direction, scene);
            if (!hit) continue;  // black, depth 0
            Vec3 rgb = shade(*hit, scene, ray.direction);
            float* px = frame.color.px(x, y);
            px[0] = static_cast<float>(rgb.x);
            px[1] = static_cast<float>(rgb.y);
            px[2] = static_cast<float>(rgb.z);
            // sensor range cutoff: hits outside [t_near, t_far] keep their
            // color but report no depth, like a real sensor's max range
            if (hit->t >= ray.t_near && hit->t <= ray.t_far)
                frame.depth.at(x, y) = static_cast<float>(hit->t / ray.depth_to_t);
        }
    }
    return frame;
}

// Default benchmark scene: checkered box plus a ground plane.
inline SceneSpec cube_scene() {
    SceneSpec s;
    s.primitives.push_back(
        {Box{{0, 0, 0}, {0.8, 0.8, 0.8}},
         CheckerAlbedo{{0.85, 0.25, 0.2}, {0.95, 0.85, 0.3}, 0.4}});
    // finite ground slab: keeps every visible surface inside the far bound of
    // the default orbit cameras, so the field can represent the whole image
    s.primitives.push_back(
        {Box{{0, -0.85, 0}, {2.2, 0.05, 2.2}}, SolidAlbedo{{0.45, 0.5, 0.55}}});
    s.validate();
    return s;
}

inline SceneSpec scene_by_name(const std::string& name) {
    if (name == "cube") return cube_scene();
    if (name == "sphere") {
        SceneSpec s;
        s.primitives.push_back(
            {Sphere{{0, 0, 0}, 0.8}, CheckerAlbedo{{0.2, 0.5, 0.9}, {0.9, 0.9, 0.9}, 0.5}});
        s.primitives.push_back(
            {Plane{{0, -0.8, 0}, {0, 1, 0}}, SolidAlbedo{{0.45, 0.5, 0.55}}});
        s.validate();
        return s;
    }
    throw std::domain_error("unknown scene: " + name);
}

struct DatasetGenConfig {
    int n_train = 8;
    int n_test = 4;
    double radius = 3.0;
    double elevation_deg = 30.0;
    int resolution = 100;
    double near = 0.5;
    double far = 6.0;
    double sigma_noise = 0.0;  // Gaussian depth noise, world units
    uint64_t seed = 0;

    void validate() const {
        if (n_train < 1) throw std::domain_error("generate: n_train must be >= 1");
        if (n_test < 0) throw std::domain_error("generate: n_test must be >= 0");
        if (radius <= 0) throw std::domain_error("generate: radius must be positive");
        if (resolution < 16) throw std::domain_error("generate: resolution too small");
        if (!(near > 0 && near < far)) throw std::domain_error("generate: need 0 < near < far");
        if (sigma_noise < 0) throw std::domain_error("generate: sigma_noise must be >= 0");
    }
};

inline Camera orbit_camera(double azimuth, double elevation_deg, double radius,
                           int resolution) {
    double el = elevation_deg * M_PI / 180.0;
    Vec3 pos{radius * std::cos(el) * std::sin(azimuth), radius * std::sin(el),
             radius * std::cos(el) * std::cos(azimuth)};
    Camera cam;
    cam.intrinsics.width = cam.intrinsics.height = resolution;
    cam.intrinsics.fl_x = cam.intrinsics.fl_y = 1.2 * resolution;
    cam.intrinsics.cx = cam.intrinsics.cy = resolution / 2.0;
    cam.pose = look_at(pos, {0, 0, 0}, {0, 1, 0});
    return cam;
}

inline RgbdDataset generate_dataset(const SceneSpec& scene, const DatasetGenConfig& cfg) {
    cfg.validate();
    RgbdDataset ds;
    ds.near = cfg.near;
    ds.far = cfg.far;
    Rng noise_rng(hash_combine(cfg.seed, hash_str("depth_noise")));
    auto add_view = [&](double azimuth, const std::string& split) {
        Camera cam = orbit_camera(azimuth, cfg.elevation_deg, cfg.radius, cfg.resolution);
        RgbdFrame f = render_ground_truth(scene, cam, cfg.near, cfg.far);
        f.split = split;
        if (cfg.sigma_noise > 0 && split == "train") {
            for (auto& d : f.depth.data)
                if (d > 0)
                    d = std::max(1e-4, d + noise_rng.normal(0.0, cfg.sigma_noise));
        }
        ds.frames.push_back(std::move(f));
    };
    for (int i = 0; i < cfg.n_train; ++i)
        add_view(2.0 * M_PI * i / cfg.n_train, "train");
    for (int i = 0; i < cfg.n_test; ++i)
        add_view(2.0 * M_PI * (i + 0.5) / cfg.n_test, "test");
    return ds;
}

// --- manifest I/O ----------------------------------------------------------

inline nlohmann::json pose_to_matrix(const Camera& cam) {
    nlohmann::json m = nlohmann::json::array();
    const Mat3& r = cam.pose.rotation;
    const Vec3& t = cam.pose.translation;
    double rows[16] = {r.at(0, 0), r.at(0, 1), r.at(0, 2), t.x,
                       r.at(1, 0), r.at(1, 1), r.at(1, 2), t.y,
                       r.at(2, 0), r.at(2, 1), r.at(2, 2), t.z,
                       0,          0,          0,          1};
    for (double v : rows) m.push_back(v);
    return m;
}

inline void save_dataset(const RgbdDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    if (ds.frames.empty()) throw std::runtime_error("save_dataset: no frames");
    const auto& in0 = ds.frames[0].camera.intrinsics;
    nlohmann::json manifest;
    manifest["fl_x"] = in0.fl_x;
    manifest["fl_y"] = in0.fl_y;
    manifest["cx"] = in0.cx;
    manifest["cy"] = in0.cy;
    manifest["w"] = in0.width;
    manifest["h"] = in0.height;
    manifest["near"] = ds.near;
    manifest["far"] = ds.far;
    manifest["frames"] = nlohmann::json::array();
    for (size_t i = 0; i < ds.frames.size(); ++i) {
        char color_name[64], depth_name[64];
        std::snprintf(color_name, sizeof color_name, "frame_%04zu.png", i);
        std::snprintf(depth_name, sizeof depth_name, "depth_%04zu.pfm", i);
        const RgbdFrame& f = ds.frames[i];
        write_png_rgb8((fs::path(dir) / color_name).string(), f.color);
        write_pfm((fs::path(dir) / depth_name).string(), f.depth);
        manifest["frames"].push_back({{"file_path", color_name},
                                      {"depth_path", depth_name},
                                      {"transform_matrix", pose_to_matrix(f.camera)},
                                      {"split", f.split}});
    }
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

inline RgbdDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream is(mpath);
    if (!is) throw std::runtime_error("load_dataset: missing " + mpath.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_dataset: invalid JSON in manifest.json: " +
                                 std::string(e.what()));
    }
    for (const char* key :
         {"fl_x", "fl_y", "cx", "cy", "w", "h", "near", "far", "frames"})
        if (!manifest.contains(key))
            throw std::runtime_error("load_dataset: manifest missing field \"" +
                                     std::string(key) + "\"");
    RgbdDataset ds;
    ds.near = manifest["near"];
    ds.far = manifest["far"];
    CameraIntrinsics in;
    in.fl_x = manifest["fl_x"];
    in.fl_y = manifest["fl_y"];
    in.cx = manifest["cx"];
    in.cy = manifest["cy"];
    in.width = manifest["w"];
    in.height = manifest["h"];
    in.validate();
    for (const auto& fj : manifest["frames"]) {
        for (const char* key : {"file_path", "depth_path", "transform_matrix", "split"})
            if (!fj.contains(key))
                throw std::runtime_error("load_dataset: frame missing field \"" +
                                         std::string(key) + "\"");
        RgbdFrame f;
        f.camera.intrinsics = in;
        auto m = fj["transform_matrix"];
        if (!m.is_array() || m.size() != 16)
            throw std::runtime_error("load_dataset: transform_matrix must have 16 entries");
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) f.camera.pose.rotation.at(r, c) = m[4 * r + c];
        f.camera.pose.translation = {m[3], m[7], m[11]};
        f.camera.pose.validate();
        f.split = fj["split"];
        f.color = read_png_rgb8((fs::path(dir) / fj["file_path"].get<std::string>()).string());
        f.depth = read_pfm((fs::path(dir) / fj["depth_path"].get<std::string>()).string());
        if (f.color.width != in.width || f.color.height != in.height ||
            f.depth.width != in.width || f.depth.height != in.height)
            throw std::runtime_error("load_dataset: image dimensions disagree with manifest");
        ds.frames.push_back(std::move(f));
    }
    if (ds.split_indices("train").empty())
        throw std::runtime_error("load_dataset: dataset has no train frames");
    return ds;
}

// Error maps are cached next to the dataset as error_####.pfm (train frames,
// numbered by frame index).
inline void ensure_error_maps(RgbdDataset& ds, const std::string& dir,
                              float e_max_fill = 1.0f) {
    namespace fs = std::filesystem;
    auto train = ds.split_indices("train");
    ds.error_maps.clear();
    bool all_cached = true;
    for (size_t k = 0; k < train.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "error_%04zu.pfm", train[k]);
        if (!fs::exists(fs::path(dir) / name)) {
            all_cached = false;
            break;
        }
    }
    if (all_cached) {
        for (size_t k = 0; k < train.size(); ++k) {
            char name[64];
            std::snprintf(name, sizeof name, "error_%04zu.pfm", train[k]);
            DepthMap m = read_pfm((fs::path(dir) / name).string());
            DepthErrorMap em(m.width, m.height, e_max_fill);
            em.e.assign(m.data.begin(), m.data.end());
            ds.error_maps.push_back(std::move(em));
        }
        return;
    }
    std::vector<std::pair<Camera, const DepthMap*>> views;
    for (size_t idx : train) views.push_back({ds.frames[idx].camera, &ds.frames[idx].depth});
    ds.error_maps = compute_depth_error_maps(views, e_max_fill);
    for (size_t k = 0; k < train.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "error_%04zu.pfm", train[k]);
        DepthMap m(ds.error_maps[k].width, ds.error_maps[k].height);
        m.data.assign(ds.error_maps[k].e.begin(), ds.error_maps[k].e.end());
        write_pfm((fs::path(dir) / name).string(), m);
    }
}

}  // namespace nrdf

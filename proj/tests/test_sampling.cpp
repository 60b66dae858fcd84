#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrdf/dataset.hpp"
#include "nrdf/sampling.hpp"

using namespace nrdf;

namespace {

Ray axis_ray(double near = 0.5, double far = 6.0) {
    Ray r;
    r.origin = {0, 0, 3};
    r.direction = {0, 0, -1};
    r.t_near = near;
    r.t_far = far;
    r.depth_to_t = 1.0;
    return r;
}

bool sorted_in_bounds(const RaySamples& s, double lo, double hi) {
    for (size_t i = 0; i < s.t.size(); ++i) {
        if (s.t[i] < lo - 1e-12 || s.t[i] > hi + 1e-12) return false;
        if (i > 0 && s.t[i] < s.t[i - 1]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("global stratified: bin midpoints when perturb off") {
    Rng rng(1);
    RaySamples s = sample_stratified_global(2, 6, 4, false, rng);
    REQUIRE(s.t.size() == 4);
    CHECK(s.t[0] == doctest::Approx(2.5));
    CHECK(s.t[1] == doctest::Approx(3.5));
    CHECK(s.t[2] == doctest::Approx(4.5));
    CHECK(s.t[3] == doctest::Approx(5.5));
    CHECK_FALSE(s.from_depth);
}

TEST_CASE("global stratified: one sample per bin when perturbed") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        RaySamples s = sample_stratified_global(2, 6, 4, true, rng);
        for (int i = 0; i < 4; ++i) {
            CHECK(s.t[i] >= 2.0 + i);
            CHECK(s.t[i] < 3.0 + i);
        }
    }
}

TEST_CASE("global stratified: empirical bin mean (Monte Carlo)") {
    Rng rng(3);
    double sum0 = 0;
    const int N = 100000;
    for (int i = 0; i < N; ++i) sum0 += sample_stratified_global(2, 6, 4, true, rng).t[0];
    CHECK(sum0 / N == doctest::Approx(2.5).epsilon(0.01 / 2.5));
}

TEST_CASE("stratified local: bounds and midpoints") {
    Rng rng(4);
    RaySamples s = sample_stratified_local(2.0, 0.3, 16, 0.5, 6.0, true, rng);
    CHECK(s.from_depth);
    CHECK(sorted_in_bounds(s, 1.7, 2.3));

    RaySamples m = sample_stratified_local(2.0, 0.3, 4, 0.5, 6.0, false, rng);
    CHECK(m.t[0] == doctest::Approx(1.775));
    CHECK(m.t[1] == doctest::Approx(1.925));
    CHECK(m.t[2] == doctest::Approx(2.075));
    CHECK(m.t[3] == doctest::Approx(2.225));
}

TEST_CASE("stratified local: depth outside scene bounds falls back to global") {
    Rng rng(5);
    RaySamples s = sample_stratified_local(50.0, 0.3, 8, 0.5, 6.0, false, rng);
    CHECK_FALSE(s.from_depth);
    CHECK(sorted_in_bounds(s, 0.5, 6.0));
    CHECK(s.t[0] == doctest::Approx(0.5 + 5.5 / 16));
}

TEST_CASE("stratified local with delta covering the scene equals global") {
    Rng rng_a(9), rng_b(9);
    RaySamples a = sample_stratified_local(3.0, 10.0, 8, 0.5, 6.0, true, rng_a);
    RaySamples b = sample_stratified_global(0.5, 6.0, 8, true, rng_b);
    for (int i = 0; i < 8; ++i) CHECK(a.t[i] == b.t[i]);
}

TEST_CASE("gaussian: sigma zero degenerates to the depth point") {
    Rng rng(6);
    RaySamples s = sample_gaussian(2.0, 0.0, 8, 0.5, 6.0, true, rng);
    for (double t : s.t) CHECK(t == doctest::Approx(2.0));
}

TEST_CASE("gaussian: empirical mean and std (Monte Carlo)") {
    Rng rng(7);
    double sum = 0, sumsq = 0;
    const int N = 100000;
    int per = 2;
    for (int i = 0; i < N / per; ++i) {
        RaySamples s = sample_gaussian(2.0, 0.1, per, 0.5, 6.0, true, rng);
        for (double t : s.t) {
            sum += t;
            sumsq += t * t;
        }
    }
    double mean = sum / N;
    double stdev = std::sqrt(sumsq / N - mean * mean);
    CHECK(mean == doctest::Approx(2.0).epsilon(0.002 / 2.0));
    CHECK(stdev == doctest::Approx(0.1).epsilon(0.02));
}

TEST_CASE("gaussian: clamped to the far bound") {
    Rng rng(8);
    RaySamples s = sample_gaussian(2.0, 0.1, 32, 0.5, 2.0, true, rng);
    for (double t : s.t) CHECK(t <= 2.0);
}

TEST_CASE("gaussian: deterministic quantile placement when perturb off") {
    Rng rng(8);
    RaySamples s = sample_gaussian(2.0, 0.1, 16, 0.5, 6.0, false, rng);
    CHECK(sorted_in_bounds(s, 0.5, 6.0));
    // symmetric around the depth
    for (int i = 0; i < 8; ++i)
        CHECK(s.t[i] + s.t[15 - i] == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("sigma_from_error: clamp and slope") {
    SamplingConfig cfg;
    cfg.sigma_min = 0.01;
    cfg.sigma_max = 0.5;
    cfg.k_error = 1.0;
    CHECK(sigma_from_error(0.0, cfg) == doctest::Approx(0.01));
    CHECK(sigma_from_error(0.2, cfg) == doctest::Approx(0.21));
    CHECK(sigma_from_error(10.0, cfg) == doctest::Approx(0.5));
}

TEST_CASE("sigma_from_error is monotone") {
    SamplingConfig cfg;
    Rng rng(10);
    for (int i = 0; i < 1000; ++i) {
        double e1 = rng.uniform(0, 2), e2 = rng.uniform(0, 2);
        if (e1 > e2) std::swap(e1, e2);
        CHECK(sigma_from_error(e1, cfg) <= sigma_from_error(e2, cfg));
    }
}

TEST_CASE("sample_ray: dispatch and fallbacks") {
    SamplingConfig cfg;
    cfg.n_samples = 8;

    SUBCASE("global strategy ignores depth") {
        cfg.strategy = Strategy::GlobalStratified;
        Rng a(11), b(11);
        RaySamples s1 = sample_ray(axis_ray(), 2.0, -1, cfg, a);
        RaySamples s2 = sample_stratified_global(0.5, 6.0, 8, cfg.perturb, b);
        for (int i = 0; i < 8; ++i) CHECK(s1.t[i] == s2.t[i]);
    }
    SUBCASE("adaptive with zero error equals gaussian at sigma_min") {
        cfg.strategy = Strategy::Adaptive;
        Rng a(12), b(12);
        RaySamples s1 = sample_ray(axis_ray(), 2.0, 0.0, cfg, a);
        RaySamples s2 = sample_gaussian(2.0, cfg.sigma_min, 8, 0.5, 6.0, cfg.perturb, b);
        for (int i = 0; i < 8; ++i) CHECK(s1.t[i] == s2.t[i]);
    }
    SUBCASE("depth sentinel 0 falls back to global") {
        for (Strategy st : {Strategy::StratifiedLocal, Strategy::Gaussian, Strategy::Adaptive}) {
            cfg.strategy = st;
            Rng rng(13);
            RaySamples s = sample_ray(axis_ray(), 0.0, -1, cfg, rng);
            CHECK_FALSE(s.from_depth);
            CHECK(sorted_in_bounds(s, 0.5, 6.0));
            CHECK(s.t.back() > 5.0);  // spans the full interval
        }
    }
    SUBCASE("depth-to-ray-distance conversion uses the ray factor") {
        cfg.strategy = Strategy::Gaussian;
        cfg.sigma_fixed = 0;
        Ray r = axis_ray();
        r.depth_to_t = 1.5;
        Rng rng(14);
        RaySamples s = sample_ray(r, 2.0, -1, cfg, rng);
        for (double t : s.t) CHECK(t == doctest::Approx(3.0));
    }
}

TEST_CASE("fuzz: all strategies produce sorted in-bounds samples") {
    Rng rng(99);
    for (int trial = 0; trial < 10000; ++trial) {
        SamplingConfig cfg;
        cfg.strategy = static_cast<Strategy>(rng.uniform_int(4));
        cfg.n_samples = 2 + static_cast<int>(rng.uniform_int(31));
        cfg.delta = rng.uniform(0.01, 2.0);
        cfg.sigma_fixed = rng.uniform(0.0, 1.0);
        cfg.perturb = rng.uniform() < 0.5;
        double near = rng.uniform(0.1, 2.0);
        double far = near + rng.uniform(0.5, 8.0);
        Ray r = axis_ray(near, far);
        double depth = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.05, far * 1.2);
        double err = rng.uniform() < 0.5 ? -1.0 : rng.uniform(0, 1);
        Rng ray_rng(rng.next_u32());
        RaySamples s = sample_ray(r, depth, err, cfg, ray_rng);
        REQUIRE(s.t.size() == static_cast<size_t>(cfg.n_samples));
        CHECK(sorted_in_bounds(s, near, far));
    }
}

TEST_CASE("determinism: same seed gives bit-identical samples") {
    SamplingConfig cfg;
    for (int strat = 0; strat < 4; ++strat) {
        cfg.strategy = static_cast<Strategy>(strat);
        Rng a(123), b(123);
        RaySamples s1 = sample_ray(axis_ray(), 2.0, 0.1, cfg, a);
        RaySamples s2 = sample_ray(axis_ray(), 2.0, 0.1, cfg, b);
        REQUIRE(s1.t.size() == s2.t.size());
        for (size_t i = 0; i < s1.t.size(); ++i) CHECK(s1.t[i] == s2.t[i]);
    }
}

// --- depth error maps ------------------------------------------------------

namespace {

// two cameras viewing a fronto-parallel plane z = -2 (world), with analytic
// depth maps rendered through the scene tracer
std::vector<std::pair<Camera, DepthMap>> plane_views(double bias_second = 0.0) {
    SceneSpec scene;
    scene.primitives.push_back({Plane{{0, 0, -2}, {0, 0, 1}}, SolidAlbedo{{1, 1, 1}}});
    scene.validate();
    std::vector<std::pair<Camera, DepthMap>> views;
    for (int k = 0; k < 2; ++k) {
        Camera cam;
        cam.intrinsics = {120, 120, 32, 32, 64, 64};
        cam.pose = look_at({k == 0 ? 0.0 : 0.4, 0.1 * k, 1.0}, {0, 0, -2}, {0, 1, 0});
        RgbdFrame f = render_ground_truth(scene, cam, 0.5, 8.0);
        if (k == 1 && bias_second != 0.0)
            for (auto& d : f.depth.data)
                if (d > 0) d += static_cast<float>(bias_second);
        views.push_back({cam, std::move(f.depth)});
    }
    return views;
}

}  // namespace

TEST_CASE("error maps: single view is filled with e_max_fill") {
    auto views = plane_views();
    std::vector<std::pair<Camera, const DepthMap*>> input = {
        {views[0].first, &views[0].second}};
    auto maps = compute_depth_error_maps(input, 0.7f);
    for (float e : maps[0].e) CHECK(e == doctest::Approx(0.7f));
}

TEST_CASE("error maps: consistent depth gives near-zero error") {
    auto views = plane_views();
    std::vector<std::pair<Camera, const DepthMap*>> input;
    for (auto& v : views) input.push_back({v.first, &v.second});
    auto maps = compute_depth_error_maps(input, 1.0f);
    double sum = 0;
    int count = 0;
    for (float e : maps[0].e) {
        if (e == 1.0f) continue;  // no cross-view evidence
        sum += e;
        ++count;
    }
    REQUIRE(count > 1000);
    CHECK(sum / count <= 1e-3);
}

TEST_CASE("error maps: injected bias shows up as error") {
    auto views = plane_views(0.1);
    std::vector<std::pair<Camera, const DepthMap*>> input;
    for (auto& v : views) input.push_back({v.first, &v.second});
    auto maps = compute_depth_error_maps(input, 1.0f);
    double sum = 0;
    int count = 0;
    for (float e : maps[0].e) {
        if (e == 1.0f) continue;
        sum += e;
        ++count;
    }
    REQUIRE(count > 1000);
    CHECK(sum / count == doctest::Approx(0.1).epsilon(0.1));
}

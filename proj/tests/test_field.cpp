#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrdf/field.hpp"

#include <filesystem>

using namespace nrdf;

namespace {

FieldArch tiny_arch() {
    FieldArch a;
    a.trunk_depth = 2;
    a.trunk_width = 8;
    a.encoding.l_pos = 2;
    a.encoding.l_dir = 1;
    a.encoding.include_input = true;
    return a;
}

template <typename T>
std::vector<T*> param_pointers(FieldParams<T>& p) {
    std::vector<T*> out;
    auto collect = [&](LinearLayer<T>& l) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back(l.weight.data() + i);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
    };
    for (auto& l : p.trunk) collect(l);
    collect(p.density_head);
    collect(p.color_head);
    return out;
}

template <typename T>
std::vector<T> grad_values(const ParamGradients<T>& g) {
    std::vector<T> out;
    auto collect = [&](const LinearLayer<T>& l) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back(l.weight.data()[i]);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data()[i]);
    };
    for (const auto& l : g.trunk) collect(l);
    collect(g.density_head);
    collect(g.color_head);
    return out;
}

MatX<double> random_unit_dirs(int n, Rng& rng) {
    MatX<double> d(n, 3);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d v;
        do {
            v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        } while (v.norm() < 1e-3);
        v.normalize();
        d.row(i) = v.transpose();
    }
    return d;
}

}  // namespace

TEST_CASE("positional encoding: zeros, midpoint, identity") {
    double v[3] = {0, 0, 0};
    double out[3 * 5];
    positional_encode(v, 3, 2, true, out);
    for (int i = 0; i < 3; ++i) CHECK(out[i] == 0.0);
    // pairs of (sin, cos) per frequency per component
    for (int k = 3; k < 15; k += 2) {
        CHECK(out[k] == doctest::Approx(0.0));
        CHECK(out[k + 1] == doctest::Approx(1.0));
    }

    double half[1] = {0.5};
    double enc[2];
    positional_encode(half, 1, 1, false, enc);
    CHECK(enc[0] == doctest::Approx(1.0));           // sin(pi/2)
    CHECK(enc[1] == doctest::Approx(0.0).epsilon(1e-12));  // cos(pi/2)

    double idv[2] = {0.3, -0.7};
    double id_out[2];
    positional_encode(idv, 2, 0, true, id_out);
    CHECK(id_out[0] == 0.3);
    CHECK(id_out[1] == -0.7);
}

TEST_CASE("field_init: determinism, zero biases, centered weights") {
    auto a = field_init<float>(tiny_arch(), 42);
    auto b = field_init<float>(tiny_arch(), 42);
    auto pa = param_pointers(a), pb = param_pointers(b);
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);

    for (const auto& l : a.trunk)
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) CHECK(l.bias(i) == 0.0f);
    CHECK(a.density_head.bias(0) == 0.0f);

    // per-matrix mean within 3 standard errors of 0
    FieldArch big = tiny_arch();
    big.trunk_width = 64;
    auto p = field_init<double>(big, 7);
    for (const auto& l : p.trunk) {
        double fan_in = static_cast<double>(l.weight.cols());
        double fan_out = static_cast<double>(l.weight.rows());
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        double se = bound / std::sqrt(3.0 * l.weight.size());
        CHECK(std::abs(l.weight.mean()) < 3 * se);
        CHECK(l.weight.maxCoeff() <= bound);
        CHECK(l.weight.minCoeff() >= -bound);
    }
}

TEST_CASE("field_forward: all-zero params give softplus(0) and gray") {
    auto p = field_init<double>(tiny_arch(), 0);
    for (auto* v : param_pointers(p)) *v = 0.0;
    Rng rng(5);
    MatX<double> pos(4, 3);
    pos.setRandom();
    MatX<double> dirs = random_unit_dirs(4, rng);
    auto out = field_forward(p, pos, dirs, static_cast<FieldCache<double>*>(nullptr));
    for (int i = 0; i < 4; ++i) {
        CHECK(out.density(i) == doctest::Approx(std::log(2.0)));
        for (int c = 0; c < 3; ++c) CHECK(out.rgb(i, c) == doctest::Approx(0.5));
    }
}

TEST_CASE("field_forward: output ranges over random params and inputs") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = field_init<double>(tiny_arch(), trial);
        int n = 500;
        MatX<double> pos(n, 3);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) pos(i, c) = rng.uniform(-2, 2);
        MatX<double> dirs = random_unit_dirs(n, rng);
        auto out = field_forward(p, pos, dirs, static_cast<FieldCache<double>*>(nullptr));
        CHECK(out.density.minCoeff() >= 0.0);
        CHECK(out.rgb.minCoeff() > 0.0);
        CHECK(out.rgb.maxCoeff() < 1.0);
    }
}

TEST_CASE("density is independent of view direction, color is not") {
    Rng rng(8);
    auto p = field_init<double>(tiny_arch(), 3);
    int n = 16;
    MatX<double> pos(n, 3);
    pos.setRandom();
    MatX<double> dirs1 = random_unit_dirs(n, rng);
    MatX<double> dirs2 = random_unit_dirs(n, rng);
    auto o1 = field_forward(p, pos, dirs1, static_cast<FieldCache<double>*>(nullptr));
    auto o2 = field_forward(p, pos, dirs2, static_cast<FieldCache<double>*>(nullptr));
    for (int i = 0; i < n; ++i) CHECK(o1.density(i) == o2.density(i));
    CHECK((o1.rgb - o2.rgb).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("field_forward rejects non-finite and misshapen input") {
    auto p = field_init<double>(tiny_arch(), 1);
    MatX<double> pos(2, 3), dirs(2, 3);
    pos.setZero();
    dirs.setZero();
    dirs.col(2).setConstant(1.0);
    pos(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(
        field_forward(p, pos, dirs, static_cast<FieldCache<double>*>(nullptr)),
        std::domain_error);
    MatX<double> bad(3, 3);
    bad.setZero();
    CHECK_THROWS_AS(field_forward(p, bad, dirs, static_cast<FieldCache<double>*>(nullptr)),
                    std::domain_error);
}

TEST_CASE("field_backward: zero output gradients give zero param gradients") {
    auto p = field_init<double>(tiny_arch(), 2);
    Rng rng(9);
    MatX<double> pos(4, 3);
    pos.setRandom();
    MatX<double> dirs = random_unit_dirs(4, rng);
    FieldCache<double> cache;
    field_forward(p, pos, dirs, &cache);
    VecX<double> zd = VecX<double>::Zero(4);
    MatX<double> zr = MatX<double>::Zero(4, 3);
    auto g = field_backward(p, cache, zd, zr);
    for (double v : grad_values(g)) CHECK(v == 0.0);
}

TEST_CASE("field_backward matches central finite differences") {
    Rng rng(10);
    for (int draw = 0; draw < 10; ++draw) {
        auto p = field_init<double>(tiny_arch(), 100 + draw);
        int n = 10;
        MatX<double> pos(n, 3);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) pos(i, c) = rng.uniform(-1, 1);
        MatX<double> dirs = random_unit_dirs(n, rng);
        VecX<double> d_density(n);
        MatX<double> d_rgb(n, 3);
        for (int i = 0; i < n; ++i) {
            d_density(i) = rng.uniform(-1, 1);
            for (int c = 0; c < 3; ++c) d_rgb(i, c) = rng.uniform(-1, 1);
        }
        auto objective = [&](FieldParams<double>& params) {
            auto out =
                field_forward(params, pos, dirs, static_cast<FieldCache<double>*>(nullptr));
            return (d_density.array() * out.density.array()).sum() +
                   (d_rgb.array() * out.rgb.array()).sum();
        };
        FieldCache<double> cache;
        field_forward(p, pos, dirs, &cache);
        auto g = field_backward(p, cache, d_density, d_rgb);
        auto analytic = grad_values(g);
        auto ptrs = param_pointers(p);
        REQUIRE(analytic.size() == ptrs.size());
        const double h = 1e-4;
        for (size_t k = 0; k < ptrs.size(); k += 7) {  // stride keeps runtime sane
            double orig = *ptrs[k];
            *ptrs[k] = orig + h;
            double fp = objective(p);
            *ptrs[k] = orig - h;
            double fm = objective(p);
            *ptrs[k] = orig;
            double fd = (fp - fm) / (2 * h);
            double denom = std::max(std::abs(fd), std::abs(analytic[k]));
            if (denom < 1e-7)
                CHECK(std::abs(fd - analytic[k]) < 1e-7);
            else
                CHECK(std::abs(fd - analytic[k]) / denom < 1e-4);
        }
    }
}

TEST_CASE("field_backward is additive over batch elements") {
    Rng rng(11);
    auto p = field_init<double>(tiny_arch(), 55);
    int n = 6;
    MatX<double> pos(n, 3);
    pos.setRandom();
    MatX<double> dirs = random_unit_dirs(n, rng);
    VecX<double> dd(n);
    MatX<double> dr(n, 3);
    dd.setRandom();
    dr.setRandom();

    FieldCache<double> cache;
    field_forward(p, pos, dirs, &cache);
    auto full = grad_values(field_backward(p, cache, dd, dr));

    std::vector<double> summed(full.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        FieldCache<double> c1;
        field_forward(p, MatX<double>(pos.row(i)), MatX<double>(dirs.row(i)), &c1);
        VecX<double> dd1(1);
        dd1(0) = dd(i);
        MatX<double> dr1(1, 3);
        dr1 = dr.row(i);
        auto g1 = grad_values(field_backward(p, c1, dd1, dr1));
        for (size_t k = 0; k < summed.size(); ++k) summed[k] += g1[k];
    }
    for (size_t k = 0; k < full.size(); ++k)
        CHECK(full[k] == doctest::Approx(summed[k]).epsilon(1e-10));
}

TEST_CASE("checkpoint: bit-exact roundtrip") {
    namespace fs = std::filesystem;
    auto p = field_init<float>(tiny_arch(), 77);
    fs::path path = fs::temp_directory_path() / "nrdf_test_ckpt.nrdf";
    save_checkpoint(path.string(), p);
    auto q = load_checkpoint(path.string());
    CHECK(q.arch == p.arch);
    auto pp = param_pointers(p), qq = param_pointers(q);
    REQUIRE(pp.size() == qq.size());
    for (size_t i = 0; i < pp.size(); ++i) CHECK(*pp[i] == *qq[i]);
    fs::remove(path);
}

TEST_CASE("checkpoint: corrupted magic is rejected with a message") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "nrdf_test_bad.nrdf";
    {
        std::ofstream os(path, std::ios::binary);
        os << "XXXX12345678";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()),
                         doctest::Contains("NRDF"), std::runtime_error);
    fs::remove(path);
}

TEST_CASE("determinism: identical params and inputs give identical outputs") {
    Rng rng(12);
    auto p = field_init<float>(tiny_arch(), 4);
    MatX<float> pos(8, 3);
    pos.setRandom();
    MatX<float> dirs = random_unit_dirs(8, rng).cast<float>();
    auto o1 = field_forward(p, pos, dirs, static_cast<FieldCache<float>*>(nullptr));
    auto o2 = field_forward(p, pos, dirs, static_cast<FieldCache<float>*>(nullptr));
    CHECK((o1.density - o2.density).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((o1.rgb - o2.rgb).cwiseAbs().maxCoeff() == 0.0f);
}

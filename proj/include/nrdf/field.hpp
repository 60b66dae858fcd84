#pragma once

// The radiance field: one small MLP taking encoded position and view
// direction, producing density (softplus) and color (sigmoid). Forward and
// backward passes are written by hand; the scalar type is a template
// parameter so gradient checks can run in double precision.

#include <Eigen/Dense>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "nrdf/core.hpp"

namespace nrdf {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct EncodingConfig {
    int l_pos = 6;
    int l_dir = 4;
    bool include_input = true;

    int encoded_dim(int l) const { return 3 * ((include_input ? 1 : 0) + 2 * l); }
    int pos_dim() const { return encoded_dim(l_pos); }
    int dir_dim() const { return encoded_dim(l_dir); }
};

// Writes the encoding of `v` (d components) into `out`.
template <typename T>
inline void positional_encode(const T* v, int d, int l, bool include_input, T* out) {
    int k = 0;
    if (include_input)
        for (int i = 0; i < d; ++i) out[k++] = v[i];
    T freq = T(M_PI);
    for (int f = 0; f < l; ++f) {
        for (int i = 0; i < d; ++i) {
            out[k++] = std::sin(freq * v[i]);
            out[k++] = std::cos(freq * v[i]);
        }
        freq *= T(2);
    }
}

// Batched version: rows of `in` (B x d) -> rows of the returned (B x dim).
template <typename T>
inline MatX<T> positional_encode_batch(const MatX<T>& in, int l, bool include_input) {
    int d = static_cast<int>(in.cols());
    int dim = d * ((include_input ? 1 : 0) + 2 * l);
    MatX<T> out(in.rows(), dim);
    for (Eigen::Index r = 0; r < in.rows(); ++r)
        positional_encode(in.row(r).data(), d, l, include_input, out.row(r).data());
    return out;
}

template <typename T>
struct LinearLayer {
    MatX<T> weight;  // out x in
    VecX<T> bias;    // out

    template <typename U>
    LinearLayer<U> cast() const {
        LinearLayer<U> o;
        o.weight = weight.template cast<U>();
        o.bias = bias.template cast<U>();
        return o;
    }
};

struct FieldArch {
    int trunk_depth = 4;
    int trunk_width = 128;
    EncodingConfig encoding;

    bool operator==(const FieldArch& o) const {
        return trunk_depth == o.trunk_depth && trunk_width == o.trunk_width &&
               encoding.l_pos == o.encoding.l_pos && encoding.l_dir == o.encoding.l_dir &&
               encoding.include_input == o.encoding.include_input;
    }
};

template <typename T>
struct FieldParams {
    FieldArch arch;
    std::vector<LinearLayer<T>> trunk;  // trunk_depth layers, ReLU
    LinearLayer<T> density_head;        // width -> 1, softplus
    LinearLayer<T> color_head;          // width + dir_dim -> 3, sigmoid

    template <typename U>
    FieldParams<U> cast() const {
        FieldParams<U> o;
        o.arch = arch;
        for (const auto& l : trunk) o.trunk.push_back(l.template cast<U>());
        o.density_head = density_head.template cast<U>();
        o.color_head = color_head.template cast<U>();
        return o;
    }

    size_t param_count() const {
        size_t n = 0;
        auto add = [&](const LinearLayer<T>& l) {
            n += static_cast<size_t>(l.weight.size()) + l.bias.size();
        };
        for (const auto& l : trunk) add(l);
        add(density_head);
        add(color_head);
        return n;
    }
};

// Glorot-uniform weights, zero biases, deterministic per seed.
template <typename T>
inline LinearLayer<T> init_layer(int out, int in, Rng& rng) {
    LinearLayer<T> l;
    l.weight.resize(out, in);
    l.bias = VecX<T>::Zero(out);
    double bound = std::sqrt(6.0 / (in + out));
    for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j)
            l.weight(i, j) = static_cast<T>(rng.uniform(-bound, bound));
    return l;
}

template <typename T>
inline FieldParams<T> field_init(const FieldArch& arch, uint64_t seed) {
    if (arch.trunk_depth < 1 || arch.trunk_width < 1)
        throw std::domain_error("field_init: invalid architecture");
    Rng rng(hash_combine(seed, hash_str("field_init")));
    FieldParams<T> p;
    p.arch = arch;
    int in = arch.encoding.pos_dim();
    for (int i = 0; i < arch.trunk_depth; ++i) {
        p.trunk.push_back(init_layer<T>(arch.trunk_width, in, rng));
        in = arch.trunk_width;
    }
    p.density_head = init_layer<T>(1, arch.trunk_width, rng);
    p.color_head = init_layer<T>(3, arch.trunk_width + arch.encoding.dir_dim(), rng);
    return p;
}

template <typename T>
struct FieldOutput {
    VecX<T> density;  // B, >= 0
    MatX<T> rgb;      // B x 3, in (0,1)
};

template <typename T>
struct FieldCache {
    MatX<T> pos_enc;               // B x pos_dim
    MatX<T> dir_enc;               // B x dir_dim
    std::vector<MatX<T>> trunk_z;  // pre-activations, B x width
    MatX<T> trunk_out;             // post-ReLU of last trunk layer
    VecX<T> density_z;             // density head pre-activation
    MatX<T> color_z;               // color head pre-activation, B x 3
    FieldOutput<T> out;            // activations reused by backward
};

template <typename T>
inline T softplus(T x) {
    // overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|))
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
inline FieldOutput<T> field_forward(const FieldParams<T>& p, const MatX<T>& positions,
                                    const MatX<T>& viewdirs, FieldCache<T>* cache) {
    if (!positions.allFinite() || !viewdirs.allFinite())
        throw std::domain_error("field_forward: non-finite input");
    if (positions.rows() != viewdirs.rows() || positions.cols() != 3 ||
        viewdirs.cols() != 3)
        throw std::domain_error("field_forward: bad input shapes");

    const auto& enc = p.arch.encoding;
    MatX<T> x = positional_encode_batch(positions, enc.l_pos, enc.include_input);
    MatX<T> dir_enc = positional_encode_batch(viewdirs, enc.l_dir, enc.include_input);
    if (cache) {
        cache->pos_enc = x;
        cache->dir_enc = dir_enc;
        cache->trunk_z.clear();
    }

    for (const auto& layer : p.trunk) {
        MatX<T> z = x * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        if (cache) cache->trunk_z.push_back(z);
        x = z.cwiseMax(T(0));
    }
    if (cache) cache->trunk_out = x;

    VecX<T> dz = x * p.density_head.weight.transpose().col(0);
    dz.array() += p.density_head.bias(0);

    MatX<T> color_in(x.rows(), x.cols() + dir_enc.cols());
    color_in << x, dir_enc;
    MatX<T> cz = color_in * p.color_head.weight.transpose();
    cz.rowwise() += p.color_head.bias.transpose();

    FieldOutput<T> out;
    out.density = dz.unaryExpr([](T v) { return softplus(v); });
    out.rgb = cz.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
    if (cache) {
        cache->density_z = dz;
        cache->color_z = cz;
        cache->out = out;
    }
    return out;
}

template <typename T>
struct ParamGradients {
    std::vector<LinearLayer<T>> trunk;
    LinearLayer<T> density_head, color_head;

    static ParamGradients zeros_like(const FieldParams<T>& p) {
        ParamGradients g;
        auto zero = [](const LinearLayer<T>& l) {
            LinearLayer<T> o;
            o.weight = MatX<T>::Zero(l.weight.rows(), l.weight.cols());
            o.bias = VecX<T>::Zero(l.bias.size());
            return o;
        };
        for (const auto& l : p.trunk) g.trunk.push_back(zero(l));
        g.density_head = zero(p.density_head);
        g.color_head = zero(p.color_head);
        return g;
    }

    void add(const ParamGradients& o) {
        for (size_t i = 0; i < trunk.size(); ++i) {
            trunk[i].weight += o.trunk[i].weight;
            trunk[i].bias += o.trunk[i].bias;
        }
        density_head.weight += o.density_head.weight;
        density_head.bias += o.density_head.bias;
        color_head.weight += o.color_head.weight;
        color_head.bias += o.color_head.bias;
    }

    bool all_finite() const {
        auto fin = [](const LinearLayer<T>& l) {
            return l.weight.allFinite() && l.bias.allFinite();
        };
        for (const auto& l : trunk)
            if (!fin(l)) return false;
        return fin(density_head) && fin(color_head);
    }
};

// Gradients of sum(d_density * density) + sum(d_rgb .* rgb) w.r.t. params.
template <typename T>
inline ParamGradients<T> field_backward(const FieldParams<T>& p,
                                        const FieldCache<T>& cache,
                                        const VecX<T>& d_density,
                                        const MatX<T>& d_rgb) {
    if (d_density.size() != cache.density_z.size() ||
        d_rgb.rows() != cache.color_z.rows() || d_rgb.cols() != 3)
        throw std::domain_error("field_backward: gradient shape mismatch");

    ParamGradients<T> g = ParamGradients<T>::zeros_like(p);

    // heads: softplus' = sigmoid(z); sigmoid' = s(1-s)
    VecX<T> d_dz = d_density.array() /
                   (T(1) + (-cache.density_z.array()).exp());
    MatX<T> d_cz =
        d_rgb.array() * cache.out.rgb.array() * (T(1) - cache.out.rgb.array());

    const MatX<T>& trunk_out = cache.trunk_out;
    g.density_head.weight = d_dz.transpose() * trunk_out;
    g.density_head.bias(0) = d_dz.sum();

    MatX<T> color_in(trunk_out.rows(), trunk_out.cols() + cache.dir_enc.cols());
    color_in << trunk_out, cache.dir_enc;
    g.color_head.weight = d_cz.transpose() * color_in;
    g.color_head.bias = d_cz.colwise().sum().transpose();

    // gradient flowing into the last trunk activation
    MatX<T> d_x = d_dz * p.density_head.weight;  // B x width
    d_x += d_cz * p.color_head.weight.leftCols(trunk_out.cols());

    for (int i = static_cast<int>(p.trunk.size()) - 1; i >= 0; --i) {
        MatX<T> d_z =
            (cache.trunk_z[i].array() > T(0)).select(d_x, MatX<T>::Zero(d_x.rows(), d_x.cols()));
        const MatX<T>& input =
            (i == 0) ? cache.pos_enc : cache.trunk_z[i - 1].cwiseMax(T(0));
        g.trunk[i].weight = d_z.transpose() * input;
        g.trunk[i].bias = d_z.colwise().sum().transpose();
        if (i > 0) d_x = d_z * p.trunk[i].weight;
    }
    return g;
}

// --- checkpoint I/O --------------------------------------------------------
// Layout: "NRDF" magic, u32 version, u32 arch descriptor
// (trunk_depth, trunk_width, l_pos, l_dir, include_input), then all
// parameters as little-endian f32 in declaration order.

constexpr uint32_t kCheckpointVersion = 1;

namespace detail {
inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}
inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
inline void write_f32s(std::ostream& os, const float* p, size_t n) {
    // this library targets little-endian hosts
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}
inline void read_f32s(std::istream& is, float* p, size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4));
    if (!is) throw std::runtime_error("checkpoint: truncated parameter block");
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const FieldParams<float>& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for write");
    os.write("NRDF", 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u32(os, static_cast<uint32_t>(p.arch.trunk_depth));
    detail::write_u32(os, static_cast<uint32_t>(p.arch.trunk_width));
    detail::write_u32(os, static_cast<uint32_t>(p.arch.encoding.l_pos));
    detail::write_u32(os, static_cast<uint32_t>(p.arch.encoding.l_dir));
    detail::write_u32(os, p.arch.encoding.include_input ? 1 : 0);
    auto dump = [&](const LinearLayer<float>& l) {
        detail::write_f32s(os, l.weight.data(), l.weight.size());
        detail::write_f32s(os, l.bias.data(), l.bias.size());
    };
    for (const auto& l : p.trunk) dump(l);
    dump(p.density_head);
    dump(p.color_head);
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline FieldParams<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NRDF", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path +
                                 " (expected \"NRDF\")");
    uint32_t version = detail::read_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version));
    FieldArch arch;
    arch.trunk_depth = static_cast<int>(detail::read_u32(is));
    arch.trunk_width = static_cast<int>(detail::read_u32(is));
    arch.encoding.l_pos = static_cast<int>(detail::read_u32(is));
    arch.encoding.l_dir = static_cast<int>(detail::read_u32(is));
    arch.encoding.include_input = detail::read_u32(is) != 0;

    FieldParams<float> p;
    p.arch = arch;
    int in = arch.encoding.pos_dim();
    auto load = [&](int out_dim, int in_dim) {
        LinearLayer<float> l;
        l.weight.resize(out_dim, in_dim);
        l.bias.resize(out_dim);
        detail::read_f32s(is, l.weight.data(), l.weight.size());
        detail::read_f32s(is, l.bias.data(), l.bias.size());
        return l;
    };
    for (int i = 0; i < arch.trunk_depth; ++i) {
        p.trunk.push_back(load(arch.trunk_width, in));
        in = arch.trunk_width;
    }
    p.density_head = load(1, arch.trunk_width);
    p.color_head = load(3, arch.trunk_width + arch.encoding.dir_dim());
    return p;
}

}  // namespace nrdf

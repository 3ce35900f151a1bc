#include "minusformer/layers.hpp"

#include <cmath>

#include "minusformer/errors.hpp"

namespace minusformer {

LinearParams LinearParams::init(std::size_t in, std::size_t out, SeededRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearParams p;
    p.weight = Tensor::uniform({in, out}, -bound, bound, rng, true);
    p.bias = Tensor::uniform({out}, -bound, bound, rng, true);
    return p;
}

LinearParams LinearParams::zeros(std::size_t in, std::size_t out) {
    return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
}

LayerNormParams LayerNormParams::init(std::size_t width) {
    return {Tensor::ones({width}, true), Tensor::zeros({width}, true), 1e-5};
}

AttentionParams AttentionParams::init(std::size_t width, std::size_t heads, SeededRng& rng) {
    if (heads == 0 || width % heads != 0) {
        throw InvalidConfig("attention heads " + std::to_string(heads) + " must divide width " +
                            std::to_string(width));
    }
    AttentionParams p;
    p.heads = heads;
    p.w_q = LinearParams::init(width, width, rng);
    p.w_k = LinearParams::init(width, width, rng);
    p.w_v = LinearParams::init(width, width, rng);
    p.w_o = LinearParams::init(width, width, rng);
    return p;
}

FeedForwardParams FeedForwardParams::init(std::size_t width, std::size_t hidden, SeededRng& rng) {
    return {LinearParams::init(width, hidden, rng), LinearParams::init(hidden, width, rng)};
}

GateParams GateParams::init(std::size_t in, std::size_t out, SeededRng& rng) {
    return {LinearParams::init(in, out, rng), LinearParams::init(in, out, rng)};
}

Tensor linear_apply(const LinearParams& p, const Tensor& x) {
    if (x.rank() == 0 || x.dim(-1) != p.in_features()) {
        throw ShapeMismatch("linear expects last dim " + std::to_string(p.in_features()) + ", got " +
                            shape_string(x.shape()));
    }
    if (x.rank() == 1) {
        return reshape(add(matmul(reshape(x, {1, x.dim(0)}), p.weight), p.bias), {p.out_features()});
    }
    return add(matmul(x, p.weight), p.bias);
}

Tensor layer_norm_apply(const LayerNormParams& p, const Tensor& x) {
    return layer_norm(x, p.gamma, p.beta, p.eps);
}

Tensor dropout_apply(const Tensor& x, double rate, bool training, SeededRng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidRate("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    std::vector<double> mask(x.numel());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

AttentionResult full_attention_kernel(const Tensor& q, const Tensor& k, const Tensor& v) {
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
    Tensor scores = scale(matmul(q, transpose_last2(k)), inv_sqrt_dk);
    Tensor weights = softmax_last(scores);
    return {matmul(weights, v), weights};
}

Tensor full_attention(const AttentionParams& p, const Tensor& x, Tensor* weights_out) {
    if (x.rank() != 3 || x.dim(2) != p.width()) {
        throw ShapeMismatch("attention expects [B, T, " + std::to_string(p.width()) + "], got " +
                            shape_string(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t tokens = x.dim(1);
    const std::size_t heads = p.heads;
    const std::size_t dk = p.head_dim();

    // [B, T, E] -> [B, heads, T, d_k]
    auto split = [&](const Tensor& t) {
        return permute(reshape(t, {batch, tokens, heads, dk}), {0, 2, 1, 3});
    };
    const Tensor q = split(linear_apply(p.w_q, x));
    const Tensor k = split(linear_apply(p.w_k, x));
    const Tensor v = split(linear_apply(p.w_v, x));
    AttentionResult mixed = p.kernel(q, k, v);
    if (weights_out) *weights_out = mixed.weights;
    const Tensor merged = reshape(permute(mixed.values, {0, 2, 1, 3}), {batch, tokens, heads * dk});
    return linear_apply(p.w_o, merged);
}

Tensor feed_forward(const FeedForwardParams& p, const Tensor& x) {
    return linear_apply(p.lin2, gelu(linear_apply(p.lin1, x)));
}

Tensor gate_apply(const GateParams& p, const Tensor& x) {
    return mul(sigmoid(linear_apply(p.theta_gate, x)), linear_apply(p.theta_value, x));
}

void collect(const LinearParams& p, const std::string& prefix, NamedParameters& out) {
    out.emplace_back(prefix + ".weight", p.weight);
    out.emplace_back(prefix + ".bias", p.bias);
}

void collect(const LayerNormParams& p, const std::string& prefix, NamedParameters& out) {
    out.emplace_back(prefix + ".gamma", p.gamma);
    out.emplace_back(prefix + ".beta", p.beta);
}

void collect(const AttentionParams& p, const std::string& prefix, NamedParameters& out) {
    collect(p.w_q, prefix + ".w_q", out);
    collect(p.w_k, prefix + ".w_k", out);
    collect(p.w_v, prefix + ".w_v", out);
    collect(p.w_o, prefix + ".w_o", out);
}

void collect(const FeedForwardParams& p, const std::string& prefix, NamedParameters& out) {
    collect(p.lin1, prefix + ".lin1", out);
    collect(p.lin2, prefix + ".lin2", out);
}

void collect(const GateParams& p, const std::string& prefix, NamedParameters& out) {
    collect(p.theta_gate, prefix + ".gate", out);
    collect(p.theta_value, prefix + ".value", out);
}

}  // namespace minusformer

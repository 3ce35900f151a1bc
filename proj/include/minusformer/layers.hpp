#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "minusformer/rng.hpp"
#include "minusformer/tensor.hpp"

namespace minusformer {

/// Flat list of (name, tensor) pairs. Tensors are handles, so updating the
/// values through this list updates the owning module.
using NamedParameters = std::vector<std::pair<std::string, Tensor>>;

struct LinearParams {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }

    /// Weight and bias drawn from U(-1/sqrt(in), 1/sqrt(in)).
    static LinearParams init(std::size_t in, std::size_t out, SeededRng& rng);
    static LinearParams zeros(std::size_t in, std::size_t out);
};

struct LayerNormParams {
    Tensor gamma;  // [E], ones
    Tensor beta;   // [E], zeros
    double eps = 1e-5;

    static LayerNormParams init(std::size_t width);
};

/// Scaled dot-product kernel: q, k, v are [.., tokens, d_k]; returns the mixed
/// values and the attention weights [.., tokens, tokens]. This is the seam for
/// alternative attention mechanisms.
struct AttentionResult {
    Tensor values;
    Tensor weights;
};
using AttentionKernel = std::function<AttentionResult(const Tensor& q, const Tensor& k, const Tensor& v)>;

AttentionResult full_attention_kernel(const Tensor& q, const Tensor& k, const Tensor& v);

struct AttentionParams {
    std::size_t heads = 1;
    LinearParams w_q, w_k, w_v, w_o;  // each [E, E]
    AttentionKernel kernel = full_attention_kernel;

    std::size_t width() const { return w_q.in_features(); }
    std::size_t head_dim() const { return width() / heads; }

    static AttentionParams init(std::size_t width, std::size_t heads, SeededRng& rng);
};

struct FeedForwardParams {
    LinearParams lin1;  // [E, F]
    LinearParams lin2;  // [F, E]

    static FeedForwardParams init(std::size_t width, std::size_t hidden, SeededRng& rng);
};

/// sigmoid(theta_gate(x)) * theta_value(x)
struct GateParams {
    LinearParams theta_gate;
    LinearParams theta_value;

    static GateParams init(std::size_t in, std::size_t out, SeededRng& rng);
};

Tensor linear_apply(const LinearParams& p, const Tensor& x);
Tensor layer_norm_apply(const LayerNormParams& p, const Tensor& x);
/// Training mode zeroes each element with probability `rate` and rescales
/// survivors by 1/(1-rate). Evaluation mode returns `x` itself.
Tensor dropout_apply(const Tensor& x, double rate, bool training, SeededRng& rng);

/// Multi-head attention over the token axis of x [B, tokens, E]. When
/// `weights_out` is given it receives the per-head weights [B, heads, T, T].
Tensor full_attention(const AttentionParams& p, const Tensor& x, Tensor* weights_out = nullptr);
Tensor feed_forward(const FeedForwardParams& p, const Tensor& x);
Tensor gate_apply(const GateParams& p, const Tensor& x);

void collect(const LinearParams& p, const std::string& prefix, NamedParameters& out);
void collect(const LayerNormParams& p, const std::string& prefix, NamedParameters& out);
void collect(const AttentionParams& p, const std::string& prefix, NamedParameters& out);
void collect(const FeedForwardParams& p, const std::string& prefix, NamedParameters& out);
void collect(const GateParams& p, const std::string& prefix, NamedParameters& out);

}  // namespace minusformer

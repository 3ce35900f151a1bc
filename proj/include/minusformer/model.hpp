#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "minusformer/layers.hpp"
#include "minusformer/tensor.hpp"

namespace minusformer {

struct ScalerStats;

/// How a stream combines with the block output: minus is the default
/// subtractive path, plus the additive ablation.
enum class Sign { plus, minus };

std::string to_string(Sign s);
Sign parse_sign(const std::string& text);

struct MinusformerConfig {
    std::size_t input_len = 96;
    std::size_t pred_len = 96;
    std::size_t n_variates = 1;
    std::size_t embed_dim = 64;
    std::size_t n_blocks = 2;
    /// Length of each block's output stream; 0 means pred_len.
    std::size_t block_out_len = 0;
    std::size_t heads = 4;
    /// Feed-forward hidden width; 0 means 4 * embed_dim.
    std::size_t ffn_hidden = 0;
    double dropout_rate = 0.1;
    /// Dirac switch on the attention term of the residual path, 0 or 1.
    int delta = 1;
    bool gate_enabled = true;
    Sign input_sign = Sign::minus;
    Sign output_sign = Sign::minus;
    bool norm_enabled = true;
    /// Alternative reading of delta = 0: also drop the attention output from
    /// the output-stream concatenation. Off by default.
    bool delta_zero_drops_attention_output = false;
    std::uint64_t seed = 0;

    std::size_t block_out() const { return block_out_len ? block_out_len : pred_len; }
    std::size_t hidden() const { return ffn_hidden ? ffn_hidden : 4 * embed_dim; }

    /// Throws InvalidConfig.
    void validate() const;

    std::vector<std::pair<std::string, std::string>> to_key_values() const;
    /// Returns false for an unknown key; throws InvalidConfig for a bad value.
    bool set(const std::string& key, const std::string& value);
};

struct BlockParams {
    AttentionParams attention;
    LayerNormParams norm;
    FeedForwardParams ffn;
    // Present when gate_enabled.
    std::optional<GateParams> input_gate;   // E -> E
    std::optional<GateParams> output_gate;  // 2E -> H
    // Present when the gate is ablated: plain 2E -> H projection.
    std::optional<LinearParams> output_linear;
};

/// Intermediates of one block. Tensors keep their graph attachment, so a
/// trace from a training forward also pins the graph alive.
struct BlockTrace {
    Tensor xhat_attention;  // attention extraction
    Tensor xhat_ffn;        // feed-forward extraction
    Tensor residual;        // input stream after both subtractions, pre-gate
    Tensor next_input;      // input stream handed to the next block
    Tensor ohat;            // this block's prediction [B, D, H]
    Tensor ostream;         // output stream after combining with the previous one
    Tensor attention_weights;  // [B, heads, D, D]
};

struct ForwardTrace {
    Tensor embedded;  // X_1 [B, D, E]
    std::vector<BlockTrace> blocks;
    Tensor prediction;  // [B, O, D], standardized space
};

class Minusformer {
public:
    explicit Minusformer(MinusformerConfig config);

    const MinusformerConfig& config() const { return config_; }

    LinearParams embedding;  // I -> E
    std::vector<BlockParams> blocks;
    std::optional<LinearParams> projection;  // H -> O when H != O

    NamedParameters parameters() const;

private:
    MinusformerConfig config_;
};

struct BlockStep {
    Tensor next_input;
    Tensor ostream;
    BlockTrace trace;
};

/// [B, I, D] -> [B, D, E]
Tensor embed_input(const Minusformer& model, const Tensor& x);

BlockStep block_forward(const BlockParams& bp, const MinusformerConfig& cfg, const Tensor& x_l,
                        const Tensor& o_l, bool training, SeededRng& rng);

struct ForwardResult {
    Tensor prediction;  // [B, O, D]
    ForwardTrace trace;
};

/// Full forward pass on standardized input [B, I, D]. `rng` drives dropout
/// and is only consulted when training.
ForwardResult model_forward(const Minusformer& model, const Tensor& x, bool training, SeededRng& rng);
/// Evaluation-mode forward without graph recording.
Tensor predict(const Minusformer& model, const Tensor& x);

/// Max abs deviation of X_1 - sum_l (xhat_att + xhat_ffn) - X_{L+1}. Requires
/// a config with no gate, no norm, no dropout, delta = 1 and minus input sign;
/// throws ConfigNotDecomposable otherwise.
double input_decomposition_check(const Minusformer& model, const Tensor& x);

struct BlockOutputRow {
    std::size_t block;  // 1-based
    std::string kind;   // "ohat" or "cumulative"
    std::size_t variate;
    std::size_t step;
    double value;
};

/// Per-block predictions of one window (batch index `batch`), mapped back to
/// data units. Components are rescaled by the per-variate std with the mean
/// carried by the last block, so the alternating sum of the "ohat" rows equals
/// the last "cumulative" row. Cumulative rows are full inverse transforms.
std::vector<BlockOutputRow> export_trace(const ForwardTrace& trace, const ScalerStats* scaler,
                                         std::size_t batch = 0);
void write_block_outputs_csv(std::ostream& os, const std::vector<BlockOutputRow>& rows);

/// Attention weights of one window as (block, head, query, key, weight) rows.
void write_attention_csv(std::ostream& os, const ForwardTrace& trace, std::size_t batch = 0);

// Checkpoint: a text file holding the config as key=value lines followed by
// every named parameter with its shape and hex-float values (lossless).
void save_checkpoint(const Minusformer& model, std::ostream& os);
Minusformer load_checkpoint(std::istream& is);
void save_checkpoint(const Minusformer& model, const std::string& path);
Minusformer load_checkpoint(const std::string& path);

}  // namespace minusformer

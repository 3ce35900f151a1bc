#include "minusformer/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "minusformer/data.hpp"
#include "minusformer/errors.hpp"

namespace minusformer {

std::string to_string(Sign s) { return s == Sign::minus ? "-" : "+"; }

Sign parse_sign(const std::string& text) {
    if (text == "-" || text == "minus" || text == "sub") return Sign::minus;
    if (text == "+" || text == "plus" || text == "add") return Sign::plus;
    throw InvalidConfig("sign must be '+' or '-', got '" + text + "'");
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& value, bool allow_zero) {
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (value.empty() || end != value.c_str() + value.size() || v < 0 || (!allow_zero && v == 0)) {
        throw InvalidConfig(key + " must be a " + (allow_zero ? "non-negative" : "positive") + " integer, got '" +
                            value + "'");
    }
    return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
        throw InvalidConfig(key + " must be a number, got '" + value + "'");
    }
    return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") return true;
    if (value == "0" || value == "false" || value == "off") return false;
    throw InvalidConfig(key + " must be true/false, got '" + value + "'");
}

std::string real_text(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

Tensor combine(Sign sign, const Tensor& a, const Tensor& b) {
    return sign == Sign::minus ? sub(a, b) : add(a, b);
}

}  // namespace

void MinusformerConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw InvalidConfig(std::string(name) + " must be >= 1");
    };
    positive(input_len, "input_len");
    positive(pred_len, "pred_len");
    positive(n_variates, "n_variates");
    positive(embed_dim, "embed_dim");
    positive(n_blocks, "n_blocks");
    positive(heads, "heads");
    if (embed_dim % heads != 0) {
        throw InvalidConfig("heads " + std::to_string(heads) + " must divide embed_dim " + std::to_string(embed_dim));
    }
    if (delta != 0 && delta != 1) throw InvalidConfig("delta must be 0 or 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidConfig("dropout_rate must lie in [0, 1)");
}

std::vector<std::pair<std::string, std::string>> MinusformerConfig::to_key_values() const {
    return {
        {"input_len", std::to_string(input_len)},
        {"pred_len", std::to_string(pred_len)},
        {"n_variates", std::to_string(n_variates)},
        {"embed_dim", std::to_string(embed_dim)},
        {"n_blocks", std::to_string(n_blocks)},
        {"block_out_len", std::to_string(block_out_len)},
        {"heads", std::to_string(heads)},
        {"ffn_hidden", std::to_string(ffn_hidden)},
        {"dropout_rate", real_text(dropout_rate)},
        {"delta", std::to_string(delta)},
        {"gate_enabled", gate_enabled ? "true" : "false"},
        {"input_sign", to_string(input_sign)},
        {"output_sign", to_string(output_sign)},
        {"norm_enabled", norm_enabled ? "true" : "false"},
        {"delta_zero_drops_attention_output", delta_zero_drops_attention_output ? "true" : "false"},
        {"seed", std::to_string(seed)},
    };
}

bool MinusformerConfig::set(const std::string& key, const std::string& value) {
    if (key == "input_len") input_len = parse_count(key, value, false);
    else if (key == "pred_len") pred_len = parse_count(key, value, false);
    else if (key == "n_variates") n_variates = parse_count(key, value, false);
    else if (key == "embed_dim") embed_dim = parse_count(key, value, false);
    else if (key == "n_blocks") n_blocks = parse_count(key, value, false);
    else if (key == "block_out_len") block_out_len = parse_count(key, value, true);
    else if (key == "heads") heads = parse_count(key, value, false);
    else if (key == "ffn_hidden") ffn_hidden = parse_count(key, value, true);
    else if (key == "dropout_rate") dropout_rate = parse_real(key, value);
    else if (key == "delta") {
        const auto d = parse_count(key, value, true);
        if (d > 1) throw InvalidConfig("delta must be 0 or 1");
        delta = static_cast<int>(d);
    } else if (key == "gate_enabled") gate_enabled = parse_flag(key, value);
    else if (key == "input_sign") input_sign = parse_sign(value);
    else if (key == "output_sign") output_sign = parse_sign(value);
    else if (key == "norm_enabled") norm_enabled = parse_flag(key, value);
    else if (key == "delta_zero_drops_attention_output") delta_zero_drops_attention_output = parse_flag(key, value);
    else if (key == "seed") seed = parse_count(key, value, true);
    else return false;
    return true;
}

Minusformer::Minusformer(MinusformerConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& c = config_;
    SeededRng rng(c.seed);
    embedding = LinearParams::init(c.input_len, c.embed_dim, rng);
    blocks.reserve(c.n_blocks);
    for (std::size_t l = 0; l < c.n_blocks; ++l) {
        BlockParams bp;
        bp.attention = AttentionParams::init(c.embed_dim, c.heads, rng);
        bp.norm = LayerNormParams::init(c.embed_dim);
        bp.ffn = FeedForwardParams::init(c.embed_dim, c.hidden(), rng);
        if (c.gate_enabled) {
            bp.input_gate = GateParams::init(c.embed_dim, c.embed_dim, rng);
            bp.output_gate = GateParams::init(2 * c.embed_dim, c.block_out(), rng);
        } else {
            bp.output_linear = LinearParams::init(2 * c.embed_dim, c.block_out(), rng);
        }
        blocks.push_back(std::move(bp));
    }
    if (c.block_out() != c.pred_len) projection = LinearParams::init(c.block_out(), c.pred_len, rng);
}

NamedParameters Minusformer::parameters() const {
    NamedParameters out;
    collect(embedding, "embedding", out);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const auto& bp = blocks[l];
        const std::string p = "block" + std::to_string(l + 1);
        collect(bp.attention, p + ".attention", out);
        if (config_.norm_enabled) collect(bp.norm, p + ".norm", out);
        collect(bp.ffn, p + ".ffn", out);
        if (bp.input_gate) collect(*bp.input_gate, p + ".input_gate", out);
        if (bp.output_gate) collect(*bp.output_gate, p + ".output_gate", out);
        if (bp.output_linear) collect(*bp.output_linear, p + ".output_linear", out);
    }
    if (projection) collect(*projection, "projection", out);
    return out;
}

Tensor embed_input(const Minusformer& model, const Tensor& x) {
    const auto& c = model.config();
    if (x.rank() != 3 || x.dim(1) != c.input_len || x.dim(2) != c.n_variates) {
        throw ShapeMismatch("model input must be [B, " + std::to_string(c.input_len) + ", " +
                            std::to_string(c.n_variates) + "], got " + shape_string(x.shape()));
    }
    return linear_apply(model.embedding, transpose_last2(x));
}

BlockStep block_forward(const BlockParams& bp, const MinusformerConfig& cfg, const Tensor& x_l, const Tensor& o_l,
                        bool training, SeededRng& rng) {
    BlockTrace tr;
    tr.xhat_attention = full_attention(bp.attention, x_l, &tr.attention_weights);

    Tensor r1 = cfg.delta == 1
                    ? combine(cfg.input_sign, x_l, dropout_apply(tr.xhat_attention, cfg.dropout_rate, training, rng))
                    : x_l;
    if (cfg.norm_enabled) r1 = layer_norm_apply(bp.norm, r1);

    tr.xhat_ffn = feed_forward(bp.ffn, r1);
    tr.residual = combine(cfg.input_sign, r1, tr.xhat_ffn);
    tr.next_input = bp.input_gate ? gate_apply(*bp.input_gate, tr.residual) : tr.residual;

    const Tensor attention_part = cfg.delta == 0 && cfg.delta_zero_drops_attention_output
                                      ? Tensor::zeros(tr.xhat_attention.shape())
                                      : tr.xhat_attention;
    const Tensor extracted = concat_last(attention_part, tr.xhat_ffn);
    tr.ohat = bp.output_gate ? gate_apply(*bp.output_gate, extracted) : linear_apply(*bp.output_linear, extracted);
    if (o_l.shape() != tr.ohat.shape()) {
        throw ShapeMismatch("output stream " + shape_string(o_l.shape()) + " vs block output " +
                            shape_string(tr.ohat.shape()));
    }
    tr.ostream = combine(cfg.output_sign, tr.ohat, o_l);
    return {tr.next_input, tr.ostream, tr};
}

ForwardResult model_forward(const Minusformer& model, const Tensor& x, bool training, SeededRng& rng) {
    const auto& c = model.config();
    ForwardResult result;
    auto& trace = result.trace;
    trace.embedded = embed_input(model, x);

    Tensor stream = trace.embedded;
    Tensor output = Tensor::zeros({x.dim(0), c.n_variates, c.block_out()});
    trace.blocks.reserve(model.blocks.size());
    for (const auto& bp : model.blocks) {
        BlockStep step = block_forward(bp, c, stream, output, training, rng);
        stream = step.next_input;
        output = step.ostream;
        trace.blocks.push_back(std::move(step.trace));
    }
    if (model.projection) output = linear_apply(*model.projection, output);
    result.prediction = transpose_last2(output);
    trace.prediction = result.prediction;
    return result;
}

Tensor predict(const Minusformer& model, const Tensor& x) {
    NoGradGuard guard;
    SeededRng unused(0);
    return model_forward(model, x, false, unused).prediction;
}

double input_decomposition_check(const Minusformer& model, const Tensor& x) {
    const auto& c = model.config();
    if (c.gate_enabled || c.norm_enabled || c.dropout_rate != 0.0 || c.delta != 1 || c.input_sign != Sign::minus) {
        throw ConfigNotDecomposable(
            "input decomposition needs gate off, norm off, dropout 0, delta 1 and a minus input sign");
    }
    NoGradGuard guard;
    SeededRng unused(0);
    const auto fwd = model_forward(model, x, false, unused);
    const auto& tr = fwd.trace;
    std::vector<double> rest(tr.embedded.values().begin(), tr.embedded.values().end());
    for (const auto& b : tr.blocks) {
        const auto a = b.xhat_attention.values();
        const auto f = b.xhat_ffn.values();
        for (std::size_t i = 0; i < rest.size(); ++i) rest[i] -= a[i] + f[i];
    }
    const auto last = tr.blocks.back().next_input.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < rest.size(); ++i) worst = std::max(worst, std::abs(rest[i] - last[i]));
    return worst;
}

std::vector<BlockOutputRow> export_trace(const ForwardTrace& trace, const ScalerStats* scaler, std::size_t batch) {
    std::vector<BlockOutputRow> rows;
    if (trace.blocks.empty()) return rows;
    const auto& shape = trace.blocks.front().ohat.shape();  // [B, D, H]
    const std::size_t nb = shape[0], nd = shape[1], nh = shape[2];
    if (batch >= nb) throw ShapeMismatch("batch index " + std::to_string(batch) + " out of " + std::to_string(nb));
    if (scaler && scaler->variates() != nd) {
        throw ShapeMismatch("scaler has " + std::to_string(scaler->variates()) + " variates, trace has " +
                            std::to_string(nd));
    }
    const std::size_t nblocks = trace.blocks.size();
    rows.reserve(2 * nblocks * nd * nh);
    for (std::size_t l = 0; l < nblocks; ++l) {
        const auto ohat = trace.blocks[l].ohat.values();
        const auto cum = trace.blocks[l].ostream.values();
        const bool carries_mean = l + 1 == nblocks;
        for (std::size_t d = 0; d < nd; ++d) {
            const double s = scaler ? scaler->std[d] : 1.0;
            const double m = scaler ? scaler->mean[d] : 0.0;
            for (std::size_t h = 0; h < nh; ++h) {
                const std::size_t i = (batch * nd + d) * nh + h;
                rows.push_back({l + 1, "ohat", d, h, ohat[i] * s + (carries_mean ? m : 0.0)});
                rows.push_back({l + 1, "cumulative", d, h, cum[i] * s + m});
            }
        }
    }
    return rows;
}

void write_block_outputs_csv(std::ostream& os, const std::vector<BlockOutputRow>& rows) {
    os << "block,kind,variate,step,value\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        os << r.block << ',' << r.kind << ',' << r.variate << ',' << r.step << ',' << buf << '\n';
    }
}

void write_attention_csv(std::ostream& os, const ForwardTrace& trace, std::size_t batch) {
    os << "block,head,query,key,weight\n";
    char buf[64];
    for (std::size_t l = 0; l < trace.blocks.size(); ++l) {
        const Tensor& w = trace.blocks[l].attention_weights;  // [B, heads, T, T]
        if (!w.defined()) continue;
        const std::size_t heads = w.dim(1), t = w.dim(2);
        const auto v = w.values();
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t q = 0; q < t; ++q)
                for (std::size_t k = 0; k < t; ++k) {
                    std::snprintf(buf, sizeof buf, "%.17g", v[((batch * heads + h) * t + q) * t + k]);
                    os << l + 1 << ',' << h << ',' << q << ',' << k << ',' << buf << '\n';
                }
    }
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {
constexpr const char* kCheckpointMagic = "minusformer-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const Minusformer& model, std::ostream& os) {
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    for (const auto& [k, v] : model.config().to_key_values()) os << k << '=' << v << '\n';
    os << "end-config\n";
    char buf[64];
    for (const auto& [name, t] : model.parameters()) {
        os << "param " << name << ' ' << t.rank();
        for (auto d : t.shape()) os << ' ' << d;
        os << '\n';
        const auto v = t.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", v[i]);
            os << buf << (i + 1 == v.size() ? '\n' : ' ');
        }
    }
    os << "end\n";
}

Minusformer load_checkpoint(std::istream& is) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kCheckpointMagic || version != kCheckpointVersion) {
        throw CheckpointError("not a version-1 checkpoint");
    }
    std::string line;
    std::getline(is, line);
    MinusformerConfig cfg;
    while (std::getline(is, line) && line != "end-config") {
        const auto eq = line.find('=');
        if (eq == std::string::npos || !cfg.set(line.substr(0, eq), line.substr(eq + 1))) {
            throw CheckpointError("bad config line '" + line + "'");
        }
    }
    Minusformer model(cfg);
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : model.parameters()) by_name.emplace(name, t);

    std::size_t loaded = 0;
    std::string word;
    while (is >> word && word != "end") {
        if (word != "param") throw CheckpointError("expected 'param', got '" + word + "'");
        std::string name;
        std::size_t rank = 0;
        is >> name >> rank;
        Shape shape(rank);
        for (auto& d : shape) is >> d;
        auto it = by_name.find(name);
        if (!is || it == by_name.end()) throw CheckpointError("unknown parameter '" + name + "'");
        if (it->second.shape() != shape) {
            throw CheckpointError(name + ": stored shape " + shape_string(shape) + " vs model " +
                                  shape_string(it->second.shape()));
        }
        auto dst = it->second.mutable_values();
        for (auto& v : dst) {
            std::string tok;
            is >> tok;
            char* end = nullptr;
            v = std::strtod(tok.c_str(), &end);
            if (tok.empty() || end != tok.c_str() + tok.size()) throw CheckpointError(name + ": bad value '" + tok + "'");
        }
        ++loaded;
    }
    if (word != "end" || loaded != by_name.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(loaded) + " of " + std::to_string(by_name.size()) +
                              " parameters");
    }
    return model;
}

void save_checkpoint(const Minusformer& model, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw CheckpointError("cannot write " + path);
    save_checkpoint(model, os);
}

Minusformer load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw CheckpointError("cannot read " + path);
    return load_checkpoint(is);
}

}  // namespace minusformer

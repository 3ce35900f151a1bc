#include "minusformer/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "minusformer/errors.hpp"

namespace minusformer {

std::size_t shape_numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

NodePtr make_node(Shape shape, std::vector<double> value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

void check_finite([[maybe_unused]] const std::vector<double>& v,
                  [[maybe_unused]] const char* op) {
#ifndef NDEBUG
    for (double x : v) {
        assert(std::isfinite(x) && op);
    }
#endif
}

// Output node of an op. Records parents and the backward closure only when
// some parent needs a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn, const char* op) {
    check_finite(value, op);
    bool needs = false;
    if (t_grad_enabled) {
        for (const auto& p : parents) needs = needs || p->requires_grad;
    }
    auto n = make_node(std::move(shape), std::move(value), needs);
    if (needs) {
        n->parents = std::move(parents);
        n->backward = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

const NodePtr& need(const Tensor& t, const char* op) {
    if (!t.defined()) throw ShapeMismatch(std::string(op) + ": undefined tensor");
    return t.node();
}

// a: full shape; b: same shape or trailing suffix. Returns repeat count.
std::size_t suffix_repeat(const Shape& a, const Shape& b, const char* op) {
    bool ok = b.size() <= a.size();
    if (ok) {
        for (std::size_t i = 0; i < b.size(); ++i) {
            ok = ok && a[a.size() - b.size() + i] == b[i];
        }
    }
    if (!ok) {
        throw ShapeMismatch(std::string(op) + ": shapes " + shape_string(a) + " and " +
                            shape_string(b) + " are incompatible");
    }
    return shape_numel(a) / std::max<std::size_t>(1, shape_numel(b));
}

enum class BinaryKind { add, sub, mul };

Tensor binary(BinaryKind kind, const Tensor& ta, const Tensor& tb, const char* op) {
    const auto& a = need(ta, op);
    const auto& b = need(tb, op);
    const std::size_t reps = suffix_repeat(a->shape, b->shape, op);
    const std::size_t nb = b->value.size();
    std::vector<double> out(a->value.size());
    for (std::size_t r = 0; r < reps; ++r) {
        const double* av = a->value.data() + r * nb;
        const double* bv = b->value.data();
        double* ov = out.data() + r * nb;
        switch (kind) {
            case BinaryKind::add:
                for (std::size_t i = 0; i < nb; ++i) ov[i] = av[i] + bv[i];
                break;
            case BinaryKind::sub:
                for (std::size_t i = 0; i < nb; ++i) ov[i] = av[i] - bv[i];
                break;
            case BinaryKind::mul:
                for (std::size_t i = 0; i < nb; ++i) ov[i] = av[i] * bv[i];
                break;
        }
    }
    return make_result(
        a->shape, std::move(out), {a, b},
        [kind, reps, nb](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            const double* g = self.grad.data();
            if (pa.requires_grad) {
                auto& ga = pa.ensure_grad();
                if (kind == BinaryKind::mul) {
                    for (std::size_t r = 0; r < reps; ++r)
                        for (std::size_t i = 0; i < nb; ++i)
                            ga[r * nb + i] += g[r * nb + i] * pb.value[i];
                } else {
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                }
            }
            if (pb.requires_grad) {
                auto& gb = pb.ensure_grad();
                for (std::size_t r = 0; r < reps; ++r) {
                    for (std::size_t i = 0; i < nb; ++i) {
                        const double gi = g[r * nb + i];
                        switch (kind) {
                            case BinaryKind::add: gb[i] += gi; break;
                            case BinaryKind::sub: gb[i] -= gi; break;
                            case BinaryKind::mul: gb[i] += gi * pa.value[r * nb + i]; break;
                        }
                    }
                }
            }
        },
        op);
}

// Pointwise unary op with derivative expressed from input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& tx, F f, D dfdx, const char* op) {
    const auto& x = need(tx, op);
    std::vector<double> out(x->value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x->value[i]);
    return make_result(
        x->shape, std::move(out), {x},
        [dfdx](Node& self) {
            Node& px = *self.parents[0];
            auto& gx = px.ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += self.grad[i] * dfdx(px.value[i], self.value[i]);
            }
        },
        op);
}

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

// dA[m,k] += dC[m,n] B[k,n]^T
void gemm_nt(const double* dC, const double* B, double* dA, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* g = dC + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* b = B + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[j] * b[j];
            dA[i * k + p] += s;
        }
    }
}

// dB[k,n] += A[m,k]^T dC[m,n]
void gemm_tn(const double* A, const double* dC, double* dB, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* g = dC + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            double* b = dB + p * n;
            for (std::size_t j = 0; j < n; ++j) b[j] += a * g[j];
        }
    }
}

std::size_t normalize_axis(int axis, std::size_t rank) {
    const long r = static_cast<long>(rank);
    const long a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw AxisOutOfRange("axis " + std::to_string(axis) + " for rank " +
                             std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeMismatch("shape " + shape_string(shape) + " holds " +
                            std::to_string(shape_numel(shape)) + " values, got " +
                            std::to_string(values.size()));
    }
    node_ = make_node(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, SeededRng& rng, bool requires_grad) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }

std::size_t Tensor::dim(int axis) const { return shape()[normalize_axis(axis, rank())]; }

std::span<const double> Tensor::values() const { return need(*this, "values")->value; }
std::span<double> Tensor::mutable_values() { return need(*this, "values")->value; }

double Tensor::item() const {
    const auto v = values();
    if (v.size() != 1) throw NotScalar("item() on tensor of shape " + shape_string(shape()));
    return v[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeMismatch("index rank does not match " + shape_string(s));
    std::size_t flat = 0;
    std::size_t i = 0;
    for (auto idx : index) {
        if (idx >= s[i]) throw ShapeMismatch("index out of bounds for " + shape_string(s));
        flat = flat * s[i] + idx;
        ++i;
    }
    return node_->value[flat];
}

bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }
void Tensor::set_requires_grad(bool flag) { need(*this, "requires_grad")->requires_grad = flag; }

std::span<const double> Tensor::grad() const { return need(*this, "grad")->ensure_grad(); }
std::span<double> Tensor::mutable_grad() { return need(*this, "grad")->ensure_grad(); }

void Tensor::zero_grad() {
    auto& n = need(*this, "grad");
    n->grad.assign(n->value.size(), 0.0);
}

std::uint64_t Tensor::node_id() const { return need(*this, "node_id")->id; }

Tensor Tensor::detach() const {
    const auto& n = need(*this, "detach");
    return Tensor(n->shape, n->value, false);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() noexcept { return t_grad_enabled; }

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    const auto& a = need(ta, "matmul");
    const auto& b = need(tb, "matmul");
    const Shape& sa = a->shape;
    const Shape& sb = b->shape;
    auto mismatch = [&] {
        return ShapeMismatch("matmul: " + shape_string(sa) + " x " + shape_string(sb));
    };
    if (sa.size() < 2 || sb.size() < 2) throw mismatch();
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa.back();
    const std::size_t n = sb.back();
    if (sb[sb.size() - 2] != k) throw mismatch();

    const std::size_t ba = sa.size() - 2;
    const std::size_t bb = sb.size() - 2;
    const std::size_t nbatch_axes = std::max(ba, bb);
    Shape batch(nbatch_axes);
    for (std::size_t i = 0; i < nbatch_axes; ++i) {
        const std::size_t da = i + ba >= nbatch_axes ? sa[i + ba - nbatch_axes] : 1;
        const std::size_t db = i + bb >= nbatch_axes ? sb[i + bb - nbatch_axes] : 1;
        if (da != db && da != 1 && db != 1) throw mismatch();
        batch[i] = std::max(da, db);
    }
    const std::size_t nbatch = shape_numel(batch);
    const std::size_t batch_b = shape_numel(Shape(sb.begin(), sb.end() - 2));

    // Per-output-batch offsets into a and b.
    std::vector<std::size_t> off_a(nbatch), off_b(nbatch);
    for (std::size_t flat = 0; flat < nbatch; ++flat) {
        std::size_t rem = flat;
        std::size_t ia = 0, ib = 0, stride_a = 1, stride_b = 1;
        for (std::size_t ax = nbatch_axes; ax-- > 0;) {
            const std::size_t idx = rem % batch[ax];
            rem /= batch[ax];
            const std::size_t da = ax + ba >= nbatch_axes ? sa[ax + ba - nbatch_axes] : 1;
            const std::size_t db = ax + bb >= nbatch_axes ? sb[ax + bb - nbatch_axes] : 1;
            if (da != 1) ia += idx * stride_a;
            if (db != 1) ib += idx * stride_b;
            stride_a *= da;
            stride_b *= db;
        }
        off_a[flat] = ia * m * k;
        off_b[flat] = ib * k * n;
    }

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(nbatch * m * n, 0.0);

    // A shared right operand with a contiguous left batch folds into one gemm.
    const bool fold = batch_b == 1 && shape_numel(Shape(sa.begin(), sa.end() - 2)) == nbatch;
    if (fold) {
        gemm_nn(a->value.data(), b->value.data(), out.data(), nbatch * m, k, n);
    } else {
        for (std::size_t t = 0; t < nbatch; ++t) {
            gemm_nn(a->value.data() + off_a[t], b->value.data() + off_b[t],
                    out.data() + t * m * n, m, k, n);
        }
    }

    return make_result(
        std::move(out_shape), std::move(out), {a, b},
        [m, k, n, nbatch, fold, off_a = std::move(off_a), off_b = std::move(off_b)](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            const double* g = self.grad.data();
            if (pa.requires_grad) {
                auto& ga = pa.ensure_grad();
                if (fold) {
                    gemm_nt(g, pb.value.data(), ga.data(), nbatch * m, k, n);
                } else {
                    for (std::size_t t = 0; t < nbatch; ++t)
                        gemm_nt(g + t * m * n, pb.value.data() + off_b[t], ga.data() + off_a[t], m, k, n);
                }
            }
            if (pb.requires_grad) {
                auto& gb = pb.ensure_grad();
                if (fold) {
                    gemm_tn(pa.value.data(), g, gb.data(), nbatch * m, k, n);
                } else {
                    for (std::size_t t = 0; t < nbatch; ++t)
                        gemm_tn(pa.value.data() + off_a[t], g + t * m * n, gb.data() + off_b[t], m, k, n);
                }
            }
        },
        "matmul");
}

// ---------------------------------------------------------------------------
// pointwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b, "mul"); }

Tensor scale(const Tensor& x, double factor) {
    return unary(
        x, [factor](double v) { return factor * v; },
        [factor](double, double) { return factor; }, "scale");
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor square(const Tensor& x) {
    return unary(
        x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; }, "square");
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor relu(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0 ? v : 0.0; },
        [](double v, double) { return v > 0 ? 1.0 : 0.0; }, "relu");
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [inv_sqrt_2pi](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        },
        "gelu");
}

// ---------------------------------------------------------------------------
// softmax

Tensor softmax_last(const Tensor& tx) {
    const auto& x = need(tx, "softmax_last");
    if (x->shape.empty() || x->shape.back() == 0) throw ShapeMismatch("softmax_last on " + shape_string(x->shape));
    const std::size_t w = x->shape.back();
    const std::size_t rows = x->value.size() / w;
    std::vector<double> out(x->value.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x->value.data() + r * w;
        double* o = out.data() + r * w;
        const double mx = *std::max_element(in, in + w);
        double s = 0.0;
        for (std::size_t i = 0; i < w; ++i) {
            o[i] = std::exp(in[i] - mx);
            s += o[i];
        }
        for (std::size_t i = 0; i < w; ++i) o[i] /= s;
    }
    return make_result(
        x->shape, std::move(out), {x},
        [w, rows](Node& self) {
            auto& gx = self.parents[0]->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self.value.data() + r * w;
                const double* g = self.grad.data() + r * w;
                double dot = 0.0;
                for (std::size_t i = 0; i < w; ++i) dot += g[i] * y[i];
                for (std::size_t i = 0; i < w; ++i) gx[r * w + i] += y[i] * (g[i] - dot);
            }
        },
        "softmax_last");
}

// ---------------------------------------------------------------------------
// reductions

Tensor reduce(ReduceKind kind, const Tensor& tx, int axis) {
    const auto& x = need(tx, "reduce");
    const std::size_t ax = normalize_axis(axis, x->shape.size());
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= x->shape[i];
    for (std::size_t i = ax + 1; i < x->shape.size(); ++i) inner *= x->shape[i];
    const std::size_t len = x->shape[ax];

    Shape out_shape = x->shape;
    out_shape.erase(out_shape.begin() + static_cast<long>(ax));
    std::vector<double> mean(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i)
                mean[o * inner + i] += x->value[(o * len + l) * inner + i];
    for (auto& v : mean) v /= static_cast<double>(len);

    if (kind == ReduceKind::mean) {
        return make_result(
            std::move(out_shape), std::move(mean), {x},
            [outer, inner, len](Node& self) {
                auto& gx = self.parents[0]->ensure_grad();
                const double f = 1.0 / static_cast<double>(len);
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t l = 0; l < len; ++l)
                        for (std::size_t i = 0; i < inner; ++i)
                            gx[(o * len + l) * inner + i] += self.grad[o * inner + i] * f;
            },
            "reduce_mean");
    }

    std::vector<double> var(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i) {
                const double d = x->value[(o * len + l) * inner + i] - mean[o * inner + i];
                var[o * inner + i] += d * d;
            }
    for (auto& v : var) v /= static_cast<double>(len);
    return make_result(
        std::move(out_shape), std::move(var), {x},
        [outer, inner, len, mean = std::move(mean)](Node& self) {
            Node& px = *self.parents[0];
            auto& gx = px.ensure_grad();
            const double f = 2.0 / static_cast<double>(len);
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t l = 0; l < len; ++l)
                    for (std::size_t i = 0; i < inner; ++i) {
                        const std::size_t idx = (o * len + l) * inner + i;
                        gx[idx] += self.grad[o * inner + i] * f * (px.value[idx] - mean[o * inner + i]);
                    }
        },
        "reduce_var");
}

Tensor sum_all(const Tensor& tx) {
    const auto& x = need(tx, "sum_all");
    double s = 0.0;
    for (double v : x->value) s += v;
    return make_result(
        {}, {s}, {x},
        [](Node& self) {
            auto& gx = self.parents[0]->ensure_grad();
            for (auto& g : gx) g += self.grad[0];
        },
        "sum_all");
}

Tensor mean_all(const Tensor& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// layout

Tensor reshape(const Tensor& tx, Shape shape) {
    const auto& x = need(tx, "reshape");
    if (shape_numel(shape) != x->value.size()) {
        throw ShapeMismatch("reshape " + shape_string(x->shape) + " -> " + shape_string(shape));
    }
    return make_result(
        std::move(shape), x->value, {x},
        [](Node& self) {
            auto& gx = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
        },
        "reshape");
}

Tensor permute(const Tensor& tx, const std::vector<std::size_t>& axes) {
    const auto& x = need(tx, "permute");
    const std::size_t r = x->shape.size();
    if (axes.size() != r) throw AxisOutOfRange("permute: expected " + std::to_string(r) + " axes");
    std::vector<bool> seen(r, false);
    for (auto a : axes) {
        if (a >= r || seen[a]) throw AxisOutOfRange("permute: invalid axis list");
        seen[a] = true;
    }
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x->shape[i];
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = x->shape[axes[i]];

    // src[i] = input offset for output element i
    const std::size_t n = x->value.size();
    std::vector<std::size_t> src(n);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
        src[flat] = off;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x->value[src[i]];
    return make_result(
        std::move(out_shape), std::move(out), {x},
        [src = std::move(src)](Node& self) {
            auto& gx = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += self.grad[i];
        },
        "permute");
}

Tensor transpose_last2(const Tensor& x) {
    const std::size_t r = x.rank();
    if (r < 2) throw AxisOutOfRange("transpose_last2 on rank " + std::to_string(r));
    std::vector<std::size_t> axes(r);
    for (std::size_t i = 0; i < r; ++i) axes[i] = i;
    std::swap(axes[r - 1], axes[r - 2]);
    return permute(x, axes);
}

Tensor concat_last(const Tensor& ta, const Tensor& tb) {
    const auto& a = need(ta, "concat_last");
    const auto& b = need(tb, "concat_last");
    const bool ok = !a->shape.empty() && a->shape.size() == b->shape.size() &&
                    std::equal(a->shape.begin(), a->shape.end() - 1, b->shape.begin());
    if (!ok) {
        throw ShapeMismatch("concat_last: " + shape_string(a->shape) + " and " + shape_string(b->shape));
    }
    const std::size_t wa = a->shape.back();
    const std::size_t wb = b->shape.back();
    const std::size_t rows = wa ? a->value.size() / wa : b->value.size() / wb;
    Shape out_shape = a->shape;
    out_shape.back() = wa + wb;
    std::vector<double> out(rows * (wa + wb));
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a->value.data() + r * wa, wa, out.data() + r * (wa + wb));
        std::copy_n(b->value.data() + r * wb, wb, out.data() + r * (wa + wb) + wa);
    }
    return make_result(
        std::move(out_shape), std::move(out), {a, b},
        [rows, wa, wb](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            const std::size_t w = wa + wb;
            if (pa.requires_grad) {
                auto& ga = pa.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < wa; ++i) ga[r * wa + i] += self.grad[r * w + i];
            }
            if (pb.requires_grad) {
                auto& gb = pb.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < wb; ++i) gb[r * wb + i] += self.grad[r * w + wa + i];
            }
        },
        "concat_last");
}

// ---------------------------------------------------------------------------
// layer norm

Tensor layer_norm(const Tensor& tx, const Tensor& tgamma, const Tensor& tbeta, double eps) {
    const auto& x = need(tx, "layer_norm");
    const auto& gamma = need(tgamma, "layer_norm");
    const auto& beta = need(tbeta, "layer_norm");
    if (x->shape.empty() || gamma->shape != Shape{x->shape.back()} || beta->shape != gamma->shape) {
        throw ShapeMismatch("layer_norm: input " + shape_string(x->shape) + ", gamma " +
                            shape_string(gamma->shape) + ", beta " + shape_string(beta->shape));
    }
    const std::size_t w = x->shape.back();
    const std::size_t rows = x->value.size() / w;
    std::vector<double> xhat(x->value.size());
    std::vector<double> rstd(rows);
    std::vector<double> out(x->value.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x->value.data() + r * w;
        double mu = 0.0;
        for (std::size_t i = 0; i < w; ++i) mu += in[i];
        mu /= static_cast<double>(w);
        double var = 0.0;
        for (std::size_t i = 0; i < w; ++i) var += (in[i] - mu) * (in[i] - mu);
        var /= static_cast<double>(w);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < w; ++i) {
            const double h = (in[i] - mu) * rstd[r];
            xhat[r * w + i] = h;
            out[r * w + i] = h * gamma->value[i] + beta->value[i];
        }
    }
    return make_result(
        x->shape, std::move(out), {x, gamma, beta},
        [w, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
            Node& px = *self.parents[0];
            Node& pg = *self.parents[1];
            Node& pbeta = *self.parents[2];
            const double* g = self.grad.data();
            if (pg.requires_grad) {
                auto& gg = pg.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < w; ++i) gg[i] += g[r * w + i] * xhat[r * w + i];
            }
            if (pbeta.requires_grad) {
                auto& gb = pbeta.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < w; ++i) gb[i] += g[r * w + i];
            }
            if (px.requires_grad) {
                auto& gx = px.ensure_grad();
                const double inv_w = 1.0 / static_cast<double>(w);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_d = 0.0, mean_dh = 0.0;
                    for (std::size_t i = 0; i < w; ++i) {
                        const double d = g[r * w + i] * pg.value[i];
                        mean_d += d;
                        mean_dh += d * xhat[r * w + i];
                    }
                    mean_d *= inv_w;
                    mean_dh *= inv_w;
                    for (std::size_t i = 0; i < w; ++i) {
                        const double d = g[r * w + i] * pg.value[i];
                        gx[r * w + i] += rstd[r] * (d - mean_d - xhat[r * w + i] * mean_dh);
                    }
                }
            }
        },
        "layer_norm");
}

// ---------------------------------------------------------------------------
// backward

void backward(const Tensor& loss) {
    const auto& root = need(loss, "backward");
    if (root->value.size() != 1) throw NotScalar("backward from tensor of shape " + shape_string(root->shape));
    if (!root->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

    for (Node* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
    }
    root->ensure_grad()[0] += 1.0;
    for (Node* n : order) {
        if (n->backward) n->backward(*n);
    }
}

}  // namespace minusformer

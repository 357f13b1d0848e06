#include "vbs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace vbs::ops {

namespace debug {
bool flip_layer_norm_grad = false;
}

namespace {

bool any_requires_grad(const std::vector<TensorPtr>& ts) {
    for (const auto& t : ts)
        if (t && t->requires_grad) return true;
    return false;
}

TensorPtr make_node(Shape shape, std::vector<double> vals, std::vector<TensorPtr> parents,
                    const char* name, std::function<void(Tensor&)> bw) {
    auto out = std::make_shared<Tensor>(std::move(shape), std::move(vals), false);
    out->op_name = name;
    if (any_requires_grad(parents)) {
        out->requires_grad = true;
        out->parents = std::move(parents);
        out->backward_fn = std::move(bw);
    }
    return out;
}

void check_rank(const TensorPtr& t, std::size_t rank, const char* op) {
    if (t->shape.size() != rank)
        throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) +
                          " tensor, got shape " + shape_str(t->shape));
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    check_rank(a, 2, "matmul");
    check_rank(b, 2, "matmul");
    const std::int64_t m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
    if (k != k2)
        throw ConfigError("matmul: inner extents disagree, " + shape_str(a->shape) + " vs " +
                          shape_str(b->shape));
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    const double* av = a->values.data();
    const double* bv = b->values.data();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv + p * n;
            double* orow = out.data() + i * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    return make_node({m, n}, std::move(out), {a, b}, "matmul", [ap, bp, m, k, n](Tensor& self) {
        const double* g = self.grad.data();
        if (ap->requires_grad) {
            auto& ga = ap->ensure_grad();
            // dA = dC * B^T
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = g + i * n;
                    const double* brow = bp->values.data() + p * n;
                    for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
        }
        if (bp->requires_grad) {
            auto& gb = bp->ensure_grad();
            // dB = A^T * dC
            for (std::int64_t p = 0; p < k; ++p)
                for (std::int64_t i = 0; i < m; ++i) {
                    const double aip = ap->values[i * k + p];
                    const double* grow = g + i * n;
                    double* gbrow = gb.data() + p * n;
                    for (std::int64_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
        }
    });
}

TensorPtr transpose2d(const TensorPtr& t) {
    check_rank(t, 2, "transpose2d");
    const std::int64_t r = t->shape[0], c = t->shape[1];
    std::vector<double> out(t->values.size());
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = t->values[i * c + j];
    Tensor* tp = t.get();
    return make_node({c, r}, std::move(out), {t}, "transpose2d", [tp, r, c](Tensor& self) {
        auto& g = tp->ensure_grad();
        for (std::int64_t j = 0; j < c; ++j)
            for (std::int64_t i = 0; i < r; ++i) g[i * c + j] += self.grad[j * r + i];
    });
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw ConfigError("add: shapes differ, " + shape_str(a->shape) + " vs " +
                          shape_str(b->shape));
    std::vector<double> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] + b->values[i];
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    return make_node(a->shape, std::move(out), {a, b}, "add", [ap, bp](Tensor& self) {
        if (ap->requires_grad) {
            auto& g = ap->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (bp->requires_grad) {
            auto& g = bp->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& v) {
    check_rank(a, 2, "add_rowvec");
    check_rank(v, 1, "add_rowvec");
    const std::int64_t r = a->shape[0], c = a->shape[1];
    if (v->shape[0] != c)
        throw ConfigError("add_rowvec: vector extent " + shape_str(v->shape) +
                          " does not match columns of " + shape_str(a->shape));
    std::vector<double> out(a->values.size());
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = a->values[i * c + j] + v->values[j];
    Tensor* ap = a.get();
    Tensor* vp = v.get();
    return make_node(a->shape, std::move(out), {a, v}, "add_rowvec", [ap, vp, r, c](Tensor& self) {
        if (ap->requires_grad) {
            auto& g = ap->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (vp->requires_grad) {
            auto& g = vp->ensure_grad();
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
        }
    });
}

TensorPtr add_colvec(const TensorPtr& a, const TensorPtr& v) {
    check_rank(a, 2, "add_colvec");
    check_rank(v, 1, "add_colvec");
    const std::int64_t r = a->shape[0], c = a->shape[1];
    if (v->shape[0] != r)
        throw ConfigError("add_colvec: vector extent " + shape_str(v->shape) +
                          " does not match rows of " + shape_str(a->shape));
    std::vector<double> out(a->values.size());
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = a->values[i * c + j] + v->values[i];
    Tensor* ap = a.get();
    Tensor* vp = v.get();
    return make_node(a->shape, std::move(out), {a, v}, "add_colvec", [ap, vp, r, c](Tensor& self) {
        if (ap->requires_grad) {
            auto& g = ap->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (vp->requires_grad) {
            auto& g = vp->ensure_grad();
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < c; ++j) g[i] += self.grad[i * c + j];
        }
    });
}

TensorPtr add_chan_bias(const TensorPtr& a, const TensorPtr& v) {
    check_rank(a, 3, "add_chan_bias");
    check_rank(v, 1, "add_chan_bias");
    const std::int64_t ch = a->shape[0], plane = a->shape[1] * a->shape[2];
    if (v->shape[0] != ch)
        throw ConfigError("add_chan_bias: bias extent " + shape_str(v->shape) +
                          " does not match channels of " + shape_str(a->shape));
    std::vector<double> out(a->values.size());
    for (std::int64_t c = 0; c < ch; ++c)
        for (std::int64_t i = 0; i < plane; ++i)
            out[c * plane + i] = a->values[c * plane + i] + v->values[c];
    Tensor* ap = a.get();
    Tensor* vp = v.get();
    return make_node(a->shape, std::move(out), {a, v}, "add_chan_bias",
                     [ap, vp, ch, plane](Tensor& self) {
                         if (ap->requires_grad) {
                             auto& g = ap->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                         }
                         if (vp->requires_grad) {
                             auto& g = vp->ensure_grad();
                             for (std::int64_t c = 0; c < ch; ++c)
                                 for (std::int64_t i = 0; i < plane; ++i)
                                     g[c] += self.grad[c * plane + i];
                         }
                     });
}

TensorPtr scale(const TensorPtr& t, double s) {
    std::vector<double> out(t->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t->values[i] * s;
    Tensor* tp = t.get();
    return make_node(t->shape, std::move(out), {t}, "scale", [tp, s](Tensor& self) {
        auto& g = tp->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw ConfigError("mul: shapes differ, " + shape_str(a->shape) + " vs " +
                          shape_str(b->shape));
    std::vector<double> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * b->values[i];
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    return make_node(a->shape, std::move(out), {a, b}, "mul", [ap, bp](Tensor& self) {
        if (ap->requires_grad) {
            auto& g = ap->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bp->values[i];
        }
        if (bp->requires_grad) {
            auto& g = bp->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ap->values[i];
        }
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

TensorPtr gelu(const TensorPtr& t) {
    std::vector<double> out(t->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = t->values[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    }
    Tensor* tp = t.get();
    return make_node(t->shape, std::move(out), {t}, "gelu", [tp](Tensor& self) {
        auto& g = tp->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = tp->values[i];
            const double u = kGeluC * (x + kGeluA * x * x * x);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
            g[i] += self.grad[i] * d;
        }
    });
}

TensorPtr sigmoid(const TensorPtr& t) {
    std::vector<double> out(t->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = t->values[i];
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    Tensor* tp = t.get();
    auto saved = out;
    return make_node(t->shape, std::move(out), {t}, "sigmoid",
                     [tp, saved = std::move(saved)](Tensor& self) {
                         auto& g = tp->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                             g[i] += self.grad[i] * saved[i] * (1.0 - saved[i]);
                     });
}

TensorPtr softmax(const TensorPtr& t, int axis) {
    if (axis < 0 || axis >= static_cast<int>(t->shape.size()))
        throw ConfigError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                          shape_str(t->shape));
    const std::int64_t len = t->shape[axis];
    std::int64_t inner = 1, outer = 1;
    for (int i = axis + 1; i < static_cast<int>(t->shape.size()); ++i) inner *= t->shape[i];
    for (int i = 0; i < axis; ++i) outer *= t->shape[i];
    std::vector<double> out(t->values.size());
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            double mx = t->values[base];
            for (std::int64_t j = 1; j < len; ++j)
                mx = std::max(mx, t->values[base + j * inner]);
            double denom = 0.0;
            for (std::int64_t j = 0; j < len; ++j) {
                const double e = std::exp(t->values[base + j * inner] - mx);
                out[base + j * inner] = e;
                denom += e;
            }
            for (std::int64_t j = 0; j < len; ++j) out[base + j * inner] /= denom;
        }
    Tensor* tp = t.get();
    auto saved = out;
    return make_node(t->shape, std::move(out), {t}, "softmax",
                     [tp, saved = std::move(saved), len, inner, outer](Tensor& self) {
                         auto& g = tp->ensure_grad();
                         for (std::int64_t o = 0; o < outer; ++o)
                             for (std::int64_t in = 0; in < inner; ++in) {
                                 const std::int64_t base = o * len * inner + in;
                                 double dot = 0.0;
                                 for (std::int64_t j = 0; j < len; ++j)
                                     dot += self.grad[base + j * inner] * saved[base + j * inner];
                                 for (std::int64_t j = 0; j < len; ++j)
                                     g[base + j * inner] += saved[base + j * inner] *
                                                            (self.grad[base + j * inner] - dot);
                             }
                     });
}

TensorPtr layer_norm(const TensorPtr& t, const TensorPtr& gain, const TensorPtr& bias,
                     double eps) {
    if (t->shape.empty()) throw ConfigError("layer_norm: scalar input");
    if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
    const std::int64_t d = t->shape.back();
    if (gain->shape != Shape{d} || bias->shape != Shape{d})
        throw ConfigError("layer_norm: gain/bias must have extent " + std::to_string(d));
    const std::int64_t rows = t->size() / d;
    std::vector<double> out(t->values.size());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    std::vector<double> norm(t->values.size());  // pre-affine normalized values
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = t->values.data() + r * d;
        double m = 0.0;
        for (std::int64_t j = 0; j < d; ++j) m += x[j];
        m /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (x[j] - m) * (x[j] - m);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        for (std::int64_t j = 0; j < d; ++j) {
            const double n = (x[j] - m) * is;
            norm[r * d + j] = n;
            out[r * d + j] = n * gain->values[j] + bias->values[j];
        }
    }
    Tensor* tp = t.get();
    Tensor* gp = gain.get();
    Tensor* bp = bias.get();
    return make_node(t->shape, std::move(out), {t, gain, bias}, "layer_norm",
                     [tp, gp, bp, rows, d, inv_std = std::move(inv_std),
                      norm = std::move(norm)](Tensor& self) {
                         const double sign = debug::flip_layer_norm_grad ? -1.0 : 1.0;
                         if (gp->requires_grad) {
                             auto& gg = gp->ensure_grad();
                             for (std::int64_t r = 0; r < rows; ++r)
                                 for (std::int64_t j = 0; j < d; ++j)
                                     gg[j] += self.grad[r * d + j] * norm[r * d + j];
                         }
                         if (bp->requires_grad) {
                             auto& gb = bp->ensure_grad();
                             for (std::int64_t r = 0; r < rows; ++r)
                                 for (std::int64_t j = 0; j < d; ++j) gb[j] += self.grad[r * d + j];
                         }
                         if (tp->requires_grad) {
                             auto& gx = tp->ensure_grad();
                             for (std::int64_t r = 0; r < rows; ++r) {
                                 const double is = inv_std[static_cast<std::size_t>(r)];
                                 double sum_dn = 0.0, sum_dnn = 0.0;
                                 for (std::int64_t j = 0; j < d; ++j) {
                                     const double dn = self.grad[r * d + j] * gp->values[j];
                                     sum_dn += dn;
                                     sum_dnn += dn * norm[r * d + j];
                                 }
                                 const double inv_d = 1.0 / static_cast<double>(d);
                                 for (std::int64_t j = 0; j < d; ++j) {
                                     const double dn = self.grad[r * d + j] * gp->values[j];
                                     gx[r * d + j] += sign * is *
                                                      (dn - inv_d * sum_dn -
                                                       norm[r * d + j] * inv_d * sum_dnn);
                                 }
                             }
                         }
                     });
}

TensorPtr reshape(const TensorPtr& t, const Shape& shape) {
    if (shape_size(shape) != t->size())
        throw ConfigError("reshape: element count mismatch, " + shape_str(t->shape) + " to " +
                          shape_str(shape));
    Tensor* tp = t.get();
    return make_node(shape, t->values, {t}, "reshape", [tp](Tensor& self) {
        auto& g = tp->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

namespace {
// Views any tensor as [outer, extent(axis), inner] for axis-wise ops.
void axis_split(const Shape& shape, int axis, std::int64_t& outer, std::int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[i];
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) inner *= shape[i];
}
}  // namespace

TensorPtr slice(const TensorPtr& t, int axis, std::int64_t start, std::int64_t len) {
    if (axis < 0 || axis >= static_cast<int>(t->shape.size()))
        throw ConfigError("slice: axis invalid");
    if (start < 0 || len <= 0 || start + len > t->shape[axis])
        throw ConfigError("slice: range [" + std::to_string(start) + "," +
                          std::to_string(start + len) + ") out of bounds for extent " +
                          std::to_string(t->shape[axis]));
    std::int64_t outer, inner;
    axis_split(t->shape, axis, outer, inner);
    const std::int64_t ext = t->shape[axis];
    Shape oshape = t->shape;
    oshape[axis] = len;
    std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
    for (std::int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * len * inner,
                    t->values.data() + (o * ext + start) * inner,
                    static_cast<std::size_t>(len * inner) * sizeof(double));
    Tensor* tp = t.get();
    return make_node(oshape, std::move(out), {t}, "slice",
                     [tp, outer, inner, ext, start, len](Tensor& self) {
                         auto& g = tp->ensure_grad();
                         for (std::int64_t o = 0; o < outer; ++o)
                             for (std::int64_t j = 0; j < len * inner; ++j)
                                 g[(o * ext + start) * inner + j] += self.grad[o * len * inner + j];
                     });
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
    if (parts.empty()) throw ConfigError("concat: no inputs");
    const Shape& ref = parts[0]->shape;
    if (axis < 0 || axis >= static_cast<int>(ref.size())) throw ConfigError("concat: axis invalid");
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != ref.size()) throw ConfigError("concat: rank mismatch");
        for (int i = 0; i < static_cast<int>(ref.size()); ++i)
            if (i != axis && p->shape[i] != ref[i])
                throw ConfigError("concat: extent mismatch at axis " + std::to_string(i) + ": " +
                                  shape_str(p->shape) + " vs " + shape_str(ref));
        total += p->shape[axis];
    }
    Shape oshape = ref;
    oshape[axis] = total;
    std::int64_t outer, inner;
    axis_split(oshape, axis, outer, inner);
    std::vector<double> out(static_cast<std::size_t>(outer * total * inner));
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t ext = p->shape[axis];
        for (std::int64_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + (o * total + offset) * inner,
                        p->values.data() + o * ext * inner,
                        static_cast<std::size_t>(ext * inner) * sizeof(double));
        offset += ext;
    }
    std::vector<TensorPtr> parents = parts;
    std::vector<std::int64_t> exts;
    for (const auto& p : parts) exts.push_back(p->shape[axis]);
    return make_node(oshape, std::move(out), std::move(parents), "concat",
                     [exts = std::move(exts), outer, inner, total](Tensor& self) {
                         std::int64_t offset = 0;
                         for (std::size_t pi = 0; pi < exts.size(); ++pi) {
                             Tensor* p = self.parents[pi].get();
                             const std::int64_t ext = exts[pi];
                             if (p->requires_grad) {
                                 auto& g = p->ensure_grad();
                                 for (std::int64_t o = 0; o < outer; ++o)
                                     for (std::int64_t j = 0; j < ext * inner; ++j)
                                         g[o * ext * inner + j] +=
                                             self.grad[(o * total + offset) * inner + j];
                             }
                             offset += ext;
                         }
                     });
}

TensorPtr repeat_row(const TensorPtr& v, std::int64_t rows) {
    check_rank(v, 2, "repeat_row");
    if (v->shape[0] != 1) throw ConfigError("repeat_row: input must be a single row");
    const std::int64_t c = v->shape[1];
    std::vector<double> out(static_cast<std::size_t>(rows * c));
    for (std::int64_t i = 0; i < rows; ++i)
        std::memcpy(out.data() + i * c, v->values.data(), static_cast<std::size_t>(c) * sizeof(double));
    Tensor* vp = v.get();
    return make_node({rows, c}, std::move(out), {v}, "repeat_row", [vp, rows, c](Tensor& self) {
        auto& g = vp->ensure_grad();
        for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    });
}

TensorPtr sum(const TensorPtr& t) {
    double acc = 0.0;
    for (double x : t->values) acc += x;
    Tensor* tp = t.get();
    return make_node({1}, {acc}, {t}, "sum", [tp](Tensor& self) {
        auto& g = tp->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    });
}

TensorPtr mean(const TensorPtr& t) {
    double acc = 0.0;
    for (double x : t->values) acc += x;
    const double inv = 1.0 / static_cast<double>(t->size());
    Tensor* tp = t.get();
    return make_node({1}, {acc * inv}, {t}, "mean", [tp, inv](Tensor& self) {
        auto& g = tp->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv;
    });
}

TensorPtr conv2d(const TensorPtr& input, const TensorPtr& kernels, const TensorPtr& bias,
                 int stride, int pad) {
    check_rank(input, 3, "conv2d");
    check_rank(kernels, 4, "conv2d");
    const std::int64_t cin = input->shape[0], h = input->shape[1], w = input->shape[2];
    const std::int64_t cout = kernels->shape[0], kh = kernels->shape[2], kw = kernels->shape[3];
    if (kernels->shape[1] != cin)
        throw ConfigError("conv2d: kernel input channels " + shape_str(kernels->shape) +
                          " do not match input " + shape_str(input->shape));
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: bad stride/pad");
    if (h + 2 * pad < kh || w + 2 * pad < kw)
        throw ConfigError("conv2d: kernel larger than padded input " + shape_str(input->shape));
    const std::int64_t oh = (h + 2 * pad - kh) / stride + 1;  // floor division
    const std::int64_t ow = (w + 2 * pad - kw) / stride + 1;
    // Kernel position outermost so the inner loop is a branch-free span of
    // contiguous output elements; the valid [lo, hi) output range for each
    // (ky, kx) replaces per-element bounds checks.
    const auto ox_range = [&](std::int64_t kx, std::int64_t& lo, std::int64_t& hi) {
        lo = kx < pad ? (pad - kx + stride - 1) / stride : 0;
        const std::int64_t last = w - 1 - kx + pad;
        hi = last < 0 ? 0 : std::min<std::int64_t>(ow, last / stride + 1);
    };
    std::vector<double> out(static_cast<std::size_t>(cout * oh * ow), 0.0);
    for (std::int64_t oc = 0; oc < cout; ++oc) {
        double* oplane = out.data() + oc * oh * ow;
        if (bias) std::fill(oplane, oplane + oh * ow, bias->values[oc]);
        for (std::int64_t ic = 0; ic < cin; ++ic)
            for (std::int64_t ky = 0; ky < kh; ++ky)
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const double kv = kernels->values[((oc * cin + ic) * kh + ky) * kw + kx];
                    std::int64_t lo, hi;
                    ox_range(kx, lo, hi);
                    for (std::int64_t oy = 0; oy < oh; ++oy) {
                        const std::int64_t iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const double* irow = input->values.data() + (ic * h + iy) * w + kx - pad;
                        double* orow = oplane + oy * ow;
                        if (stride == 1)
                            for (std::int64_t ox = lo; ox < hi; ++ox) orow[ox] += kv * irow[ox];
                        else
                            for (std::int64_t ox = lo; ox < hi; ++ox)
                                orow[ox] += kv * irow[ox * stride];
                    }
                }
    }
    Tensor* ip = input.get();
    Tensor* kp = kernels.get();
    Tensor* bp = bias.get();
    std::vector<TensorPtr> parents{input, kernels};
    if (bias) parents.push_back(bias);
    return make_node({cout, oh, ow}, std::move(out), std::move(parents), "conv2d",
                     [ip, kp, bp, cin, h, w, cout, kh, kw, oh, ow, stride, pad](Tensor& self) {
                         double* gb = (bp && bp->requires_grad) ? bp->ensure_grad().data() : nullptr;
                         double* gi = ip->requires_grad ? ip->ensure_grad().data() : nullptr;
                         double* gk = kp->requires_grad ? kp->ensure_grad().data() : nullptr;
                         const auto ox_range = [&](std::int64_t kx, std::int64_t& lo,
                                                   std::int64_t& hi) {
                             lo = kx < pad ? (pad - kx + stride - 1) / stride : 0;
                             const std::int64_t last = w - 1 - kx + pad;
                             hi = last < 0 ? 0 : std::min<std::int64_t>(ow, last / stride + 1);
                         };
                         for (std::int64_t oc = 0; oc < cout; ++oc) {
                             const double* gplane = self.grad.data() + oc * oh * ow;
                             if (gb) {
                                 double acc = 0.0;
                                 for (std::int64_t i = 0; i < oh * ow; ++i) acc += gplane[i];
                                 gb[oc] += acc;
                             }
                             if (!gi && !gk) continue;
                             for (std::int64_t ic = 0; ic < cin; ++ic)
                                 for (std::int64_t ky = 0; ky < kh; ++ky)
                                     for (std::int64_t kx = 0; kx < kw; ++kx) {
                                         const std::int64_t kidx =
                                             ((oc * cin + ic) * kh + ky) * kw + kx;
                                         const double kv = kp->values[kidx];
                                         std::int64_t lo, hi;
                                         ox_range(kx, lo, hi);
                                         double gkacc = 0.0;
                                         for (std::int64_t oy = 0; oy < oh; ++oy) {
                                             const std::int64_t iy = oy * stride + ky - pad;
                                             if (iy < 0 || iy >= h) continue;
                                             const double* grow = gplane + oy * ow;
                                             const std::int64_t base = (ic * h + iy) * w + kx - pad;
                                             if (gi) {
                                                 double* girow = gi + base;
                                                 for (std::int64_t ox = lo; ox < hi; ++ox)
                                                     girow[ox * stride] += grow[ox] * kv;
                                             }
                                             if (gk) {
                                                 const double* irow = ip->values.data() + base;
                                                 for (std::int64_t ox = lo; ox < hi; ++ox)
                                                     gkacc += grow[ox] * irow[ox * stride];
                                             }
                                         }
                                         if (gk) gk[kidx] += gkacc;
                                     }
                         }
                     });
}

TensorPtr conv_transpose2d(const TensorPtr& input, const TensorPtr& kernels, const TensorPtr& bias,
                           int stride) {
    check_rank(input, 3, "conv_transpose2d");
    check_rank(kernels, 4, "conv_transpose2d");
    const std::int64_t cin = input->shape[0], h = input->shape[1], w = input->shape[2];
    const std::int64_t cout = kernels->shape[0], kh = kernels->shape[2], kw = kernels->shape[3];
    if (kernels->shape[1] != cin)
        throw ConfigError("conv_transpose2d: kernel channels mismatch");
    if (stride < 1 || kh != stride || kw != stride)
        throw ConfigError("conv_transpose2d: kernel extent must equal stride");
    const std::int64_t oh = h * stride, ow = w * stride;
    std::vector<double> out(static_cast<std::size_t>(cout * oh * ow), 0.0);
    if (bias)
        for (std::int64_t oc = 0; oc < cout; ++oc)
            std::fill(out.begin() + oc * oh * ow, out.begin() + (oc + 1) * oh * ow,
                      bias->values[oc]);
    for (std::int64_t oc = 0; oc < cout; ++oc)
        for (std::int64_t ic = 0; ic < cin; ++ic)
            for (std::int64_t iy = 0; iy < h; ++iy)
                for (std::int64_t ix = 0; ix < w; ++ix) {
                    const double x = input->values[(ic * h + iy) * w + ix];
                    const double* kk = kernels->values.data() + ((oc * cin + ic) * kh) * kw;
                    for (std::int64_t ky = 0; ky < kh; ++ky)
                        for (std::int64_t kx = 0; kx < kw; ++kx)
                            out[(oc * oh + iy * stride + ky) * ow + ix * stride + kx] +=
                                x * kk[ky * kw + kx];
                }
    Tensor* ip = input.get();
    Tensor* kp = kernels.get();
    Tensor* bp = bias.get();
    std::vector<TensorPtr> parents{input, kernels};
    if (bias) parents.push_back(bias);
    return make_node({cout, oh, ow}, std::move(out), std::move(parents), "conv_transpose2d",
                     [ip, kp, bp, cin, h, w, cout, kh, kw, oh, ow, stride](Tensor& self) {
                         if (bp && bp->requires_grad) {
                             auto& gb = bp->ensure_grad();
                             for (std::int64_t oc = 0; oc < cout; ++oc)
                                 for (std::int64_t i = 0; i < oh * ow; ++i)
                                     gb[oc] += self.grad[oc * oh * ow + i];
                         }
                         double* gi = ip->requires_grad ? ip->ensure_grad().data() : nullptr;
                         double* gk = kp->requires_grad ? kp->ensure_grad().data() : nullptr;
                         for (std::int64_t oc = 0; oc < cout; ++oc)
                             for (std::int64_t ic = 0; ic < cin; ++ic)
                                 for (std::int64_t iy = 0; iy < h; ++iy)
                                     for (std::int64_t ix = 0; ix < w; ++ix) {
                                         const std::int64_t ii = (ic * h + iy) * w + ix;
                                         const double x = ip->values[ii];
                                         const double* kk =
                                             kp->values.data() + ((oc * cin + ic) * kh) * kw;
                                         double* gkk =
                                             gk ? gk + ((oc * cin + ic) * kh) * kw : nullptr;
                                         double acc = 0.0;
                                         for (std::int64_t ky = 0; ky < kh; ++ky)
                                             for (std::int64_t kx = 0; kx < kw; ++kx) {
                                                 const double go =
                                                     self.grad[(oc * oh + iy * stride + ky) * ow +
                                                               ix * stride + kx];
                                                 if (go == 0.0) continue;
                                                 acc += go * kk[ky * kw + kx];
                                                 if (gkk) gkk[ky * kw + kx] += go * x;
                                             }
                                         if (gi) gi[ii] += acc;
                                     }
                     });
}

TensorPtr resample_bilinear(const TensorPtr& feature, const TensorPtr& coords) {
    check_rank(feature, 3, "resample_bilinear");
    check_rank(coords, 3, "resample_bilinear");
    if (coords->shape[2] != 2)
        throw ConfigError("resample_bilinear: coords last extent must be 2, got " +
                          shape_str(coords->shape));
    const std::int64_t c = feature->shape[0], h = feature->shape[1], w = feature->shape[2];
    const std::int64_t oh = coords->shape[0], ow = coords->shape[1];
    std::vector<double> out(static_cast<std::size_t>(c * oh * ow), 0.0);
    // Per output cell: up to four corner taps, each skipped when outside the
    // valid index range (zero padding).
    auto taps = [h, w](double r, double cc, std::int64_t idx[4], double wt[4]) -> int {
        const auto r0 = static_cast<std::int64_t>(std::floor(r));
        const auto c0 = static_cast<std::int64_t>(std::floor(cc));
        const double fr = r - static_cast<double>(r0);
        const double fc = cc - static_cast<double>(c0);
        int n = 0;
        const std::int64_t rr[2] = {r0, r0 + 1};
        const std::int64_t cs[2] = {c0, c0 + 1};
        const double wr[2] = {1.0 - fr, fr};
        const double wc[2] = {1.0 - fc, fc};
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                if (rr[a] < 0 || rr[a] >= h || cs[b] < 0 || cs[b] >= w) continue;
                const double wgt = wr[a] * wc[b];
                if (wgt == 0.0) continue;
                idx[n] = rr[a] * w + cs[b];
                wt[n] = wgt;
                ++n;
            }
        return n;
    };
    for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
            const double r = coords->values[(oy * ow + ox) * 2];
            const double cc = coords->values[(oy * ow + ox) * 2 + 1];
            if (!(r > -2.0 && r < static_cast<double>(h) + 1.0 && cc > -2.0 &&
                  cc < static_cast<double>(w) + 1.0))
                continue;  // far outside, all taps vanish
            std::int64_t idx[4];
            double wt[4];
            const int n = taps(r, cc, idx, wt);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < n; ++k) acc += wt[k] * feature->values[ch * h * w + idx[k]];
                out[(ch * oh + oy) * ow + ox] = acc;
            }
        }
    Tensor* fp = feature.get();
    TensorPtr coords_keep = coords;  // keep coords alive for the backward scatter
    return make_node({c, oh, ow}, std::move(out), {feature}, "resample_bilinear",
                     [fp, coords_keep, c, h, w, oh, ow, taps](Tensor& self) {
                         auto& g = fp->ensure_grad();
                         for (std::int64_t oy = 0; oy < oh; ++oy)
                             for (std::int64_t ox = 0; ox < ow; ++ox) {
                                 const double r = coords_keep->values[(oy * ow + ox) * 2];
                                 const double cc = coords_keep->values[(oy * ow + ox) * 2 + 1];
                                 if (!(r > -2.0 && r < static_cast<double>(h) + 1.0 && cc > -2.0 &&
                                       cc < static_cast<double>(w) + 1.0))
                                     continue;
                                 std::int64_t idx[4];
                                 double wt[4];
                                 const int n = taps(r, cc, idx, wt);
                                 for (std::int64_t ch = 0; ch < c; ++ch) {
                                     const double go = self.grad[(ch * oh + oy) * ow + ox];
                                     if (go == 0.0) continue;
                                     for (int k = 0; k < n; ++k)
                                         g[ch * h * w + idx[k]] += go * wt[k];
                                 }
                             }
                     });
}

TensorPtr image_to_patches(const TensorPtr& image, int patch) {
    check_rank(image, 3, "image_to_patches");
    const std::int64_t c = image->shape[0], h = image->shape[1], w = image->shape[2];
    if (patch <= 0 || h % patch != 0 || w % patch != 0)
        throw ConfigError("image_to_patches: extents " + shape_str(image->shape) +
                          " not divisible by patch " + std::to_string(patch));
    const std::int64_t gh = h / patch, gw = w / patch;
    const std::int64_t np = gh * gw, pd = static_cast<std::int64_t>(patch) * patch * c;
    std::vector<double> out(static_cast<std::size_t>(np * pd));
    for (std::int64_t py = 0; py < gh; ++py)
        for (std::int64_t px = 0; px < gw; ++px) {
            double* row = out.data() + (py * gw + px) * pd;
            std::int64_t k = 0;
            for (std::int64_t ch = 0; ch < c; ++ch)
                for (std::int64_t y = 0; y < patch; ++y)
                    for (std::int64_t x = 0; x < patch; ++x)
                        row[k++] = image->values[(ch * h + py * patch + y) * w + px * patch + x];
        }
    Tensor* ip = image.get();
    return make_node({np, pd}, std::move(out), {image}, "image_to_patches",
                     [ip, c, h, w, patch, gh, gw, pd](Tensor& self) {
                         auto& g = ip->ensure_grad();
                         for (std::int64_t py = 0; py < gh; ++py)
                             for (std::int64_t px = 0; px < gw; ++px) {
                                 const double* row = self.grad.data() + (py * gw + px) * pd;
                                 std::int64_t k = 0;
                                 for (std::int64_t ch = 0; ch < c; ++ch)
                                     for (std::int64_t y = 0; y < patch; ++y)
                                         for (std::int64_t x = 0; x < patch; ++x)
                                             g[(ch * h + py * patch + y) * w + px * patch + x] +=
                                                 row[k++];
                             }
                     });
}

}  // namespace vbs::ops

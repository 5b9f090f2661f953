#include "hyperfuse/ops.hpp"

#include "hyperfuse/error.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>

namespace hyperfuse {

using detail::make_result;
using detail::Node;

namespace {

using GradIn = std::span<std::vector<double>*>;
using GradOut = std::span<const double>;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw Error(ErrorKind::ShapeMismatch, op + ": " + detail);
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        shape_error(op, shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
}

void require_rank(const std::string& op, const Tensor& x, std::size_t rank) {
    if (x.rank() != rank) shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_to_string(x.shape()));
}

const std::vector<double>& parent_data(const Node& self, std::size_t i) { return self.parents[i]->data; }

double sigmoid_scalar(double x) {
    // Split on sign so exp never overflows.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_result("add", a.shape(), std::move(out), {a, b}, [](const Node&, GradOut g, GradIn gin) {
        for (auto* buf : gin)
            if (buf)
                for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return make_result("sub", a.shape(), std::move(out), {a, b}, [](const Node&, GradOut g, GradIn gin) {
        if (gin[0])
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
        if (gin[1])
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return make_result("mul", a.shape(), std::move(out), {a, b}, [](const Node& self, GradOut g, GradIn gin) {
        const auto& av = parent_data(self, 0);
        const auto& bv = parent_data(self, 1);
        if (gin[0])
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * bv[i];
        if (gin[1])
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * av[i];
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
    return make_result("scale", x.shape(), std::move(out), {x}, [factor](const Node&, GradOut g, GradIn gin) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * factor;
    });
}

Tensor mul_scalar(const Tensor& s, const Tensor& x) {
    if (s.numel() != 1) shape_error("mul_scalar", "scalar operand has shape " + shape_to_string(s.shape()));
    const double sv = s[0];
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * x[i];
    return make_result("mul_scalar", x.shape(), std::move(out), {s, x}, [](const Node& self, GradOut g, GradIn gin) {
        const double sv = parent_data(self, 0)[0];
        const auto& xv = parent_data(self, 1);
        if (gin[0]) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
            (*gin[0])[0] += acc;
        }
        if (gin[1])
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * sv;
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x[i]);
    return make_result("sigmoid", x.shape(), std::move(out), {x}, [](const Node& self, GradOut g, GradIn gin) {
        const auto& y = self.data;
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Tensor silu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sigmoid_scalar(x[i]);
    return make_result("silu", x.shape(), std::move(out), {x}, [](const Node& self, GradOut g, GradIn gin) {
        const auto& xv = parent_data(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = sigmoid_scalar(xv[i]);
            (*gin[0])[i] += g[i] * (s + xv[i] * s * (1.0 - s));
        }
    });
}

Tensor activation(ActivationKind kind, const Tensor& x) {
    return kind == ActivationKind::Sigmoid ? sigmoid(x) : silu(x);
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return make_result("sum", {}, {acc}, {x}, [](const Node&, GradOut g, GradIn gin) {
        for (auto& v : *gin[0]) v += g[0];
    });
}

Tensor mean_rows(const Tensor& m) {
    require_rank("mean_rows", m, 2);
    const std::size_t n = m.dim(0), d = m.dim(1);
    if (n == 0) throw Error(ErrorKind::EmptyNodeSet, "mean over zero rows");
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) out[k] += m[i * d + k];
    for (auto& v : out) v /= static_cast<double>(n);
    return make_result("mean_rows", {d}, std::move(out), {m}, [n, d](const Node&, GradOut g, GradIn gin) {
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) (*gin[0])[i * d + k] += g[k] * inv;
    });
}

// ---- matrices --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
    if (b.dim(0) != q) shape_error("matmul", shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
    std::vector<double> out(p * r);
    const double* av = a.data().data();
    const double* bv = b.data().data();
    detail::parallel_for(p, q * r, [&](std::size_t i) {
        for (std::size_t k = 0; k < r; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < q; ++j) acc += av[i * q + j] * bv[j * r + k];
            out[i * r + k] = acc;
        }
    });
    return make_result("matmul", {p, r}, std::move(out), {a, b}, [p, q, r](const Node& self, GradOut g, GradIn gin) {
        const auto& av = parent_data(self, 0);
        const auto& bv = parent_data(self, 1);
        if (gin[0]) {
            auto& ga = *gin[0];
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < q; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < r; ++k) acc += g[i * r + k] * bv[j * r + k];
                    ga[i * q + j] += acc;
                }
        }
        if (gin[1]) {
            auto& gb = *gin[1];
            for (std::size_t j = 0; j < q; ++j)
                for (std::size_t k = 0; k < r; ++k) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < p; ++i) acc += av[i * q + j] * g[i * r + k];
                    gb[j * r + k] += acc;
                }
        }
    });
}

Tensor transpose(const Tensor& m) {
    require_rank("transpose", m, 2);
    const std::size_t n = m.dim(0), d = m.dim(1);
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) out[k * n + i] = m[i * d + k];
    return make_result("transpose", {d, n}, std::move(out), {m}, [n, d](const Node&, GradOut g, GradIn gin) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) (*gin[0])[i * d + k] += g[k * n + i];
    });
}

Tensor softmax_rows(const Tensor& m, double scale) {
    require_rank("softmax_rows", m, 2);
    if (!(scale > 0.0)) throw Error(ErrorKind::InvalidConfig, "softmax scale must be positive");
    const std::size_t n = m.dim(0), cols = m.dim(1);
    if (cols == 0) throw Error(ErrorKind::EmptyRow, "softmax over an empty row");
    std::vector<double> out(n * cols);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = m.data().data() + i * cols;
        const double mx = *std::max_element(row, row + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            out[i * cols + j] = std::exp(scale * (row[j] - mx));
            total += out[i * cols + j];
        }
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] /= total;
    }
    return make_result("softmax_rows", m.shape(), std::move(out), {m},
                       [n, cols, scale](const Node& self, GradOut g, GradIn gin) {
                           const auto& y = self.data;
                           for (std::size_t i = 0; i < n; ++i) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
                               for (std::size_t j = 0; j < cols; ++j)
                                   (*gin[0])[i * cols + j] += scale * y[i * cols + j] * (g[i * cols + j] - dot);
                           }
                       });
}

Tensor normalize_rows(const Tensor& m) {
    require_rank("normalize_rows", m, 2);
    const std::size_t n = m.dim(0), cols = m.dim(1);
    if (cols == 0) throw Error(ErrorKind::EmptyRow, "normalizing an empty row");
    std::vector<double> out(n * cols);
    std::vector<double> sums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < cols; ++j) sums[i] += m[i * cols + j];
        if (!(sums[i] > 0.0)) throw Error(ErrorKind::NonFinite, "row sum is not positive");
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = m[i * cols + j] / sums[i];
    }
    return make_result("normalize_rows", m.shape(), std::move(out), {m},
                       [n, cols, sums](const Node& self, GradOut g, GradIn gin) {
                           const auto& y = self.data;
                           for (std::size_t i = 0; i < n; ++i) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
                               for (std::size_t j = 0; j < cols; ++j)
                                   (*gin[0])[i * cols + j] += (g[i * cols + j] - dot) / sums[i];
                           }
                       });
}

Tensor add_rows(const Tensor& m, const Tensor& bias) {
    require_rank("add_rows", m, 2);
    const std::size_t n = m.dim(0), d = m.dim(1);
    if (bias.shape() == m.shape()) return add(m, bias);
    const bool row_bias = (bias.rank() == 1 && bias.dim(0) == d) || (bias.rank() == 2 && bias.dim(0) == 1 && bias.dim(1) == d);
    if (!row_bias) shape_error("add_rows", "bias " + shape_to_string(bias.shape()) + " for " + shape_to_string(m.shape()));
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) out[i * d + k] = m[i * d + k] + bias[k];
    return make_result("add_rows", m.shape(), std::move(out), {m, bias}, [n, d](const Node&, GradOut g, GradIn gin) {
        if (gin[0])
            for (std::size_t i = 0; i < n * d; ++i) (*gin[0])[i] += g[i];
        if (gin[1])
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) (*gin[1])[k] += g[i * d + k];
    });
}

Tensor scale_rows(const Tensor& m, const Tensor& gain) {
    require_rank("scale_rows", m, 2);
    const std::size_t r = m.dim(0), d = m.dim(1);
    if (gain.numel() != r) shape_error("scale_rows", "gain length " + std::to_string(gain.numel()) + " for " + std::to_string(r) + " rows");
    std::vector<double> out(r * d);
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t j = 0; j < d; ++j) out[k * d + j] = gain[k] * m[k * d + j];
    return make_result("scale_rows", m.shape(), std::move(out), {m, gain}, [r, d](const Node& self, GradOut g, GradIn gin) {
        const auto& mv = parent_data(self, 0);
        const auto& gv = parent_data(self, 1);
        if (gin[0])
            for (std::size_t k = 0; k < r; ++k)
                for (std::size_t j = 0; j < d; ++j) (*gin[0])[k * d + j] += g[k * d + j] * gv[k];
        if (gin[1])
            for (std::size_t k = 0; k < r; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += g[k * d + j] * mv[k * d + j];
                (*gin[1])[k] += acc;
            }
    });
}

Tensor slice_cols(const Tensor& m, std::size_t begin, std::size_t end) {
    require_rank("slice_cols", m, 2);
    const std::size_t n = m.dim(0), d = m.dim(1);
    if (begin > end || end > d) shape_error("slice_cols", "bad column range");
    const std::size_t w = end - begin;
    std::vector<double> out(n * w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < w; ++k) out[i * w + k] = m[i * d + begin + k];
    return make_result("slice_cols", {n, w}, std::move(out), {m}, [n, d, w, begin](const Node&, GradOut g, GradIn gin) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < w; ++k) (*gin[0])[i * d + begin + k] += g[i * w + k];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) shape_error("concat_cols", "no inputs");
    const std::size_t n = parts.front().dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank("concat_cols", p, 2);
        if (p.dim(0) != n) shape_error("concat_cols", "row counts differ");
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> out(n * total);
    std::size_t offset = 0;
    for (std::size_t t = 0; t < parts.size(); ++t) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < widths[t]; ++k) out[i * total + offset + k] = parts[t][i * widths[t] + k];
        offset += widths[t];
    }
    return make_result("concat_cols", {n, total}, std::move(out), parts,
                       [n, total, widths](const Node&, GradOut g, GradIn gin) {
                           std::size_t offset = 0;
                           for (std::size_t t = 0; t < widths.size(); ++t) {
                               if (gin[t])
                                   for (std::size_t i = 0; i < n; ++i)
                                       for (std::size_t k = 0; k < widths[t]; ++k)
                                           (*gin[t])[i * widths[t] + k] += g[i * total + offset + k];
                               offset += widths[t];
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank("linear", weight, 2);
    return add_rows(matmul(x, transpose(weight)), bias);
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel())
        shape_error("reshape", shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result("reshape", shape, std::move(out), {x}, [](const Node&, GradOut g, GradIn gin) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    });
}

// ---- feature maps ----------------------------------------------------------

Tensor global_avg_pool(const Tensor& x) {
    require_rank("global_avg_pool", x, 3);
    const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (hw == 0) throw Error(ErrorKind::EmptyRow, "pooling an empty map");
    std::vector<double> out(c, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) acc += x[k * hw + p];
        out[k] = acc / static_cast<double>(hw);
    }
    return make_result("global_avg_pool", {c, 1, 1}, std::move(out), {x}, [c, hw](const Node&, GradOut g, GradIn gin) {
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t p = 0; p < hw; ++p) (*gin[0])[k * hw + p] += g[k] * inv;
    });
}

Tensor nearest_up2(const Tensor& x) {
    require_rank("nearest_up2", x, 3);
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t h2 = 2 * h, w2 = 2 * w;
    std::vector<double> out(c * h2 * w2);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h2; ++y)
            for (std::size_t xx = 0; xx < w2; ++xx) out[(k * h2 + y) * w2 + xx] = x[(k * h + y / 2) * w + xx / 2];
    return make_result("nearest_up2", {c, h2, w2}, std::move(out), {x}, [c, h, w](const Node&, GradOut g, GradIn gin) {
        const std::size_t h2 = 2 * h, w2 = 2 * w;
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = 0; y < h2; ++y)
                for (std::size_t xx = 0; xx < w2; ++xx) (*gin[0])[(k * h + y / 2) * w + xx / 2] += g[(k * h2 + y) * w2 + xx];
    });
}

Tensor stride_down2(const Tensor& x) {
    require_rank("stride_down2", x, 3);
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0) throw Error(ErrorKind::OddExtent, "stride_down2 on " + shape_to_string(x.shape()));
    const std::size_t h2 = h / 2, w2 = w / 2;
    std::vector<double> out(c * h2 * w2);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h2; ++y)
            for (std::size_t xx = 0; xx < w2; ++xx) out[(k * h2 + y) * w2 + xx] = x[(k * h + 2 * y) * w + 2 * xx];
    return make_result("stride_down2", {c, h2, w2}, std::move(out), {x}, [c, h, w](const Node&, GradOut g, GradIn gin) {
        const std::size_t h2 = h / 2, w2 = w / 2;
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = 0; y < h2; ++y)
                for (std::size_t xx = 0; xx < w2; ++xx) (*gin[0])[(k * h + 2 * y) * w + 2 * xx] += g[(k * h2 + y) * w2 + xx];
    });
}

Tensor pool_resample(ResampleKind kind, const Tensor& x) {
    switch (kind) {
    case ResampleKind::GlobalAvgPool: return global_avg_pool(x);
    case ResampleKind::NearestUp2: return nearest_up2(x);
    case ResampleKind::StrideDown2: return stride_down2(x);
    }
    return x;
}

Tensor conv_pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank("conv_pointwise", x, 3);
    require_rank("conv_pointwise", weight, 2);
    const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2), cout = weight.dim(0);
    if (weight.dim(1) != cin) shape_error("conv_pointwise", "weight " + shape_to_string(weight.shape()) + " for input " + shape_to_string(x.shape()));
    if (bias.numel() != cout) shape_error("conv_pointwise", "bias length " + std::to_string(bias.numel()));
    const std::size_t hw = h * w;
    std::vector<double> out(cout * hw);
    const double* xv = x.data().data();
    const double* wv = weight.data().data();
    const double* bv = bias.data().data();
    detail::parallel_for(cout, cin * hw, [&](std::size_t o) {
        for (std::size_t p = 0; p < hw; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < cin; ++i) acc += wv[o * cin + i] * xv[i * hw + p];
            out[o * hw + p] = acc + bv[o];
        }
    });
    return make_result("conv_pointwise", {cout, h, w}, std::move(out), {x, weight, bias},
                       [cin, cout, hw](const Node& self, GradOut g, GradIn gin) {
                           const auto& xv = parent_data(self, 0);
                           const auto& wv = parent_data(self, 1);
                           if (gin[0])
                               for (std::size_t i = 0; i < cin; ++i)
                                   for (std::size_t p = 0; p < hw; ++p) {
                                       double acc = 0.0;
                                       for (std::size_t o = 0; o < cout; ++o) acc += wv[o * cin + i] * g[o * hw + p];
                                       (*gin[0])[i * hw + p] += acc;
                                   }
                           if (gin[1])
                               for (std::size_t o = 0; o < cout; ++o)
                                   for (std::size_t i = 0; i < cin; ++i) {
                                       double acc = 0.0;
                                       for (std::size_t p = 0; p < hw; ++p) acc += g[o * hw + p] * xv[i * hw + p];
                                       (*gin[1])[o * cin + i] += acc;
                                   }
                           if (gin[2])
                               for (std::size_t o = 0; o < cout; ++o) {
                                   double acc = 0.0;
                                   for (std::size_t p = 0; p < hw; ++p) acc += g[o * hw + p];
                                   (*gin[2])[o] += acc;
                               }
                       });
}

Tensor depthwise_conv3x3(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    require_rank("depthwise_conv3x3", x, 3);
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (kernel.shape() != Shape{c, 3, 3}) shape_error("depthwise_conv3x3", "kernel " + shape_to_string(kernel.shape()));
    if (bias.numel() != c) shape_error("depthwise_conv3x3", "bias length " + std::to_string(bias.numel()));

    // Visits every (output, input, tap) triple inside the zero-padded window.
    auto for_taps = [h, w](auto&& fn) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
                        if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        fn(y * w + xx, static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx), ky * 3 + kx);
                    }
    };

    const std::size_t hw = h * w;
    std::vector<double> out(c * hw, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
        for_taps([&](std::size_t o, std::size_t src, std::size_t tap) { out[k * hw + o] += kernel[k * 9 + tap] * x[k * hw + src]; });
        for (std::size_t p = 0; p < hw; ++p) out[k * hw + p] += bias[k];
    }
    return make_result("depthwise_conv3x3", x.shape(), std::move(out), {x, kernel, bias},
                       [c, hw, for_taps](const Node& self, GradOut g, GradIn gin) {
                           const auto& xv = parent_data(self, 0);
                           const auto& kv = parent_data(self, 1);
                           for (std::size_t k = 0; k < c; ++k) {
                               for_taps([&](std::size_t o, std::size_t src, std::size_t tap) {
                                   if (gin[0]) (*gin[0])[k * hw + src] += kv[k * 9 + tap] * g[k * hw + o];
                                   if (gin[1]) (*gin[1])[k * 9 + tap] += xv[k * hw + src] * g[k * hw + o];
                               });
                               if (gin[2])
                                   for (std::size_t p = 0; p < hw; ++p) (*gin[2])[k] += g[k * hw + p];
                           }
                       });
}

Tensor concat_channels(const std::vector<Tensor>& maps) {
    if (maps.empty()) shape_error("concat_channels", "no inputs");
    require_rank("concat_channels", maps.front(), 3);
    const std::size_t h = maps.front().dim(1), w = maps.front().dim(2);
    std::size_t channels = 0;
    std::vector<double> out;
    for (const auto& m : maps) {
        require_rank("concat_channels", m, 3);
        if (m.dim(1) != h || m.dim(2) != w)
            shape_error("concat_channels", shape_to_string(m.shape()) + " vs spatial " + std::to_string(h) + "x" + std::to_string(w));
        channels += m.dim(0);
        out.insert(out.end(), m.data().begin(), m.data().end());
    }
    std::vector<std::size_t> sizes;
    for (const auto& m : maps) sizes.push_back(m.numel());
    return make_result("concat_channels", {channels, h, w}, std::move(out), maps, [sizes](const Node&, GradOut g, GradIn gin) {
        std::size_t offset = 0;
        for (std::size_t t = 0; t < sizes.size(); ++t) {
            if (gin[t])
                for (std::size_t i = 0; i < sizes[t]; ++i) (*gin[t])[i] += g[offset + i];
            offset += sizes[t];
        }
    });
}

Tensor scale_channels(const Tensor& x, const Tensor& gain) {
    require_rank("scale_channels", x, 3);
    const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (gain.numel() != c) shape_error("scale_channels", "gain " + shape_to_string(gain.shape()) + " for " + shape_to_string(x.shape()));
    std::vector<double> out(c * hw);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t p = 0; p < hw; ++p) out[k * hw + p] = x[k * hw + p] * gain[k];
    return make_result("scale_channels", x.shape(), std::move(out), {x, gain}, [c, hw](const Node& self, GradOut g, GradIn gin) {
        const auto& xv = parent_data(self, 0);
        const auto& gv = parent_data(self, 1);
        if (gin[0])
            for (std::size_t k = 0; k < c; ++k)
                for (std::size_t p = 0; p < hw; ++p) (*gin[0])[k * hw + p] += g[k * hw + p] * gv[k];
        if (gin[1])
            for (std::size_t k = 0; k < c; ++k) {
                double acc = 0.0;
                for (std::size_t p = 0; p < hw; ++p) acc += g[k * hw + p] * xv[k * hw + p];
                (*gin[1])[k] += acc;
            }
    });
}

Tensor map_to_nodes(const Tensor& x) {
    require_rank("map_to_nodes", x, 3);
    return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

Tensor nodes_to_map(const Tensor& nodes, std::size_t h, std::size_t w) {
    require_rank("nodes_to_map", nodes, 2);
    if (nodes.dim(0) != h * w) shape_error("nodes_to_map", std::to_string(nodes.dim(0)) + " nodes for " + std::to_string(h) + "x" + std::to_string(w));
    return reshape(transpose(nodes), {nodes.dim(1), h, w});
}

}  // namespace hyperfuse

// SPDX-License-Identifier: Apache-2.0
#include "mowe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mowe/error.hpp"

namespace mowe::ops {

namespace {

using detail::Node;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                             " tensor, got " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Elementwise unary op with a derivative evaluated from the input value.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df, const char* op) {
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return make_result(a.shape(), std::move(out), {a},
                       [df](Node& self) {
                           Node& p = parent(self, 0);
                           auto& g = p.grad;
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.value[i]);
                       },
                       op);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

namespace {

// C[m×n] += A[m×k]·B[k×n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* __restrict A, const double* __restrict B,
             double* __restrict C) {
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* __restrict b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// D[m×k] += G[m×n]·B[k×n]ᵀ, four interleaved partial sums per dot product.
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* __restrict G, const double* __restrict B,
             double* __restrict D) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* __restrict b = B + p * n;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                s0 += g[j] * b[j];
                s1 += g[j + 1] * b[j + 1];
                s2 += g[j + 2] * b[j + 2];
                s3 += g[j + 3] * b[j + 3];
            }
            for (; j < n; ++j) s0 += g[j] * b[j];
            D[i * k + p] += (s0 + s1) + (s2 + s3);
        }
    }
}

// D[k×n] += A[m×k]ᵀ·G[m×n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* __restrict A, const double* __restrict G,
             double* __restrict D) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            double* __restrict d = D + p * n;
            for (std::size_t j = 0; j < n; ++j) d[j] += av * g[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> C(m * n, 0.0);
    gemm_nn(m, k, n, a.data().data(), b.data().data(), C.data());
    return make_result({m, n}, std::move(C), {a, b},
                       [m, k, n](Node& self) {
                           Node& pa = parent(self, 0);
                           Node& pb = parent(self, 1);
                           if (pa.requires_grad) gemm_nt(m, k, n, self.grad.data(), pb.value.data(), pa.grad.data());
                           if (pb.requires_grad) gemm_tn(m, k, n, pa.value.data(), self.grad.data(), pb.grad.data());
                       },
                       "matmul");
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    const auto x = a.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    return make_result({n, m}, std::move(out), {a},
                       [m, n](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
                       },
                       "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return make_result(a.shape(), std::move(out), {a, b},
                       [](Node& self) {
                           for (std::size_t k = 0; k < 2; ++k) {
                               Node& p = parent(self, k);
                               if (!p.requires_grad) continue;
                               for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
                           }
                       },
                       "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    return make_result(a.shape(), std::move(out), {a, b},
                       [](Node& self) {
                           Node& pa = parent(self, 0);
                           Node& pb = parent(self, 1);
                           if (pa.requires_grad)
                               for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[i];
                           if (pb.requires_grad)
                               for (std::size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] -= self.grad[i];
                       },
                       "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return make_result(a.shape(), std::move(out), {a, b},
                       [](Node& self) {
                           Node& pa = parent(self, 0);
                           Node& pb = parent(self, 1);
                           if (pa.requires_grad)
                               for (std::size_t i = 0; i < pa.grad.size(); ++i)
                                   pa.grad[i] += self.grad[i] * pb.value[i];
                           if (pb.requires_grad)
                               for (std::size_t i = 0; i < pb.grad.size(); ++i)
                                   pb.grad[i] += self.grad[i] * pa.value[i];
                       },
                       "mul");
}

Tensor scale(const Tensor& a, double factor) { return affine(a, factor, 0.0); }

Tensor affine(const Tensor& a, double factor, double offset) {
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = factor * x[i] + offset;
    return make_result(a.shape(), std::move(out), {a},
                       [factor](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
                       },
                       "affine");
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    require_rank(x, 2, "add_bias");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (b.numel() != n) {
        throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " +
                             shape_str(x.shape()));
    }
    const auto xv = x.data();
    const auto bv = b.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
    return make_result({m, n}, std::move(out), {x, b},
                       [m, n](Node& self) {
                           Node& px = parent(self, 0);
                           Node& pb = parent(self, 1);
                           if (px.requires_grad)
                               for (std::size_t i = 0; i < m * n; ++i) px.grad[i] += self.grad[i];
                           if (pb.requires_grad)
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
                       },
                       "add_bias");
}

Tensor sum(const Tensor& a) {
    const auto x = a.data();
    double s = 0.0;
    for (double v : x) s += v;
    return make_result({1}, {s}, {a},
                       [](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (auto& v : g) v += self.grad[0];
                       },
                       "sum");
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.numel());
    return scale(sum(a), 1.0 / n);
}

Tensor gelu(const Tensor& a) {
    return unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
        [](double x) {
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        },
        "gelu");
}

Tensor softmax(const Tensor& v) {
    require_rank(v, 1, "softmax");
    const auto x = v.data();
    if (x.empty()) throw ArgumentError("softmax: empty vector");
    const double mx = *std::max_element(x.begin(), x.end());
    std::vector<double> out(x.size());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - mx));
    for (auto& o : out) o /= z;
    return make_result(v.shape(), std::move(out), {v},
                       [](Node& self) {
                           const auto& y = self.value;
                           double dot = 0.0;
                           for (std::size_t i = 0; i < y.size(); ++i) dot += self.grad[i] * y[i];
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < y.size(); ++i) g[i] += y[i] * (self.grad[i] - dot);
                       },
                       "softmax");
}

Tensor softmax_rows(const Tensor& x, bool causal) {
    require_rank(x, 2, "softmax_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (n == 0) throw ArgumentError("softmax_rows: empty rows");
    const auto xv = x.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t len = causal ? std::min(n, i + 1) : n;
        const double* row = xv.data() + i * n;
        double* o = out.data() + i * n;
        const double mx = *std::max_element(row, row + len);
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) z += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < len; ++j) o[j] /= z;
    }
    return make_result({m, n}, std::move(out), {x},
                       [m, n](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < m; ++i) {
                               const double* y = self.value.data() + i * n;
                               const double* gy = self.grad.data() + i * n;
                               double dot = 0.0;
                               for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                               for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
                           }
                       },
                       "softmax_rows");
}

Tensor mean_over_sequence(const Tensor& z) {
    require_rank(z, 2, "mean_over_sequence");
    const std::size_t s = z.dim(0), d = z.dim(1);
    if (s == 0) throw ArgumentError("mean_over_sequence: empty sequence");
    const auto x = z.data();
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += x[i * d + j];
    for (auto& o : out) o /= static_cast<double>(s);
    return make_result({1, d}, std::move(out), {z},
                       [s, d](Node& self) {
                           auto& g = parent(self, 0).grad;
                           const double inv = 1.0 / static_cast<double>(s);
                           for (std::size_t i = 0; i < s; ++i)
                               for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[j] * inv;
                       },
                       "mean_over_sequence");
}

Tensor concat_feature(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat_feature(parts);
}

Tensor concat_feature(std::span<const Tensor> parts) {
    if (parts.empty()) throw ArgumentError("concat_feature: no operands");
    const std::size_t s = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_feature");
        if (p.dim(0) != s) {
            throw DimensionError("concat_feature: sequence length mismatch " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
        }
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> out(s * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto x = parts[k].data();
        const std::size_t w = widths[k];
        for (std::size_t i = 0; i < s; ++i)
            std::copy_n(x.data() + i * w, w, out.data() + i * total + offset);
        offset += w;
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_result({s, total}, std::move(out), std::move(parents),
                       [s, total, widths](Node& self) {
                           std::size_t off = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                               Node& p = parent(self, k);
                               const std::size_t w = widths[k];
                               if (p.requires_grad)
                                   for (std::size_t i = 0; i < s; ++i)
                                       for (std::size_t j = 0; j < w; ++j)
                                           p.grad[i * w + j] += self.grad[i * total + off + j];
                               off += w;
                           }
                       },
                       "concat_feature");
}

Tensor concat_sequence(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat_sequence(parts);
}

Tensor concat_sequence(std::span<const Tensor> parts) {
    if (parts.empty()) throw ArgumentError("concat_sequence: no operands");
    const std::size_t d = parts[0].cols();
    std::vector<std::size_t> sizes;
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_sequence");
        if (p.dim(1) != d) {
            throw DimensionError("concat_sequence: feature width mismatch " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
        }
        sizes.push_back(p.numel());
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(rows * d);
    for (const auto& p : parts) {
        const auto x = p.data();
        out.insert(out.end(), x.begin(), x.end());
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_result({rows, d}, std::move(out), std::move(parents),
                       [sizes](Node& self) {
                           std::size_t off = 0;
                           for (std::size_t k = 0; k < sizes.size(); ++k) {
                               Node& p = parent(self, k);
                               if (p.requires_grad)
                                   for (std::size_t i = 0; i < sizes[k]; ++i) p.grad[i] += self.grad[off + i];
                               off += sizes[k];
                           }
                       },
                       "concat_sequence");
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
    require_rank(x, 2, "slice_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (begin + count > m) {
        throw IndexError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.shape()));
    }
    const auto xv = x.data();
    std::vector<double> out(xv.begin() + begin * n, xv.begin() + (begin + count) * n);
    return make_result({count, n}, std::move(out), {x},
                       [begin, n](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
                       },
                       "slice_rows");
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
    require_rank(x, 2, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (begin + count > n) {
        throw IndexError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
    }
    const auto xv = x.data();
    std::vector<double> out(m * count);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(xv.data() + i * n + begin, count, out.data() + i * count);
    return make_result({m, count}, std::move(out), {x},
                       [m, n, begin, count](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < count; ++j)
                                   g[i * n + begin + j] += self.grad[i * count + j];
                       },
                       "slice_cols");
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    const auto xv = x.data();
    return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x},
                       [](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       },
                       "reshape");
}

Tensor pad_rows(const Tensor& x, std::size_t rows) {
    require_rank(x, 2, "pad_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (rows < m) {
        throw DimensionError("pad_rows: cannot pad " + shape_str(x.shape()) + " down to " + std::to_string(rows) +
                             " rows");
    }
    const auto xv = x.data();
    std::vector<double> out(rows * n, 0.0);
    std::copy(xv.begin(), xv.end(), out.begin());
    return make_result({rows, n}, std::move(out), {x},
                       [](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       },
                       "pad_rows");
}

Tensor group_frames(const Tensor& x, std::size_t group) {
    require_rank(x, 2, "group_frames");
    if (group == 0) throw ArgumentError("group_frames: group size must be positive");
    const std::size_t s = x.dim(0), d = x.dim(1);
    const std::size_t tokens = (s + group - 1) / group;
    Tensor padded = tokens * group == s ? x : pad_rows(x, tokens * group);
    return reshape(padded, {tokens, group * d});
}

Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad_left,
              std::size_t pad_right) {
    require_rank(x, 2, "im2col");
    if (kernel == 0 || stride == 0) throw ArgumentError("im2col: kernel and stride must be positive");
    const std::size_t s = x.dim(0), c = x.dim(1);
    const std::size_t padded = s + pad_left + pad_right;
    if (padded < kernel) {
        throw DimensionError("im2col: sequence of length " + std::to_string(s) + " shorter than kernel " +
                             std::to_string(kernel));
    }
    const std::size_t out_len = (padded - kernel) / stride + 1;
    const std::size_t width = kernel * c;
    const auto xv = x.data();
    std::vector<double> out(out_len * width, 0.0);
    for (std::size_t t = 0; t < out_len; ++t) {
        for (std::size_t k = 0; k < kernel; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad_left);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(s)) continue;
            std::copy_n(xv.data() + src * c, c, out.data() + t * width + k * c);
        }
    }
    return make_result({out_len, width}, std::move(out), {x},
                       [s, c, kernel, stride, pad_left, out_len, width](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t t = 0; t < out_len; ++t) {
                               for (std::size_t k = 0; k < kernel; ++k) {
                                   const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                                              static_cast<std::ptrdiff_t>(pad_left);
                                   if (src < 0 || src >= static_cast<std::ptrdiff_t>(s)) continue;
                                   for (std::size_t j = 0; j < c; ++j)
                                       g[src * c + j] += self.grad[t * width + k * c + j];
                               }
                           }
                       },
                       "im2col");
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel,
              std::size_t stride, std::size_t pad_left, std::size_t pad_right) {
    if (weight.rank() != 2 || weight.dim(0) != kernel * x.cols()) {
        throw DimensionError("conv1d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                             shape_str(x.shape()) + " and kernel " + std::to_string(kernel));
    }
    return add_bias(matmul(im2col(x, kernel, stride, pad_left, pad_right), weight), bias);
}

Tensor linear_interpolate_features(const Tensor& z, std::size_t d_dst) {
    require_rank(z, 2, "linear_interpolate_features");
    const std::size_t s = z.dim(0), d_src = z.dim(1);
    if (d_src == 0 || d_dst == 0) throw ArgumentError("linear_interpolate_features: empty feature grid");
    if (d_src == d_dst) return z;
    // Source index and blend weight for each destination column.
    std::vector<std::size_t> lo(d_dst);
    std::vector<double> frac(d_dst);
    for (std::size_t j = 0; j < d_dst; ++j) {
        if (d_src == 1 || d_dst == 1) {
            lo[j] = 0;
            frac[j] = 0.0;
            continue;
        }
        const double pos = static_cast<double>(j * (d_src - 1)) / static_cast<double>(d_dst - 1);
        std::size_t l = static_cast<std::size_t>(std::floor(pos));
        if (l >= d_src - 1) l = d_src - 2;
        lo[j] = l;
        frac[j] = pos - static_cast<double>(l);
    }
    const auto x = z.data();
    std::vector<double> out(s * d_dst);
    for (std::size_t i = 0; i < s; ++i) {
        const double* row = x.data() + i * d_src;
        for (std::size_t j = 0; j < d_dst; ++j) {
            const double a = row[lo[j]];
            const double b = d_src > 1 ? row[lo[j] + 1] : a;
            out[i * d_dst + j] = frac[j] == 0.0 ? a : (1.0 - frac[j]) * a + frac[j] * b;
        }
    }
    return make_result({s, d_dst}, std::move(out), {z},
                       [s, d_src, d_dst, lo, frac](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < s; ++i) {
                               for (std::size_t j = 0; j < d_dst; ++j) {
                                   const double gy = self.grad[i * d_dst + j];
                                   g[i * d_src + lo[j]] += (1.0 - frac[j]) * gy;
                                   if (frac[j] != 0.0) g[i * d_src + lo[j] + 1] += frac[j] * gy;
                               }
                           }
                       },
                       "linear_interpolate_features");
}

Tensor xlogx(const Tensor& a) {
    for (double v : a.data()) {
        if (v < 0.0 || std::isnan(v)) throw ArgumentError("xlogx: negative or NaN input");
    }
    return unary(
        a, [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; },
        [](double x) { return x > 0.0 ? std::log(x) + 1.0 : 0.0; }, "xlogx");
}

Tensor element(const Tensor& v, std::size_t index) {
    if (index >= v.numel()) {
        throw IndexError("element: index " + std::to_string(index) + " out of range for " + shape_str(v.shape()));
    }
    return make_result({1}, {v.data()[index]}, {v},
                       [index](Node& self) { parent(self, 0).grad[index] += self.grad[0]; }, "element");
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw DimensionError("scale_by: factor must have one element, got " + shape_str(s.shape()));
    const double f = s.data()[0];
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f * xv[i];
    return make_result(x.shape(), std::move(out), {x, s},
                       [](Node& self) {
                           Node& px = parent(self, 0);
                           Node& ps = parent(self, 1);
                           const double f = ps.value[0];
                           if (px.requires_grad)
                               for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += f * self.grad[i];
                           if (ps.requires_grad) {
                               double acc = 0.0;
                               for (std::size_t i = 0; i < px.value.size(); ++i) acc += px.value[i] * self.grad[i];
                               ps.grad[0] += acc;
                           }
                       },
                       "scale_by");
}

Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, double eps) {
    require_rank(x, 2, "rms_norm_rows");
    const std::size_t m = x.dim(0), d = x.dim(1);
    if (gain.numel() != d) {
        throw DimensionError("rms_norm_rows: gain " + shape_str(gain.shape()) + " does not match " +
                             shape_str(x.shape()));
    }
    const auto xv = x.data();
    const auto gv = gain.data();
    std::vector<double> out(m * d);
    std::vector<double> inv_rms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double ms = 0.0;
        for (std::size_t j = 0; j < d; ++j) ms += xv[i * d + j] * xv[i * d + j];
        ms /= static_cast<double>(d);
        inv_rms[i] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] * inv_rms[i] * gv[j];
    }
    return make_result({m, d}, std::move(out), {x, gain},
                       [m, d, inv_rms](Node& self) {
                           Node& px = parent(self, 0);
                           Node& pg = parent(self, 1);
                           for (std::size_t i = 0; i < m; ++i) {
                               const double r = inv_rms[i];
                               const double* xr = px.value.data() + i * d;
                               const double* gy = self.grad.data() + i * d;
                               if (pg.requires_grad)
                                   for (std::size_t j = 0; j < d; ++j) pg.grad[j] += gy[j] * xr[j] * r;
                               if (px.requires_grad) {
                                   double dot = 0.0;
                                   for (std::size_t j = 0; j < d; ++j) dot += pg.value[j] * gy[j] * xr[j];
                                   const double c = r * r * r * dot / static_cast<double>(d);
                                   for (std::size_t j = 0; j < d; ++j)
                                       px.grad[i * d + j] += pg.value[j] * gy[j] * r - xr[j] * c;
                               }
                           }
                       },
                       "rms_norm_rows");
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_rank(table, 2, "embedding");
    const std::size_t v = table.dim(0), d = table.dim(1);
    const auto tv = table.data();
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
            throw IndexError("embedding: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                             std::to_string(v));
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    return make_result({ids.size(), d}, std::move(out), {table},
                       [idv, d](Node& self) {
                           auto& g = parent(self, 0).grad;
                           for (std::size_t i = 0; i < idv.size(); ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                   g[static_cast<std::size_t>(idv[i]) * d + j] += self.grad[i * d + j];
                       },
                       "embedding");
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets) {
    require_rank(logits, 2, "cross_entropy_rows");
    const std::size_t m = logits.dim(0), v = logits.dim(1);
    if (targets.size() != m) {
        throw DimensionError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                             shape_str(logits.shape()) + " logits");
    }
    const auto x = logits.data();
    std::vector<double> probs(m * v, 0.0);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] < 0) continue;
        if (static_cast<std::size_t>(targets[i]) >= v) {
            throw IndexError("cross_entropy_rows: target " + std::to_string(targets[i]) + " outside vocabulary of " +
                             std::to_string(v));
        }
        const double* row = x.data() + i * v;
        const double mx = *std::max_element(row, row + v);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += (probs[i * v + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
        total += -(row[targets[i]] - mx - std::log(z));
        ++count;
    }
    if (count == 0) throw ArgumentError("cross_entropy_rows: no supervised rows");
    std::vector<int> tv(targets.begin(), targets.end());
    const double inv = 1.0 / static_cast<double>(count);
    return make_result({1}, {total * inv}, {logits},
                       [probs = std::move(probs), tv, v, inv](Node& self) {
                           auto& g = parent(self, 0).grad;
                           const double gs = self.grad[0] * inv;
                           for (std::size_t i = 0; i < tv.size(); ++i) {
                               if (tv[i] < 0) continue;
                               for (std::size_t j = 0; j < v; ++j) g[i * v + j] += gs * probs[i * v + j];
                               g[i * v + static_cast<std::size_t>(tv[i])] -= gs;
                           }
                       },
                       "cross_entropy_rows");
}

}  // namespace mowe::ops

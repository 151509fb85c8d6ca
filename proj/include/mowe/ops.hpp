// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mowe/tensor.hpp"

// Differentiable tensor operations. There is no implicit broadcasting: every
// op states the shapes it accepts and raises DimensionError otherwise.
namespace mowe::ops {

/// [m×k]·[k×n] → [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// factor·a + offset, elementwise.
Tensor affine(const Tensor& a, double factor, double offset);
/// x[m×n] plus the row vector b[n] on every row.
Tensor add_bias(const Tensor& x, const Tensor& b);

/// Sum of all entries, shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Tanh-approximation GELU: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
Tensor gelu(const Tensor& a);

/// Max-shifted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& v);
/// Row-wise softmax of a rank-2 tensor; with `causal`, entry (i, j) for j > i
/// is excluded (probability exactly 0).
Tensor softmax_rows(const Tensor& x, bool causal);

/// Column means of [S×d] → [1×d].
Tensor mean_over_sequence(const Tensor& z);
/// [S×d1] ⊕ [S×d2] → [S×(d1+d2)].
Tensor concat_feature(const Tensor& a, const Tensor& b);
Tensor concat_feature(std::span<const Tensor> parts);
/// [S1×d] ⊕ [S2×d] → [(S1+S2)×d].
Tensor concat_sequence(const Tensor& a, const Tensor& b);
Tensor concat_sequence(std::span<const Tensor> parts);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);
/// Appends zero rows so the result has `rows` rows.
Tensor pad_rows(const Tensor& x, std::size_t rows);
/// Zero-pads S up to a multiple of `group` and flattens each run of `group`
/// consecutive frames into one row: [S×d] → [ceil(S/group) × group·d].
Tensor group_frames(const Tensor& x, std::size_t group);
/// Unfolds [S×C] into [out×(kernel·C)] patches for a 1-D convolution.
Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad_left,
              std::size_t pad_right);
/// 1-D convolution over the sequence axis. `weight` is [(kernel·C_in)×C_out].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel,
              std::size_t stride, std::size_t pad_left, std::size_t pad_right);

/// Per-row linear interpolation from a d_src-point grid on [0,1] to a d_dst-point grid.
Tensor linear_interpolate_features(const Tensor& z, std::size_t d_dst);

/// Elementwise x·log(x) with 0·log(0) = 0. Inputs must be ≥ 0.
Tensor xlogx(const Tensor& a);
/// Entry `index` of a tensor as a shape-[1] tensor.
Tensor element(const Tensor& v, std::size_t index);
/// x scaled by the single-element tensor s.
Tensor scale_by(const Tensor& x, const Tensor& s);

/// RMS normalisation of each row followed by an elementwise gain g[d].
Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, double eps = 1e-6);
/// Rows of table[V×d] selected by ids → [n×d].
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// Mean cross entropy of softmax(logits row) against `targets`; rows whose
/// target is negative are ignored.
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets);

}  // namespace mowe::ops

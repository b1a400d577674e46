#pragma once
// Taped differentiable operations. Every op executes eagerly, propagates
// requires-grad from its inputs, and registers its local gradient rule on
// the tape. Broadcasting is limited to what the model needs (bias add,
// scalar scale) so each rule stays auditable.

#include <cstdint>
#include <memory>
#include <vector>

#include "ergoseg/rng.hpp"
#include "ergoseg/tensor.hpp"

namespace ergoseg::ops {

using FrameMask = std::shared_ptr<const std::vector<uint8_t>>;

FrameMask make_mask(std::vector<uint8_t> mask);
FrameMask all_true(int64_t frames);

// Elementwise / broadcast
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape& tape, const TensorPtr& x, double factor);
TensorPtr add_bias(Tape& tape, const TensorPtr& x, const TensorPtr& bias);
TensorPtr relu(Tape& tape, const TensorPtr& x);
TensorPtr tanh_(Tape& tape, const TensorPtr& x);
TensorPtr sigmoid(Tape& tape, const TensorPtr& x);
TensorPtr square(Tape& tape, const TensorPtr& x);
TensorPtr abs_(Tape& tape, const TensorPtr& x);
TensorPtr clamp_min(Tape& tape, const TensorPtr& x, double floor);

// Linear algebra
TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b);

// Shape plumbing
TensorPtr reshape(Tape& tape, const TensorPtr& x, Shape new_shape);
TensorPtr concat_cols(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_rows(Tape& tape, const TensorPtr& x, int64_t begin, int64_t end);
TensorPtr pad_rows(Tape& tape, const TensorPtr& x, int64_t total_rows, double fill);

// Reductions
TensorPtr sum_all(Tape& tape, const TensorPtr& x);
TensorPtr masked_sum(Tape& tape, const TensorPtr& x, const FrameMask& mask);

// Row-wise softmax with log-sum-exp stabilization.
TensorPtr softmax_rows(Tape& tape, const TensorPtr& x);

// Sequence ops; time is the leading axis.
TensorPtr causal_conv1d(Tape& tape, const TensorPtr& x, const TensorPtr& weight,
                        const TensorPtr& bias, int64_t dilation);
TensorPtr max_pool_time(Tape& tape, const TensorPtr& x);
TensorPtr avg_pool_time(Tape& tape, const TensorPtr& x);
TensorPtr upsample_time(Tape& tape, const TensorPtr& x);
TensorPtr normalized_relu(Tape& tape, const TensorPtr& x, double eps = 1e-5);
TensorPtr adaptive_avg_pool_cols(Tape& tape, const TensorPtr& x, int64_t out_cols);
TensorPtr apply_frame_mask(Tape& tape, const TensorPtr& x, const FrameMask& mask, double fill);

// Inverted-scaling dropout; identity when not training. The mask is drawn
// from the caller's seeded generator and captured for the backward rule.
TensorPtr dropout(Tape& tape, const TensorPtr& x, double rate, Rng& rng, bool training);

// Graph aggregation: y[t] = (adjacency ∘ edge_mask) @ x[t] per frame.
// adjacency is a fixed (n x n) matrix; edge_mask the learnable (n x n) mask.
TensorPtr edge_weighted_aggregate(Tape& tape,
                                  const std::shared_ptr<const std::vector<double>>& adjacency,
                                  const TensorPtr& edge_mask, const TensorPtr& x);

// Single LSTM layer over (T x F) input, zero initial state. Gate order in
// the 4H axis: input, forget, cell, output.
TensorPtr lstm(Tape& tape, const TensorPtr& x, const TensorPtr& w_input,
               const TensorPtr& w_hidden, const TensorPtr& bias);

// Sum over unmasked frames of -log softmax(logits_t)[label_t].
TensorPtr cross_entropy_masked(Tape& tape, const TensorPtr& logits,
                               const std::vector<int>& labels, const FrameMask& mask);

}  // namespace ergoseg::ops

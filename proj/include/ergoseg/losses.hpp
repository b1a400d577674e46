#pragma once
// The two task losses and their weighted combination. The weights are raw
// learnable scalars passed through a floor clamp: unconstrained weights
// would collapse to zero and trivially minimize the combined loss, so the
// effective values are max(raw, epsilon), initialized to 1.

#include "ergoseg/layers.hpp"
#include "ergoseg/ops.hpp"
#include "ergoseg/tensor.hpp"

namespace ergoseg {

struct LossWeights {
    static constexpr double kEpsilon = 1e-3;

    TensorPtr alpha_raw;
    TensorPtr beta_raw;
    TensorPtr gamma_raw;

    static LossWeights init();

    TensorPtr alpha(Tape& tape) const { return ops::clamp_min(tape, alpha_raw, kEpsilon); }
    TensorPtr beta(Tape& tape) const { return ops::clamp_min(tape, beta_raw, kEpsilon); }
    TensorPtr gamma(Tape& tape) const { return ops::clamp_min(tape, gamma_raw, kEpsilon); }

    double alpha_value() const { return std::max(alpha_raw->values[0], kEpsilon); }
    double beta_value() const { return std::max(beta_raw->values[0], kEpsilon); }
    double gamma_value() const { return std::max(gamma_raw->values[0], kEpsilon); }

    void collect(ParamList& out) const;
};

struct HpaLossResult {
    TensorPtr value;
    bool all_masked = false;
};

// Sum over unmasked frames of alpha*(pred-target)^2 + beta*|pred-target|.
HpaLossResult hpa_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& target,
                       const LossWeights& weights, const ops::FrameMask& mask);

// Sum over unmasked frames of the cross entropy against the frame label.
TensorPtr has_loss(Tape& tape, const TensorPtr& logits, const std::vector<int>& labels,
                   const ops::FrameMask& mask);

// L = L_HPA + gamma * L_HAS.
TensorPtr mtl_loss(Tape& tape, const TensorPtr& hpa, const TensorPtr& has,
                   const LossWeights& weights);

}  // namespace ergoseg

#include "ergoseg/losses.hpp"

#include <algorithm>

namespace ergoseg {

LossWeights LossWeights::init() {
    LossWeights w;
    w.alpha_raw = Tensor::scalar(1.0, true);
    w.beta_raw = Tensor::scalar(1.0, true);
    w.gamma_raw = Tensor::scalar(1.0, true);
    w.alpha_raw->name = "loss.alpha_raw";
    w.beta_raw->name = "loss.beta_raw";
    w.gamma_raw->name = "loss.gamma_raw";
    return w;
}

void LossWeights::collect(ParamList& out) const {
    out.push_back({"loss.alpha_raw", alpha_raw});
    out.push_back({"loss.beta_raw", beta_raw});
    out.push_back({"loss.gamma_raw", gamma_raw});
}

HpaLossResult hpa_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& target,
                       const LossWeights& weights, const ops::FrameMask& mask) {
    if (pred->size() != target->size())
        throw ContractViolation("hpa_loss: pred/target length mismatch");
    if (static_cast<int64_t>(mask->size()) != pred->size())
        throw ContractViolation("hpa_loss: mask length mismatch");
    HpaLossResult result;
    result.all_masked =
        std::none_of(mask->begin(), mask->end(), [](uint8_t m) { return m != 0; });
    auto residual = ops::sub(tape, pred, target);
    auto sq = ops::masked_sum(tape, ops::square(tape, residual), mask);
    auto ab = ops::masked_sum(tape, ops::abs_(tape, residual), mask);
    result.value = ops::add(tape, ops::mul(tape, weights.alpha(tape), sq),
                            ops::mul(tape, weights.beta(tape), ab));
    return result;
}

TensorPtr has_loss(Tape& tape, const TensorPtr& logits, const std::vector<int>& labels,
                   const ops::FrameMask& mask) {
    return ops::cross_entropy_masked(tape, logits, labels, mask);
}

TensorPtr mtl_loss(Tape& tape, const TensorPtr& hpa, const TensorPtr& has,
                   const LossWeights& weights) {
    return ops::add(tape, hpa, ops::mul(tape, weights.gamma(tape), has));
}

}  // namespace ergoseg

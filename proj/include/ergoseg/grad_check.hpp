#pragma once
// Central-difference gradient verification. The builder must reproduce the
// same forward computation on every call (fixed dropout masks, fixed data),
// so the only thing that varies between evaluations is the perturbed entry.

#include <functional>
#include <string>
#include <vector>

#include "ergoseg/tensor.hpp"

namespace ergoseg {

struct GradCheckOptions {
    double eps = 1e-5;
    // 0 checks every entry; otherwise an evenly strided subset per tensor.
    int64_t max_entries_per_tensor = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    bool failed_non_finite = false;
    std::string worst_location;

    bool ok(double tol) const { return !failed_non_finite && max_rel_error < tol; }
};

// build_loss constructs the forward pass on the given tape and returns a
// scalar loss. params are the tensors whose gradients get verified.
GradCheckResult grad_check(const std::function<TensorPtr(Tape&)>& build_loss,
                           const std::vector<TensorPtr>& params,
                           const GradCheckOptions& options = {});

}  // namespace ergoseg

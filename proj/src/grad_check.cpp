#include "ergoseg/grad_check.hpp"

#include <cmath>

namespace ergoseg {

GradCheckResult grad_check(const std::function<TensorPtr(Tape&)>& build_loss,
                           const std::vector<TensorPtr>& params,
                           const GradCheckOptions& options) {
    GradCheckResult result;

    Tape tape;
    TensorPtr loss = build_loss(tape);
    for (const auto& p : params) p->zero_grad();
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    auto eval = [&]() {
        Tape t;
        t.recording = false;
        return build_loss(t)->item();
    };

    for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& p = params[pi];
        const int64_t n = p->size();
        int64_t stride = 1;
        if (options.max_entries_per_tensor > 0 && n > options.max_entries_per_tensor)
            stride = (n + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor;
        for (int64_t i = 0; i < n; i += stride) {
            const double saved = p->values[i];
            p->values[i] = saved + options.eps;
            const double up = eval();
            p->values[i] = saved - options.eps;
            const double down = eval();
            p->values[i] = saved;

            const double numeric = (up - down) / (2.0 * options.eps);
            const double a = analytic[pi][static_cast<size_t>(i)];
            const std::string where =
                (p->name.empty() ? "param" + std::to_string(pi) : p->name) + "[" +
                std::to_string(i) + "]";
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                result.failed_non_finite = true;
                result.worst_location = where;
                return result;
            }
            const double rel = std::fabs(a - numeric) / (std::fabs(a) + std::fabs(numeric) + 1e-12);
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_location = where;
            }
        }
    }
    return result;
}

}  // namespace ergoseg

#include "ergoseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ergoseg/kernels.hpp"

namespace ergoseg::ops {

namespace {

using kernels::Exec;

Exec exec() { return kernels::default_exec(); }

template <class F>
inline void par_for(int64_t n, F&& f) {
    if (exec() == Exec::parallel && n >= 16384) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) f(i);
    } else {
        for (int64_t i = 0; i < n; ++i) f(i);
    }
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape)
        throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                                " vs " + shape_str(b->shape));
}

TensorPtr make_output(Shape shape, std::initializer_list<TensorPtr> inputs) {
    auto y = Tensor::zeros(std::move(shape));
    for (const auto& in : inputs)
        if (in && in->requires_grad) y->requires_grad = true;
    return y;
}

int64_t rows_of(const TensorPtr& x) { return x->rank() == 0 ? 1 : x->dim(0); }
int64_t cols_of(const TensorPtr& x) {
    const int64_t r = rows_of(x);
    return r == 0 ? 0 : x->size() / r;
}

}  // namespace

FrameMask make_mask(std::vector<uint8_t> mask) {
    return std::make_shared<const std::vector<uint8_t>>(std::move(mask));
}

FrameMask all_true(int64_t frames) {
    return make_mask(std::vector<uint8_t>(static_cast<size_t>(frames), 1));
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "add");
    auto y = make_output(a->shape, {a, b});
    const int64_t n = a->size();
    par_for(n, [&](int64_t i) { y->values[i] = a->values[i] + b->values[i]; });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {a, b}, [a, b, y]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < y->size(); ++i) a->grad[i] += y->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < y->size(); ++i) b->grad[i] += y->grad[i];
            }
        });
    }
    return y;
}

TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "sub");
    auto y = make_output(a->shape, {a, b});
    par_for(a->size(), [&](int64_t i) { y->values[i] = a->values[i] - b->values[i]; });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {a, b}, [a, b, y]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < y->size(); ++i) a->grad[i] += y->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < y->size(); ++i) b->grad[i] -= y->grad[i];
            }
        });
    }
    return y;
}

TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "mul");
    auto y = make_output(a->shape, {a, b});
    par_for(a->size(), [&](int64_t i) { y->values[i] = a->values[i] * b->values[i]; });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {a, b}, [a, b, y]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < y->size(); ++i) a->grad[i] += y->grad[i] * b->values[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < y->size(); ++i) b->grad[i] += y->grad[i] * a->values[i];
            }
        });
    }
    return y;
}

TensorPtr scale(Tape& tape, const TensorPtr& x, double factor) {
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = x->values[i] * factor; });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, factor]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i) x->grad[i] += y->grad[i] * factor;
        });
    }
    return y;
}

TensorPtr add_bias(Tape& tape, const TensorPtr& x, const TensorPtr& bias) {
    const int64_t cols = cols_of(x);
    if (bias->size() != cols)
        throw ContractViolation("add_bias: bias " + shape_str(bias->shape) +
                                " does not match row width " + std::to_string(cols));
    const int64_t rows = rows_of(x);
    auto y = make_output(x->shape, {x, bias});
    par_for(rows, [&](int64_t r) {
        const double* xr = x->values.data() + r * cols;
        double* yr = y->values.data() + r * cols;
        for (int64_t c = 0; c < cols; ++c) yr[c] = xr[c] + bias->values[c];
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x, bias}, [x, bias, y, rows, cols]() {
            if (x->requires_grad) {
                x->ensure_grad();
                for (int64_t i = 0; i < y->size(); ++i) x->grad[i] += y->grad[i];
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int64_t r = 0; r < rows; ++r) {
                    const double* gr = y->grad.data() + r * cols;
                    for (int64_t c = 0; c < cols; ++c) bias->grad[c] += gr[c];
                }
            }
        });
    }
    return y;
}

TensorPtr relu(Tape& tape, const TensorPtr& x) {
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = x->values[i] > 0.0 ? x->values[i] : 0.0; });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i)
                if (x->values[i] > 0.0) x->grad[i] += y->grad[i];
        });
    }
    return y;
}

TensorPtr tanh_(Tape& tape, const TensorPtr& x) {
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = std::tanh(x->values[i]); });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i)
                x->grad[i] += y->grad[i] * (1.0 - y->values[i] * y->values[i]);
        });
    }
    return y;
}

TensorPtr sigmoid(Tape& tape, const TensorPtr& x) {
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = 1.0 / (1.0 + std::exp(-x->values[i])); });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i)
                x->grad[i] += y->grad[i] * y->values[i] * (1.0 - y->values[i]);
        });
    }
    return y;
}

TensorPtr square(Tape& tape, const TensorPtr& x) {
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = x->values[i] * x->values[i]; });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i) x->grad[i] += y->grad[i] * 2.0 * x->values[i];
        });
    }
    return y;
}

TensorPtr abs_(Tape& tape, const TensorPtr& x) {
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = std::fabs(x->values[i]); });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i) {
                const double xv = x->values[i];
                if (xv > 0.0)
                    x->grad[i] += y->grad[i];
                else if (xv < 0.0)
                    x->grad[i] -= y->grad[i];
            }
        });
    }
    return y;
}

TensorPtr clamp_min(Tape& tape, const TensorPtr& x, double floor) {
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = std::max(x->values[i], floor); });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, floor]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i)
                if (x->values[i] > floor) x->grad[i] += y->grad[i];
        });
    }
    return y;
}

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0))
        throw ContractViolation("matmul: incompatible shapes " + shape_str(a->shape) + " @ " +
                                shape_str(b->shape));
    const int64_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
    auto y = make_output({m, n}, {a, b});
    kernels::matmul_nn(a->values.data(), b->values.data(), y->values.data(), m, k, n, false, exec());
    if (tape.recording && y->requires_grad) {
        tape.record(y, {a, b}, [a, b, y, m, k, n]() {
            if (a->requires_grad) {
                a->ensure_grad();
                kernels::matmul_nt(y->grad.data(), b->values.data(), a->grad.data(), m, n, k, true,
                                   exec());
            }
            if (b->requires_grad) {
                b->ensure_grad();
                kernels::matmul_tn(a->values.data(), y->grad.data(), b->grad.data(), k, m, n, true,
                                   exec());
            }
        });
    }
    return y;
}

TensorPtr reshape(Tape& tape, const TensorPtr& x, Shape new_shape) {
    if (numel(new_shape) != x->size())
        throw ContractViolation("reshape: cannot view " + shape_str(x->shape) + " as " +
                                shape_str(new_shape));
    auto y = make_output(std::move(new_shape), {x});
    y->values = x->values;
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i) x->grad[i] += y->grad[i];
        });
    }
    return y;
}

TensorPtr concat_cols(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(0) != b->dim(0))
        throw ContractViolation("concat_cols: row mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
    const int64_t rows = a->dim(0), ca = a->dim(1), cb = b->dim(1);
    auto y = make_output({rows, ca + cb}, {a, b});
    par_for(rows, [&](int64_t r) {
        double* yr = y->values.data() + r * (ca + cb);
        std::memcpy(yr, a->values.data() + r * ca, static_cast<size_t>(ca) * sizeof(double));
        std::memcpy(yr + ca, b->values.data() + r * cb, static_cast<size_t>(cb) * sizeof(double));
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {a, b}, [a, b, y, rows, ca, cb]() {
            for (int64_t r = 0; r < rows; ++r) {
                const double* gr = y->grad.data() + r * (ca + cb);
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (int64_t c = 0; c < ca; ++c) a->grad[r * ca + c] += gr[c];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (int64_t c = 0; c < cb; ++c) b->grad[r * cb + c] += gr[ca + c];
                }
            }
        });
    }
    return y;
}

TensorPtr slice_rows(Tape& tape, const TensorPtr& x, int64_t begin, int64_t end) {
    const int64_t rows = rows_of(x), cols = cols_of(x);
    if (begin < 0 || end > rows || begin >= end)
        throw ContractViolation("slice_rows: bad range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") of " + std::to_string(rows));
    Shape out_shape = x->shape;
    out_shape[0] = end - begin;
    auto y = make_output(std::move(out_shape), {x});
    std::memcpy(y->values.data(), x->values.data() + begin * cols,
                static_cast<size_t>((end - begin) * cols) * sizeof(double));
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, begin, cols]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i) x->grad[begin * cols + i] += y->grad[i];
        });
    }
    return y;
}

TensorPtr pad_rows(Tape& tape, const TensorPtr& x, int64_t total_rows, double fill) {
    const int64_t rows = rows_of(x), cols = cols_of(x);
    if (total_rows < rows) throw ContractViolation("pad_rows: target shorter than input");
    Shape out_shape = x->shape;
    out_shape[0] = total_rows;
    auto y = make_output(std::move(out_shape), {x});
    std::memcpy(y->values.data(), x->values.data(), static_cast<size_t>(rows * cols) * sizeof(double));
    std::fill(y->values.begin() + rows * cols, y->values.end(), fill);
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, rows, cols]() {
            x->ensure_grad();
            for (int64_t i = 0; i < rows * cols; ++i) x->grad[i] += y->grad[i];
        });
    }
    return y;
}

TensorPtr sum_all(Tape& tape, const TensorPtr& x) {
    auto y = make_output({1}, {x});
    double acc = 0.0;
    for (int64_t i = 0; i < x->size(); ++i) acc += x->values[i];
    y->values[0] = acc;
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y]() {
            x->ensure_grad();
            const double g = y->grad[0];
            for (int64_t i = 0; i < x->size(); ++i) x->grad[i] += g;
        });
    }
    return y;
}

TensorPtr masked_sum(Tape& tape, const TensorPtr& x, const FrameMask& mask) {
    const int64_t rows = rows_of(x), cols = cols_of(x);
    if (static_cast<int64_t>(mask->size()) != rows)
        throw ContractViolation("masked_sum: mask length " + std::to_string(mask->size()) +
                                " vs rows " + std::to_string(rows));
    auto y = make_output({1}, {x});
    double acc = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        if (!(*mask)[static_cast<size_t>(r)]) continue;
        const double* xr = x->values.data() + r * cols;
        for (int64_t c = 0; c < cols; ++c) acc += xr[c];
    }
    y->values[0] = acc;
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, mask, rows, cols]() {
            x->ensure_grad();
            const double g = y->grad[0];
            for (int64_t r = 0; r < rows; ++r) {
                if (!(*mask)[static_cast<size_t>(r)]) continue;
                for (int64_t c = 0; c < cols; ++c) x->grad[r * cols + c] += g;
            }
        });
    }
    return y;
}

TensorPtr softmax_rows(Tape& tape, const TensorPtr& x) {
    const int64_t rows = rows_of(x), cols = cols_of(x);
    auto y = make_output(x->shape, {x});
    par_for(rows, [&](int64_t r) {
        const double* xr = x->values.data() + r * cols;
        double* yr = y->values.data() + r * cols;
        double m = xr[0];
        for (int64_t c = 1; c < cols; ++c) m = std::max(m, xr[c]);
        double s = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - m);
            s += yr[c];
        }
        const double inv = 1.0 / s;
        for (int64_t c = 0; c < cols; ++c) yr[c] *= inv;
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, rows, cols]() {
            x->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* yr = y->values.data() + r * cols;
                const double* gr = y->grad.data() + r * cols;
                double dot = 0.0;
                for (int64_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
                for (int64_t c = 0; c < cols; ++c) x->grad[r * cols + c] += yr[c] * (gr[c] - dot);
            }
        });
    }
    return y;
}

TensorPtr causal_conv1d(Tape& tape, const TensorPtr& x, const TensorPtr& weight,
                        const TensorPtr& bias, int64_t dilation) {
    if (x->rank() != 2 || weight->rank() != 3)
        throw ContractViolation("causal_conv1d: expected (T,Cin) input and (k,Cin,Cout) weight");
    const int64_t frames = x->dim(0), cin = x->dim(1);
    const int64_t taps = weight->dim(0), cout = weight->dim(2);
    if (weight->dim(1) != cin)
        throw ContractViolation("causal_conv1d: weight channels " + std::to_string(weight->dim(1)) +
                                " vs input " + std::to_string(cin));
    if (bias->size() != cout) throw ContractViolation("causal_conv1d: bias width mismatch");
    if (dilation < 1) throw ContractViolation("causal_conv1d: dilation must be >= 1");

    auto y = make_output({frames, cout}, {x, weight, bias});
    par_for(frames, [&](int64_t t) {
        double* yr = y->values.data() + t * cout;
        for (int64_t c = 0; c < cout; ++c) yr[c] = bias->values[c];
    });
    for (int64_t j = 0; j < taps; ++j) {
        const int64_t offset = (taps - 1 - j) * dilation;  // left shift of this tap
        if (offset >= frames) continue;
        kernels::matmul_nn(x->values.data(), weight->values.data() + j * cin * cout,
                           y->values.data() + offset * cout, frames - offset, cin, cout, true,
                           exec());
    }
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x, weight, bias}, [x, weight, bias, y, frames, cin, cout, taps, dilation]() {
            for (int64_t j = 0; j < taps; ++j) {
                const int64_t offset = (taps - 1 - j) * dilation;
                if (offset >= frames) continue;
                const int64_t span = frames - offset;
                if (x->requires_grad) {
                    x->ensure_grad();
                    kernels::matmul_nt(y->grad.data() + offset * cout,
                                       weight->values.data() + j * cin * cout, x->grad.data(), span,
                                       cout, cin, true, exec());
                }
                if (weight->requires_grad) {
                    weight->ensure_grad();
                    kernels::matmul_tn(x->values.data(), y->grad.data() + offset * cout,
                                       weight->grad.data() + j * cin * cout, cin, span, cout, true,
                                       exec());
                }
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int64_t t = 0; t < frames; ++t) {
                    const double* gr = y->grad.data() + t * cout;
                    for (int64_t c = 0; c < cout; ++c) bias->grad[c] += gr[c];
                }
            }
        });
    }
    return y;
}

TensorPtr max_pool_time(Tape& tape, const TensorPtr& x) {
    const int64_t frames = rows_of(x), cols = cols_of(x);
    if (frames % 2 != 0) throw ContractViolation("max_pool_time: frame count must be even");
    const int64_t out_frames = frames / 2;
    auto y = make_output({out_frames, cols}, {x});
    auto arg = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(out_frames * cols));
    par_for(out_frames, [&](int64_t t) {
        const double* x0 = x->values.data() + (2 * t) * cols;
        const double* x1 = x0 + cols;
        double* yr = y->values.data() + t * cols;
        uint8_t* ar = arg->data() + t * cols;
        for (int64_t c = 0; c < cols; ++c) {
            if (x1[c] > x0[c]) {
                yr[c] = x1[c];
                ar[c] = 1;
            } else {
                yr[c] = x0[c];
                ar[c] = 0;
            }
        }
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, arg, out_frames, cols]() {
            x->ensure_grad();
            for (int64_t t = 0; t < out_frames; ++t) {
                const double* gr = y->grad.data() + t * cols;
                const uint8_t* ar = arg->data() + t * cols;
                for (int64_t c = 0; c < cols; ++c)
                    x->grad[(2 * t + ar[c]) * cols + c] += gr[c];
            }
        });
    }
    return y;
}

TensorPtr avg_pool_time(Tape& tape, const TensorPtr& x) {
    const int64_t frames = rows_of(x), cols = cols_of(x);
    if (frames % 2 != 0) throw ContractViolation("avg_pool_time: frame count must be even");
    const int64_t out_frames = frames / 2;
    auto y = make_output({out_frames, cols}, {x});
    par_for(out_frames, [&](int64_t t) {
        const double* x0 = x->values.data() + (2 * t) * cols;
        const double* x1 = x0 + cols;
        double* yr = y->values.data() + t * cols;
        for (int64_t c = 0; c < cols; ++c) yr[c] = 0.5 * (x0[c] + x1[c]);
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, out_frames, cols]() {
            x->ensure_grad();
            for (int64_t t = 0; t < out_frames; ++t) {
                const double* gr = y->grad.data() + t * cols;
                for (int64_t c = 0; c < cols; ++c) {
                    const double half = 0.5 * gr[c];
                    x->grad[(2 * t) * cols + c] += half;
                    x->grad[(2 * t + 1) * cols + c] += half;
                }
            }
        });
    }
    return y;
}

TensorPtr upsample_time(Tape& tape, const TensorPtr& x) {
    const int64_t frames = rows_of(x), cols = cols_of(x);
    auto y = make_output({frames * 2, cols}, {x});
    par_for(frames, [&](int64_t t) {
        const double* xr = x->values.data() + t * cols;
        std::memcpy(y->values.data() + (2 * t) * cols, xr, static_cast<size_t>(cols) * sizeof(double));
        std::memcpy(y->values.data() + (2 * t + 1) * cols, xr,
                    static_cast<size_t>(cols) * sizeof(double));
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, frames, cols]() {
            x->ensure_grad();
            for (int64_t t = 0; t < frames; ++t) {
                const double* g0 = y->grad.data() + (2 * t) * cols;
                const double* g1 = g0 + cols;
                for (int64_t c = 0; c < cols; ++c) x->grad[t * cols + c] += g0[c] + g1[c];
            }
        });
    }
    return y;
}

TensorPtr normalized_relu(Tape& tape, const TensorPtr& x, double eps) {
    const int64_t rows = rows_of(x), cols = cols_of(x);
    auto y = make_output(x->shape, {x});
    auto row_max = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    auto arg_max = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(rows));
    par_for(rows, [&](int64_t r) {
        const double* xr = x->values.data() + r * cols;
        double* yr = y->values.data() + r * cols;
        double m = 0.0;
        int32_t am = 0;
        for (int64_t c = 0; c < cols; ++c) {
            const double v = xr[c] > 0.0 ? xr[c] : 0.0;
            yr[c] = v;
            if (v > m) {
                m = v;
                am = static_cast<int32_t>(c);
            }
        }
        (*row_max)[static_cast<size_t>(r)] = m;
        (*arg_max)[static_cast<size_t>(r)] = am;
        const double inv = 1.0 / (m + eps);
        for (int64_t c = 0; c < cols; ++c) yr[c] *= inv;
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, row_max, arg_max, rows, cols, eps]() {
            x->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double m = (*row_max)[static_cast<size_t>(r)];
                const double denom = m + eps;
                const double* gr = y->grad.data() + r * cols;
                const double* yr = y->values.data() + r * cols;
                const double* xr = x->values.data() + r * cols;
                double* xg = x->grad.data() + r * cols;
                // d/dr part at fixed max, then the max's own contribution
                double dm = 0.0;
                for (int64_t c = 0; c < cols; ++c) dm -= gr[c] * yr[c] / denom;
                for (int64_t c = 0; c < cols; ++c) {
                    if (xr[c] <= 0.0) continue;
                    double d = gr[c] / denom;
                    if (c == (*arg_max)[static_cast<size_t>(r)] && m > 0.0) d += dm;
                    xg[c] += d;
                }
            }
        });
    }
    return y;
}

TensorPtr adaptive_avg_pool_cols(Tape& tape, const TensorPtr& x, int64_t out_cols) {
    const int64_t rows = rows_of(x), in_cols = cols_of(x);
    if (out_cols < 1 || out_cols > in_cols)
        throw ContractViolation("adaptive_avg_pool_cols: bad output width " +
                                std::to_string(out_cols));
    // Bin i covers [floor(i*L/out), ceil((i+1)*L/out)); bins may overlap.
    auto starts = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out_cols));
    auto ends = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out_cols));
    for (int64_t i = 0; i < out_cols; ++i) {
        (*starts)[static_cast<size_t>(i)] = (i * in_cols) / out_cols;
        (*ends)[static_cast<size_t>(i)] = ((i + 1) * in_cols + out_cols - 1) / out_cols;
    }
    auto y = make_output({rows, out_cols}, {x});
    par_for(rows, [&](int64_t r) {
        const double* xr = x->values.data() + r * in_cols;
        double* yr = y->values.data() + r * out_cols;
        for (int64_t i = 0; i < out_cols; ++i) {
            const int64_t s = (*starts)[static_cast<size_t>(i)], e = (*ends)[static_cast<size_t>(i)];
            double acc = 0.0;
            for (int64_t j = s; j < e; ++j) acc += xr[j];
            yr[i] = acc / static_cast<double>(e - s);
        }
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, starts, ends, rows, in_cols, out_cols]() {
            x->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* gr = y->grad.data() + r * out_cols;
                double* xg = x->grad.data() + r * in_cols;
                for (int64_t i = 0; i < out_cols; ++i) {
                    const int64_t s = (*starts)[static_cast<size_t>(i)],
                                  e = (*ends)[static_cast<size_t>(i)];
                    const double share = gr[i] / static_cast<double>(e - s);
                    for (int64_t j = s; j < e; ++j) xg[j] += share;
                }
            }
        });
    }
    return y;
}

TensorPtr apply_frame_mask(Tape& tape, const TensorPtr& x, const FrameMask& mask, double fill) {
    const int64_t rows = rows_of(x), cols = cols_of(x);
    if (static_cast<int64_t>(mask->size()) != rows)
        throw ContractViolation("apply_frame_mask: mask length mismatch");
    auto y = make_output(x->shape, {x});
    par_for(rows, [&](int64_t r) {
        double* yr = y->values.data() + r * cols;
        if ((*mask)[static_cast<size_t>(r)]) {
            std::memcpy(yr, x->values.data() + r * cols, static_cast<size_t>(cols) * sizeof(double));
        } else {
            std::fill(yr, yr + cols, fill);
        }
    });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, mask, rows, cols]() {
            x->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                if (!(*mask)[static_cast<size_t>(r)]) continue;
                const double* gr = y->grad.data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) x->grad[r * cols + c] += gr[c];
            }
        });
    }
    return y;
}

TensorPtr dropout(Tape& tape, const TensorPtr& x, double rate, Rng& rng, bool training) {
    if (!training || rate <= 0.0) return x;
    if (rate >= 1.0) throw ContractViolation("dropout: rate must be < 1");
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(x->values.size());
    for (size_t i = 0; i < mask->size(); ++i)
        (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    auto y = make_output(x->shape, {x});
    par_for(x->size(), [&](int64_t i) { y->values[i] = x->values[i] * (*mask)[static_cast<size_t>(i)]; });
    if (tape.recording && y->requires_grad) {
        tape.record(y, {x}, [x, y, mask]() {
            x->ensure_grad();
            for (int64_t i = 0; i < y->size(); ++i)
                x->grad[i] += y->grad[i] * (*mask)[static_cast<size_t>(i)];
        });
    }
    return y;
}

TensorPtr edge_weighted_aggregate(Tape& tape,
                                  const std::shared_ptr<const std::vector<double>>& adjacency,
                                  const TensorPtr& edge_mask, const TensorPtr& x) {
    if (x->rank() != 3) throw ContractViolation("edge_weighted_aggregate: expected (T,N,C) input");
    const int64_t frames = x->dim(0), nodes = x->dim(1), cols = x->dim(2);
    if (static_cast<int64_t>(adjacency->size()) != nodes * nodes ||
        edge_mask->size() != nodes * nodes)
        throw ContractViolation("edge_weighted_aggregate: adjacency/mask must be N x N");

    auto w = std::make_shared<std::vector<double>>(static_cast<size_t>(nodes * nodes));
    for (int64_t i = 0; i < nodes * nodes; ++i)
        (*w)[static_cast<size_t>(i)] = (*adjacency)[static_cast<size_t>(i)] * edge_mask->values[i];

    auto y = make_output(x->shape, {edge_mask, x});
    kernels::frame_matmul_left(w->data(), x->values.data(), y->values.data(), frames, nodes, cols,
                               false, exec());
    if (tape.recording && y->requires_grad) {
        tape.record(y, {edge_mask, x}, [adjacency, edge_mask, x, y, w, frames, nodes, cols]() {
            if (x->requires_grad) {
                x->ensure_grad();
                std::vector<double> wt(static_cast<size_t>(nodes * nodes));
                for (int64_t i = 0; i < nodes; ++i)
                    for (int64_t j = 0; j < nodes; ++j)
                        wt[static_cast<size_t>(j * nodes + i)] = (*w)[static_cast<size_t>(i * nodes + j)];
                kernels::frame_matmul_left(wt.data(), y->grad.data(), x->grad.data(), frames, nodes,
                                           cols, true, exec());
            }
            if (edge_mask->requires_grad) {
                edge_mask->ensure_grad();
                std::vector<double> dw(static_cast<size_t>(nodes * nodes), 0.0);
                kernels::frame_outer_accumulate(y->grad.data(), x->values.data(), dw.data(), frames,
                                                nodes, cols, exec());
                for (int64_t i = 0; i < nodes * nodes; ++i)
                    edge_mask->grad[i] += (*adjacency)[static_cast<size_t>(i)] * dw[static_cast<size_t>(i)];
            }
        });
    }
    return y;
}

TensorPtr lstm(Tape& tape, const TensorPtr& x, const TensorPtr& w_input,
               const TensorPtr& w_hidden, const TensorPtr& bias) {
    if (x->rank() != 2 || w_input->rank() != 2 || w_hidden->rank() != 2)
        throw ContractViolation("lstm: expected 2-D input and weights");
    const int64_t frames = x->dim(0), fin = x->dim(1);
    const int64_t hidden = w_hidden->dim(0);
    const int64_t gates = 4 * hidden;
    if (w_input->dim(0) != fin || w_input->dim(1) != gates || w_hidden->dim(1) != gates ||
        bias->size() != gates)
        throw ContractViolation("lstm: weight shapes inconsistent with hidden size");

    auto y = make_output({frames, hidden}, {x, w_input, w_hidden, bias});

    // Pre-activation contribution of the input for all steps at once.
    std::vector<double> pre(static_cast<size_t>(frames * gates));
    kernels::matmul_nn(x->values.data(), w_input->values.data(), pre.data(), frames, fin, gates,
                       false, exec());

    const size_t cache_n = static_cast<size_t>(frames * hidden);
    auto gi = std::make_shared<std::vector<double>>(cache_n);
    auto gf = std::make_shared<std::vector<double>>(cache_n);
    auto gc = std::make_shared<std::vector<double>>(cache_n);
    auto go = std::make_shared<std::vector<double>>(cache_n);
    auto cell = std::make_shared<std::vector<double>>(cache_n);
    auto cell_tanh = std::make_shared<std::vector<double>>(cache_n);

    std::vector<double> h_prev(static_cast<size_t>(hidden), 0.0);
    std::vector<double> c_prev(static_cast<size_t>(hidden), 0.0);
    std::vector<double> a(static_cast<size_t>(gates));
    for (int64_t t = 0; t < frames; ++t) {
        const double* pre_t = pre.data() + t * gates;
        for (int64_t q = 0; q < gates; ++q) a[static_cast<size_t>(q)] = pre_t[q] + bias->values[q];
        for (int64_t p = 0; p < hidden; ++p) {
            const double hv = h_prev[static_cast<size_t>(p)];
            if (hv == 0.0) continue;
            const double* wrow = w_hidden->values.data() + p * gates;
            for (int64_t q = 0; q < gates; ++q) a[static_cast<size_t>(q)] += hv * wrow[q];
        }
        double* yr = y->values.data() + t * hidden;
        for (int64_t u = 0; u < hidden; ++u) {
            const double iv = 1.0 / (1.0 + std::exp(-a[static_cast<size_t>(u)]));
            const double fv = 1.0 / (1.0 + std::exp(-a[static_cast<size_t>(hidden + u)]));
            const double gv = std::tanh(a[static_cast<size_t>(2 * hidden + u)]);
            const double ov = 1.0 / (1.0 + std::exp(-a[static_cast<size_t>(3 * hidden + u)]));
            const double cv = fv * c_prev[static_cast<size_t>(u)] + iv * gv;
            const double tc = std::tanh(cv);
            const size_t idx = static_cast<size_t>(t * hidden + u);
            (*gi)[idx] = iv;
            (*gf)[idx] = fv;
            (*gc)[idx] = gv;
            (*go)[idx] = ov;
            (*cell)[idx] = cv;
            (*cell_tanh)[idx] = tc;
            yr[u] = ov * tc;
            c_prev[static_cast<size_t>(u)] = cv;
        }
        std::memcpy(h_prev.data(), yr, static_cast<size_t>(hidden) * sizeof(double));
    }

    if (tape.recording && y->requires_grad) {
        tape.record(y, {x, w_input, w_hidden, bias},
                    [x, w_input, w_hidden, bias, y, gi, gf, gc, go, cell, cell_tanh, frames, fin,
                     hidden, gates]() {
            std::vector<double> da(static_cast<size_t>(frames * gates), 0.0);
            std::vector<double> dh(static_cast<size_t>(hidden), 0.0);
            std::vector<double> dc(static_cast<size_t>(hidden), 0.0);
            for (int64_t t = frames - 1; t >= 0; --t) {
                const double* gr = y->grad.data() + t * hidden;
                double* da_t = da.data() + t * gates;
                for (int64_t u = 0; u < hidden; ++u) {
                    const size_t idx = static_cast<size_t>(t * hidden + u);
                    const double dh_u = gr[u] + dh[static_cast<size_t>(u)];
                    const double tc = (*cell_tanh)[idx];
                    const double ov = (*go)[idx];
                    const double dov = dh_u * tc;
                    double dc_u = dc[static_cast<size_t>(u)] + dh_u * ov * (1.0 - tc * tc);
                    const double iv = (*gi)[idx], fv = (*gf)[idx], gv = (*gc)[idx];
                    const double c_prev_v =
                        t > 0 ? (*cell)[static_cast<size_t>((t - 1) * hidden + u)] : 0.0;
                    da_t[u] = dc_u * gv * iv * (1.0 - iv);
                    da_t[hidden + u] = dc_u * c_prev_v * fv * (1.0 - fv);
                    da_t[2 * hidden + u] = dc_u * iv * (1.0 - gv * gv);
                    da_t[3 * hidden + u] = dov * ov * (1.0 - ov);
                    dc[static_cast<size_t>(u)] = dc_u * fv;
                }
                // dh_{t-1} = W_h . da_t
                for (int64_t p = 0; p < hidden; ++p) {
                    const double* wrow = w_hidden->values.data() + p * gates;
                    double acc = 0.0;
                    for (int64_t q = 0; q < gates; ++q) acc += wrow[q] * da_t[q];
                    dh[static_cast<size_t>(p)] = acc;
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                kernels::matmul_nt(da.data(), w_input->values.data(), x->grad.data(), frames, gates,
                                   fin, true, exec());
            }
            if (w_input->requires_grad) {
                w_input->ensure_grad();
                kernels::matmul_tn(x->values.data(), da.data(), w_input->grad.data(), fin, frames,
                                   gates, true, exec());
            }
            if (w_hidden->requires_grad) {
                w_hidden->ensure_grad();
                // h_{t-1} rows: zero row then y rows 0..frames-2
                if (frames > 1)
                    kernels::matmul_tn(y->values.data(), da.data() + gates,
                                       w_hidden->grad.data(), hidden, frames - 1, gates, true,
                                       exec());
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int64_t t = 0; t < frames; ++t) {
                    const double* da_t = da.data() + t * gates;
                    for (int64_t q = 0; q < gates; ++q) bias->grad[q] += da_t[q];
                }
            }
        });
    }
    return y;
}

TensorPtr cross_entropy_masked(Tape& tape, const TensorPtr& logits,
                               const std::vector<int>& labels, const FrameMask& mask) {
    if (logits->rank() != 2) throw ContractViolation("cross_entropy_masked: expected (T,Cl) logits");
    const int64_t frames = logits->dim(0), classes = logits->dim(1);
    if (static_cast<int64_t>(labels.size()) != frames ||
        static_cast<int64_t>(mask->size()) != frames)
        throw ContractViolation("cross_entropy_masked: labels/mask length mismatch");
    for (int64_t t = 0; t < frames; ++t) {
        if (!(*mask)[static_cast<size_t>(t)]) continue;
        if (labels[static_cast<size_t>(t)] < 0 || labels[static_cast<size_t>(t)] >= classes)
            throw ContractViolation("cross_entropy_masked: label " +
                                    std::to_string(labels[static_cast<size_t>(t)]) +
                                    " out of range at frame " + std::to_string(t));
    }

    auto probs = std::make_shared<std::vector<double>>(logits->values.size());
    auto y = make_output({1}, {logits});
    double total = 0.0;
    for (int64_t t = 0; t < frames; ++t) {
        if (!(*mask)[static_cast<size_t>(t)]) continue;
        const double* lr = logits->values.data() + t * classes;
        double m = lr[0];
        for (int64_t c = 1; c < classes; ++c) m = std::max(m, lr[c]);
        double s = 0.0;
        double* pr = probs->data() + t * classes;
        for (int64_t c = 0; c < classes; ++c) {
            pr[c] = std::exp(lr[c] - m);
            s += pr[c];
        }
        const double inv = 1.0 / s;
        for (int64_t c = 0; c < classes; ++c) pr[c] *= inv;
        const double lse = m + std::log(s);
        total += lse - lr[labels[static_cast<size_t>(t)]];
    }
    y->values[0] = total;
    if (tape.recording && y->requires_grad) {
        auto labels_copy = std::make_shared<std::vector<int>>(labels);
        tape.record(y, {logits}, [logits, y, probs, labels_copy, mask, frames, classes]() {
            logits->ensure_grad();
            const double g = y->grad[0];
            for (int64_t t = 0; t < frames; ++t) {
                if (!(*mask)[static_cast<size_t>(t)]) continue;
                const double* pr = probs->data() + t * classes;
                double* lg = logits->grad.data() + t * classes;
                const int label = (*labels_copy)[static_cast<size_t>(t)];
                for (int64_t c = 0; c < classes; ++c)
                    lg[c] += g * (pr[c] - (c == label ? 1.0 : 0.0));
            }
        });
    }
    return y;
}

}  // namespace ergoseg::ops

#include "ergoseg/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>

namespace ergoseg::kernels {

namespace {

std::atomic<Exec> g_default{Exec::parallel};

Exec initial_exec() {
    if (const char* env = std::getenv("ERGOSEG_EXEC")) {
        if (std::strcmp(env, "serial") == 0) return Exec::serial;
    }
    return Exec::parallel;
}

struct ExecInit {
    ExecInit() { g_default.store(initial_exec()); }
} g_exec_init;

inline void nn_row(const double* a, const double* b, double* c,
                   int64_t i, int64_t k, int64_t n, bool accumulate) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void nt_row(const double* a, const double* b, double* c,
                   int64_t i, int64_t k, int64_t n, bool accumulate) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] = accumulate ? crow[j] + acc : acc;
    }
}

inline void tn_row(const double* a, const double* b, double* c,
                   int64_t i, int64_t m, int64_t k, int64_t n, bool accumulate) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int64_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        const double* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void frame_left_one(const double* w, const double* x, double* y,
                           int64_t f, int64_t rows, int64_t cols, bool accumulate) {
    const double* xf = x + f * rows * cols;
    double* yf = y + f * rows * cols;
    for (int64_t i = 0; i < rows; ++i) {
        double* yrow = yf + i * cols;
        if (!accumulate) std::fill(yrow, yrow + cols, 0.0);
        const double* wrow = w + i * rows;
        for (int64_t j = 0; j < rows; ++j) {
            const double wv = wrow[j];
            if (wv == 0.0) continue;  // sparse adjacency rows
            const double* xrow = xf + j * cols;
            for (int64_t cidx = 0; cidx < cols; ++cidx) yrow[cidx] += wv * xrow[cidx];
        }
    }
}

inline void frame_outer_row(const double* dy, const double* x, double* dw,
                            int64_t i, int64_t frames, int64_t rows, int64_t cols) {
    double* dwrow = dw + i * rows;
    for (int64_t f = 0; f < frames; ++f) {
        const double* dyrow = dy + (f * rows + i) * cols;
        const double* xf = x + f * rows * cols;
        for (int64_t j = 0; j < rows; ++j) {
            const double* xrow = xf + j * cols;
            double acc = 0.0;
            for (int64_t cidx = 0; cidx < cols; ++cidx) acc += dyrow[cidx] * xrow[cidx];
            dwrow[j] += acc;
        }
    }
}

}  // namespace

Exec default_exec() { return g_default.load(); }
void set_default_exec(Exec mode) { g_default.store(mode); }

void matmul_nn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate, Exec mode) {
    if (mode == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n, accumulate);
    } else {
        for (int64_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n, accumulate);
    }
}

void matmul_nt(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate, Exec mode) {
    if (mode == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n, accumulate);
    } else {
        for (int64_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n, accumulate);
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate, Exec mode) {
    if (mode == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) tn_row(a, b, c, i, m, k, n, accumulate);
    } else {
        for (int64_t i = 0; i < m; ++i) tn_row(a, b, c, i, m, k, n, accumulate);
    }
}

void frame_matmul_left(const double* w, const double* x, double* y,
                       int64_t frames, int64_t rows, int64_t cols,
                       bool accumulate, Exec mode) {
    if (mode == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (int64_t f = 0; f < frames; ++f) frame_left_one(w, x, y, f, rows, cols, accumulate);
    } else {
        for (int64_t f = 0; f < frames; ++f) frame_left_one(w, x, y, f, rows, cols, accumulate);
    }
}

void frame_outer_accumulate(const double* dy, const double* x, double* dw,
                            int64_t frames, int64_t rows, int64_t cols,
                            Exec mode) {
    if (mode == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < rows; ++i) frame_outer_row(dy, x, dw, i, frames, rows, cols);
    } else {
        for (int64_t i = 0; i < rows; ++i) frame_outer_row(dy, x, dw, i, frames, rows, cols);
    }
}

}  // namespace ergoseg::kernels

#pragma once
// Dense inner kernels used by the tensor ops. Each kernel has a single
// inner body shared by the serial and OpenMP paths; parallel loops split
// output rows (one owner per output element, no cross-thread reductions),
// so both paths produce bit-identical results for any thread count.

#include <cstdint>

namespace ergoseg::kernels {

enum class Exec { serial, parallel };

// Process-wide default, overridable with ERGOSEG_EXEC=serial|parallel.
Exec default_exec();
void set_default_exec(Exec mode);

// c (m x n) = a (m x k) * b (k x n), accumulating into c when accumulate.
void matmul_nn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate, Exec mode);

// c (m x n) = a (m x k) * b^T where b is given as (n x k).
void matmul_nt(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate, Exec mode);

// c (m x n) = a^T * b where a is given as (k x m), b as (k x n).
void matmul_tn(const double* a, const double* b, double* c,
               int64_t m, int64_t k, int64_t n, bool accumulate, Exec mode);

// y (t x rows x cols) with y[f] = w (rows x rows) * x[f] per frame f.
void frame_matmul_left(const double* w, const double* x, double* y,
                       int64_t frames, int64_t rows, int64_t cols,
                       bool accumulate, Exec mode);

// dw (rows x rows) += sum_f dy[f] * x[f]^T over frames; dy, x are
// (frames x rows x cols). Used by the graph-aggregation backward.
void frame_outer_accumulate(const double* dy, const double* x, double* dw,
                            int64_t frames, int64_t rows, int64_t cols,
                            Exec mode);

}  // namespace ergoseg::kernels

#include "fusedet/kernels.hpp"

// Reference kernels. The blocked four-lane accumulation mirrors one 256-bit
// (or two 128-bit) vector register, which is what makes the SIMD variants
// bit-identical. Compiled with -ffp-contract=off.

namespace fusedet::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        l0 += a[i] * b[i];
        l1 += a[i + 1] * b[i + 1];
        l2 += a[i + 2] * b[i + 2];
        l3 += a[i + 3] * b[i + 3];
    }
    double r = (l0 + l2) + (l1 + l3);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double sum_scalar(const double* x, std::size_t n) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        l0 += x[i];
        l1 += x[i + 1];
        l2 += x[i + 2];
        l3 += x[i + 3];
    }
    double r = (l0 + l2) + (l1 + l3);
    for (; i < n; ++i) r += x[i];
    return r;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace fusedet::kernels::detail

#include <arm_neon.h>

#include "fusedet/kernels.hpp"

// NEON variants. Two 128-bit accumulators stand in for one 256-bit register:
// acc_a holds lanes 0/1, acc_b lanes 2/3. vaddq(acc_a, acc_b) therefore
// yields {l0+l2, l1+l3}, matching the scalar reference's reduction order.
// Compiled with -ffp-contract=off so a*b+c never fuses.

namespace fusedet::kernels::detail {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc_a = vdupq_n_f64(0.0);
    float64x2_t acc_b = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc_a = vaddq_f64(acc_a, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
        acc_b = vaddq_f64(acc_b,
                          vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
    }
    float64x2_t s = vaddq_f64(acc_a, acc_b);
    double r = vgetq_lane_f64(s, 0) + vgetq_lane_f64(s, 1);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double sum_neon(const double* x, std::size_t n) {
    float64x2_t acc_a = vdupq_n_f64(0.0);
    float64x2_t acc_b = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc_a = vaddq_f64(acc_a, vld1q_f64(x + i));
        acc_b = vaddq_f64(acc_b, vld1q_f64(x + i + 2));
    }
    float64x2_t s = vaddq_f64(acc_a, acc_b);
    double r = vgetq_lane_f64(s, 0) + vgetq_lane_f64(s, 1);
    for (; i < n; ++i) r += x[i];
    return r;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float64x2_t y0 = vld1q_f64(y + i);
        float64x2_t y1 = vld1q_f64(y + i + 2);
        y0 = vaddq_f64(y0, vmulq_f64(va, vld1q_f64(x + i)));
        y1 = vaddq_f64(y1, vmulq_f64(va, vld1q_f64(x + i + 2)));
        vst1q_f64(y + i, y0);
        vst1q_f64(y + i + 2, y1);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace fusedet::kernels::detail

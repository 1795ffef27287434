// AArch64 NEON variants. Built only when the target has NEON; compiled with
// -ffp-contract=off so the arithmetic kernels match the scalar reference.

#include "mgpf/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace mgpf::simd::detail {
namespace {

inline float64x2_t exp_pd(float64x2_t x) {
    x = vminq_f64(vmaxq_f64(x, vdupq_n_f64(-746.0)), vdupq_n_f64(709.78));
    const float64x2_t n = vrndnq_f64(vmulq_f64(x, vdupq_n_f64(1.4426950408889634073599)));
    float64x2_t r = vsubq_f64(x, vmulq_f64(n, vdupq_n_f64(6.93145751953125E-1)));
    r = vsubq_f64(r, vmulq_f64(n, vdupq_n_f64(1.42860682030941723212E-6)));
    const float64x2_t rr = vmulq_f64(r, r);
    float64x2_t p = vdupq_n_f64(1.26177193074810590878E-4);
    p = vaddq_f64(vmulq_f64(p, rr), vdupq_n_f64(3.02994407707441961300E-2));
    p = vaddq_f64(vmulq_f64(p, rr), vdupq_n_f64(9.99999999999999999910E-1));
    p = vmulq_f64(p, r);
    float64x2_t q = vdupq_n_f64(3.00198505138664455042E-6);
    q = vaddq_f64(vmulq_f64(q, rr), vdupq_n_f64(2.52448340349684104192E-3));
    q = vaddq_f64(vmulq_f64(q, rr), vdupq_n_f64(2.27265548208155028766E-1));
    q = vaddq_f64(vmulq_f64(q, rr), vdupq_n_f64(2.00000000000000000009E0));
    float64x2_t e = vdivq_f64(p, vsubq_f64(q, p));
    e = vaddq_f64(vdupq_n_f64(1.0), vaddq_f64(e, e));
    const float64x2_t n1 = vrndmq_f64(vmulq_f64(n, vdupq_n_f64(0.5)));
    const float64x2_t n2 = vsubq_f64(n, n1);
    auto pow2 = [](float64x2_t k) {
        const int64x2_t ki = vaddq_s64(vcvtq_s64_f64(k), vdupq_n_s64(1023));
        return vreinterpretq_f64_s64(vshlq_n_s64(ki, 52));
    };
    return vmulq_f64(vmulq_f64(e, pow2(n1)), pow2(n2));
}

void distances_to(double px, double py, const double* xs, const double* ys, std::size_t n,
                  double* out) {
    const float64x2_t vpx = vdupq_n_f64(px);
    const float64x2_t vpy = vdupq_n_f64(py);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t dx = vsubq_f64(vld1q_f64(xs + i), vpx);
        const float64x2_t dy = vsubq_f64(vld1q_f64(ys + i), vpy);
        vst1q_f64(out + i, vsqrtq_f64(vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy))));
    }
    for (; i < n; ++i) {
        const double dx = xs[i] - px;
        const double dy = ys[i] - py;
        out[i] = std::sqrt(dx * dx + dy * dy);
    }
}

void exp_decay(const double* d, std::size_t n, double scale, double rate, double* out) {
    const float64x2_t vs = vdupq_n_f64(scale);
    const float64x2_t vr = vdupq_n_f64(-rate);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vs, exp_pd(vmulq_f64(vr, vld1q_f64(d + i)))));
    }
    if (i < n) {
        const double buf[2] = {d[i], 0.0};
        double res[2];
        vst1q_f64(res, vmulq_f64(vs, exp_pd(vmulq_f64(vr, vld1q_f64(buf)))));
        out[i] = res[0];
    }
}

void stencil_row(const StencilRow& r) {
    const float64x2_t four = vdupq_n_f64(4.0);
    const float64x2_t inv_dx2 = vdupq_n_f64(r.inv_dx2);
    const float64x2_t inv_dx = vdupq_n_f64(r.inv_dx);
    const float64x2_t vx = vdupq_n_f64(r.vx);
    const float64x2_t vy = vdupq_n_f64(r.vy);
    const float64x2_t dt = vdupq_n_f64(r.dt);
    const float64x2_t retain = vdupq_n_f64(r.retain);
    std::size_t i = 0;
    for (; i + 2 <= r.n; i += 2) {
        const float64x2_t c = vld1q_f64(r.center + i);
        const float64x2_t ew = vaddq_f64(vld1q_f64(r.east + i), vld1q_f64(r.west + i));
        const float64x2_t ns = vaddq_f64(vld1q_f64(r.north + i), vld1q_f64(r.south + i));
        const float64x2_t lap = vmulq_f64(vsubq_f64(vaddq_f64(ew, ns), vmulq_f64(four, c)), inv_dx2);
        const float64x2_t gx = vmulq_f64(vsubq_f64(vld1q_f64(r.x_hi + i), vld1q_f64(r.x_lo + i)), inv_dx);
        const float64x2_t gy = vmulq_f64(vsubq_f64(vld1q_f64(r.y_hi + i), vld1q_f64(r.y_lo + i)), inv_dx);
        const float64x2_t adv = vaddq_f64(vmulq_f64(vx, gx), vmulq_f64(vy, gy));
        const float64x2_t rhs =
            vsubq_f64(vaddq_f64(vld1q_f64(r.source + i), vmulq_f64(vld1q_f64(r.kappa + i), lap)), adv);
        vst1q_f64(r.out + i, vaddq_f64(vmulq_f64(c, retain), vmulq_f64(dt, rhs)));
    }
    for (; i < r.n; ++i) {
        const double c = r.center[i];
        const double lap = ((r.east[i] + r.west[i]) + (r.north[i] + r.south[i]) - 4.0 * c) * r.inv_dx2;
        const double adv = r.vx * ((r.x_hi[i] - r.x_lo[i]) * r.inv_dx) +
                           r.vy * ((r.y_hi[i] - r.y_lo[i]) * r.inv_dx);
        r.out[i] = c * r.retain + r.dt * ((r.source[i] + r.kappa[i] * lap) - adv);
    }
}

double abs_diff_sum(const double* v, std::size_t n, double target) {
    const float64x2_t t = vdupq_n_f64(target);
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vabsq_f64(vsubq_f64(vld1q_f64(v + i), t)));
    double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) s += std::fabs(v[i] - target);
    return s;
}

}  // namespace

const KernelTable* neon_table() noexcept {
    static const KernelTable table{&distances_to, &exp_decay, &stencil_row, &abs_diff_sum};
    return &table;
}

}  // namespace mgpf::simd::detail

#else

namespace mgpf::simd::detail {
const KernelTable* neon_table() noexcept { return nullptr; }
}  // namespace mgpf::simd::detail

#endif

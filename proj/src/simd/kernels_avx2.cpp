// Compiled with -mavx2 (no -mfma): the dispatcher only hands out this table
// after checking the CPU, and the absence of FMA keeps the arithmetic
// kernels bitwise identical to the scalar reference.

#include "mgpf/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace mgpf::simd::detail {
namespace {

// exp(x) for x <= ~709, Cody-Waite reduction and the Cephes Pade form.
// Within 2 ulp of std::exp over the normal range.
inline __m256d exp_pd(__m256d x) {
    const __m256d hi = _mm256_set1_pd(709.78);
    const __m256d lo = _mm256_set1_pd(-746.0);
    x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
    const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);

    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_sub_pd(x, _mm256_mul_pd(n, c1));
    r = _mm256_sub_pd(r, _mm256_mul_pd(n, c2));

    const __m256d rr = _mm256_mul_pd(r, r);
    __m256d p = _mm256_set1_pd(1.26177193074810590878E-4);
    p = _mm256_add_pd(_mm256_mul_pd(p, rr), _mm256_set1_pd(3.02994407707441961300E-2));
    p = _mm256_add_pd(_mm256_mul_pd(p, rr), _mm256_set1_pd(9.99999999999999999910E-1));
    p = _mm256_mul_pd(p, r);
    __m256d q = _mm256_set1_pd(3.00198505138664455042E-6);
    q = _mm256_add_pd(_mm256_mul_pd(q, rr), _mm256_set1_pd(2.52448340349684104192E-3));
    q = _mm256_add_pd(_mm256_mul_pd(q, rr), _mm256_set1_pd(2.27265548208155028766E-1));
    q = _mm256_add_pd(_mm256_mul_pd(q, rr), _mm256_set1_pd(2.00000000000000000009E0));
    __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
    e = _mm256_add_pd(_mm256_set1_pd(1.0), _mm256_add_pd(e, e));

    // 2^n split in two factors so subnormal results stay representable.
    const __m256d n1 = _mm256_floor_pd(_mm256_mul_pd(n, _mm256_set1_pd(0.5)));
    const __m256d n2 = _mm256_sub_pd(n, n1);
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51
    const __m256i magic_bits = _mm256_castpd_si256(magic);
    const __m256i bias = _mm256_set1_epi64x(1023);
    auto pow2 = [&](__m256d k) {
        __m256i ki = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(k, magic)), magic_bits);
        return _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(ki, bias), 52));
    };
    return _mm256_mul_pd(_mm256_mul_pd(e, pow2(n1)), pow2(n2));
}

void distances_to(double px, double py, const double* xs, const double* ys, std::size_t n,
                  double* out) {
    const __m256d vpx = _mm256_set1_pd(px);
    const __m256d vpy = _mm256_set1_pd(py);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vpx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vpy);
        const __m256d s = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
        _mm256_storeu_pd(out + i, _mm256_sqrt_pd(s));
    }
    for (; i < n; ++i) {
        const double dx = xs[i] - px;
        const double dy = ys[i] - py;
        out[i] = std::sqrt(dx * dx + dy * dy);
    }
}

void exp_decay(const double* d, std::size_t n, double scale, double rate, double* out) {
    const __m256d vs = _mm256_set1_pd(scale);
    const __m256d vr = _mm256_set1_pd(-rate);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d e = exp_pd(_mm256_mul_pd(vr, _mm256_loadu_pd(d + i)));
        _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, e));
    }
    if (i < n) {
        alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t k = 0; i + k < n; ++k) buf[k] = d[i + k];
        alignas(32) double res[4];
        _mm256_store_pd(res, _mm256_mul_pd(vs, exp_pd(_mm256_mul_pd(vr, _mm256_load_pd(buf)))));
        for (std::size_t k = 0; i + k < n; ++k) out[i + k] = res[k];
    }
}

void stencil_row(const StencilRow& r) {
    const __m256d four = _mm256_set1_pd(4.0);
    const __m256d inv_dx2 = _mm256_set1_pd(r.inv_dx2);
    const __m256d inv_dx = _mm256_set1_pd(r.inv_dx);
    const __m256d vx = _mm256_set1_pd(r.vx);
    const __m256d vy = _mm256_set1_pd(r.vy);
    const __m256d dt = _mm256_set1_pd(r.dt);
    const __m256d retain = _mm256_set1_pd(r.retain);
    std::size_t i = 0;
    for (; i + 4 <= r.n; i += 4) {
        const __m256d c = _mm256_loadu_pd(r.center + i);
        const __m256d ew = _mm256_add_pd(_mm256_loadu_pd(r.east + i), _mm256_loadu_pd(r.west + i));
        const __m256d ns = _mm256_add_pd(_mm256_loadu_pd(r.north + i), _mm256_loadu_pd(r.south + i));
        const __m256d lap = _mm256_mul_pd(_mm256_sub_pd(_mm256_add_pd(ew, ns), _mm256_mul_pd(four, c)), inv_dx2);
        const __m256d gx = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(r.x_hi + i), _mm256_loadu_pd(r.x_lo + i)), inv_dx);
        const __m256d gy = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(r.y_hi + i), _mm256_loadu_pd(r.y_lo + i)), inv_dx);
        const __m256d adv = _mm256_add_pd(_mm256_mul_pd(vx, gx), _mm256_mul_pd(vy, gy));
        const __m256d rhs = _mm256_sub_pd(
            _mm256_add_pd(_mm256_loadu_pd(r.source + i), _mm256_mul_pd(_mm256_loadu_pd(r.kappa + i), lap)), adv);
        _mm256_storeu_pd(r.out + i, _mm256_add_pd(_mm256_mul_pd(c, retain), _mm256_mul_pd(dt, rhs)));
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
    const __m256d t = _mm256_set1_pd(target);
    const __m256d sign = _mm256_set1_pd(-0.0);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(v + i), t)));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += std::fabs(v[i] - target);
    return s;
}

}  // namespace

const KernelTable* avx2_table() noexcept {
    static const KernelTable table{&distances_to, &exp_decay, &stencil_row, &abs_diff_sum};
    return &table;
}

}  // namespace mgpf::simd::detail

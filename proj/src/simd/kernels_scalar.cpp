#include "mgpf/simd/kernels.hpp"

#include <cmath>

namespace mgpf::simd::detail {
namespace {

void distances_to(double px, double py, const double* xs, const double* ys, std::size_t n,
                  double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - px;
        const double dy = ys[i] - py;
        out[i] = std::sqrt(dx * dx + dy * dy);
    }
}

void exp_decay(const double* d, std::size_t n, double scale, double rate, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = scale * std::exp(-rate * d[i]);
    }
}

void stencil_row(const StencilRow& r) {
    for (std::size_t i = 0; i < r.n; ++i) {
        const double c = r.center[i];
        const double lap = ((r.east[i] + r.west[i]) + (r.north[i] + r.south[i]) - 4.0 * c) * r.inv_dx2;
        const double adv = r.vx * ((r.x_hi[i] - r.x_lo[i]) * r.inv_dx) +
                           r.vy * ((r.y_hi[i] - r.y_lo[i]) * r.inv_dx);
        r.out[i] = c * r.retain + r.dt * ((r.source[i] + r.kappa[i] * lap) - adv);
    }
}

double abs_diff_sum(const double* v, std::size_t n, double target) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::fabs(v[i] - target);
    return s;
}

}  // namespace

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{&distances_to, &exp_decay, &stencil_row, &abs_diff_sum};
    return table;
}

}  // namespace mgpf::simd::detail

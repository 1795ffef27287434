#pragma once

// Data-parallel inner loops shared by the GP and simulator code.
//
// Every kernel has a scalar reference implementation and optional vector
// variants. The active backend is chosen once at startup from CPU features
// (override with MGPF_SIMD=scalar|avx2|neon). Kernels that only use IEEE
// add/sub/mul/div/sqrt are bitwise identical across backends; exp_decay and
// abs_diff_sum agree to a few ulp.

#include <cstddef>
#include <span>
#include <string_view>

namespace mgpf::simd {

enum class Backend { Scalar, Avx2, Neon };

// One row of the explicit advection-diffusion-decay update.
//
//   lap = ((east + west) + (north + south) - 4*center) * inv_dx2
//   adv = vx * ((x_hi - x_lo) * inv_dx) + vy * ((y_hi - y_lo) * inv_dx)
//   out = center * retain + dt * ((source + kappa * lap) - adv)
//
// The caller picks x_hi/x_lo and y_hi/y_lo according to the wind sign, so
// the kernel itself is branch free.
struct StencilRow {
    const double* center = nullptr;
    const double* west = nullptr;
    const double* east = nullptr;
    const double* south = nullptr;
    const double* north = nullptr;
    const double* x_lo = nullptr;
    const double* x_hi = nullptr;
    const double* y_lo = nullptr;
    const double* y_hi = nullptr;
    const double* kappa = nullptr;
    const double* source = nullptr;
    double* out = nullptr;
    std::size_t n = 0;
    double vx = 0.0;
    double vy = 0.0;
    double dt = 0.0;
    double retain = 1.0;
    double inv_dx = 1.0;
    double inv_dx2 = 1.0;
};

struct KernelTable {
    // out[i] = hypot-free Euclidean distance from (px, py) to (xs[i], ys[i])
    void (*distances_to)(double px, double py, const double* xs, const double* ys,
                         std::size_t n, double* out);
    // out[i] = scale * exp(-rate * d[i])
    void (*exp_decay)(const double* d, std::size_t n, double scale, double rate,
                      double* out);
    void (*stencil_row)(const StencilRow& row);
    // sum_i |v[i] - target|
    double (*abs_diff_sum)(const double* v, std::size_t n, double target);
};

[[nodiscard]] bool backend_available(Backend b) noexcept;
[[nodiscard]] std::string_view backend_name(Backend b) noexcept;
[[nodiscard]] Backend active_backend() noexcept;

// Throws std::invalid_argument if the backend is not available on this CPU.
void set_backend(Backend b);

// Kernel table for a specific backend (for equivalence tests and benchmarks).
[[nodiscard]] const KernelTable& kernels(Backend b);
[[nodiscard]] const KernelTable& kernels();

// Convenience wrappers over the active backend.
void distances_to(double px, double py, std::span<const double> xs,
                  std::span<const double> ys, std::span<double> out);
void exp_decay(std::span<const double> d, double scale, double rate, std::span<double> out);
void stencil_row(const StencilRow& row);
[[nodiscard]] double abs_diff_sum(std::span<const double> v, double target);

namespace detail {
const KernelTable& scalar_table() noexcept;
const KernelTable* avx2_table() noexcept;  // nullptr when not compiled in
const KernelTable* neon_table() noexcept;
}  // namespace detail

}  // namespace mgpf::simd

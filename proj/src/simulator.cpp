#include "mgpf/simulator.hpp"

#include "mgpf/errors.hpp"
#include "mgpf/gp_core.hpp"
#include "mgpf/simd/kernels.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace mgpf::sim {

Wind wind(double t) {
    if (!(t >= 0.0)) throw ValidationError("wind: t must be >= 0");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return {0.2 + 0.4 * std::sin(two_pi * t / 40.0), 0.09 + 0.2 * std::cos(two_pi * t / 60.0)};
}

FieldGrid::FieldGrid(const Lattice& lat, double fill) : lattice(lat), values(lat.size(), fill) {}

double PlumeSource::fade(int t) const {
    const int d = t - t0;
    if (d < 0 || d > lifetime) return 0.0;
    return 1.0 - static_cast<double>(d) / lifetime;
}

void PlumeConfig::validate() const {
    if (lattice.n < 3 || !(lattice.hi > lattice.lo)) throw ValidationError("plume lattice needs n >= 3 and hi > lo");
    if (lattice.lo > 0.0 || lattice.hi < 1.0) throw ValidationError("plume lattice must cover [0, 1]^2");
    if (!(dt > 0.0) || !(decay >= 0.0) || steps < 1 || initial_sources < 0 || spawn_every < 1) {
        throw ValidationError("plume config: bad time stepping settings");
    }
    if (!(cluster_prob >= 0.0 && cluster_prob <= 1.0)) throw ValidationError("cluster_prob outside [0, 1]");
    if (!(diffusion_lo >= 0.0 && diffusion_hi >= diffusion_lo)) throw ValidationError("bad diffusion range");
    if (!(local_scale_lo > 0.0) || !(regional_scale_lo > 0.0)) throw ValidationError("source scales must be > 0");
}

int sources_born_at(int t, const PlumeConfig& cfg) {
    if (t == 1) return cfg.initial_sources;
    if (t > 1 && (t - 1) % cfg.spawn_every == 0) return 1;
    return 0;
}

double draw_amplitude(Rng& rng) {
    const double u = draw_uniform(rng, 0.0, 1.0);
    if (u < 0.95) return 1.0 + 9.0 * draw_beta(rng, 2.0, 5.0);
    if (u < 0.95 + 0.05 * 0.9) {
        double v = draw_uniform(rng, 0.0, 1.0);
        while (v <= 0.0) v = draw_uniform(rng, 0.0, 1.0);
        return std::min(10.0 / std::sqrt(v), 100.0);
    }
    return draw_uniform(rng, 100.0, 300.0);
}

namespace {

// One five-point averaging pass with edge copy.
std::vector<double> smooth_pass(const std::vector<double>& v, int n) {
    std::vector<double> out(v.size());
    auto at = [&](int i, int j) {
        i = std::clamp(i, 0, n - 1);
        j = std::clamp(j, 0, n - 1);
        return v[static_cast<std::size_t>(j) * n + i];
    };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            out[static_cast<std::size_t>(j) * n + i] =
                (at(i, j) + at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1)) / 5.0;
        }
    }
    return out;
}

}  // namespace

std::vector<double> irregularity_field(const PlumeConfig& cfg, Rng& rng) {
    const int n = cfg.lattice.n;
    std::vector<double> xi(cfg.lattice.size());
    for (double& v : xi) v = draw_normal(rng);
    for (int p = 0; p < cfg.xi_smoothing_passes; ++p) xi = smooth_pass(xi, n);
    double mean = 0.0;
    for (double v : xi) mean += v;
    mean /= static_cast<double>(xi.size());
    double ss = 0.0;
    for (double v : xi) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(xi.size()));
    for (double& v : xi) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    return xi;
}

std::vector<PlumeSource> spawn_sources(int t, const PlumeConfig& cfg, const std::vector<double>& xi,
                                       Rng& rng) {
    const Lattice& lat = cfg.lattice;
    if (xi.size() != lat.size()) throw ValidationError("irregularity field does not match the lattice");
    const int count = sources_born_at(t, cfg);
    std::vector<PlumeSource> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        PlumeSource s;
        s.t0 = t;
        if (draw_uniform(rng, 0.0, 1.0) < cfg.cluster_prob) {
            s.xs = draw_uniform(rng, cfg.cluster_lo, cfg.cluster_hi);
            s.ys = draw_uniform(rng, cfg.cluster_lo, cfg.cluster_hi);
        } else {
            s.xs = draw_uniform(rng, lat.lo, lat.hi);
            s.ys = draw_uniform(rng, lat.lo, lat.hi);
        }
        const double in_lo = lat.lo + cfg.crop_margin;
        const double in_hi = lat.hi - cfg.crop_margin;
        const bool inside = s.xs >= in_lo && s.xs <= in_hi && s.ys >= in_lo && s.ys <= in_hi;
        if (inside) {
            s.sigma_x = draw_uniform(rng, cfg.local_scale_lo, cfg.local_scale_hi);
            s.sigma_y = draw_uniform(rng, cfg.local_scale_lo, cfg.local_scale_hi);
        } else {
            s.sigma_x = draw_uniform(rng, cfg.regional_scale_lo, cfg.regional_scale_hi);
            s.sigma_y = draw_uniform(rng, cfg.regional_scale_lo, cfg.regional_scale_hi);
        }
        s.theta = draw_uniform(rng, -std::numbers::pi / 4.0, std::numbers::pi / 4.0);
        s.amplitude = draw_amplitude(rng);
        s.lifetime = static_cast<int>(std::lround(1.0 + std::hypot(s.sigma_x, s.sigma_y)));
        s.diffusion = draw_uniform(rng, cfg.diffusion_lo, cfg.diffusion_hi);

        const double c = std::cos(s.theta);
        const double sn = std::sin(s.theta);
        s.footprint.resize(lat.size());
        s.footprint_max = 0.0;
        for (int j = 0; j < lat.n; ++j) {
            const double y = lat.coord(j);
            for (int i = 0; i < lat.n; ++i) {
                const double x = lat.coord(i);
                const double dx = x - s.xs;
                const double dy = y - s.ys;
                const double xr = c * dx + sn * dy;
                const double yr = -sn * dx + c * dy;
                const std::size_t idx = static_cast<std::size_t>(j) * lat.n + i;
                const double irregular = 1.0 +
                                         cfg.irregularity_amp * std::sin(cfg.irregularity_freq * x) *
                                             std::sin(cfg.irregularity_freq * y) +
                                         cfg.irregularity_noise * xi[idx];
                const double b = std::exp(-xr * xr / (2.0 * s.sigma_x * s.sigma_x) -
                                          yr * yr / (2.0 * s.sigma_y * s.sigma_y)) *
                                 std::max(irregular, 0.0);
                s.footprint[idx] = b;
                s.footprint_max = std::max(s.footprint_max, b);
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

Forcing forcing_at(int t, const std::vector<PlumeSource>& sources, const Lattice& lat) {
    Forcing f{std::vector<double>(lat.size(), 0.0), std::vector<double>(lat.size(), 0.0)};
    for (const auto& s : sources) {
        const double fade = s.fade(t);
        if (fade <= 0.0 || !(s.footprint_max > 0.0)) continue;
        const double strength = fade * s.amplitude;
        const double mask_scale = s.diffusion / s.footprint_max;
        for (std::size_t k = 0; k < f.source.size(); ++k) {
            f.source[k] += strength * s.footprint[k];
            f.kappa[k] += mask_scale * s.footprint[k];
        }
    }
    return f;
}

int stable_substep_count(double kappa_max, const Wind& w, double dt, double dx, double decay) {
    const double number = 4.0 * kappa_max * dt / (dx * dx) + (std::fabs(w.vx) + std::fabs(w.vy)) * dt / dx +
                          decay * dt;
    return std::max(1, static_cast<int>(std::ceil(number)));
}

FieldGrid euler_step(const FieldGrid& field, const Forcing& forcing, const Wind& w, double dt,
                     double decay, int substeps) {
    const int n = field.lattice.n;
    const std::size_t cells = field.lattice.size();
    if (field.values.size() != cells || forcing.kappa.size() != cells || forcing.source.size() != cells) {
        throw ValidationError("euler_step: field and forcing sizes differ");
    }
    if (substeps < 1) throw ValidationError("euler_step: substeps must be >= 1");
    const int np = n + 2;
    std::vector<double> pad(static_cast<std::size_t>(np) * np, 0.0);
    FieldGrid cur = field;
    FieldGrid next(field.lattice, 0.0);
    next.t = field.t + 1;

    const double h = dt / substeps;
    const double dx = field.lattice.dx();
    simd::StencilRow row;
    row.n = static_cast<std::size_t>(n);
    row.vx = w.vx;
    row.vy = w.vy;
    row.dt = h;
    row.retain = 1.0 - decay * h;
    row.inv_dx = 1.0 / dx;
    row.inv_dx2 = 1.0 / (dx * dx);

    for (int step = 0; step < substeps; ++step) {
        // Interior plus edge-copied ghost cells.
        for (int j = 0; j < n; ++j) {
            double* dst = &pad[static_cast<std::size_t>(j + 1) * np + 1];
            std::copy_n(&cur.values[static_cast<std::size_t>(j) * n], n, dst);
            dst[-1] = dst[0];
            dst[n] = dst[n - 1];
        }
        std::copy_n(&pad[static_cast<std::size_t>(np)], np, &pad[0]);
        std::copy_n(&pad[static_cast<std::size_t>(n) * np], np, &pad[static_cast<std::size_t>(n + 1) * np]);

        for (int j = 0; j < n; ++j) {
            const double* c = &pad[static_cast<std::size_t>(j + 1) * np + 1];
            row.center = c;
            row.west = c - 1;
            row.east = c + 1;
            row.south = c - np;
            row.north = c + np;
            if (w.vx >= 0.0) {
                row.x_hi = c;
                row.x_lo = c - 1;
            } else {
                row.x_hi = c + 1;
                row.x_lo = c;
            }
            if (w.vy >= 0.0) {
                row.y_hi = c;
                row.y_lo = c - np;
            } else {
                row.y_hi = c + np;
                row.y_lo = c;
            }
            const std::size_t off = static_cast<std::size_t>(j) * n;
            row.kappa = &forcing.kappa[off];
            row.source = &forcing.source[off];
            row.out = &next.values[off];
            simd::stencil_row(row);
        }
        std::swap(cur.values, next.values);
    }
    for (double v : cur.values) {
        if (!std::isfinite(v)) throw NumericalError("euler_step: non-finite value (unstable step)");
    }
    cur.t = field.t + 1;
    return cur;
}

CroppedField crop_rescale(const FieldGrid& field) {
    const Lattice& lat = field.lattice;
    constexpr double tol = 1e-9;
    int first = -1;
    int last = -1;
    for (int i = 0; i < lat.n; ++i) {
        const double c = lat.coord(i);
        if (c >= -tol && c <= 1.0 + tol) {
            if (first < 0) first = i;
            last = i;
        }
    }
    if (first < 0 || last - first < 1) throw ValidationError("crop_rescale: lattice does not cover [0, 1]");
    CroppedField out;
    out.t = field.t;
    for (int i = first; i <= last; ++i) out.coords.push_back(std::clamp(lat.coord(i), 0.0, 1.0));
    const int m = out.n();
    out.values.resize(static_cast<std::size_t>(m) * m);
    double vmin = field.at(first, first);
    double vmax = vmin;
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
            const double v = field.at(first + i, first + j);
            out.values[static_cast<std::size_t>(j) * m + i] = v;
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }
    if (!(vmax > vmin)) throw NumericalError("crop_rescale: constant field cannot be rescaled");
    const double range = vmax - vmin;
    for (double& v : out.values) v = 3.0 + (v - vmin) / range * 250.0;
    return out;
}

double interpolate(const CroppedField& f, const Location& p) {
    const int n = f.n();
    if (n < 2) throw ValidationError("interpolate: lattice too small");
    const double h = (f.coords.back() - f.coords.front()) / (n - 1);
    const double u = std::clamp((p.x - f.coords.front()) / h, 0.0, static_cast<double>(n - 1));
    const double v = std::clamp((p.y - f.coords.front()) / h, 0.0, static_cast<double>(n - 1));
    const int i0 = std::min(static_cast<int>(u), n - 2);
    const int j0 = std::min(static_cast<int>(v), n - 2);
    const double fx = u - i0;
    const double fy = v - j0;
    const double a = f.at(i0, j0) * (1.0 - fx) + f.at(i0 + 1, j0) * fx;
    const double b = f.at(i0, j0 + 1) * (1.0 - fx) + f.at(i0 + 1, j0 + 1) * fx;
    return a * (1.0 - fy) + b * fy;
}

std::vector<CroppedField> simulate_plumes(const PlumeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const std::vector<double> xi = irregularity_field(cfg, rng);
    FieldGrid x(cfg.lattice, 0.0);
    std::vector<PlumeSource> sources;
    std::vector<CroppedField> frames;
    frames.reserve(static_cast<std::size_t>(cfg.steps));
    for (int t = 1; t <= cfg.steps; ++t) {
        auto born = spawn_sources(t, cfg, xi, rng);
        for (auto& s : born) sources.push_back(std::move(s));
        std::erase_if(sources, [t](const PlumeSource& s) { return t >= s.t0 + s.lifetime; });

        const Forcing f = forcing_at(t, sources, cfg.lattice);
        const Wind w = wind(t);
        const double kmax = *std::max_element(f.kappa.begin(), f.kappa.end());
        const int m = cfg.stable_substeps
                          ? stable_substep_count(kmax, w, cfg.dt, cfg.lattice.dx(), cfg.decay)
                          : 1;
        x = euler_step(x, f, w, cfg.dt, cfg.decay, m);
        x.t = t;
        frames.push_back(crop_rescale(x));
    }
    return frames;
}

double median_lag1_autocorrelation(const std::vector<CroppedField>& frames) {
    if (frames.size() < 3) throw ValidationError("autocorrelation needs at least 3 frames");
    const std::size_t cells = frames.front().values.size();
    const std::size_t T = frames.size();
    std::vector<double> r;
    r.reserve(cells);
    std::vector<double> series(T);
    for (std::size_t k = 0; k < cells; ++k) {
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            series[t] = frames[t].values[k];
            mean += series[t];
        }
        mean /= static_cast<double>(T);
        double den = 0.0;
        double num = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            den += (series[t] - mean) * (series[t] - mean);
            if (t + 1 < T) num += (series[t] - mean) * (series[t + 1] - mean);
        }
        if (den > 0.0) r.push_back(num / den);
    }
    if (r.empty()) throw NumericalError("autocorrelation: every pixel is constant");
    const auto mid = r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2);
    std::nth_element(r.begin(), mid, r.end());
    if (r.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(r.begin(), mid);
    return 0.5 * (lo + hi);
}

void write_field_csv(std::ostream& out, const std::vector<CroppedField>& frames) {
    out << "x,y,value,t\n";
    for (const auto& f : frames) {
        const int n = f.n();
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                out << fmt::format("{},{},{},{}\n", f.coords[i], f.coords[j], f.at(i, j), f.t);
            }
        }
    }
}

// --- synthetic networks ---------------------------------------------------

void SyntheticNetworkSpec::validate() const {
    if (n < 1) throw ValidationError("synthetic network needs n >= 1");
    if (!(sigma >= 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
        throw ValidationError("synthetic network needs finite a, b and sigma >= 0");
    }
}

int nearest_to_centroid(const std::vector<Location>& sites) {
    if (sites.empty()) throw ValidationError("nearest_to_centroid: no sites");
    double cx = 0.0;
    double cy = 0.0;
    for (const auto& s : sites) {
        cx += s.x;
        cy += s.y;
    }
    cx /= static_cast<double>(sites.size());
    cy /= static_cast<double>(sites.size());
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sites.size(); ++k) {
        const double d = (sites[k].x - cx) * (sites[k].x - cx) + (sites[k].y - cy) * (sites[k].y - cy);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    return best;
}

NetworkPair generate_networks_s5(Rng& rng, int n1, int n2) {
    NetworkPair p;
    p.first.spec = {"net1", n1, 1.0, 1.2, 2.0};
    p.second.spec = {"net2", n2, 2.0, 1.5, 1.0};
    p.first.spec.validate();
    p.second.spec.validate();
    for (int k = 0; k < n1; ++k) {
        const double x = draw_uniform(rng, 0.0, 1.0);
        const double y = draw_uniform(rng, 0.0, 1.0);
        p.first.sites.push_back({x, y});
    }
    while (static_cast<int>(p.second.sites.size()) < n2) {
        const double x = draw_uniform(rng, 0.0, 1.0);
        const double y = draw_uniform(rng, 0.0, 1.0);
        if (x < 0.5 && y < 0.5) continue;
        p.second.sites.push_back({x, y});
    }
    p.first.colocated = nearest_to_centroid(p.first.sites);
    p.second.colocated = nearest_to_centroid(p.second.sites);
    return p;
}

std::vector<double> synth_obs(const std::vector<double>& truth, const SyntheticNetworkSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<double> y(truth.size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double noise = spec.sigma > 0.0 ? draw_normal(rng, 0.0, spec.sigma) : 0.0;
        y[k] = spec.a + spec.b * truth[k] + noise;
    }
    return y;
}

// --- GP plus point sources ------------------------------------------------

void S6Config::validate() const {
    if (n_per_network < 1 || n_free < 0 || n_free > n_per_network || timepoints < 1 || grid_side < 1) {
        throw ValidationError("s6 config: bad site or timepoint counts");
    }
    if (!(corr_lo > 0.0 && corr_hi < 1.0 && corr_lo <= corr_hi)) throw ValidationError("s6 config: bad correlation range");
    if (!(mu_span >= 0.0 && emis_span >= 0.0 && psi > 0.0 && nugget_frac >= 0.0)) {
        throw ValidationError("s6 config: spans, psi and nugget fraction must be nonnegative");
    }
    if (!(rh_hi >= rh_lo)) throw ValidationError("s6 config: rh_hi < rh_lo");
}

std::vector<Location> s6_sites(Rng& rng, const S6Config& cfg, bool preferential) {
    std::vector<Location> out;
    out.reserve(static_cast<std::size_t>(cfg.n_per_network));
    for (int k = 0; k < cfg.n_per_network; ++k) {
        Location s{draw_uniform(rng, 0.0, 1.0), draw_uniform(rng, 0.0, 1.0)};
        if (preferential && k >= cfg.n_free) {
            if (s.x > 0.5) s.x = draw_uniform(rng, 0.0, 0.5);
            if (s.y < 0.5) s.y = draw_uniform(rng, 0.5, 1.0);
        }
        out.push_back(s);
    }
    return out;
}

double s6_local(const Location& s, double z1, double z2, const S6Config& cfg) {
    auto d2 = [&](const Location& c) { return (s.x - c.x) * (s.x - c.x) + (s.y - c.y) * (s.y - c.y); };
    return z1 * std::exp(-d2(cfg.source1) * cfg.psi) + z2 * std::exp(-d2(cfg.source2) * cfg.psi);
}

LinearHetModel s6_model_a() { return {-10.97, 1.91, 0.16, 10.0, 0.5}; }
LinearHetModel s6_model_b() { return {-16.46, 2.86, 0.25, 22.5, 1.13}; }

S6Dataset generate_s6_dataset(const S6Config& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    S6Dataset ds;
    ds.reference = {draw_uniform(rng, cfg.ref_lo, cfg.ref_hi), draw_uniform(rng, cfg.ref_lo, cfg.ref_hi)};
    ds.sites_a = s6_sites(rng, cfg, false);
    ds.sites_b = s6_sites(rng, cfg, cfg.preferential);
    for (int j = 0; j < cfg.grid_side; ++j) {
        for (int i = 0; i < cfg.grid_side; ++i) {
            ds.grid.push_back({(i + 0.5) / cfg.grid_side, (j + 0.5) / cfg.grid_side});
        }
    }
    std::vector<Location> all{ds.reference};
    all.insert(all.end(), ds.sites_a.begin(), ds.sites_a.end());
    all.insert(all.end(), ds.sites_b.begin(), ds.sites_b.end());
    all.insert(all.end(), ds.grid.begin(), ds.grid.end());
    const Eigen::MatrixXd dist = gp::distances(all, all);
    const auto na = ds.sites_a.size();
    const auto nb = ds.sites_b.size();

    const LinearHetModel ma = s6_model_a();
    const LinearHetModel mb = s6_model_b();
    auto observe = [&](const LinearHetModel& m, double x, double rh) {
        const double var = std::max(0.0, m.alpha0 + m.alpha1 * x);
        return m.beta0 + m.beta1 * x + m.beta2 * rh + std::sqrt(var) * draw_normal(rng);
    };

    for (int t = 0; t < cfg.timepoints; ++t) {
        S6Timepoint tp;
        tp.mu = cfg.mu_min + cfg.mu_span * draw_beta(rng, cfg.mu_a, cfg.mu_b);
        tp.phi = -std::log(draw_uniform(rng, cfg.corr_lo, cfg.corr_hi)) / std::numbers::sqrt2;
        tp.sigma2 = tp.mu * draw_beta(rng, cfg.var_a, cfg.var_b);
        tp.nugget = tp.sigma2 * draw_uniform(rng, 0.0, cfg.nugget_frac);
        const gp::CovParams theta{tp.sigma2, tp.phi, tp.nugget};
        const Eigen::MatrixXd cov = gp::cov_from_distances(dist, theta, true);
        const Eigen::VectorXd amb =
            gp::sample_mvn(Eigen::VectorXd::Constant(dist.rows(), tp.mu), cov, rng);
        tp.emission1 = cfg.emis_min + cfg.emis_span * draw_beta(rng, cfg.emis_a, cfg.emis_b);
        tp.emission2 = cfg.emis_min + cfg.emis_span * draw_beta(rng, cfg.emis_a, cfg.emis_b);

        std::vector<double> x(all.size());
        for (std::size_t k = 0; k < all.size(); ++k) {
            x[k] = std::max(amb[static_cast<Eigen::Index>(k)], cfg.ambient_floor) +
                   s6_local(all[k], tp.emission1, tp.emission2, cfg);
        }
        tp.reference_value = x[0];
        tp.truth_a.assign(x.begin() + 1, x.begin() + 1 + static_cast<std::ptrdiff_t>(na));
        tp.truth_b.assign(x.begin() + 1 + static_cast<std::ptrdiff_t>(na),
                          x.begin() + 1 + static_cast<std::ptrdiff_t>(na + nb));
        tp.truth_grid.assign(x.begin() + 1 + static_cast<std::ptrdiff_t>(na + nb), x.end());
        for (std::size_t k = 0; k < na; ++k) tp.rh_a.push_back(draw_uniform(rng, cfg.rh_lo, cfg.rh_hi));
        for (std::size_t k = 0; k < nb; ++k) tp.rh_b.push_back(draw_uniform(rng, cfg.rh_lo, cfg.rh_hi));
        for (std::size_t k = 0; k < na; ++k) tp.y_a.push_back(observe(ma, tp.truth_a[k], tp.rh_a[k]));
        for (std::size_t k = 0; k < nb; ++k) tp.y_b.push_back(observe(mb, tp.truth_b[k], tp.rh_b[k]));
        ds.timepoints.push_back(std::move(tp));
    }
    return ds;
}

}  // namespace mgpf::sim

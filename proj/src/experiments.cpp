#include "mgpf/experiments.hpp"

#include "mgpf/errors.hpp"
#include "mgpf/parallel.hpp"
#include "mgpf/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace mgpf::exp {

namespace {

struct Accum {
    double se = 0.0;
    double ae = 0.0;
    double err = 0.0;
    double covered = 0.0;
    double width = 0.0;
    double score = 0.0;
    double crps = 0.0;
    std::size_t n = 0;

    void add_point(double pred, double truth) {
        const double e = pred - truth;
        se += e * e;
        ae += std::fabs(e);
        err += e;
        ++n;
    }
    void add_interval(double lo, double hi, double truth, double crps_value, double alpha) {
        if (truth >= lo && truth <= hi) covered += 1.0;
        width += hi - lo;
        score += metrics::interval_score(lo, hi, truth, alpha);
        crps += crps_value;
    }
    void merge(const Accum& o) {
        se += o.se;
        ae += o.ae;
        err += o.err;
        covered += o.covered;
        width += o.width;
        score += o.score;
        crps += o.crps;
        n += o.n;
    }
    [[nodiscard]] metrics::PointMetrics point() const {
        const double d = static_cast<double>(n);
        return {std::sqrt(se / d), ae / d, err / d};
    }
    [[nodiscard]] metrics::IntervalMetrics interval() const {
        const double d = static_cast<double>(n);
        return {covered / d, width / d, score / d, crps / d};
    }
    [[nodiscard]] double rmse() const { return n > 0 ? std::sqrt(se / static_cast<double>(n)) : 0.0; }
};

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, j);
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Advection-diffusion study

S5Config S5Config::reduced() {
    S5Config c;
    c.plume.lattice.n = 71;
    c.plume.steps = 200;
    c.train_steps = 160;
    return c;
}

void S5Config::validate() const {
    plume.validate();
    chain.validate();
    if (train_steps < 3 || train_steps >= plume.steps) {
        throw ValidationError("s5: need 3 <= train_steps < steps");
    }
    if (n1 < 1 || n2 < 1 || eval_stride < 1) throw ValidationError("s5: bad network sizes or stride");
}

S5Result run_s5(const S5Config& cfg, const Progress& progress) {
    cfg.validate();
    const auto frames = sim::simulate_plumes(cfg.plume, derive_seed(cfg.seed, "field"));
    Rng net_rng(derive_seed(cfg.seed, "networks"));
    const sim::NetworkPair nets = sim::generate_networks_s5(net_rng, cfg.n1, cfg.n2);
    Rng obs_rng(derive_seed(cfg.seed, "readings"));

    const std::size_t T = frames.size();
    std::vector<std::vector<double>> truth1(T), truth2(T), y1(T), y2(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (const auto& s : nets.first.sites) truth1[t].push_back(sim::interpolate(frames[t], s));
        for (const auto& s : nets.second.sites) truth2[t].push_back(sim::interpolate(frames[t], s));
        y1[t] = sim::synth_obs(truth1[t], nets.first.spec, obs_rng);
        y2[t] = sim::synth_obs(truth2[t], nets.second.spec, obs_rng);
    }
    const auto c1 = static_cast<std::size_t>(nets.first.colocated);
    const auto c2 = static_cast<std::size_t>(nets.second.colocated);

    auto train = [&](const std::vector<std::vector<double>>& truth, const std::vector<std::vector<double>>& y,
                     std::size_t site) {
        obs::CollocatedSeries s;
        for (int t = 0; t < cfg.train_steps; ++t) {
            s.x.push_back(truth[static_cast<std::size_t>(t)][site]);
            s.y.push_back(y[static_cast<std::size_t>(t)][site]);
            s.z.push_back({});
            s.time.push_back(std::to_string(t + 1));
        }
        obs::TrainingOptions opts;
        opts.form = obs::VarianceForm::Homoscedastic;
        opts.gls = false;
        return obs::train_obs_model(s, s, opts).params;
    };
    const obs::ObsModelParams model1 = train(truth1, y1, c1);
    const obs::ObsModelParams model2 = train(truth2, y2, c2);

    // Evaluation nodes on the cropped lattice.
    const auto& f0 = frames.front();
    std::vector<Location> grid;
    std::vector<std::pair<int, int>> nodes;
    for (int j = 0; j < f0.n(); j += cfg.eval_stride) {
        for (int i = 0; i < f0.n(); i += cfg.eval_stride) {
            grid.push_back({f0.coords[static_cast<std::size_t>(i)], f0.coords[static_cast<std::size_t>(j)]});
            nodes.emplace_back(i, j);
        }
    }

    const std::vector<std::string> methods{"mgpf", "net1", "net2"};
    const std::size_t n_test = T - static_cast<std::size_t>(cfg.train_steps);
    struct Job {
        Accum all, inside, outside;
        std::vector<std::string> warnings;
    };
    std::vector<Job> jobs(n_test * methods.size());
    std::mutex progress_mu;

    parallel_for(jobs.size(), cfg.workers, [&](std::size_t idx) {
        const std::size_t t = static_cast<std::size_t>(cfg.train_steps) + idx / methods.size();
        const std::string& method = methods[idx % methods.size()];
        const bool use1 = method != "net2";
        const bool use2 = method != "net1";

        filter::FilterInput in;
        auto add_net = [&](const sim::SyntheticNetwork& net, const obs::ObsModelParams& model,
                           const std::vector<double>& y, std::size_t coloc, const std::vector<double>& truth) {
            filter::NetworkObservations obs;
            obs.network_id = net.spec.id;
            obs.sites = net.sites;
            obs.readings = y;
            obs.covariates.assign(net.sites.size(), {});
            for (std::size_t k = 0; k < net.sites.size(); ++k) obs.site_ids.push_back(fmt::format("{}_{}", net.spec.id, k));
            obs.model = model;
            in.networks.push_back(std::move(obs));
            in.reference_ids.push_back("ref_" + net.spec.id);
            in.reference_sites.push_back(net.sites[coloc]);
            in.reference_values.push_back(truth[coloc]);
        };
        if (use1) add_net(nets.first, model1, y1[t], c1, truth1[t]);
        if (use2) add_net(nets.second, model2, y2[t], c2, truth2[t]);
        in.grid = grid;
        for (std::size_t g = 0; g < grid.size(); ++g) in.grid_ids.push_back(fmt::format("g{}", g));

        const filter::AffineObs aff = filter::assemble_affine(in);
        const filter::PriorSpec prior = filter::derive_prior(in, aff, {});
        filter::ChainConfig chain = cfg.chain;
        chain.seed = derive_seed(cfg.seed, fmt::format("s5/{}/{}", method, t));
        const filter::PosteriorField field = filter::mcmc_filter(in, prior, chain);

        Job& job = jobs[idx];
        const double alpha = 0.05;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto [i, j] = nodes[g];
            const double truth = frames[t].at(i, j);
            const std::vector<double> d = column(field.grid_draws, static_cast<Eigen::Index>(g));
            double mean = 0.0;
            for (double v : d) mean += v;
            mean /= static_cast<double>(d.size());
            const double lo = filter::empirical_quantile(d, alpha / 2);
            const double hi = filter::empirical_quantile(d, 1 - alpha / 2);
            const double crps = metrics::crps_sample(d, truth);
            Accum& region = (grid[g].x < 0.5 && grid[g].y < 0.5) ? job.inside : job.outside;
            for (Accum* a : {&job.all, &region}) {
                a->add_point(mean, truth);
                a->add_interval(lo, hi, truth, crps, alpha);
            }
        }
        for (const auto& w : field.warnings) job.warnings.push_back(fmt::format("{} t={}: {}", method, t + 1, w));
        if (progress) {
            std::lock_guard lock(progress_mu);
            progress(fmt::format("s5 {} t={} rmse={:.3f}", method, t + 1, job.all.rmse()));
        }
    });

    S5Result res;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        Accum all, inside, outside;
        for (std::size_t k = 0; k < n_test; ++k) {
            const Job& job = jobs[k * methods.size() + m];
            metrics::MetricRow row;
            row.method = methods[m];
            row.timepoint = std::to_string(cfg.train_steps + static_cast<int>(k) + 1);
            row.point = job.all.point();
            row.interval = job.all.interval();
            row.n = job.all.n;
            res.report.rows.push_back(row);
            all.merge(job.all);
            inside.merge(job.inside);
            outside.merge(job.outside);
            res.warnings.insert(res.warnings.end(), job.warnings.begin(), job.warnings.end());
        }
        S5MethodSummary s;
        s.point = all.point();
        s.interval = all.interval();
        s.rmse_quadrant = inside.rmse();
        s.rmse_outside = outside.rmse();
        res.summary[methods[m]] = s;
    }
    return res;
}

// ---------------------------------------------------------------------------
// GP plus point sources

void S6ExperimentConfig::validate() const {
    data.validate();
    chain.validate();
    if (datasets < 1) throw ValidationError("s6: need at least one dataset");
    if (!(pseudo_radius > 0.0) || !(idw_power > 0.0)) throw ValidationError("s6: radius and IDW power must be > 0");
}

obs::ObsModelParams linear_model(const sim::LinearHetModel& m) {
    obs::ObsModelParams p;
    p.spec.covariates = {"rh"};
    p.beta = {m.beta0, m.beta1, m.beta2};
    p.variance = {obs::VarianceForm::LinearClamped, m.alpha0, m.alpha1};
    p.var_floor = 0.0;
    return p;
}

filter::FilterInput s6_filter_input(const sim::S6Dataset& ds, std::size_t t, bool use_a, bool use_b) {
    const sim::S6Timepoint& tp = ds.timepoints.at(t);
    filter::FilterInput in;
    in.reference_ids = {"ref"};
    in.reference_sites = {ds.reference};
    in.reference_values = {tp.reference_value};
    auto add = [&](const std::string& id, const std::vector<Location>& sites, const std::vector<double>& y,
                   const std::vector<double>& rh, const sim::LinearHetModel& m) {
        filter::NetworkObservations n;
        n.network_id = id;
        n.sites = sites;
        n.readings = y;
        for (std::size_t k = 0; k < sites.size(); ++k) {
            n.site_ids.push_back(fmt::format("{}{}", id, k));
            n.covariates.push_back({rh[k], 0.0, 0.0});
        }
        n.model = linear_model(m);
        in.networks.push_back(std::move(n));
    };
    if (use_a) add("a", ds.sites_a, tp.y_a, tp.rh_a, sim::s6_model_a());
    if (use_b) add("b", ds.sites_b, tp.y_b, tp.rh_b, sim::s6_model_b());
    in.grid = ds.grid;
    for (std::size_t g = 0; g < ds.grid.size(); ++g) in.grid_ids.push_back(fmt::format("g{}", g));
    return in;
}

std::vector<double> regcal_idw(const filter::FilterInput& input, const std::vector<Location>& targets,
                               double power) {
    std::vector<double> sum(targets.size(), 0.0);
    int used = 0;
    for (const auto& net : input.networks) {
        if (net.sites.empty()) continue;
        std::vector<double> est(net.sites.size());
        for (std::size_t k = 0; k < net.sites.size(); ++k) {
            est[k] = obs::invert_obs_model(net.readings[k], net.covariates[k], net.model).estimate;
        }
        const auto v = metrics::idw_interpolate(net.sites, est, targets, power);
        for (std::size_t k = 0; k < targets.size(); ++k) sum[k] += v[k];
        ++used;
    }
    if (used == 0) throw ValidationError("regcal_idw: no network with active sites");
    for (double& v : sum) v /= used;
    return sum;
}

S6Result run_s6(const S6ExperimentConfig& cfg, const Progress& progress) {
    cfg.validate();
    std::vector<sim::S6Dataset> data;
    for (int d = 0; d < cfg.datasets; ++d) {
        data.push_back(sim::generate_s6_dataset(cfg.data, derive_seed(cfg.seed, static_cast<std::uint64_t>(d))));
    }
    const auto T = static_cast<std::size_t>(cfg.data.timepoints);

    struct Job {
        std::map<std::string, Accum> grid;
        double ci_sites_a = 0.0, ci_sites_b = 0.0, ci_grid_a = 0.0, ci_grid_b = 0.0;
        std::size_t n_sites_a = 0, n_sites_b = 0, n_grid = 0;
        // Squared-error sums against the reference value, [mgpf, idw] x [sites, grid].
        double pseudo_se[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
        std::size_t pseudo_n[2] = {0, 0};
        std::vector<std::string> warnings;
    };
    std::vector<Job> jobs(data.size() * T);
    std::mutex progress_mu;

    parallel_for(jobs.size(), cfg.workers, [&](std::size_t idx) {
        const std::size_t d = idx / T;
        const std::size_t t = idx % T;
        const sim::S6Dataset& ds = data[d];
        const sim::S6Timepoint& tp = ds.timepoints[t];
        Job& job = jobs[idx];

        struct Run {
            std::vector<filter::SiteSummary> sites, grid;
        };
        auto run = [&](const std::string& method, bool ua, bool ub) {
            const filter::FilterInput in = s6_filter_input(ds, t, ua, ub);
            const filter::AffineObs aff = filter::assemble_affine(in);
            const filter::PriorSpec prior = filter::derive_prior(in, aff, {});
            filter::ChainConfig chain = cfg.chain;
            chain.seed = derive_seed(cfg.seed, fmt::format("s6/{}/{}/{}", d, t, method));
            const filter::PosteriorField f = filter::mcmc_filter(in, prior, chain);
            for (const auto& w : f.warnings) job.warnings.push_back(fmt::format("{} d={} t={}: {}", method, d, t, w));
            return Run{filter::predict_summaries(f.lowcost_draws), filter::predict_summaries(f.grid_draws)};
        };
        const Run both = run("mgpf", true, true);
        const Run only_a = run("a", true, false);
        const Run only_b = run("b", false, true);

        const std::size_t na = ds.sites_a.size();
        for (std::size_t g = 0; g < ds.grid.size(); ++g) {
            job.grid["mgpf"].add_point(both.grid[g].mean, tp.truth_grid[g]);
            job.grid["a"].add_point(only_a.grid[g].mean, tp.truth_grid[g]);
            job.grid["b"].add_point(only_b.grid[g].mean, tp.truth_grid[g]);
            const double w2 = both.grid[g].upper - both.grid[g].lower;
            job.ci_grid_a += metrics::ci_percent_diff(w2, only_a.grid[g].upper - only_a.grid[g].lower);
            job.ci_grid_b += metrics::ci_percent_diff(w2, only_b.grid[g].upper - only_b.grid[g].lower);
            ++job.n_grid;
        }
        for (std::size_t k = 0; k < na; ++k) {
            const double w2 = both.sites[k].upper - both.sites[k].lower;
            job.ci_sites_a += metrics::ci_percent_diff(w2, only_a.sites[k].upper - only_a.sites[k].lower);
            ++job.n_sites_a;
        }
        for (std::size_t k = 0; k < ds.sites_b.size(); ++k) {
            const double w2 = both.sites[na + k].upper - both.sites[na + k].lower;
            job.ci_sites_b += metrics::ci_percent_diff(w2, only_b.sites[k].upper - only_b.sites[k].lower);
            ++job.n_sites_b;
        }

        // Pseudo-RMSE: in-radius grid points and network sites, scored
        // against the reference value.
        std::vector<Location> targets;
        std::vector<double> pred;
        std::vector<int> is_grid;
        auto near = [&](const Location& s) {
            return std::hypot(s.x - ds.reference.x, s.y - ds.reference.y) <= cfg.pseudo_radius;
        };
        for (std::size_t g = 0; g < ds.grid.size(); ++g) {
            if (near(ds.grid[g])) {
                targets.push_back(ds.grid[g]);
                pred.push_back(both.grid[g].mean);
                is_grid.push_back(1);
            }
        }
        const filter::FilterInput full = s6_filter_input(ds, t, true, true);
        const auto sites = full.lowcost_sites();
        for (std::size_t k = 0; k < sites.size(); ++k) {
            if (near(sites[k])) {
                targets.push_back(sites[k]);
                pred.push_back(both.sites[k].mean);
                is_grid.push_back(0);
            }
        }
        if (!targets.empty()) {
            const auto idw = regcal_idw(full, targets, cfg.idw_power);
            for (std::size_t k = 0; k < targets.size(); ++k) {
                const double em = pred[k] - tp.reference_value;
                const double ei = idw[k] - tp.reference_value;
                job.pseudo_se[0][is_grid[k]] += em * em;
                job.pseudo_se[1][is_grid[k]] += ei * ei;
                ++job.pseudo_n[is_grid[k]];
            }
        }
        if (progress) {
            std::lock_guard lock(progress_mu);
            progress(fmt::format("s6 dataset {} t={} rmse mgpf/a/b = {:.2f}/{:.2f}/{:.2f}", d, t,
                                 job.grid["mgpf"].rmse(), job.grid["a"].rmse(), job.grid["b"].rmse()));
        }
    });

    S6Result res;
    std::map<std::string, Accum> grid;
    double sa = 0, sb = 0, ga = 0, gb = 0;
    double pse[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    std::size_t nsa = 0, nsb = 0, ng = 0, pn[2] = {0, 0};
    for (const auto& job : jobs) {
        for (const auto& [k, a] : job.grid) grid[k].merge(a);
        sa += job.ci_sites_a;
        sb += job.ci_sites_b;
        ga += job.ci_grid_a;
        gb += job.ci_grid_b;
        nsa += job.n_sites_a;
        nsb += job.n_sites_b;
        ng += job.n_grid;
        for (int m = 0; m < 2; ++m) {
            for (int g = 0; g < 2; ++g) pse[m][g] += job.pseudo_se[m][g];
        }
        for (int g = 0; g < 2; ++g) pn[g] += job.pseudo_n[g];
        res.warnings.insert(res.warnings.end(), job.warnings.begin(), job.warnings.end());
    }
    for (const auto& [k, a] : grid) res.grid_point[k] = a.point();
    res.ci_sites_a = sa / static_cast<double>(nsa);
    res.ci_sites_b = sb / static_cast<double>(nsb);
    res.ci_grid_a = ga / static_cast<double>(ng);
    res.ci_grid_b = gb / static_cast<double>(ng);
    auto root_mean = [](double se, std::size_t n) { return n > 0 ? std::sqrt(se / static_cast<double>(n)) : std::nan(""); };
    res.pseudo_sites_mgpf = root_mean(pse[0][0], pn[0]);
    res.pseudo_sites_idw = root_mean(pse[1][0], pn[0]);
    res.pseudo_grid_mgpf = root_mean(pse[0][1], pn[1]);
    res.pseudo_grid_idw = root_mean(pse[1][1], pn[1]);
    res.pseudo_rmse_mgpf = root_mean(pse[0][0] + pse[0][1], pn[0] + pn[1]);
    res.pseudo_rmse_idw = root_mean(pse[1][0] + pse[1][1], pn[0] + pn[1]);
    res.timepoints = jobs.size();
    return res;
}

// ---------------------------------------------------------------------------
// Training range

void RangeConfig::validate() const {
    if (n_train < 10 || n_test < 1) throw ValidationError("range experiment: too few points");
    if (!(x_max > 0.0) || !(narrow_fraction > 0.0 && narrow_fraction <= 1.0)) {
        throw ValidationError("range experiment: bad range settings");
    }
    if (!(x_skew >= 1.0)) {
        throw ValidationError("range experiment: x_skew must be >= 1");
    }
    if (!(tau2_intercept >= 0.0) || !(tau2_slope >= 0.0) || !(tau2_intercept + tau2_slope > 0.0)) {
        throw ValidationError("range experiment: variance coefficients must be >= 0");
    }
}

RangeResult run_range_experiment(const RangeConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const obs::ObsModelParams truth_model = obs::preset("purpleair-barkjohn");
    auto tau2 = [&](double x) { return cfg.tau2_intercept + cfg.tau2_slope * x; };
    auto make = [&](int n, double hi) {
        obs::CollocatedSeries s;
        for (int k = 0; k < n; ++k) {
            const double x = hi * (cfg.x_skew == 1.0 ? draw_uniform(rng, 0.0, 1.0) : draw_beta(rng, 1.0, cfg.x_skew));
            const Covariates z{draw_uniform(rng, cfg.rh_lo, cfg.rh_hi), 0.0, 0.0};
            s.x.push_back(x);
            s.z.push_back(z);
            s.y.push_back(truth_model.offset(z) + truth_model.gain(z) * x + std::sqrt(tau2(x)) * draw_normal(rng));
            s.time.push_back(std::to_string(k));
        }
        return s;
    };
    const obs::CollocatedSeries full = make(cfg.n_train, cfg.x_max);
    const obs::CollocatedSeries narrow = make(cfg.n_train, cfg.x_max * cfg.narrow_fraction);
    const obs::CollocatedSeries test = make(cfg.n_test, cfg.x_max);

    obs::TrainingOptions opts;
    opts.spec.covariates = {"rh"};
    opts.form = obs::VarianceForm::LogLinear;
    RangeResult r;
    r.full = obs::train_obs_model(full, full, opts).params;
    r.narrow = obs::train_obs_model(narrow, narrow, opts).params;

    const double x_high = cfg.high_x_quantile * cfg.x_max;
    r.tau2_true_high = tau2(x_high);
    r.tau2_full_high = r.full.variance.tau2(x_high);
    r.tau2_narrow_high = r.narrow.variance.tau2(x_high);

    auto inversion_rmse = [&](const obs::ObsModelParams& p) {
        std::vector<double> pred(test.size());
        for (std::size_t k = 0; k < test.size(); ++k) {
            pred[k] = obs::invert_obs_model(test.y[k], test.z[k], p).estimate;
        }
        return metrics::point_metrics(pred, test.x).rmse;
    };
    r.rmse_full = inversion_rmse(r.full);
    r.rmse_narrow = inversion_rmse(r.narrow);
    return r;
}

}  // namespace mgpf::exp

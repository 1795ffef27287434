#include "mgpf/cli.hpp"

#include "mgpf/errors.hpp"
#include "mgpf/experiments.hpp"
#include "mgpf/filter.hpp"
#include "mgpf/io.hpp"
#include "mgpf/metrics.hpp"
#include "mgpf/obs_model.hpp"
#include "mgpf/parallel.hpp"
#include "mgpf/random.hpp"
#include "mgpf/simd/kernels.hpp"
#include "mgpf/simulator.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

namespace mgpf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// --- config plumbing --------------------------------------------------------

struct Config {
    json j;
    fs::path dir;
    std::string text;
    std::string name;

    [[nodiscard]] std::string path(const json& v, const std::string& key) const {
        if (!v.is_string()) throw ValidationError(fmt::format("{}: '{}' must be a path string", name, key));
        const fs::path p(v.get<std::string>());
        return (p.is_absolute() ? p : dir / p).lexically_normal().string();
    }
    [[nodiscard]] std::string path_at(const std::string& key) const {
        if (!j.contains(key)) throw ValidationError(fmt::format("{}: missing required key '{}'", name, key));
        return path(j.at(key), key);
    }
};

Config load_config(const std::string& path) {
    if (path.empty()) throw ValidationError("--config is required");
    Config c;
    c.name = path;
    c.text = io::read_file(path);
    try {
        c.j = json::parse(c.text);
    } catch (const json::parse_error& e) {
        throw ValidationError(fmt::format("{}: invalid JSON: {}", path, e.what()));
    }
    if (!c.j.is_object()) throw ValidationError(fmt::format("{}: top level must be an object", path));
    c.dir = fs::absolute(fs::path(path)).parent_path();
    return c;
}

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& ctx) {
    if (!j.is_object()) throw ValidationError(fmt::format("{}: expected an object", ctx));
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
            throw ValidationError(fmt::format("{}: unknown key '{}'", ctx, k));
        }
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(fmt::format("{}: key '{}' has the wrong type", ctx, key));
    }
}

struct SeedInfo {
    std::uint64_t seed = 0;
    std::string source;
};

SeedInfo resolve_seed(const CommonOptions& opt, const Config& cfg) {
    if (opt.seed) return {*opt.seed, "cli"};
    if (cfg.j.contains("seed")) {
        const json& s = cfg.j.at("seed");
        if (!s.is_number_unsigned()) throw ValidationError(fmt::format("{}: 'seed' must be a nonnegative integer", cfg.name));
        return {s.get<std::uint64_t>(), "config"};
    }
    std::random_device rd;
    const std::uint64_t hi = rd();
    const std::uint64_t lo = rd();
    return {(hi << 32) ^ lo, "generated"};
}

int resolve_workers(const CommonOptions& opt, const Config& cfg) {
    const int w = opt.workers ? *opt.workers : get_or<int>(cfg.j, "workers", 1, cfg.name);
    if (w < 1) throw ValidationError("workers must be >= 1");
    return w;
}

fs::path require_out(const CommonOptions& opt) {
    if (opt.out.empty()) throw ValidationError("--out is required");
    return fs::path(opt.out);
}

json base_metadata(const std::string& command, const Config& cfg, const SeedInfo& seed) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = seed.seed;
    m["seed_source"] = seed.source;
    m["config_digest"] = fmt::format("{:016x}", fnv1a64(cfg.text));
    m["config"] = cfg.j;
    m["simd_backend"] = std::string(simd::backend_name(simd::active_backend()));
    return m;
}

// All outputs are assembled in memory and written once everything succeeded.
class OutputSet {
public:
    void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }
    void write(const fs::path& dir) const {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw ValidationError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
        for (const auto& [name, content] : files_) {
            const fs::path p = dir / name;
            fs::create_directories(p.parent_path(), ec);
            io::write_file_atomic(p.string(), content);
        }
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string ts_label(int t) { return fmt::format("{:04d}", t); }

// --- observation models -----------------------------------------------------

obs::ObsModelParams model_entry(const json& v, const Config& cfg, const std::string& net) {
    const std::string ctx = fmt::format("{}: models.{}", cfg.name, net);
    if (v.is_string()) return obs::load_model(cfg.path(v, "models." + net));
    if (v.is_object() && v.contains("preset")) {
        allow_keys(v, {"preset", "var_floor"}, ctx);
        obs::ObsModelParams p = obs::preset(get_or<std::string>(v, "preset", "", ctx));
        if (v.contains("var_floor")) p.var_floor = get_or<double>(v, "var_floor", 0.0, ctx);
        p.validate();
        return p;
    }
    if (v.is_object()) return obs::from_json(v);
    throw ValidationError(ctx + ": expected a path, {\"preset\": ...} or an inline model");
}

std::map<std::string, obs::ObsModelParams> load_models(const Config& cfg) {
    if (!cfg.j.contains("models") || !cfg.j.at("models").is_object()) {
        throw ValidationError(fmt::format("{}: 'models' must map network ids to models", cfg.name));
    }
    std::map<std::string, obs::ObsModelParams> out;
    for (const auto& [net, v] : cfg.j.at("models").items()) out[net] = model_entry(v, cfg, net);
    if (cfg.j.contains("var_floor")) {
        for (const auto& [net, v] : cfg.j.at("var_floor").items()) {
            if (!out.contains(net)) throw ValidationError(fmt::format("{}: var_floor for unknown network '{}'", cfg.name, net));
            if (!v.is_number()) throw ValidationError(fmt::format("{}: var_floor.{} must be a number", cfg.name, net));
            out[net].var_floor = v.get<double>();
            out[net].validate();
        }
    }
    return out;
}

// --- network data -----------------------------------------------------------

struct NetworkData {
    std::vector<io::SiteRecord> sites;
    std::map<std::string, std::size_t> site_index;
    std::vector<std::string> networks;           // sorted low-cost network ids
    std::vector<std::size_t> reference_sites;    // indices into sites
    std::vector<io::GridRecord> grid;
    std::vector<std::string> timestamps;         // sorted
    std::map<std::string, std::map<std::size_t, io::MeasurementRecord>> readings;
    std::map<std::string, std::map<std::size_t, double>> reference;
};

NetworkData load_network_data(const Config& cfg, bool need_reference) {
    NetworkData d;
    d.sites = io::read_sites(cfg.path_at("sites"));
    std::set<std::string> nets;
    for (std::size_t k = 0; k < d.sites.size(); ++k) {
        const auto& s = d.sites[k];
        if (!d.site_index.emplace(s.site_id, k).second) {
            throw ValidationError(fmt::format("sites: duplicate site_id '{}'", s.site_id));
        }
        if (s.network_id.empty()) throw ValidationError(fmt::format("sites: empty network_id for '{}'", s.site_id));
        if (s.network_id == io::kReferenceNetwork) {
            d.reference_sites.push_back(k);
        } else {
            nets.insert(s.network_id);
        }
    }
    d.networks.assign(nets.begin(), nets.end());

    std::set<std::string> stamps;
    for (auto& m : io::read_measurements(cfg.path_at("measurements"))) {
        const auto it = d.site_index.find(m.site_id);
        if (it == d.site_index.end()) throw ValidationError(fmt::format("measurements: unknown site '{}'", m.site_id));
        const auto& site = d.sites[it->second];
        if (site.network_id != m.network_id) {
            throw ValidationError(fmt::format("measurements: site '{}' belongs to network '{}', not '{}'", m.site_id,
                                              site.network_id, m.network_id));
        }
        if (m.network_id == io::kReferenceNetwork) {
            throw ValidationError(fmt::format("measurements: reference site '{}' belongs in the reference file",
                                              m.site_id));
        }
        stamps.insert(m.timestamp);
        if (!d.readings[m.timestamp].emplace(it->second, m).second) {
            throw ValidationError(fmt::format("measurements: duplicate reading for '{}' at '{}'", m.site_id, m.timestamp));
        }
    }
    if (cfg.j.contains("reference")) {
        for (const auto& r : io::read_reference(cfg.path_at("reference"))) {
            const auto it = d.site_index.find(r.site_id);
            if (it == d.site_index.end() || d.sites[it->second].network_id != io::kReferenceNetwork) {
                throw ValidationError(fmt::format("reference: '{}' is not a reference site in the sites file", r.site_id));
            }
            stamps.insert(r.timestamp);
            if (!d.reference[r.timestamp].emplace(it->second, r.value).second) {
                throw ValidationError(fmt::format("reference: duplicate value for '{}' at '{}'", r.site_id, r.timestamp));
            }
        }
    } else if (need_reference) {
        throw ValidationError(fmt::format("{}: missing required key 'reference'", cfg.name));
    }
    d.timestamps.assign(stamps.begin(), stamps.end());
    if (cfg.j.contains("grid")) {
        d.grid = io::read_grid(cfg.path_at("grid"));
        std::set<std::string> ids;
        for (const auto& g : d.grid) {
            if (!ids.insert(g.site_id).second) throw ValidationError(fmt::format("grid: duplicate id '{}'", g.site_id));
        }
    }
    return d;
}

std::vector<std::string> select_timestamps(const Config& cfg, const NetworkData& d) {
    if (!cfg.j.contains("timestamps")) return d.timestamps;
    const json& sel = cfg.j.at("timestamps");
    std::vector<std::string> out;
    if (sel.is_array()) {
        std::set<std::string> seen;
        for (const auto& v : sel) {
            if (!v.is_string()) throw ValidationError(fmt::format("{}: timestamps must be strings", cfg.name));
            const auto ts = v.get<std::string>();
            if (!std::binary_search(d.timestamps.begin(), d.timestamps.end(), ts)) {
                throw ValidationError(fmt::format("{}: no data at timestamp '{}'", cfg.name, ts));
            }
            if (seen.insert(ts).second) out.push_back(ts);
        }
        std::sort(out.begin(), out.end());
        return out;
    }
    allow_keys(sel, {"from", "to"}, cfg.name + ": timestamps");
    const auto from = get_or<std::string>(sel, "from", "", cfg.name);
    const auto to = get_or<std::string>(sel, "to", "", cfg.name);
    for (const auto& ts : d.timestamps) {
        if ((from.empty() || ts >= from) && (to.empty() || ts <= to)) out.push_back(ts);
    }
    return out;
}

bool covariates_complete(const Covariates& z, const obs::ObsModelParams& m) {
    for (const auto& c : m.spec.covariates) {
        if (!std::isfinite(covariate_value(z, c))) return false;
    }
    return true;
}

// Active sites at one timestamp. Networks in sorted id order, sites in the
// order of the sites file.
filter::FilterInput build_input(const NetworkData& d, const std::string& ts,
                                const std::map<std::string, obs::ObsModelParams>& models) {
    filter::FilterInput in;
    if (const auto it = d.reference.find(ts); it != d.reference.end()) {
        for (std::size_t k : d.reference_sites) {
            const auto v = it->second.find(k);
            if (v == it->second.end() || !std::isfinite(v->second)) continue;
            in.reference_ids.push_back(d.sites[k].site_id);
            in.reference_sites.push_back(d.sites[k].loc);
            in.reference_values.push_back(v->second);
        }
    }
    const auto rit = d.readings.find(ts);
    for (const auto& net : d.networks) {
        const auto mit = models.find(net);
        if (mit == models.end()) continue;
        filter::NetworkObservations obs;
        obs.network_id = net;
        obs.model = mit->second;
        if (rit != d.readings.end()) {
            for (const auto& [k, m] : rit->second) {
                if (d.sites[k].network_id != net || !std::isfinite(m.reading)) continue;
                if (!covariates_complete(m.z, obs.model)) continue;
                obs.site_ids.push_back(m.site_id);
                obs.sites.push_back(d.sites[k].loc);
                obs.readings.push_back(m.reading);
                obs.covariates.push_back(m.z);
            }
        }
        if (!obs.sites.empty()) in.networks.push_back(std::move(obs));
    }
    for (const auto& g : d.grid) {
        in.grid_ids.push_back(g.site_id);
        in.grid.push_back(g.loc);
    }
    return in;
}

void check_models_cover(const NetworkData& d, const std::map<std::string, obs::ObsModelParams>& models,
                        const std::string& ctx) {
    std::set<std::string> with_data;
    for (const auto& [ts, rows] : d.readings) {
        for (const auto& [k, m] : rows) with_data.insert(d.sites[k].network_id);
    }
    for (const auto& net : with_data) {
        if (!models.contains(net)) throw ValidationError(fmt::format("{}: no observation model for network '{}'", ctx, net));
    }
    for (const auto& [net, m] : models) {
        if (!std::binary_search(d.networks.begin(), d.networks.end(), net)) {
            throw ValidationError(fmt::format("{}: model given for network '{}' which has no sites", ctx, net));
        }
    }
}

constexpr const char* kPredictionHeader = "timestamp,kind,site_id,network_id,x,y,mean,lower,upper\n";

void prediction_row(std::string& out, const std::string& ts, const char* kind, const std::string& site,
                    const std::string& net, const Location& loc, double mean, double lower, double upper) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", ts, kind, site, net, io::format_double(loc.x),
                       io::format_double(loc.y), io::format_double(mean), io::format_double(lower),
                       io::format_double(upper));
}

filter::ChainConfig parse_chain(const json& j, const std::string& ctx) {
    filter::ChainConfig c;
    if (j.is_null()) return c;
    allow_keys(j, {"iterations", "burn_in", "thin", "target_acceptance", "adapt_batch", "grid_nugget", "joint_grid",
                   "fixed"},
               ctx);
    c.iterations = get_or<int>(j, "iterations", c.iterations, ctx);
    c.burn_in = get_or<int>(j, "burn_in", c.burn_in, ctx);
    c.thin = get_or<int>(j, "thin", c.thin, ctx);
    c.target_acceptance = get_or<double>(j, "target_acceptance", c.target_acceptance, ctx);
    c.adapt_batch = get_or<int>(j, "adapt_batch", c.adapt_batch, ctx);
    c.grid_nugget = get_or<bool>(j, "grid_nugget", c.grid_nugget, ctx);
    c.joint_grid = get_or<bool>(j, "joint_grid", c.joint_grid, ctx);
    if (j.contains("fixed")) {
        const json& f = j.at("fixed");
        allow_keys(f, {"mu", "sigma2", "phi", "nugget"}, ctx + ".fixed");
        filter::HyperDraw h;
        h.mu = get_or<double>(f, "mu", h.mu, ctx);
        h.sigma2 = get_or<double>(f, "sigma2", h.sigma2, ctx);
        h.phi = get_or<double>(f, "phi", h.phi, ctx);
        h.nugget = get_or<double>(f, "nugget", h.nugget, ctx);
        h.cov().validate();
        c.fixed = h;
    }
    c.validate();
    return c;
}

struct PriorConfig {
    filter::PriorRules rules;
    std::map<std::string, double> overrides;

    [[nodiscard]] filter::PriorSpec apply(filter::PriorSpec p) const {
        for (const auto& [k, v] : overrides) {
            if (k == "mu_scale") p.mu_scale = v;
            if (k == "sigma2_max") p.sigma2_max = v;
            if (k == "nugget_max") p.nugget_max = v;
            if (k == "phi_min") p.phi_min = v;
            if (k == "phi_max") p.phi_max = v;
        }
        p.validate();
        return p;
    }
};

PriorConfig parse_prior(const json& j, const std::string& ctx) {
    PriorConfig pc;
    if (j.is_null()) return pc;
    allow_keys(j, {"primary_network", "sigma2_multiplier", "mu_scale_multiplier", "corr_low", "corr_high", "mu_scale",
                   "sigma2_max", "nugget_max", "phi_min", "phi_max"},
               ctx);
    if (j.contains("primary_network")) pc.rules.primary_network = get_or<std::string>(j, "primary_network", "", ctx);
    pc.rules.sigma2_multiplier = get_or<double>(j, "sigma2_multiplier", pc.rules.sigma2_multiplier, ctx);
    pc.rules.mu_scale_multiplier = get_or<double>(j, "mu_scale_multiplier", pc.rules.mu_scale_multiplier, ctx);
    pc.rules.corr_low = get_or<double>(j, "corr_low", pc.rules.corr_low, ctx);
    pc.rules.corr_high = get_or<double>(j, "corr_high", pc.rules.corr_high, ctx);
    if (!(pc.rules.sigma2_multiplier > 0.0) || !(pc.rules.mu_scale_multiplier > 0.0) ||
        !(pc.rules.corr_low > 0.0 && pc.rules.corr_low < pc.rules.corr_high && pc.rules.corr_high < 1.0)) {
        throw ValidationError(ctx + ": multipliers must be > 0 and 0 < corr_low < corr_high < 1");
    }
    for (const char* k : {"mu_scale", "sigma2_max", "nugget_max", "phi_min", "phi_max"}) {
        if (j.contains(k)) {
            const double v = get_or<double>(j, k, 0.0, ctx);
            if (!(v > 0.0)) throw ValidationError(fmt::format("{}: '{}' must be > 0", ctx, k));
            pc.overrides[k] = v;
        }
    }
    return pc;
}

struct HyperSummary {
    double mean, lower, upper;
};

HyperSummary summarize(const std::vector<filter::HyperDraw>& draws, double filter::HyperDraw::*field, double level) {
    std::vector<double> v;
    v.reserve(draws.size());
    for (const auto& h : draws) v.push_back(h.*field);
    double s = 0.0;
    for (double x : v) s += x;
    const double a = (1.0 - level) / 2.0;
    return {s / static_cast<double>(v.size()), filter::empirical_quantile(v, a), filter::empirical_quantile(v, 1.0 - a)};
}

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

// --- prediction files (evaluate) ---------------------------------------------

struct PredRow {
    std::string kind;
    double x = kNaN, y = kNaN;
    double mean = kNaN, lower = kNaN, upper = kNaN;
};

using Keyed = std::map<std::string, std::map<std::string, PredRow>>;  // timestamp -> site -> row

Keyed read_predictions(const std::string& path) {
    const io::CsvTable t = io::read_csv(path, {"timestamp", "site_id"});
    const int ct = t.require("timestamp"), cs = t.require("site_id");
    int cm = t.column("mean");
    if (cm < 0) cm = t.column("value");
    if (cm < 0) throw ValidationError(fmt::format("{}: missing required column 'mean' (or 'value')", path));
    const int ck = t.column("kind"), cx = t.column("x"), cy = t.column("y"), cl = t.column("lower"),
              cu = t.column("upper");
    Keyed out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        PredRow p;
        p.kind = ck >= 0 ? t.rows[r][static_cast<std::size_t>(ck)] : "";
        p.x = t.optional_number(r, cx);
        p.y = t.optional_number(r, cy);
        p.mean = t.optional_number(r, cm);
        p.lower = t.optional_number(r, cl);
        p.upper = t.optional_number(r, cu);
        if (!std::isnan(p.lower) && !std::isnan(p.upper) && p.lower > p.upper) {
            throw ValidationError(fmt::format("{}:{}: lower > upper", path, t.lines[r]));
        }
        const auto& ts = t.rows[r][static_cast<std::size_t>(ct)];
        const auto& site = t.rows[r][static_cast<std::size_t>(cs)];
        if (!out[ts].emplace(site, p).second) {
            throw ValidationError(fmt::format("{}:{}: duplicate row for '{}' at '{}'", path, t.lines[r], site, ts));
        }
    }
    return out;
}

using DrawMap = std::map<std::string, std::map<std::string, std::vector<double>>>;

DrawMap read_draws(const std::string& path) {
    const io::CsvTable t = io::read_csv(path, {"timestamp", "site_id", "value"});
    const int ct = t.require("timestamp"), cs = t.require("site_id"), cv = t.require("value");
    DrawMap out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out[t.rows[r][static_cast<std::size_t>(ct)]][t.rows[r][static_cast<std::size_t>(cs)]].push_back(
            t.number(r, cv));
    }
    return out;
}

// --- subcommand bodies --------------------------------------------------------

double summary_stat(const std::vector<double>& v, double q) { return filter::empirical_quantile(v, q); }

}  // namespace

int cmd_train_obs(const CommonOptions& opt, std::ostream& log) {
    const Config cfg = load_config(opt.config);
    const fs::path out = require_out(opt);
    const SeedInfo seed = resolve_seed(opt, cfg);
    const std::string& ctx = cfg.name;
    json meta = base_metadata("train-obs", cfg, seed);
    obs::ObsModelParams model;

    if (cfg.j.contains("preset")) {
        allow_keys(cfg.j, {"preset", "var_floor", "seed", "workers"}, ctx);
        const auto name = get_or<std::string>(cfg.j, "preset", "", ctx);
        model = obs::preset(name);
        if (cfg.j.contains("var_floor")) model.var_floor = get_or<double>(cfg.j, "var_floor", 0.0, ctx);
        model.validate();
        meta["preset"] = name;
        log << fmt::format("preset {}: beta =", name);
        for (double b : model.beta) log << ' ' << b;
        log << fmt::format(", variance {} ({}, {})\n", obs::to_string(model.variance.form), model.variance.alpha0,
                           model.variance.alpha1);
    } else {
        allow_keys(cfg.j, {"collocated", "variance_collocated", "covariates", "interactions", "variance_form", "gls",
                           "var_floor", "seed", "workers"},
                   ctx);
        obs::TrainingOptions topts;
        topts.spec.covariates = get_or<std::vector<std::string>>(cfg.j, "covariates", {}, ctx);
        topts.spec.interactions = get_or<std::vector<std::string>>(cfg.j, "interactions", {}, ctx);
        topts.form = obs::parse_variance_form(get_or<std::string>(cfg.j, "variance_form", "log_linear", ctx));
        topts.gls = get_or<bool>(cfg.j, "gls", true, ctx);
        if (cfg.j.contains("var_floor")) topts.var_floor = get_or<double>(cfg.j, "var_floor", 0.0, ctx);
        topts.spec.validate();

        obs::CollocatedSeries mean_window = io::read_collocated(cfg.path_at("collocated"));
        obs::CollocatedSeries var_window = cfg.j.contains("variance_collocated")
                                               ? io::read_collocated(cfg.path_at("variance_collocated"))
                                               : mean_window;
        const obs::TrainingReport rep = obs::train_obs_model(mean_window, var_window, topts);
        model = rep.params;

        std::vector<double> resid;
        for (std::size_t k = 0; k < mean_window.size(); ++k) {
            const double x = mean_window.x[k], y = mean_window.y[k];
            if (!std::isfinite(x) || !std::isfinite(y) || !covariates_complete(mean_window.z[k], model)) continue;
            resid.push_back(y - model.offset(mean_window.z[k]) - model.gain(mean_window.z[k]) * x);
        }
        double sd = 0.0, mean = 0.0;
        for (double r : resid) mean += r;
        mean /= static_cast<double>(resid.size());
        for (double r : resid) sd += (r - mean) * (r - mean);
        sd = std::sqrt(sd / static_cast<double>(resid.size() > 1 ? resid.size() - 1 : 1));
        const json diag = {{"r_squared", rep.r_squared},
                           {"ols_residual_variance", rep.ols_residual_variance},
                           {"rows_used_mean", rep.rows_used_mean},
                           {"rows_used_variance", rep.rows_used_variance},
                           {"rows_dropped", rep.rows_dropped},
                           {"residual_min", summary_stat(resid, 0.0)},
                           {"residual_median", summary_stat(resid, 0.5)},
                           {"residual_max", summary_stat(resid, 1.0)},
                           {"residual_mean", mean},
                           {"residual_sd", sd}};
        meta["diagnostics"] = diag;
        log << fmt::format("R^2 {:.4f}; rows used {} (mean) / {} (variance), dropped {}\n", rep.r_squared,
                           rep.rows_used_mean, rep.rows_used_variance, rep.rows_dropped);
        log << fmt::format("residuals: min {:.4g} median {:.4g} max {:.4g} sd {:.4g}\n", summary_stat(resid, 0.0),
                           summary_stat(resid, 0.5), summary_stat(resid, 1.0), sd);
    }
    meta["model"] = obs::to_json(model);

    OutputSet files;
    files.add("model.json", dump(obs::to_json(model)));
    files.add("metadata.json", dump(meta));
    files.write(out);
    return kExitOk;
}

int cmd_filter(const CommonOptions& opt, std::ostream& log) {
    const Config cfg = load_config(opt.config);
    const std::string& ctx = cfg.name;
    allow_keys(cfg.j, {"sites", "measurements", "reference", "grid", "models", "var_floor", "chain", "prior", "level",
                       "timestamps", "save_draws", "clamp_negative", "seed", "workers"},
               ctx);
    const fs::path out = require_out(opt);
    const SeedInfo seed = resolve_seed(opt, cfg);
    const int workers = resolve_workers(opt, cfg);
    const auto models = load_models(cfg);
    filter::ChainConfig chain = parse_chain(cfg.j.value("chain", json()), ctx + ": chain");
    if (chain.retained() < 100) throw ValidationError(ctx + ": chain must retain at least 100 draws");
    const PriorConfig prior_cfg = parse_prior(cfg.j.value("prior", json()), ctx + ": prior");
    const double level = get_or<double>(cfg.j, "level", 0.95, ctx);
    if (!(level > 0.0 && level < 1.0)) throw ValidationError(ctx + ": level must lie in (0, 1)");
    const bool save_draws = get_or<bool>(cfg.j, "save_draws", false, ctx);
    const bool clamp = get_or<bool>(cfg.j, "clamp_negative", false, ctx);

    const NetworkData data = load_network_data(cfg, false);
    check_models_cover(data, models, ctx);
    if (prior_cfg.rules.primary_network && !models.contains(*prior_cfg.rules.primary_network)) {
        throw ValidationError(fmt::format("{}: primary_network '{}' has no model", ctx, *prior_cfg.rules.primary_network));
    }
    const std::vector<std::string> stamps = select_timestamps(cfg, data);

    enum class Status { Ok, Skipped, Failed };
    struct Slot {
        Status status = Status::Ok;
        std::string reason;
        std::string predictions, hyper, draws;
        json info;
        std::size_t clamped = 0;
    };
    std::vector<Slot> slots(stamps.size());
    std::mutex log_mu;

    parallel_for(stamps.size(), workers, [&](std::size_t idx) {
        const std::string& ts = stamps[idx];
        Slot& slot = slots[idx];
        const filter::FilterInput in = build_input(data, ts, models);
        if (in.n_lowcost() == 0) {
            slot.status = Status::Skipped;
            slot.reason = in.reference_values.empty() ? "no active low-cost sites and no reference values"
                                                      : "no active low-cost sites";
            std::lock_guard lock(log_mu);
            log << fmt::format("skip {}: {}\n", ts, slot.reason);
            return;
        }
        try {
            const filter::AffineObs aff = filter::assemble_affine(in);
            const filter::PriorSpec prior = prior_cfg.apply(filter::derive_prior(in, aff, prior_cfg.rules));
            filter::ChainConfig c = chain;
            c.seed = derive_seed(seed.seed, ts);
            const filter::PosteriorField field = filter::mcmc_filter(in, prior, c);

            auto clamp_row = [&](double& m, double& lo, double& hi) {
                if (!clamp || (m >= 0.0 && lo >= 0.0 && hi >= 0.0)) return;
                m = std::max(m, 0.0);
                lo = std::max(lo, 0.0);
                hi = std::max(hi, 0.0);
                ++slot.clamped;
            };
            const auto low = filter::predict_summaries(field.lowcost_draws, level);
            std::size_t k = 0;
            for (const auto& net : in.networks) {
                for (std::size_t s = 0; s < net.sites.size(); ++s, ++k) {
                    double m = low[k].mean, lo = low[k].lower, hi = low[k].upper;
                    clamp_row(m, lo, hi);
                    prediction_row(slot.predictions, ts, "lowcost", net.site_ids[s], net.network_id, net.sites[s], m,
                                   lo, hi);
                }
            }
            for (std::size_t r = 0; r < in.reference_ids.size(); ++r) {
                const double v = in.reference_values[r];
                prediction_row(slot.predictions, ts, "reference", in.reference_ids[r], io::kReferenceNetwork,
                               in.reference_sites[r], v, v, v);
            }
            if (!in.grid.empty()) {
                const auto grid = filter::predict_summaries(field.grid_draws, level);
                for (std::size_t g = 0; g < in.grid.size(); ++g) {
                    double m = grid[g].mean, lo = grid[g].lower, hi = grid[g].upper;
                    clamp_row(m, lo, hi);
                    prediction_row(slot.predictions, ts, "grid", in.grid_ids[g], "", in.grid[g], m, lo, hi);
                }
            }

            const auto mu = summarize(field.hyper, &filter::HyperDraw::mu, level);
            const auto s2 = summarize(field.hyper, &filter::HyperDraw::sigma2, level);
            const auto phi = summarize(field.hyper, &filter::HyperDraw::phi, level);
            const auto nug = summarize(field.hyper, &filter::HyperDraw::nugget, level);
            std::string warn;
            for (const auto& w : field.warnings) warn += (warn.empty() ? "" : " | ") + sanitize(w);
            slot.hyper = fmt::format(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", ts, k,
                in.reference_values.size(), io::format_double(mu.mean), io::format_double(mu.lower),
                io::format_double(mu.upper), io::format_double(s2.mean), io::format_double(s2.lower),
                io::format_double(s2.upper), io::format_double(phi.mean), io::format_double(phi.lower),
                io::format_double(phi.upper), io::format_double(nug.mean), io::format_double(nug.lower),
                io::format_double(nug.upper), io::format_double(field.acceptance[0]),
                io::format_double(field.acceptance[1]), io::format_double(field.acceptance[2]),
                io::format_double(field.acceptance[3]), io::format_double(prior.mu_scale),
                io::format_double(prior.sigma2_max), io::format_double(prior.nugget_max),
                io::format_double(prior.phi_min), io::format_double(prior.phi_max), field.obs.negative_inversions,
                warn);

            if (save_draws) {
                for (Eigen::Index d = 0; d < field.n_draws(); ++d) {
                    std::size_t col = 0;
                    for (const auto& net : in.networks) {
                        for (std::size_t s = 0; s < net.sites.size(); ++s, ++col) {
                            slot.draws += fmt::format("{},{},lowcost,{},{}\n", ts, d, net.site_ids[s],
                                                      io::format_double(field.lowcost_draws(d, static_cast<Eigen::Index>(col))));
                        }
                    }
                    for (std::size_t g = 0; g < in.grid.size(); ++g) {
                        slot.draws += fmt::format("{},{},grid,{},{}\n", ts, d, in.grid_ids[g],
                                                  io::format_double(field.grid_draws(d, static_cast<Eigen::Index>(g))));
                    }
                }
            }
            slot.info = {{"acceptance", field.acceptance}, {"warnings", field.warnings}, {"clamped_rows", slot.clamped}};
            std::lock_guard lock(log_mu);
            for (const auto& w : field.warnings) log << fmt::format("warning {}: {}\n", ts, w);
        } catch (const NumericalError& e) {
            slot = Slot{};
            slot.status = Status::Failed;
            slot.reason = e.what();
            std::lock_guard lock(log_mu);
            log << fmt::format("numerical failure at {}: {}\n", ts, e.what());
        }
    });

    std::string predictions = kPredictionHeader;
    std::string hyper =
        "timestamp,n_lowcost,n_reference,mu_mean,mu_lower,mu_upper,sigma2_mean,sigma2_lower,sigma2_upper,"
        "phi_mean,phi_lower,phi_upper,nugget_mean,nugget_lower,nugget_upper,acc_mu,acc_sigma2,acc_phi,acc_nugget,"
        "mu_scale,sigma2_max,nugget_max,phi_min,phi_max,negative_inversions,warnings\n";
    std::string draws = "timestamp,draw,kind,site_id,value\n";
    json meta = base_metadata("filter", cfg, seed);
    json skipped = json::array(), failed = json::array(), per_ts = json::object();
    std::size_t n_ok = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const Slot& s = slots[i];
        switch (s.status) {
            case Status::Ok:
                ++n_ok;
                predictions += s.predictions;
                hyper += s.hyper;
                draws += s.draws;
                per_ts[stamps[i]] = s.info;
                break;
            case Status::Skipped: skipped.push_back({{"timestamp", stamps[i]}, {"reason", s.reason}}); break;
            case Status::Failed: failed.push_back({{"timestamp", stamps[i]}, {"error", s.reason}}); break;
        }
    }
    meta["timepoints"] = {{"requested", stamps.size()}, {"filtered", n_ok}};
    meta["skipped"] = skipped;
    meta["failed"] = failed;
    meta["per_timestamp"] = per_ts;
    meta["chain"] = {{"iterations", chain.iterations}, {"burn_in", chain.burn_in}, {"thin", chain.thin},
                     {"target_acceptance", chain.target_acceptance}, {"adapt_batch", chain.adapt_batch},
                     {"grid_nugget", chain.grid_nugget}, {"joint_grid", chain.joint_grid},
                     {"retained", chain.retained()}, {"seed_rule", "derive_seed(seed, timestamp)"}};
    meta["level"] = level;
    json mj = json::object();
    for (const auto& [net, m] : models) mj[net] = obs::to_json(m);
    meta["models"] = mj;

    OutputSet files;
    files.add("predictions.csv", predictions);
    files.add("hyper.csv", hyper);
    if (save_draws) files.add("draws.csv", draws);
    files.add("metadata.json", dump(meta));
    files.write(out);
    log << fmt::format("filtered {} of {} timepoints ({} skipped, {} failed)\n", n_ok, stamps.size(), skipped.size(),
                       failed.size());
    return failed.empty() ? kExitOk : kExitNumerical;
}

namespace {

sim::PlumeConfig parse_plume(const json& j, const std::string& ctx) {
    sim::PlumeConfig p;
    if (j.is_null()) return p;
    allow_keys(j, {"lattice_n", "lattice_lo", "lattice_hi", "steps", "dt", "decay", "initial_sources", "spawn_every",
                   "cluster_prob", "xi_smoothing_passes", "stable_substeps"},
               ctx);
    p.lattice.n = get_or<int>(j, "lattice_n", p.lattice.n, ctx);
    p.lattice.lo = get_or<double>(j, "lattice_lo", p.lattice.lo, ctx);
    p.lattice.hi = get_or<double>(j, "lattice_hi", p.lattice.hi, ctx);
    p.steps = get_or<int>(j, "steps", p.steps, ctx);
    p.dt = get_or<double>(j, "dt", p.dt, ctx);
    p.decay = get_or<double>(j, "decay", p.decay, ctx);
    p.initial_sources = get_or<int>(j, "initial_sources", p.initial_sources, ctx);
    p.spawn_every = get_or<int>(j, "spawn_every", p.spawn_every, ctx);
    p.cluster_prob = get_or<double>(j, "cluster_prob", p.cluster_prob, ctx);
    p.xi_smoothing_passes = get_or<int>(j, "xi_smoothing_passes", p.xi_smoothing_passes, ctx);
    p.stable_substeps = get_or<bool>(j, "stable_substeps", p.stable_substeps, ctx);
    p.validate();
    return p;
}

sim::S6Config parse_s6(const json& j, const std::string& ctx) {
    sim::S6Config c;
    if (j.is_null()) return c;
    allow_keys(j, {"n_per_network", "n_free", "timepoints", "preferential", "grid_side"}, ctx);
    c.n_per_network = get_or<int>(j, "n_per_network", c.n_per_network, ctx);
    c.n_free = get_or<int>(j, "n_free", c.n_free, ctx);
    c.timepoints = get_or<int>(j, "timepoints", c.timepoints, ctx);
    c.preferential = get_or<bool>(j, "preferential", c.preferential, ctx);
    c.grid_side = get_or<int>(j, "grid_side", c.grid_side, ctx);
    c.validate();
    return c;
}

void simulate_s5(const Config& cfg, const SeedInfo& seed, OutputSet& files, json& meta, std::ostream& log) {
    const std::string& ctx = cfg.name;
    allow_keys(cfg.j, {"mode", "plume", "n1", "n2", "train_steps", "eval_stride", "write_field", "write_grid_truth",
                       "seed", "workers"},
               ctx);
    const sim::PlumeConfig plume = parse_plume(cfg.j.value("plume", json()), ctx + ": plume");
    const int n1 = get_or<int>(cfg.j, "n1", 100, ctx);
    const int n2 = get_or<int>(cfg.j, "n2", 100, ctx);
    const int train_steps = get_or<int>(cfg.j, "train_steps", std::min(400, plume.steps - 1), ctx);
    const int stride = get_or<int>(cfg.j, "eval_stride", 2, ctx);
    const bool write_field = get_or<bool>(cfg.j, "write_field", true, ctx);
    const bool write_grid_truth = get_or<bool>(cfg.j, "write_grid_truth", true, ctx);
    if (n1 < 1 || n2 < 1 || stride < 1 || train_steps < 3 || train_steps >= plume.steps) {
        throw ValidationError(ctx + ": need n1, n2, eval_stride >= 1 and 3 <= train_steps < steps");
    }

    // Same stream layout as the study driver, so the files reproduce it.
    const auto frames = sim::simulate_plumes(plume, derive_seed(seed.seed, "field"));
    Rng net_rng(derive_seed(seed.seed, "networks"));
    const sim::NetworkPair nets = sim::generate_networks_s5(net_rng, n1, n2);
    Rng obs_rng(derive_seed(seed.seed, "readings"));
    log << fmt::format("s5: {} frames on a {} lattice\n", frames.size(), plume.lattice.n);

    std::vector<io::SiteRecord> sites;
    const std::array<const sim::SyntheticNetwork*, 2> ns{&nets.first, &nets.second};
    auto site_id = [](const sim::SyntheticNetwork& n, std::size_t k) { return fmt::format("{}_{}", n.spec.id, k); };
    for (const auto* n : ns) {
        for (std::size_t k = 0; k < n->sites.size(); ++k) sites.push_back({site_id(*n, k), n->spec.id, n->sites[k]});
    }
    for (const auto* n : ns) {
        sites.push_back({"ref_" + n->spec.id, io::kReferenceNetwork, n->sites[static_cast<std::size_t>(n->colocated)]});
    }

    const auto& f0 = frames.front();
    std::vector<io::GridRecord> grid;
    std::vector<std::pair<int, int>> nodes;
    for (int j = 0; j < f0.n(); j += stride) {
        for (int i = 0; i < f0.n(); i += stride) {
            grid.push_back({fmt::format("g{}", grid.size()),
                            {f0.coords[static_cast<std::size_t>(i)], f0.coords[static_cast<std::size_t>(j)]}});
            nodes.emplace_back(i, j);
        }
    }

    std::vector<io::MeasurementRecord> meas;
    std::vector<io::ReferenceRecord> ref;
    std::vector<io::ReferenceRecord> truth;
    std::array<obs::CollocatedSeries, 2> train;
    const double nan = kNaN;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const std::string ts = ts_label(static_cast<int>(t) + 1);
        for (std::size_t w = 0; w < 2; ++w) {
            const auto& n = *ns[w];
            std::vector<double> tr;
            for (const auto& s : n.sites) tr.push_back(sim::interpolate(frames[t], s));
            const std::vector<double> y = sim::synth_obs(tr, n.spec, obs_rng);
            for (std::size_t k = 0; k < tr.size(); ++k) {
                meas.push_back({site_id(n, k), n.spec.id, ts, y[k], {nan, nan, nan}});
                truth.push_back({site_id(n, k), ts, tr[k]});
            }
            const auto c = static_cast<std::size_t>(n.colocated);
            ref.push_back({"ref_" + n.spec.id, ts, tr[c]});
            if (static_cast<int>(t) < train_steps) {
                train[w].time.push_back(ts);
                train[w].x.push_back(tr[c]);
                train[w].y.push_back(y[c]);
                train[w].z.push_back({nan, nan, nan});
            }
        }
        if (write_grid_truth) {
            for (std::size_t g = 0; g < grid.size(); ++g) {
                truth.push_back({grid[g].site_id, ts, frames[t].at(nodes[g].first, nodes[g].second)});
            }
        }
    }

    auto to_string = [](auto writer, const auto& v) {
        std::ostringstream ss;
        writer(ss, v);
        return ss.str();
    };
    if (write_field) {
        std::ostringstream ss;
        sim::write_field_csv(ss, frames);
        files.add("field.csv", ss.str());
    }
    files.add("sites.csv", to_string(io::write_sites, sites));
    files.add("measurements.csv", to_string(io::write_measurements, meas));
    files.add("reference.csv", to_string(io::write_reference, ref));
    files.add("truth.csv", to_string(io::write_reference, truth));
    files.add("grid.csv", to_string(io::write_grid, grid));
    json coloc = json::object();
    json filter_models = json::object();
    for (std::size_t w = 0; w < 2; ++w) {
        const auto& n = *ns[w];
        const auto c = static_cast<std::size_t>(n.colocated);
        files.add(fmt::format("train_{}.csv", n.spec.id), to_string(io::write_collocated, train[w]));
        files.add(fmt::format("train_{}.json", n.spec.id),
                  dump({{"collocated", fmt::format("train_{}.csv", n.spec.id)},
                        {"variance_form", "homoscedastic"},
                        {"gls", false}}));
        coloc[n.spec.id] = {{"site_id", site_id(n, c)}, {"reference_id", "ref_" + n.spec.id},
                            {"x", n.sites[c].x}, {"y", n.sites[c].y}};
        filter_models[n.spec.id] = fmt::format("{}/model.json", n.spec.id);
    }
    files.add("colocation.json", dump(coloc));
    files.add("filter.json", dump({{"sites", "sites.csv"},
                                   {"measurements", "measurements.csv"},
                                   {"reference", "reference.csv"},
                                   {"grid", "grid.csv"},
                                   {"models", filter_models},
                                   {"timestamps", {{"from", ts_label(train_steps + 1)}}}}));
    meta["mode"] = "s5";
    meta["frames"] = frames.size();
    meta["cropped_side"] = f0.n();
    meta["train_steps"] = train_steps;
    meta["assumed_defaults"] = {{"xi_smoothing_passes", plume.xi_smoothing_passes},
                                {"xi_smoothing", "five-point average, edge clamp, standardized"},
                                {"stable_substeps", plume.stable_substeps}};
}

void simulate_s6(const Config& cfg, const SeedInfo& seed, OutputSet& files, json& meta, std::ostream& log) {
    const std::string& ctx = cfg.name;
    allow_keys(cfg.j, {"mode", "datasets", "data", "seed", "workers"}, ctx);
    const sim::S6Config sc = parse_s6(cfg.j.value("data", json()), ctx + ": data");
    const int datasets = get_or<int>(cfg.j, "datasets", 10, ctx);
    if (datasets < 1 || datasets > 100) throw ValidationError(ctx + ": datasets must lie in [1, 100]");

    const std::array<std::pair<const char*, sim::LinearHetModel>, 2> models{
        {{"a", sim::s6_model_a()}, {"b", sim::s6_model_b()}}};
    for (const auto& [id, m] : models) {
        files.add(fmt::format("model_{}.json", id), dump(obs::to_json(exp::linear_model(m))));
    }
    json quadrant = json::array();
    for (int d = 0; d < datasets; ++d) {
        // Seeds match the study driver's dataset streams.
        const sim::S6Dataset ds = sim::generate_s6_dataset(sc, derive_seed(seed.seed, static_cast<std::uint64_t>(d)));
        const std::string dir = fmt::format("ds{:02d}/", d);
        std::vector<io::SiteRecord> sites{{"ref", io::kReferenceNetwork, ds.reference}};
        for (std::size_t k = 0; k < ds.sites_a.size(); ++k) sites.push_back({fmt::format("a{}", k), "a", ds.sites_a[k]});
        for (std::size_t k = 0; k < ds.sites_b.size(); ++k) sites.push_back({fmt::format("b{}", k), "b", ds.sites_b[k]});
        std::vector<io::GridRecord> grid;
        for (std::size_t g = 0; g < ds.grid.size(); ++g) grid.push_back({fmt::format("g{}", g), ds.grid[g]});
        std::vector<io::MeasurementRecord> meas;
        std::vector<io::ReferenceRecord> ref, truth;
        for (std::size_t t = 0; t < ds.timepoints.size(); ++t) {
            const auto& tp = ds.timepoints[t];
            const std::string ts = ts_label(static_cast<int>(t) + 1);
            for (std::size_t k = 0; k < ds.sites_a.size(); ++k) {
                meas.push_back({fmt::format("a{}", k), "a", ts, tp.y_a[k], {tp.rh_a[k], kNaN, kNaN}});
                truth.push_back({fmt::format("a{}", k), ts, tp.truth_a[k]});
            }
            for (std::size_t k = 0; k < ds.sites_b.size(); ++k) {
                meas.push_back({fmt::format("b{}", k), "b", ts, tp.y_b[k], {tp.rh_b[k], kNaN, kNaN}});
                truth.push_back({fmt::format("b{}", k), ts, tp.truth_b[k]});
            }
            for (std::size_t g = 0; g < ds.grid.size(); ++g) truth.push_back({fmt::format("g{}", g), ts, tp.truth_grid[g]});
            ref.push_back({"ref", ts, tp.reference_value});
        }
        std::ostringstream s1, s2, s3, s4, s5;
        io::write_sites(s1, sites);
        io::write_measurements(s2, meas);
        io::write_reference(s3, ref);
        io::write_reference(s4, truth);
        io::write_grid(s5, grid);
        files.add(dir + "sites.csv", s1.str());
        files.add(dir + "measurements.csv", s2.str());
        files.add(dir + "reference.csv", s3.str());
        files.add(dir + "truth.csv", s4.str());
        files.add(dir + "grid.csv", s5.str());
        files.add(dir + "filter.json", dump({{"sites", "sites.csv"},
                                             {"measurements", "measurements.csv"},
                                             {"reference", "reference.csv"},
                                             {"grid", "grid.csv"},
                                             {"models", {{"a", "../model_a.json"}, {"b", "../model_b.json"}}}}));
        int b_in_quadrant = 0;
        for (const auto& s : ds.sites_b) b_in_quadrant += (s.x <= 0.5 && s.y >= 0.5) ? 1 : 0;
        quadrant.push_back(b_in_quadrant);
    }
    log << fmt::format("s6: {} datasets x {} timepoints\n", datasets, sc.timepoints);
    meta["mode"] = "s6";
    meta["datasets"] = datasets;
    meta["b_sites_in_top_left"] = quadrant;
    meta["assumed_defaults"] = {{"mu_beta", {sc.mu_a, sc.mu_b}},
                                {"emission_beta", {sc.emis_a, sc.emis_b}},
                                {"variance_beta", {sc.var_a, sc.var_b}},
                                {"nugget_fraction_max", sc.nugget_frac},
                                {"corr_at_sqrt2", {sc.corr_lo, sc.corr_hi}},
                                {"rh_range", {sc.rh_lo, sc.rh_hi}}};
}

}  // namespace

int cmd_simulate(const CommonOptions& opt, std::ostream& log) {
    const Config cfg = load_config(opt.config);
    const fs::path out = require_out(opt);
    const SeedInfo seed = resolve_seed(opt, cfg);
    const auto mode = get_or<std::string>(cfg.j, "mode", "", cfg.name);
    json meta = base_metadata("simulate", cfg, seed);
    OutputSet files;
    if (mode == "s5") {
        simulate_s5(cfg, seed, files, meta, log);
    } else if (mode == "s6") {
        simulate_s6(cfg, seed, files, meta, log);
    } else {
        throw ValidationError(fmt::format("{}: 'mode' must be \"s5\" or \"s6\"", cfg.name));
    }
    files.add("metadata.json", dump(meta));
    files.write(out);
    return kExitOk;
}

int cmd_evaluate(const CommonOptions& opt, std::ostream& log) {
    const Config cfg = load_config(opt.config);
    const std::string& ctx = cfg.name;
    allow_keys(cfg.j, {"mode", "truth", "methods", "kinds", "level", "pseudo", "seed", "workers"}, ctx);
    const fs::path out = require_out(opt);
    const SeedInfo seed = resolve_seed(opt, cfg);
    const auto mode = get_or<std::string>(cfg.j, "mode", "truth", ctx);
    if (mode != "truth" && mode != "pseudo") throw ValidationError(ctx + ": mode must be \"truth\" or \"pseudo\"");
    const auto kinds = get_or<std::vector<std::string>>(cfg.j, "kinds", {"lowcost", "grid"}, ctx);
    const double level = get_or<double>(cfg.j, "level", 0.95, ctx);
    if (!(level > 0.0 && level < 1.0)) throw ValidationError(ctx + ": level must lie in (0, 1)");
    auto kind_ok = [&](const std::string& k) {
        return k.empty() || std::find(kinds.begin(), kinds.end(), k) != kinds.end();
    };

    if (!cfg.j.contains("methods") || !cfg.j.at("methods").is_object() || cfg.j.at("methods").empty()) {
        throw ValidationError(ctx + ": 'methods' must map method names to prediction files");
    }
    struct Method {
        Keyed pred;
        std::optional<DrawMap> draws;
        std::string baseline;
    };
    std::map<std::string, Method> methods;
    for (const auto& [name, v] : cfg.j.at("methods").items()) {
        const std::string mctx = ctx + ": methods." + name;
        Method m;
        if (v.is_string()) {
            m.pred = read_predictions(cfg.path(v, "methods." + name));
        } else {
            allow_keys(v, {"predictions", "draws", "ci_baseline"}, mctx);
            if (!v.contains("predictions")) throw ValidationError(mctx + ": missing 'predictions'");
            m.pred = read_predictions(cfg.path(v.at("predictions"), "predictions"));
            if (v.contains("draws")) m.draws = read_draws(cfg.path(v.at("draws"), "draws"));
            m.baseline = get_or<std::string>(v, "ci_baseline", "", mctx);
        }
        methods.emplace(name, std::move(m));
    }
    for (const auto& [name, m] : methods) {
        if (!m.baseline.empty() && !methods.contains(m.baseline)) {
            throw ValidationError(fmt::format("{}: ci_baseline '{}' of method '{}' is not a method", ctx, m.baseline, name));
        }
    }

    // Truth or proxy.
    std::map<std::string, std::map<std::string, double>> truth;
    Location center;
    double radius = 0.0;
    std::map<std::string, Location> site_loc;
    std::map<std::string, double> proxy;
    if (mode == "truth") {
        for (const auto& r : io::read_reference(cfg.path_at("truth"))) truth[r.timestamp][r.site_id] = r.value;
    } else {
        if (!cfg.j.contains("pseudo")) throw ValidationError(ctx + ": pseudo mode needs a 'pseudo' block");
        const json& p = cfg.j.at("pseudo");
        allow_keys(p, {"sites", "reference", "reference_site", "radius"}, ctx + ": pseudo");
        for (const auto& s : io::read_sites(cfg.path(p.value("sites", json()), "pseudo.sites"))) site_loc[s.site_id] = s.loc;
        const auto ref_id = get_or<std::string>(p, "reference_site", "", ctx);
        if (!site_loc.contains(ref_id)) throw ValidationError(fmt::format("{}: unknown reference_site '{}'", ctx, ref_id));
        center = site_loc[ref_id];
        radius = get_or<double>(p, "radius", 0.0, ctx);
        if (!(radius > 0.0)) throw ValidationError(ctx + ": pseudo.radius must be > 0");
        for (const auto& r : io::read_reference(cfg.path(p.value("reference", json()), "pseudo.reference"))) {
            if (r.site_id == ref_id && std::isfinite(r.value)) proxy[r.timestamp] = r.value;
        }
    }

    metrics::MetricReport report;
    std::size_t skipped_no_proxy = 0;
    for (const auto& [name, m] : methods) {
        for (const auto& [ts, rows] : m.pred) {
            std::vector<std::string> ids;
            std::vector<double> pred, tv, lo, hi;
            std::vector<Location> locs;
            for (const auto& [site, r] : rows) {
                if (!kind_ok(r.kind)) continue;
                ids.push_back(site);
                pred.push_back(r.mean);
                lo.push_back(r.lower);
                hi.push_back(r.upper);
                locs.push_back({r.x, r.y});
            }
            if (ids.empty()) continue;
            metrics::MetricRow row;
            row.method = name;
            row.timepoint = ts;
            row.n = ids.size();
            if (mode == "truth") {
                const auto tit = truth.find(ts);
                for (const auto& id : ids) {
                    if (tit == truth.end() || !tit->second.contains(id)) {
                        throw ValidationError(fmt::format("{}: no truth for '{}' at '{}'", name, id, ts));
                    }
                    tv.push_back(tit->second.at(id));
                }
                row.point = metrics::point_metrics(pred, tv);
                const bool have_intervals = std::none_of(lo.begin(), lo.end(), [](double v) { return std::isnan(v); }) &&
                                            std::none_of(hi.begin(), hi.end(), [](double v) { return std::isnan(v); });
                if (have_intervals) {
                    row.interval = metrics::interval_metrics(lo, hi, tv, level);
                } else {
                    row.interval = {kNaN, kNaN, kNaN, kNaN};
                }
                if (m.draws) {
                    const auto dit = m.draws->find(ts);
                    double crps = 0.0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                        if (dit == m.draws->end() || !dit->second.contains(ids[k])) {
                            throw ValidationError(fmt::format("{}: no draws for '{}' at '{}'", name, ids[k], ts));
                        }
                        crps += metrics::crps_sample(dit->second.at(ids[k]), tv[k]);
                    }
                    row.interval.crps = crps / static_cast<double>(ids.size());
                }
            } else {
                const auto pit = proxy.find(ts);
                if (pit == proxy.end()) {
                    ++skipped_no_proxy;
                    continue;
                }
                for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (std::isnan(locs[k].x) || std::isnan(locs[k].y)) {
                        const auto sit = site_loc.find(ids[k]);
                        if (sit == site_loc.end()) {
                            throw ValidationError(fmt::format("{}: no coordinates for '{}'", name, ids[k]));
                        }
                        locs[k] = sit->second;
                    }
                }
                row.point = {kNaN, kNaN, kNaN};
                row.interval = {kNaN, kNaN, kNaN, kNaN};
                row.pseudo_rmse = metrics::pseudo_rmse(locs, pred, center, pit->second, radius);
            }
            if (!m.baseline.empty()) {
                const auto& base = methods.at(m.baseline).pred;
                const auto bit = base.find(ts);
                double s = 0.0;
                std::size_t n = 0;
                for (std::size_t k = 0; k < ids.size() && bit != base.end(); ++k) {
                    const auto b = bit->second.find(ids[k]);
                    if (b == bit->second.end()) continue;
                    const double w2 = hi[k] - lo[k];
                    const double w1 = b->second.upper - b->second.lower;
                    if (!std::isfinite(w2) || !std::isfinite(w1) || !(w1 > 0.0)) continue;
                    s += metrics::ci_percent_diff(w2, w1);
                    ++n;
                }
                row.ci_pct_diff = n > 0 ? s / static_cast<double>(n) : kNaN;
            }
            report.rows.push_back(row);
        }
    }
    if (report.rows.empty()) throw ValidationError(ctx + ": nothing to evaluate after filtering by kind");

    std::ostringstream ss;
    report.write_csv(ss);
    json meta = base_metadata("evaluate", cfg, seed);
    meta["mode"] = mode;
    meta["rows"] = report.rows.size();
    meta["skipped_without_proxy"] = skipped_no_proxy;
    for (const auto& s : report.summary()) {
        log << fmt::format("{}: rmse {:.4g} coverage {:.3g} pseudo_rmse {:.4g} ci_pct_diff {:.3g}\n", s.method,
                           s.point.rmse, s.interval.coverage, s.pseudo_rmse, s.ci_pct_diff);
    }
    OutputSet files;
    files.add("metrics.csv", ss.str());
    files.add("metadata.json", dump(meta));
    files.write(out);
    return kExitOk;
}

int cmd_idw_baseline(const CommonOptions& opt, std::ostream& log) {
    const Config cfg = load_config(opt.config);
    const std::string& ctx = cfg.name;
    allow_keys(cfg.j, {"sites", "measurements", "reference", "grid", "models", "var_floor", "power", "timestamps",
                       "seed", "workers"},
               ctx);
    const fs::path out = require_out(opt);
    const SeedInfo seed = resolve_seed(opt, cfg);
    const auto models = load_models(cfg);
    const double power = get_or<double>(cfg.j, "power", 2.0, ctx);
    if (!(power > 0.0)) throw ValidationError(ctx + ": power must be > 0");
    const NetworkData data = load_network_data(cfg, false);
    check_models_cover(data, models, ctx);
    const std::vector<std::string> stamps = select_timestamps(cfg, data);

    std::string rows = kPredictionHeader;
    json skipped = json::array();
    for (const auto& ts : stamps) {
        const filter::FilterInput in = build_input(data, ts, models);
        if (in.n_lowcost() == 0) {
            skipped.push_back({{"timestamp", ts}, {"reason", "no active low-cost sites"}});
            log << fmt::format("skip {}: no active low-cost sites\n", ts);
            continue;
        }
        std::vector<Location> targets = in.lowcost_sites();
        targets.insert(targets.end(), in.grid.begin(), in.grid.end());
        const std::vector<double> v = exp::regcal_idw(in, targets, power);
        std::size_t k = 0;
        for (const auto& net : in.networks) {
            for (std::size_t s = 0; s < net.sites.size(); ++s, ++k) {
                prediction_row(rows, ts, "lowcost", net.site_ids[s], net.network_id, net.sites[s], v[k], kNaN, kNaN);
            }
        }
        for (std::size_t g = 0; g < in.grid.size(); ++g, ++k) {
            prediction_row(rows, ts, "grid", in.grid_ids[g], "", in.grid[g], v[k], kNaN, kNaN);
        }
    }
    json meta = base_metadata("idw-baseline", cfg, seed);
    meta["power"] = power;
    meta["skipped"] = skipped;
    OutputSet files;
    files.add("idw.csv", rows);
    files.add("metadata.json", dump(meta));
    files.write(out);
    return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-network Gaussian process filter for low-cost sensor networks", "mgpf"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonOptions opt;
    std::uint64_t seed = 0;
    int workers = 1;
    using Handler = int (*)(const CommonOptions&, std::ostream&);
    std::vector<std::pair<CLI::App*, Handler>> subs;
    auto add = [&](const char* name, const char* help, Handler h) {
        CLI::App* sc = app.add_subcommand(name, help);
        sc->add_option("--config", opt.config, "JSON config file")->required();
        sc->add_option("--seed", seed, "64-bit seed (overrides the config)");
        sc->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sc->add_option("--out", opt.out, "output directory")->required();
        subs.emplace_back(sc, h);
    };
    add("train-obs", "fit or export an observation model", cmd_train_obs);
    add("filter", "run the filter at every timepoint", cmd_filter);
    add("simulate", "generate synthetic datasets", cmd_simulate);
    add("evaluate", "score predictions against truth or a reference proxy", cmd_evaluate);
    add("idw-baseline", "regression calibration followed by inverse distance weighting", cmd_idw_baseline);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }
    for (const auto& [sc, handler] : subs) {
        if (!sc->parsed()) continue;
        if (sc->count("--seed") > 0) opt.seed = seed;
        if (sc->count("--workers") > 0) opt.workers = workers;
        try {
            return handler(opt, err);
        } catch (const ValidationError& e) {
            err << "error: " << e.what() << '\n';
            return kExitValidation;
        } catch (const NumericalError& e) {
            err << "numerical failure: " << e.what() << '\n';
            return kExitNumerical;
        } catch (const json::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitValidation;
        } catch (const fs::filesystem_error& e) {
            err << "error: " << e.what() << '\n';
            return kExitValidation;
        } catch (const std::exception& e) {
            err << "internal error: " << e.what() << '\n';
            return 1;
        }
    }
    return kExitValidation;
}

}  // namespace mgpf::cli

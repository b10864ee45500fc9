#include "cli.hpp"

#include "mmdiff/diagnostics.hpp"
#include "mmdiff/error.hpp"
#include "mmdiff/errorfit.hpp"
#include "mmdiff/io.hpp"
#include "mmdiff/mef.hpp"
#include "mmdiff/mle.hpp"
#include "mmdiff/parameters.hpp"
#include "mmdiff/passage.hpp"
#include "mmdiff/pure_diffusion.hpp"
#include "mmdiff/simulate.hpp"
#include "mmdiff/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

namespace mmdiff::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A command ran to completion but its numerical result is unusable.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reads a single JSON object as a flat list of option values.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::FileError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            CLI::ConfigItem item;
            item.name = key;
            if (value.is_boolean()) {
                item.inputs = {value.get<bool>() ? "true" : "false"};
            } else if (value.is_string()) {
                item.inputs = {value.get<std::string>()};
            } else {
                item.inputs = {value.dump()};
            }
            items.push_back(std::move(item));
        }
        return items;
    }
};

struct RunConfig {
    std::string command;
    std::string config;
    std::string input;
    double delta = kUnset;
    std::string model = "transformed-ou";
    std::string method = "mle";
    std::string params;
    std::uint64_t seed = 20240611;
    std::string out = ".";
    std::string format = "csv";
    std::size_t lags = 100;
    double bandwidth = 0.1;
    bool with_error = false;
    std::size_t n = 20000;
    double a = kUnset;
    double b = kUnset;
    std::string convention = "means";
    std::size_t components = 2;
    std::size_t bootstrap = 50;

    bool error_model() const { return with_error || model == "transformed-ou+error"; }

    json to_json() const {
        json j{{"command", command},       {"model", error_model() && model == "transformed-ou" ? "transformed-ou+error" : model},
               {"method", method},         {"seed", seed},
               {"out", out},               {"format", format},
               {"lags", lags},             {"bandwidth", bandwidth},
               {"with-error", with_error}, {"n", n},
               {"convention", convention}, {"components", components},
               {"bootstrap", bootstrap}};
        if (!input.empty()) j["input"] = input;
        if (!params.empty()) j["params"] = params;
        if (!config.empty()) j["config"] = config;
        if (std::isfinite(delta)) j["delta"] = delta;
        if (std::isfinite(a)) j["a"] = a;
        if (std::isfinite(b)) j["b"] = b;
        return j;
    }
};

std::string utc_now() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class Session {
public:
    Session(const RunConfig& cfg, std::ostream& out)
        : cfg_(cfg), out_(out), start_(std::chrono::steady_clock::now()), wall_clock_(utc_now()) {}

    json meta() const {
        return {{"tool", "mmdiff"},
                {"version", MMDIFF_VERSION},
                {"seed", cfg_.seed},
                {"config", cfg_.to_json()},
                {"wall_clock", wall_clock_},
                {"elapsed_seconds", elapsed()}};
    }

    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

    fs::path target(const std::string& name) {
        fs::path dir(cfg_.out);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw UsageError("cannot create output directory '" + cfg_.out + "': " + ec.message());
        written_.push_back(name);
        return dir / name;
    }

    void write_json(const std::string& name, json body) {
        body["meta"] = meta();
        std::ofstream f(target(name));
        if (!f) throw UsageError("cannot write " + name);
        f << body.dump(2) << '\n';
    }

    /// CSV files carry the configuration, seed and version in '#' comment lines
    /// but neither the timestamp nor the output directory, so a rerun
    /// reproduces them byte for byte. Both are recorded in run.json.
    std::ofstream open_csv(const std::string& name) {
        std::ofstream f(target(name));
        if (!f) throw UsageError("cannot write " + name);
        f << "# mmdiff " << MMDIFF_VERSION << '\n';
        f << "# seed " << cfg_.seed << '\n';
        json echo = cfg_.to_json();
        echo.erase("out");
        f << "# config " << echo.dump() << '\n';
        f.precision(17);
        return f;
    }

    void finish() {
        if (written_.empty()) return;
        json manifest{{"outputs", written_}};
        manifest["meta"] = meta();
        std::ofstream f(fs::path(cfg_.out) / "run.json");
        f << manifest.dump(2) << '\n';
    }

    std::ostream& out() { return out_; }
    const RunConfig& cfg() const { return cfg_; }

private:
    const RunConfig& cfg_;
    std::ostream& out_;
    std::chrono::steady_clock::time_point start_;
    std::string wall_clock_;
    std::vector<std::string> written_;
};

// ---- parameters ----

using ParamMap = std::map<std::string, double>;

ParamMap params_from_json(const json& j) {
    const json& src = j.contains("theta") && j["theta"].is_object() ? j["theta"] : j;
    ParamMap p;
    for (const auto& [k, v] : src.items()) {
        if (v.is_number()) p[k] = v.get<double>();
    }
    return p;
}

/// Accepts a JSON file (a fit.json or a flat object), inline JSON, or
/// "name=value,name=value".
ParamMap parse_params(const std::string& spec) {
    if (spec.empty()) return {};
    try {
        if (spec.front() == '{') return params_from_json(json::parse(spec));
        if (fs::exists(spec)) {
            std::ifstream f(spec);
            return params_from_json(json::parse(f));
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("--params: invalid JSON: ") + e.what());
    }
    ParamMap p;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("--params: expected name=value, got '" + item + "'");
        std::string name = item.substr(0, eq);
        try {
            std::size_t used = 0;
            double v = std::stod(item.substr(eq + 1), &used);
            if (used != item.size() - eq - 1) throw std::invalid_argument(name);
            p[name] = v;
        } catch (const std::logic_error&) {
            throw UsageError("--params: '" + item + "' is not a number");
        }
    }
    if (p.empty()) throw UsageError("--params: no parameters given");
    return p;
}

double require(const ParamMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw UsageError("missing parameter '" + name + "'");
    return it->second;
}

double get_or(const ParamMap& p, const std::string& name, double fallback) {
    auto it = p.find(name);
    return it == p.end() ? fallback : it->second;
}

Eigen::VectorXd theta_from(const ParamMap& p, std::size_t k) {
    auto names = theta_names(k);
    Eigen::VectorXd theta(static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) theta[static_cast<Eigen::Index>(i)] = require(p, names[i]);
    return theta;
}

NormalMixture target_from(const ParamMap& p, std::size_t k) {
    Eigen::VectorXd theta = theta_from(p, k);
    std::vector<double> psi(theta.data() + 1, theta.data() + theta.size());
    return NormalMixture::from_parameters(psi, k);
}

NormalMixture target_without_nu(const ParamMap& p, std::size_t k) {
    ParamMap q = p;
    q.emplace("nu", 1.0);
    return target_from(q, k);
}

TransformedDiffusion model_from(const ParamMap& p, std::size_t k, bool accelerate = false) {
    Eigen::VectorXd theta = theta_from(p, k);
    OuMixtureParams mp = from_theta(theta, k);
    return TransformedDiffusion::ou(mp.nu, mp.target, accelerate);
}

ParamMap require_params(const RunConfig& cfg) {
    if (cfg.params.empty()) throw UsageError(cfg.command + " requires --params");
    return parse_params(cfg.params);
}

TimeSeries load_input(const RunConfig& cfg) {
    if (cfg.input.empty()) throw UsageError(cfg.command + " requires --input");
    std::optional<double> delta;
    if (std::isfinite(cfg.delta)) delta = cfg.delta;
    return ingest_csv_file(cfg.input, delta);
}

// ---- output helpers ----

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

json fit_json(const FitResult& r) {
    json theta = json::object();
    json se = json::object();
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        auto j = static_cast<Eigen::Index>(i);
        theta[r.names[i]] = r.theta[j];
        se[r.names[i]] = j < r.std_errors.size() ? r.std_errors[j] : kUnset;
    }
    return {{"method", r.method},
            {"names", r.names},
            {"theta", theta},
            {"std_errors", se},
            {"covariance", matrix_json(r.covariance)},
            {"objective", r.objective},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"message", r.message},
            {"dt", r.dt},
            {"observations", r.observations}};
}

void print_table(std::ostream& out, const FitResult& r) {
    char line[128];
    std::snprintf(line, sizeof line, "%-10s %16s %16s\n", "parameter", "estimate", "std.error");
    out << line;
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        auto j = static_cast<Eigen::Index>(i);
        double se = j < r.std_errors.size() ? r.std_errors[j] : kUnset;
        std::snprintf(line, sizeof line, "%-10s %16.8g %16.8g\n", r.names[i].c_str(), r.theta[j], se);
        out << line;
    }
}

void write_residuals(Session& s, const TransformedDiffusion& model, const Path& path) {
    ResidualReport r = uniform_residuals(model, path);
    auto f = s.open_csv("residuals.csv");
    f << "index,u,z\n";
    for (std::size_t i = 0; i < r.u.size(); ++i) f << i + 1 << ',' << r.u[i] << ',' << r.z[i] << '\n';
}

std::size_t usable_lags(const RunConfig& cfg, const Path& path) {
    if (path.size() < 2) throw UsageError("the series is too short for autocorrelations");
    return std::min(cfg.lags, path.size() - 1);
}

// ---- commands ----

int cmd_ingest_check(Session& s) {
    TimeSeries ts = load_input(s.cfg());
    const Path& p = ts.path;
    auto [lo, hi] = std::minmax_element(p.values.begin(), p.values.end());
    json report{{"observations", p.size()},
                {"dt", p.dt},
                {"time_start", ts.times.front()},
                {"time_end", ts.times.back()},
                {"mean", sample_mean(p.values)},
                {"variance", sample_variance(p.values)},
                {"min", *lo},
                {"max", *hi},
                {"meta", s.meta()}};
    s.out() << report.dump(2) << '\n';
    return kExitOk;
}

int cmd_fit(Session& s) {
    const RunConfig& cfg = s.cfg();
    TimeSeries ts = load_input(cfg);
    const Path& path = ts.path;
    const std::size_t k = cfg.components;
    ParamMap start = cfg.params.empty() ? ParamMap{} : parse_params(cfg.params);
    json body{{"model", cfg.error_model() ? "transformed-ou+error" : "transformed-ou"}};
    bool converged = true;

    if (cfg.error_model()) {
        ErrorFitOptions opt;
        opt.components = k;
        opt.bootstrap = cfg.bootstrap;
        opt.seed = cfg.seed;
        opt.acf.lags = cfg.lags;
        opt.acf.seed = cfg.seed;
        if (!start.empty()) {
            double vz = sample_variance(path.values);
            opt.acf.start = std::array<double, 3>{require(start, "nu"), require(start, "kappa"),
                                                  std::min(require(start, "gamma2") / vz, 0.99)};
        }
        ErrorModelFit fit = fit_error_model(path, opt);
        const MarginalFit& m = fit.marginal;
        json stage1{{"names", m.names},
                    {"estimates", vector_json(m.estimates)},
                    {"std_errors", vector_json(m.std_errors)},
                    {"covariance", matrix_json(m.covariance)},
                    {"bandwidth", m.bandwidth},
                    {"loglik", m.loglik},
                    {"iterations", m.iterations},
                    {"converged", m.converged},
                    {"degenerate", m.degenerate}};
        const AcfFit& a = fit.acf;
        json stage2{{"nu", a.nu},
                    {"kappa", a.kappa},
                    {"beta", a.beta},
                    {"gamma2", a.gamma2},
                    {"sum_of_squares", a.sum_of_squares},
                    {"iterations", a.iterations},
                    {"converged", a.converged},
                    {"beta_curvature", a.beta_curvature},
                    {"weakly_identified", a.weakly_identified},
                    {"lags", a.empirical.size() - 1}};
        body["stage1"] = stage1;
        body["stage2"] = stage2;
        body["fit"] = fit_json(fit.result);
        body["theta"] = body["fit"]["theta"];
        body["bootstrap"] = {{"replicates", cfg.bootstrap}, {"failures", fit.bootstrap_failures}};
        body["residuals_note"] =
            "residuals.csv applies the fitted latent transition to the observed series and ignores the "
            "measurement error, so it is only indicative";
        converged = m.converged && a.converged;
        if (a.weakly_identified) s.out() << "warning: the error share beta is weakly identified\n";

        s.write_json("fit.json", body);
        write_residuals(s, TransformedDiffusion::ou(a.nu, a.latent), path);
        auto f = s.open_csv("acf.csv");
        f << "lag,time,empirical,fitted,fitted_latent\n";
        for (std::size_t j = 0; j < a.empirical.size(); ++j) {
            f << j << ',' << static_cast<double>(j) * path.dt << ',' << a.empirical[j] << ',' << a.fitted[j]
              << ',' << a.fitted_y[j] << '\n';
        }
        print_table(s.out(), fit.result);
    } else {
        FitResult r;
        std::optional<Eigen::VectorXd> init;
        if (!start.empty()) init = theta_from(start, k);
        if (cfg.method == "mle") {
            MleOptions opt;
            opt.components = k;
            opt.seed = cfg.seed;
            r = fit_mle(path, init, opt);
        } else if (cfg.method == "mef") {
            EstimatingFunctionSpec spec;
            spec.components = k;
            spec.seed = cfg.seed;
            Eigen::VectorXd theta0 = init ? *init : auto_init(path, k).theta;
            r = solve_mef(spec, path, theta0);
        } else {
            throw UsageError("--method must be mle or mef");
        }
        converged = r.converged;
        body["fit"] = fit_json(r);
        body["theta"] = body["fit"]["theta"];
        s.write_json("fit.json", body);

        OuMixtureParams mp = from_theta(r.theta, k);
        auto model = TransformedDiffusion::ou(mp.nu, mp.target);
        write_residuals(s, model, path);
        const std::size_t lags = usable_lags(cfg, path);
        std::vector<double> emp = autocorrelation(path.values, lags);
        HermiteAutocorrelation h(mp.target);
        auto f = s.open_csv("acf.csv");
        f << "lag,time,empirical,model\n";
        for (std::size_t j = 0; j <= lags; ++j) {
            double t = static_cast<double>(j) * path.dt;
            f << j << ',' << t << ',' << emp[j] << ',' << h.at(mp.nu, t) << '\n';
        }
        print_table(s.out(), r);
    }
    if (!converged) throw NumericFailure("the fit did not converge; see fit.json");
    return kExitOk;
}

json passage_json(const PassageResult& r) {
    return {{"mean", r.mean},
            {"error", r.error},
            {"converged", r.converged},
            {"astronomical", r.astronomical},
            {"message", r.message}};
}

int cmd_passage(Session& s) {
    const RunConfig& cfg = s.cfg();
    ParamMap p = require_params(cfg);
    TransformedDiffusion model = model_from(p, cfg.components);

    double lower = 0.0;
    double upper = 0.0;
    std::string note;
    if (std::isfinite(cfg.a) || std::isfinite(cfg.b)) {
        if (!(std::isfinite(cfg.a) && std::isfinite(cfg.b))) throw UsageError("--a and --b go together");
        lower = cfg.a;
        upper = cfg.b;
        note = "user-supplied endpoints a and b";
    } else {
        std::vector<double> pts;
        if (cfg.convention == "means") {
            pts = model.target().component_means();
            note = "regime locations are the component means";
        } else if (cfg.convention == "modes") {
            pts = model.target().modes();
            note = "regime locations are the modes of the mixture density";
        } else {
            throw UsageError("--convention must be means or modes");
        }
        if (pts.size() < 2) throw UsageError("the fitted density has fewer than two regimes; supply --a and --b");
        lower = pts.front();
        upper = pts.back();
    }

    PassageResult forward;
    PassageResult backward;
    try {
        forward = mean_passage_transformed(model, lower, upper);
        backward = mean_passage_transformed(model, upper, lower);
    } catch (const NumericRangeError& e) {
        throw UsageError(std::string("endpoint outside the support of the fitted density: ") + e.what());
    }
    const double ratio = backward.mean / forward.mean;

    char line[160];
    auto& o = s.out();
    o << "convention: " << note << '\n';
    std::snprintf(line, sizeof line, "E[T | start %.6g, reach %.6g] = %.6g\n", lower, upper, forward.mean);
    o << line;
    std::snprintf(line, sizeof line, "E[T | start %.6g, reach %.6g] = %.6g\n", upper, lower, backward.mean);
    o << line;
    if (std::isfinite(ratio)) {
        std::snprintf(line, sizeof line, "ratio (second / first) = %.6g\n", ratio);
        o << line;
    } else {
        o << "ratio (second / first) = undefined\n";
    }
    for (const auto* r : {&forward, &backward}) {
        if (!r->converged) o << "warning: quadrature did not reach its tolerance: " << r->message << '\n';
        if (r->astronomical) o << "warning: an endpoint lies far in a tail; the value is astronomically sensitive\n";
    }

    json body{{"a", lower},
              {"b", upper},
              {"convention", note},
              {"a_to_b", passage_json(forward)},
              {"b_to_a", passage_json(backward)},
              {"ratio", ratio}};
    s.write_json("passage.json", body);
    if (!forward.converged || !backward.converged) throw NumericFailure("passage-time quadrature failed");
    return kExitOk;
}

int cmd_simulate(Session& s) {
    const RunConfig& cfg = s.cfg();
    ParamMap p = require_params(cfg);
    const double dt = std::isfinite(cfg.delta) ? cfg.delta : 1.0;
    if (!(dt > 0.0)) throw UsageError("--delta must be positive");
    if (cfg.n == 0) throw UsageError("--n must be positive");

    std::vector<std::string> columns{"value"};
    std::vector<std::vector<double>> data;
    Rng rng(cfg.seed);
    if (cfg.error_model()) {
        auto model = model_from(p, cfg.components, true);
        ErrorPaths e = simulate_with_error(model, require(p, "kappa"), require(p, "gamma2"), cfg.n, dt, rng);
        columns = {"value", "latent", "error"};
        data = {e.observed.values, e.latent.values, e.error.values};
    } else if (cfg.model == "transformed-ou") {
        auto model = model_from(p, cfg.components, true);
        data = {simulate_transformed_ou(model, cfg.n, dt, StationaryStart{}, rng).values};
    } else if (cfg.model == "double-well") {
        auto sde = double_well_model(require(p, "theta"), get_or(p, "sigma", 1.0));
        data = {simulate_euler(sde, cfg.n, dt, kDefaultEulerSubsteps, get_or(p, "x0", 1.0), rng).values};
    } else if (cfg.model == "pure") {
        NormalMixture target = target_without_nu(p, cfg.components);
        auto sde = pure_diffusion_model(target, get_or(p, "sigma", 1.0));
        double x0 = get_or(p, "x0", target.component_means().back());
        data = {simulate_euler(sde, cfg.n, dt, 64, x0, rng).values};
    } else {
        throw UsageError("unknown --model '" + cfg.model + "'");
    }

    if (cfg.format == "json") {
        json body{{"dt", dt}};
        for (std::size_t c = 0; c < columns.size(); ++c) body[columns[c]] = data[c];
        s.write_json("path.json", body);
    } else if (cfg.format == "csv") {
        auto f = s.open_csv("path.csv");
        f << "index,time";
        for (const auto& c : columns) f << ',' << c;
        f << '\n';
        for (std::size_t i = 0; i < cfg.n; ++i) {
            f << i << ',' << static_cast<double>(i) * dt;
            for (const auto& col : data) f << ',' << col[i];
            f << '\n';
        }
    } else {
        throw UsageError("--format must be csv or json");
    }
    s.out() << "simulated " << cfg.n << " observations at dt = " << dt << " (seed " << cfg.seed << ")\n";
    return kExitOk;
}

const char* status_name(GridStatus g) {
    switch (g) {
        case GridStatus::Ok: return "ok";
        case GridStatus::LocalConstant: return "local-constant";
        case GridStatus::Skipped: return "skipped";
    }
    return "?";
}

int cmd_diagnose(Session& s) {
    const RunConfig& cfg = s.cfg();
    TimeSeries ts = load_input(cfg);
    const Path& path = ts.path;
    ParamMap p = require_params(cfg);
    TransformedDiffusion model = model_from(p, cfg.components);

    ResidualReport r = uniform_residuals(model, path);
    json body{{"residuals",
               {{"count", r.u.size()},
                {"ks", r.ks},
                {"ks_critical_5pct", r.ks_critical},
                {"lag1_rank_correlation", r.lag1_rank_correlation},
                {"lag1_rank_se", r.lag1_rank_se}}},
              {"caveat", kDependentDataCaveat}};
    if (path.size() >= 100) {
        GofReport g = marginal_gof(model.target(), path);
        body["marginal"] = {{"n", g.n}, {"ks", g.ks}, {"ks_critical_5pct", g.ks_critical}};
        auto f = s.open_csv("histogram.csv");
        f << "lower,upper,count,density,model_density\n";
        for (const auto& b : g.histogram) {
            f << b.lower << ',' << b.upper << ',' << b.count << ',' << b.density << ',' << b.model_density << '\n';
        }
    }
    {
        std::vector<double> u = r.u;
        std::sort(u.begin(), u.end());
        auto f = s.open_csv("qq.csv");
        f << "x,y\n";
        for (std::size_t i = 0; i < u.size(); ++i) {
            f << (static_cast<double>(i) + 0.5) / static_cast<double>(u.size()) << ',' << u[i] << '\n';
        }
        auto g = s.open_csv("lag.csv");
        g << "x,y\n";
        for (std::size_t i = 1; i < r.u.size(); ++i) g << r.u[i - 1] << ',' << r.u[i] << '\n';
    }
    if (!(cfg.bandwidth > 0.0)) throw UsageError("--bandwidth must be positive");
    std::vector<double> grid = interior_grid(path, 50);
    LocalLinearEstimate ll = local_linear_coefficients(path, cfg.bandwidth, grid);
    auto f = s.open_csv("local_linear.csv");
    f << "y,drift,diffusion2,model_drift,model_diffusion2,status,effective_n\n";
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double md = kUnset;
        double ms = kUnset;
        try {
            TransformedCoefficients c = model.coefficients(grid[i]);
            md = c.drift;
            ms = c.diffusion * c.diffusion;
        } catch (const NumericRangeError&) {
        }
        skipped += ll.status[i] == GridStatus::Skipped;
        f << grid[i] << ',' << ll.drift[i] << ',' << ll.diffusion2[i] << ',' << md << ',' << ms << ','
          << status_name(ll.status[i]) << ',' << ll.effective_n[i] << '\n';
    }
    body["local_linear"] = {{"bandwidth", cfg.bandwidth}, {"grid_points", grid.size()}, {"skipped", skipped}};
    s.write_json("diagnostics.json", body);

    char line[160];
    std::snprintf(line, sizeof line, "residual KS = %.4g (5%% critical %.4g), lag-1 rank correlation = %.4g (se %.3g)\n",
                  r.ks, r.ks_critical, r.lag1_rank_correlation, r.lag1_rank_se);
    s.out() << line << "note: " << kDependentDataCaveat << '\n';
    return kExitOk;
}

int cmd_acf(Session& s) {
    const RunConfig& cfg = s.cfg();
    TimeSeries ts = load_input(cfg);
    const Path& path = ts.path;
    const std::size_t lags = usable_lags(cfg, path);
    std::vector<std::size_t> idx(lags + 1);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t blocks = std::min<std::size_t>(20, path.size() / std::max<std::size_t>(2 * lags, 1));
    AutocorrelationEstimate est;
    if (blocks >= 2) {
        est = autocorrelation_with_se(path.values, idx, blocks);
    } else {
        est.rho = autocorrelation(path.values, lags);
        est.se.assign(lags + 1, kUnset);
    }

    std::vector<double> model_acf;
    if (!cfg.params.empty()) {
        ParamMap p = parse_params(cfg.params);
        Eigen::VectorXd theta = theta_from(p, cfg.components);
        OuMixtureParams mp = from_theta(theta, cfg.components);
        HermiteAutocorrelation h(mp.target);
        double beta = 0.0;
        double kappa = 1.0;
        if (p.count("gamma2")) {
            ErrorModelParams ep{mp.nu, mp.target, require(p, "kappa"), require(p, "gamma2")};
            validate(ep);
            beta = beta_fraction(ep);
            kappa = ep.kappa;
        }
        for (std::size_t j = 0; j <= lags; ++j) {
            double t = static_cast<double>(j) * path.dt;
            model_acf.push_back(rho_z(beta, kappa, t, h.at(mp.nu, t)));
        }
    }
    auto f = s.open_csv("acf.csv");
    f << "lag,time,rho,se" << (model_acf.empty() ? "" : ",model") << '\n';
    for (std::size_t j = 0; j <= lags; ++j) {
        f << j << ',' << static_cast<double>(j) * path.dt << ',' << est.rho[j] << ',' << est.se[j];
        if (!model_acf.empty()) f << ',' << model_acf[j];
        f << '\n';
    }
    s.out() << "autocorrelations at lags 0.." << lags << " written to acf.csv\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Transformed diffusion models for bimodal time series"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON document whose keys mirror the long flags");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.fallthrough();
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(MMDIFF_VERSION));

    app.add_option("--input", cfg.input, "CSV series: (time,value), (value) or with a 'value' column");
    app.add_option("--delta", cfg.delta, "Sampling interval; required for value-only input");
    app.add_option("--model", cfg.model, "transformed-ou, transformed-ou+error, double-well or pure")
        ->check(CLI::IsMember({"transformed-ou", "transformed-ou+error", "double-well", "pure"}));
    app.add_option("--method", cfg.method, "Estimator for transformed-ou: mle or mef")
        ->check(CLI::IsMember({"mle", "mef"}));
    app.add_option("--params", cfg.params, "fit.json, inline JSON or name=value,... list");
    app.add_option("--seed", cfg.seed, "Random seed");
    app.add_option("--out", cfg.out, "Output directory");
    app.add_option("--format", cfg.format, "Series output format")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--lags", cfg.lags, "Number of autocorrelation lags")->check(CLI::PositiveNumber);
    app.add_option("--bandwidth", cfg.bandwidth, "Kernel bandwidth for local-linear estimates");
    app.add_flag("--with-error", cfg.with_error, "Include the measurement-error process");
    app.add_option("--n", cfg.n, "Number of simulated observations");
    app.add_option("--a", cfg.a, "First passage endpoint");
    app.add_option("--b", cfg.b, "Second passage endpoint");
    app.add_option("--convention", cfg.convention, "Regime locations: means or modes")
        ->check(CLI::IsMember({"means", "modes"}));
    app.add_option("--components", cfg.components, "Mixture components")->check(CLI::Range(1, 20));
    app.add_option("--bootstrap", cfg.bootstrap, "Bootstrap replicates for the error model");

    std::map<std::string, int (*)(Session&)> commands{{"ingest-check", cmd_ingest_check},
                                                      {"fit", cmd_fit},
                                                      {"passage", cmd_passage},
                                                      {"simulate", cmd_simulate},
                                                      {"diagnose", cmd_diagnose},
                                                      {"acf", cmd_acf}};
    const std::map<std::string, std::string> help{
        {"ingest-check", "Validate an input series"},
        {"fit", "Fit a model; writes fit.json, residuals.csv and acf.csv"},
        {"passage", "Mean passage times between the regimes"},
        {"simulate", "Simulate a path; writes path.csv"},
        {"diagnose", "Residual, marginal and local-linear diagnostics"},
        {"acf", "Empirical autocorrelations with standard errors"}};
    for (const auto& [name, text] : help) app.add_subcommand(name, text);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    cfg.command = app.get_subcommands().front()->get_name();

    std::optional<Session> session;
    int code = kExitOk;
    try {
        session.emplace(cfg, out);
        code = commands.at(cfg.command)(*session);
    } catch (const NumericFailure& e) {
        err << "error: " << e.what() << '\n';
        code = kExitNumeric;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        code = kExitUsage;
    } catch (const InputFileError& e) {
        err << "error: " << e.what() << '\n';
        code = kExitUsage;
    } catch (const IngestError& e) {
        err << "error: " << e.what() << '\n';
        code = kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        code = kExitUsage;
    } catch (const NumericRangeError& e) {
        err << "numeric error: " << e.what() << '\n';
        code = kExitNumeric;
    } catch (const ConvergenceError& e) {
        err << "numeric error: " << e.what() << '\n';
        code = kExitNumeric;
    } catch (const SingularMatrixError& e) {
        err << "numeric error: " << e.what() << '\n';
        code = kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        code = kExitNumeric;
    }
    // the manifest is written even after a failure so partial outputs stay traceable
    if (session) session->finish();
    return code;
}

}  // namespace mmdiff::cli

#include "scorelab/experiments.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "scorelab/ei_sampler.hpp"
#include "scorelab/relu_builders.hpp"

namespace scorelab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

MetricReport metric(const std::string& name, double value, double se, long n, uint64_t seed,
                    const std::string& config = "") {
    MetricReport m;
    m.name = name;
    m.value = value;
    m.std_error = se;
    m.n = n;
    m.seed = seed;
    m.config = config;
    return m;
}

TargetSpec target_from(const ExperimentConfig& cfg) {
    if (!cfg.raw.contains("target"))
        throw ConfigError("config: experiment '" + cfg.experiment + "' requires a target");
    return TargetSpec::from_json(cfg.raw.at("target"));
}

double pget(const json& params, const std::string& key, double def) {
    return params.contains(key) ? params.at(key).get<double>() : def;
}
int pgeti(const json& params, const std::string& key, int def) {
    return params.contains(key) ? params.at(key).get<int>() : def;
}

// ---------------------------------------------------------------------------
// E1: constructed score network across a budget schedule
// ---------------------------------------------------------------------------
std::vector<MetricReport> run_e1(const ExperimentConfig& cfg, uint64_t seed) {
    TargetSpec spec = target_from(cfg);
    double t = pget(cfg.params, "t", 0.5);
    double eps_f = pget(cfg.params, "phi_f_eps", 0.05);
    json levels = cfg.params.contains("levels") ? cfg.params.at("levels") : json::array();
    if (levels.empty())
        levels = json::array({json{{"eps", 0.3}, {"R", 4.2}, {"m", 1000}},
                              json{{"eps", 0.15}, {"R", 4.6}, {"m", 3200}},
                              json{{"eps", 0.075}, {"R", 5.0}, {"m", 10000}}});
    ForwardMarginal fm = forward_marginal(t);
    double max_R = 0.0;
    for (const auto& l : levels) max_R = std::max(max_R, l.at("R").get<double>());
    double reach = fm.shrink * max_R + std::sqrt(fm.noise_var) * max_R + 0.05;

    PhiF phi_f;
    if (spec.form() == TargetForm::GaussianMixture) {
        phi_f = mixture_phi_f(spec, reach, eps_f);
    } else if (spec.form() == TargetForm::StandardGaussian) {
        phi_f = PhiF::direct(shallow_net(MatrixXd::Zero(1, spec.dim()), VectorXd::Zero(1),
                                         VectorXd::Zero(1), 0.0));
    } else {
        phi_f = PhiF::direct(spec.f_net());
    }

    std::vector<MetricReport> rows;
    rows.push_back(metric("e1_phi_f_path_norm", phi_f.net.path_norm(), 0.0, 1, seed));
    rows.push_back(metric("e1_phi_f_cert_error", phi_f.cert_error, 0.0, 1, seed));
    int lvl = 0;
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (const auto& l : levels) {
        ApproxBudget budget;
        budget.eps = l.at("eps").get<double>();
        budget.R = l.at("R").get<double>();
        budget.m_neurons = l.at("m").get<int>();
        budget.L_f = phi_f.net.depth();
        ConstructedScore cs = build_score_net(spec, phi_f, t, budget, seed);
        std::ostringstream c;
        c << "eps=" << budget.eps << ";R=" << budget.R << ";m=" << budget.m_neurons;
        rows.push_back(metric("e1_l2_rel_level" + std::to_string(lvl), cs.l2_rel_error, 0.0,
                              budget.m_neurons, seed, c.str()));
        rows.push_back(metric("e1_path_total_level" + std::to_string(lvl), cs.path_norm_total,
                              0.0, 1, seed));
        if (cs.l2_rel_error > prev) monotone = false;
        prev = cs.l2_rel_error;
        ++lvl;
    }
    rows.push_back(metric("e1_monotone", monotone ? 1.0 : 0.0, 0.0, lvl, seed));
    if (!monotone)
        throw CheckFailure("E1: constructed-score error did not decrease across the schedule");
    return rows;
}

// ---------------------------------------------------------------------------
// E2: end-to-end sampling, oracle score and trained score
// ---------------------------------------------------------------------------
std::vector<MetricReport> run_e2(const ExperimentConfig& cfg, uint64_t seed) {
    TargetSpec spec = target_from(cfg);
    if (spec.dim() != 1) throw ConfigError("E2: d = 1 histogram comparison only");
    double T = pget(cfg.params, "T", 5.0);
    double t0 = pget(cfg.params, "t0", 0.01);
    int M = pgeti(cfg.params, "M", 200);
    int n_samples = pgeti(cfg.params, "n_samples", 100000);
    int bins = pgeti(cfg.params, "bins", 64);
    double lo = pget(cfg.params, "lo", -6.0), hi = pget(cfg.params, "hi", 6.0);
    bool with_trained = cfg.params.contains("train");
    SamplerSchedule sched = SamplerSchedule::uniform(T, t0, M);

    auto density = [&](double x) {
        return std::exp(log_density_p0(spec, VectorXd::Constant(1, x)));
    };

    std::vector<MetricReport> rows;
    ScoreFn oracle = [spec](double t, const MatrixXd& X) {
        return mixture_score_oracle_batch(spec, t, X);
    };
    MatrixXd samples = sample_reverse(oracle, sched, n_samples, 1, seed);
    MetricReport tv = tv_histogram_density(samples.col(0), density, bins, lo, hi, seed);
    rows.push_back(metric("e2_tv_oracle", tv.value, tv.std_error, n_samples, seed));

    if (with_trained) {
        const json& tr = cfg.params.at("train");
        int N = pgeti(tr, "N", 50000);
        int n_times = pgeti(tr, "n_times", 16);
        TrainOptions opt;
        opt.width = pgeti(tr, "width", 64);
        opt.steps = pgeti(tr, "steps", 4000);
        opt.lr = pget(tr, "lr", 0.02);
        std::vector<double> times(n_times);
        for (int k = 0; k < n_times; ++k)
            times[k] = t0 * std::pow(T / t0, k / double(n_times - 1));
        MatrixXd data = sample_p0(spec, N, seed ^ 0xDA7A);
        ScoreModel model = train(spec, times, data, opt, seed);
        MatrixXd tr_samples = sample_reverse(model.as_score_fn(), sched, n_samples, 1, seed);
        MetricReport tv2 = tv_histogram_density(tr_samples.col(0), density, bins, lo, hi, seed);
        rows.push_back(metric("e2_tv_trained", tv2.value, tv2.std_error, n_samples, seed));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// E3: builder certifications
// ---------------------------------------------------------------------------
std::vector<MetricReport> run_e3(const ExperimentConfig& cfg, uint64_t seed) {
    double eps = pget(cfg.params, "eps", 1e-2);
    std::vector<MetricReport> rows;
    auto push = [&](const std::string& name, const BuilderResult& r) {
        rows.push_back(metric(name + "_cert_error", r.cert_error, 0.0, r.m, seed));
        rows.push_back(metric(name + "_path_norm", r.path_norm, 0.0, r.m, seed,
                              "bound=" + fmt(r.path_bound)));
    };
    push("e3_exp", build_exp(-1.0, 1.0, eps));
    push("e3_prod", build_prod(2.0, eps));
    push("e3_inv", build_inv(0.5, 2.0, eps));
    push("e3_quot", build_quot(2.0, 0.5, 2.0, eps));
    return rows;
}

// ---------------------------------------------------------------------------
// E4: short-time KL bound
// ---------------------------------------------------------------------------
std::vector<MetricReport> run_e4(const ExperimentConfig& cfg, uint64_t seed) {
    TargetSpec spec = target_from(cfg);
    std::vector<double> t_grid = {0.01, 0.05, 0.1, 0.2};
    if (cfg.params.contains("t_grid"))
        t_grid = cfg.params.at("t_grid").get<std::vector<double>>();
    double C = pget(cfg.params, "C", 10.0);
    KlCheckReport rep = kl_short_time_check(spec, t_grid, C);
    std::vector<MetricReport> rows;
    rows.push_back(metric("e4_m_beta", rep.m_beta_used, 0.0, 1, seed));
    for (const auto& r : rep.rows)
        rows.push_back(metric("e4_kl_t" + fmt(r.t), r.kl, 0.0, 1, seed,
                              "bound=" + fmt(r.bound)));
    if (!rep.pass) throw CheckFailure("E4: KL(p_t||p0) exceeded C*M_beta*t on the grid");
    return rows;
}

// ---------------------------------------------------------------------------
// E5: generalization trend and truncated-risk gap
// ---------------------------------------------------------------------------
std::vector<MetricReport> run_e5(const ExperimentConfig& cfg, uint64_t seed) {
    TargetSpec spec = target_from(cfg);
    double t = pget(cfg.params, "t", 0.5);
    std::vector<long> n_list = {1000, 10000, 100000};
    if (cfg.params.contains("n_list")) n_list = cfg.params.at("n_list").get<std::vector<long>>();
    double S = pget(cfg.params, "S", 6.0), R = pget(cfg.params, "R", 8.0);
    if (!(S < R) || !(S > 0.0))
        throw ConfigError("E5: truncation invariant violated: need 0 < S < R (got S=" +
                          fmt(S) + ", R=" + fmt(R) + ")");
    TrainOptions opt;
    opt.width = pgeti(cfg.params, "width", 64);
    opt.steps = pgeti(cfg.params, "steps", 4000);
    opt.lr = pget(cfg.params, "lr", 0.02);

    std::vector<MetricReport> rows;
    for (long N : n_list) {
        MatrixXd data = sample_p0(spec, int(N), seed ^ (0x5eedull * (N + 1)));
        ScoreModel model = train(spec, {t}, data, opt, seed);
        ScoreFn fn = [model, t](double, const MatrixXd& X) { return model.score_batch(0, X); };
        L2ErrorReport l2 = score_l2_error(fn, spec, t, 4000, seed ^ 0xE7A1);
        rows.push_back(metric("e5_l2_rel_N" + std::to_string(N), l2.rel_error, l2.rel_se,
                              l2.n, seed));
        if (N == n_list.back()) {
            RiskConfig rc;
            rc.n_inner = 8;
            rc.seed = seed ^ 0x717;
            double full = empirical_risk(fn, t, data, rc);
            rc.trunc_S = S;
            rc.trunc_R = R;
            double trunc = truncated_risk(fn, t, data, rc);
            rows.push_back(metric("e5_risk_full", full, 0.0, N, seed));
            rows.push_back(metric("e5_risk_truncated", trunc, 0.0, N, seed));
            rows.push_back(metric("e5_risk_gap_rel", std::abs(full - trunc) / full, 0.0, N,
                                  seed));
        }
    }
    return rows;
}

std::vector<MetricReport> run_one_seed(const ExperimentConfig& cfg, uint64_t seed) {
    if (cfg.experiment == "E1_score_approx") return run_e1(cfg, seed);
    if (cfg.experiment == "E2_train_sample") return run_e2(cfg, seed);
    if (cfg.experiment == "E3_builders") return run_e3(cfg, seed);
    if (cfg.experiment == "E4_kl_short_time") return run_e4(cfg, seed);
    if (cfg.experiment == "E5_generalization_trend") return run_e5(cfg, seed);
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    cfg.raw = j;
    if (!j.contains("experiment")) throw ConfigError("config: missing 'experiment'");
    cfg.experiment = j.at("experiment").get<std::string>();
    static const std::vector<std::string> known = {
        "E1_score_approx", "E2_train_sample", "E3_builders", "E4_kl_short_time",
        "E5_generalization_trend"};
    if (std::find(known.begin(), known.end(), cfg.experiment) == known.end())
        throw ConfigError("config: unknown experiment '" + cfg.experiment + "'");
    if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty())
        throw ConfigError("config: 'seeds' must be a non-empty array (no default seeds)");
    for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<uint64_t>());
    cfg.output_dir = j.value("output_dir", std::string("runs/") + cfg.experiment);
    cfg.params = j.value("params", json::object());
    if (cfg.experiment != "E3_builders" && !j.contains("target"))
        throw ConfigError("config: experiment '" + cfg.experiment + "' requires a target");
    if (j.contains("target")) (void)TargetSpec::from_json(j.at("target"));  // validate early
    if (cfg.experiment == "E5_generalization_trend") {
        double S = pget(cfg.params, "S", 6.0), R = pget(cfg.params, "R", 8.0);
        if (!(S < R) || !(S > 0.0))
            throw ConfigError("config: E5 truncation invariant violated: need 0 < S < R (got S=" +
                              fmt(S) + ", R=" + fmt(R) + ")");
    }
    return cfg;
}

uint64_t config_hash(const json& j) {
    json canon = j;
    canon.erase("output_dir");
    std::string s = canon.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void append_metric_csv(std::ostream& os, const MetricReport& rep, uint64_t cfg_hash) {
    os << rep.name << "," << fmt(rep.value) << "," << fmt(rep.std_error) << "," << rep.n << ","
       << rep.seed << "," << std::hex << cfg_hash << std::dec;
    if (!rep.config.empty()) os << "," << rep.config;
    os << "\n";
}

void run_experiment(const ExperimentConfig& cfg, bool parallel_seeds) {
    auto start = std::chrono::steady_clock::now();
    fs::create_directories(cfg.output_dir);
    uint64_t h = config_hash(cfg.raw);

    std::vector<std::vector<MetricReport>> per_seed(cfg.seeds.size());
    if (parallel_seeds && cfg.seeds.size() > 1) {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(cfg.seeds.size());
        for (size_t i = 0; i < cfg.seeds.size(); ++i)
            threads.emplace_back([&, i] {
                try {
                    per_seed[i] = run_one_seed(cfg, cfg.seeds[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    } else {
        for (size_t i = 0; i < cfg.seeds.size(); ++i)
            per_seed[i] = run_one_seed(cfg, cfg.seeds[i]);
    }

    std::ofstream csv(fs::path(cfg.output_dir) / "results.csv");
    csv << "name,value,stderr,n,seed,config_hash,config\n";
    for (const auto& rows : per_seed)  // merged deterministically in seed order
        for (const auto& r : rows) append_metric_csv(csv, r, h);

    auto wall =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    json manifest;
    manifest["experiment"] = cfg.experiment;
    manifest["config_hash"] = h;
    manifest["seeds"] = cfg.seeds;
    manifest["wall_time_ms"] = wall;
    manifest["version"] = "scorelab 1.0";
    std::ofstream mf(fs::path(cfg.output_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

void write_report(const std::string& results_dir, std::ostream& os) {
    struct Agg {
        long count = 0;
        double sum = 0.0, mn = std::numeric_limits<double>::infinity(), mx = -1e308;
    };
    std::map<std::string, Agg> agg;
    for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
        if (!entry.is_regular_file() || entry.path().filename() != "results.csv") continue;
        std::ifstream in(entry.path());
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string name, value;
            if (!std::getline(ls, name, ',') || !std::getline(ls, value, ',')) continue;
            double v = std::stod(value);
            Agg& a = agg[name];
            ++a.count;
            a.sum += v;
            a.mn = std::min(a.mn, v);
            a.mx = std::max(a.mx, v);
        }
    }
    os << "metric,count,mean,min,max\n";
    std::ofstream summary(fs::path(results_dir) / "summary.csv");
    summary << "metric,count,mean,min,max\n";
    for (const auto& [name, a] : agg) {
        std::ostringstream row;
        row << name << "," << a.count << "," << fmt(a.sum / a.count) << "," << fmt(a.mn) << ","
            << fmt(a.mx) << "\n";
        os << row.str();
        summary << row.str();
    }
}

}  // namespace scorelab

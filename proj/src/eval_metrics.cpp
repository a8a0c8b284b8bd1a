#include "scorelab/eval_metrics.hpp"

#include <sstream>

#include "mlp_grad.hpp"
#include "scorelab/quadrature.hpp"

namespace scorelab {

namespace {

// mean and standard error of a ratio mean(v)/mean(w) by the delta method
void ratio_with_se(const VectorXd& v, const VectorXd& w, double& ratio, double& se) {
    const double n = double(v.size());
    double mv = v.mean(), mw = w.mean();
    ratio = mv / mw;
    double var_v = (v.array() - mv).square().sum() / (n - 1.0);
    double var_w = (w.array() - mw).square().sum() / (n - 1.0);
    double cov = ((v.array() - mv) * (w.array() - mw)).sum() / (n - 1.0);
    double rel_var = var_v / (mv * mv) + var_w / (mw * mw) - 2.0 * cov / (mv * mw);
    se = std::abs(ratio) * std::sqrt(std::max(rel_var, 0.0) / n);
}

VectorXd histogram_fractions(const VectorXd& x, int bins, double lo, double hi,
                             const char* what) {
    VectorXd h = VectorXd::Zero(bins);
    long inside = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] < lo || x[i] >= hi) continue;
        int b = int((x[i] - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        h[b] += 1.0;
        ++inside;
    }
    if (inside < 0.999 * double(x.size()))
        throw ConfigError(std::string(what) +
                          ": histogram range covers less than 99.9% of the samples");
    return h / double(x.size());
}

double tv_from_fractions(const VectorXd& a, const VectorXd& b) {
    return 0.5 * (a - b).cwiseAbs().sum();
}

// multinomial bootstrap resample of bin fractions
VectorXd resample_fractions(const VectorXd& frac, long n, std::mt19937_64& rng) {
    VectorXd out = VectorXd::Zero(frac.size());
    // inverse-CDF draws; n is large so this is the dominant cost but stays simple
    VectorXd cum(frac.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < frac.size(); ++i) {
        acc += frac[i];
        cum[i] = acc;
    }
    double total = acc;
    for (long i = 0; i < n; ++i) {
        double u = uniform01(rng) * total;
        int b = int(std::lower_bound(cum.data(), cum.data() + cum.size(), u) - cum.data());
        b = std::clamp(b, 0, int(frac.size()) - 1);
        out[b] += 1.0;
    }
    return out / double(n);
}

}  // namespace

L2ErrorReport score_l2_error(const ScoreFn& s_hat, const TargetSpec& spec, double t, int n,
                             uint64_t seed) {
    if (spec.form() == TargetForm::GaussianMixture ||
        spec.form() == TargetForm::StandardGaussian) {
        ScoreFn ref = [spec](double tt, const MatrixXd& X) {
            return mixture_score_oracle_batch(spec, tt, X);
        };
        return score_l2_error(s_hat, ref, spec, t, n, seed);
    }
    auto q = ScoreQuadrature::gauss_hermite(spec, spec.dim() <= 2 ? 64 : 24);
    ScoreFn ref = [q](double tt, const MatrixXd& X) { return q.true_score_batch(tt, X); };
    return score_l2_error(s_hat, ref, spec, t, n, seed);
}

L2ErrorReport score_l2_error(const ScoreFn& s_hat, const ScoreFn& s_ref,
                             const TargetSpec& spec, double t, int n, uint64_t seed) {
    auto [x0, xt] = forward_sample(spec, t, n, seed);
    MatrixXd X = xt.transpose();
    MatrixXd A = s_hat(t, X);
    MatrixXd B = s_ref(t, X);
    VectorXd v = (A - B).colwise().squaredNorm().transpose();
    VectorXd w = B.colwise().squaredNorm().transpose();
    L2ErrorReport rep;
    rep.n = n;
    rep.abs_error = v.mean();
    rep.abs_se = std::sqrt((v.array() - rep.abs_error).square().sum() / (n - 1.0) / n);
    ratio_with_se(v, w, rep.rel_error, rep.rel_se);
    return rep;
}

MetricReport m_beta(const TargetSpec& spec, double beta, long n, uint64_t seed) {
    auto rng = make_rng(seed, 0x3B);
    double scale = 1.0 / (1.0 - 2.0 * beta);
    VectorXd v(n);
    for (long i = 0; i < n; ++i) {
        VectorXd x = normal_vector(rng, spec.dim());
        v[i] = grad_f(spec, (scale * x).eval()).squaredNorm();
    }
    MetricReport rep;
    rep.name = "m_beta";
    rep.n = n;
    rep.seed = seed;
    rep.value = v.mean();
    rep.std_error = std::sqrt((v.array() - rep.value).square().sum() / (n - 1.0) / n);
    std::ostringstream cfg;
    cfg << "beta=" << beta;
    rep.config = cfg.str();
    return rep;
}

double m_beta_quadrature(const TargetSpec& spec, double beta, int order) {
    if (spec.dim() > 2) throw ConfigError("m_beta_quadrature: d <= 2 required");
    auto gh = TensorGaussHermite::probabilists(spec.dim(), order);
    double scale = 1.0 / (1.0 - 2.0 * beta);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < gh.weights.size(); ++i)
        acc += gh.weights[i] * grad_f(spec, (scale * gh.nodes.col(i)).eval()).squaredNorm();
    return acc;
}

MetricReport m_beta_value(const TargetSpec& spec, double beta, long n, uint64_t seed) {
    auto rng = make_rng(seed, 0x3C);
    double scale = 1.0 / (1.0 - 2.0 * beta);
    VectorXd v(n);
    for (long i = 0; i < n; ++i) {
        VectorXd x = normal_vector(rng, spec.dim());
        v[i] = sq(log_relative_density(spec, (scale * x).eval()));
    }
    MetricReport rep;
    rep.name = "m_beta_value";
    rep.n = n;
    rep.seed = seed;
    rep.value = v.mean();
    rep.std_error = std::sqrt((v.array() - rep.value).square().sum() / (n - 1.0) / n);
    return rep;
}

KlCheckReport kl_short_time_check(const TargetSpec& spec, const std::vector<double>& t_grid,
                                  double C) {
    if (spec.dim() > 2) throw ConfigError("kl_short_time_check: d <= 2 required");
    KlCheckReport rep;
    rep.c_used = C;
    rep.m_beta_used = m_beta_quadrature(spec, spec.beta(), 64);
    const double L = 14.0;
    for (double t : t_grid) {
        double kl = 0.0;
        if (spec.dim() == 1) {
            kl = adaptive_simpson(
                [&](double x) {
                    VectorXd xv = VectorXd::Constant(1, x);
                    double lpt = log_marginal_density(spec, t, xv);
                    if (lpt < -600.0) return 0.0;
                    double lp0 = log_density_p0(spec, xv);
                    return std::exp(lpt) * (lpt - lp0);
                },
                -L, L, 1e-11);
        } else {
            const int ngrid = 280;
            auto inner = [&](double x0) {
                return simpson_uniform(
                    [&](double x1) {
                        VectorXd xv(2);
                        xv << x0, x1;
                        double lpt = log_marginal_density(spec, t, xv);
                        if (lpt < -600.0) return 0.0;
                        return std::exp(lpt) * (lpt - log_density_p0(spec, xv));
                    },
                    -L, L, ngrid);
            };
            kl = simpson_uniform(inner, -L, L, ngrid);
        }
        kl = std::max(kl, 0.0);  // quadrature round-off can dip below zero
        double bound = C * rep.m_beta_used * t;
        rep.rows.push_back({t, kl, bound});
        if (kl > bound) rep.pass = false;
    }
    return rep;
}

MetricReport tv_histogram(const VectorXd& samples_a, const VectorXd& samples_b, int bins,
                          double lo, double hi, uint64_t bootstrap_seed) {
    if (bins < 1 || !(hi > lo)) throw ConfigError("tv_histogram: bad bins/range");
    VectorXd ha = histogram_fractions(samples_a, bins, lo, hi, "tv_histogram(a)");
    VectorXd hb = histogram_fractions(samples_b, bins, lo, hi, "tv_histogram(b)");
    MetricReport rep;
    rep.name = "tv_histogram";
    rep.n = long(samples_a.size());
    rep.seed = bootstrap_seed;
    rep.value = tv_from_fractions(ha, hb);
    auto rng = make_rng(bootstrap_seed, 0x707);
    const int B = 200;
    VectorXd tvs(B);
    for (int b = 0; b < B; ++b) {
        VectorXd ra = resample_fractions(ha, long(samples_a.size()), rng);
        VectorXd rb = resample_fractions(hb, long(samples_b.size()), rng);
        tvs[b] = tv_from_fractions(ra, rb);
    }
    rep.std_error = std::sqrt((tvs.array() - tvs.mean()).square().sum() / (B - 1.0));
    return rep;
}

MetricReport tv_histogram_density(const VectorXd& samples,
                                  const std::function<double(double)>& density, int bins,
                                  double lo, double hi, uint64_t bootstrap_seed) {
    if (bins < 1 || !(hi > lo)) throw ConfigError("tv_histogram_density: bad bins/range");
    double mass = adaptive_simpson(density, lo, hi, 1e-11);
    if (mass < 0.999)
        throw ConfigError("tv_histogram_density: range covers only " + std::to_string(mass) +
                          " of the density mass");
    VectorXd hs = histogram_fractions(samples, bins, lo, hi, "tv_histogram_density");
    VectorXd hd(bins);
    for (int b = 0; b < bins; ++b) {
        double a = lo + (hi - lo) * b / bins;
        double bb = lo + (hi - lo) * (b + 1) / bins;
        hd[b] = adaptive_simpson(density, a, bb, 1e-12);
    }
    MetricReport rep;
    rep.name = "tv_histogram_density";
    rep.n = long(samples.size());
    rep.seed = bootstrap_seed;
    rep.value = tv_from_fractions(hs, hd);
    auto rng = make_rng(bootstrap_seed, 0x708);
    const int B = 200;
    VectorXd tvs(B);
    for (int b = 0; b < B; ++b)
        tvs[b] = tv_from_fractions(resample_fractions(hs, long(samples.size()), rng), hd);
    rep.std_error = std::sqrt((tvs.array() - tvs.mean()).square().sum() / (B - 1.0));
    return rep;
}

RademacherReport empirical_rademacher(int depth, double K, int width, const MatrixXd& points,
                                      int n_draws, uint64_t seed) {
    const long N = points.rows();
    const int d = int(points.cols());
    if (N < 10) throw std::invalid_argument("empirical_rademacher: N >= 10 required");
    RademacherReport rep;
    double max_inf = points.cwiseAbs().maxCoeff();
    rep.bound = max_inf * std::pow(2.0, depth) * K *
                std::sqrt(2.0 * std::log(2.0 * d + 2.0) / double(N));
    if (K == 0.0) {
        rep.estimate = 0.0;
        rep.pass = true;
        return rep;
    }
    MatrixXd X = points.transpose();  // d x N
    auto rng = make_rng(seed, 0x4AD);
    const int restarts = 24, ascent_steps = 120;
    double total = 0.0;
    for (int draw = 0; draw < n_draws; ++draw) {
        VectorXd eps(N);
        for (long i = 0; i < N; ++i) eps[i] = uniform01(rng) < 0.5 ? -1.0 : 1.0;
        MatrixXd Gout_base = eps.transpose() / double(N);  // 1 x N
        double best = 0.0;
        for (int r = 0; r < restarts; ++r) {
            // random feasible start
            std::vector<AffineLayer> layers;
            int in = d;
            for (int k = 0; k < depth; ++k) {
                int out = (k + 1 == depth) ? 1 : width;
                AffineLayer l;
                l.W.resize(out, in);
                for (int i = 0; i < out; ++i)
                    for (int j = 0; j < in; ++j) l.W(i, j) = 2.0 * uniform01(rng) - 1.0;
                l.b = VectorXd::Zero(out);
                for (int i = 0; i < out; ++i) l.b[i] = 2.0 * uniform01(rng) - 1.0;
                layers.push_back(std::move(l));
                in = out;
            }
            ReluNet net(std::move(layers));
            auto project = [&](ReluNet& nn) {
                nn.refresh_path_norm();
                double pn = nn.path_norm();
                if (pn > K && pn > 0.0) {
                    auto& last = nn.mutable_layers().back();
                    last.W *= K / pn;
                    last.b *= K / pn;
                    nn.refresh_path_norm();
                }
            };
            project(net);
            detail::MlpWorkspace ws;
            for (int step = 0; step < ascent_steps; ++step) {
                detail::mlp_forward(net, X, ws);
                detail::MlpGrads g = detail::MlpGrads::zero_like(net);
                detail::mlp_backward(net, ws, Gout_base, g);
                double gn = std::sqrt(g.squared_norm());
                if (gn < 1e-14) break;
                double lr = 0.2 * K / gn * (1.0 - 0.8 * step / double(ascent_steps));
                g.scale(-lr);  // ascend
                detail::sgd_step(net, g, 1.0);
                project(net);
            }
            detail::mlp_forward(net, X, ws);
            double val = (Gout_base * ws.out.transpose())(0, 0);
            best = std::max(best, std::abs(val));
        }
        total += best;
    }
    rep.estimate = total / n_draws;
    rep.pass = rep.estimate <= rep.bound;
    return rep;
}

}  // namespace scorelab

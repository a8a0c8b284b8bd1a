#include "scorelab/ou_process.hpp"

#include <mutex>

#include "scorelab/quadrature.hpp"

namespace scorelab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_positive_time(double t) {
    if (!(t > 0.0)) throw std::domain_error("time t must be > 0");
}

double log_gaussian(const VectorXd& x, const VectorXd& mean, double var) {
    return -0.5 * x.size() * (kLog2Pi + std::log(var)) -
           0.5 * (x - mean).squaredNorm() / var;
}

// Mixture closed form: each component N(mu, s2 I) evolves to
// N(e^{-t} mu, e^{-2t} s2 + 1 - e^{-2t}).
double log_pt_mixture_closed_form(const TargetSpec& spec, double t, const VectorXd& x) {
    ForwardMarginal fm = forward_marginal(t);
    const auto& comps = spec.components();
    VectorXd lw(comps.size());
    for (size_t i = 0; i < comps.size(); ++i) {
        double var = fm.shrink * fm.shrink * comps[i].variance + fm.noise_var;
        lw[i] = std::log(comps[i].weight) +
                log_gaussian(x, (fm.shrink * comps[i].mean).eval(), var);
    }
    return log_sum_exp(lw);
}

// Direct numerical integration of the transition-kernel form,
// p_t(x) = Z_t^{-1} Int exp(-|x - e^{-t} y|^2 / (2(1-e^{-2t}))) p0(y) dy,  d = 1.
double pt_by_direct_integration_1d(const TargetSpec& spec, double t, double x) {
    ForwardMarginal fm = forward_marginal(t);
    double zt = std::sqrt(2.0 * M_PI * fm.noise_var);
    auto integrand = [&](double y) {
        VectorXd yv = VectorXd::Constant(1, y);
        double kern = -0.5 * sq(x - fm.shrink * y) / fm.noise_var;
        return std::exp(kern + log_density_p0(spec, yv));
    };
    return adaptive_simpson(integrand, -16.0, 16.0, 1e-13) / zt;
}

std::once_flag g_mixture_selftest_flag;

// The closed form above is not taken on faith: compare against direct
// integration once per process before first use.
void mixture_closed_form_selftest() {
    std::vector<MixtureComponent> comps(2);
    comps[0] = {0.35, VectorXd::Constant(1, -1.3), 0.9};
    comps[1] = {0.65, VectorXd::Constant(1, 0.9), 1.1};
    double r_f = suggest_r_f(1, comps, 0.09, 0.07);
    TargetSpec spec = TargetSpec::gaussian_mixture(1, comps, 0.09, 0.07, r_f);
    for (double t : {0.07, 0.4, 1.5}) {
        for (double x : {-2.0, 0.3, 1.7}) {
            double closed = std::exp(log_pt_mixture_closed_form(spec, t, VectorXd::Constant(1, x)));
            double direct = pt_by_direct_integration_1d(spec, t, x);
            if (std::abs(closed - direct) > 1e-8 * std::max(1.0, std::abs(direct)))
                throw NumericalError("mixture marginal closed form failed self-test at t=" +
                                     std::to_string(t) + " x=" + std::to_string(x));
        }
    }
}

double log_pt_relu_gh(const TargetSpec& spec, double t, const VectorXd& x, int order) {
    ForwardMarginal fm = forward_marginal(t);
    const int d = spec.dim();
    TensorGaussHermite gh = TensorGaussHermite::probabilists(d, order);
    VectorXd fvals(gh.weights.size());
    double root_nv = std::sqrt(fm.noise_var);
    for (Eigen::Index i = 0; i < gh.weights.size(); ++i) {
        VectorXd y = fm.shrink * x + root_nv * gh.nodes.col(i);
        fvals[i] = spec.f_net().eval(y)[0];
    }
    double fmax = fvals.maxCoeff();
    double log_g = fmax + std::log((gh.weights.array() * (fvals.array() - fmax).exp()).sum());
    // p_t(x) = (2 pi)^{d/2} Z^{-1} gamma_d(x) G_t(x) = Z^{-1} e^{-|x|^2/2} G_t(x)
    return -0.5 * x.squaredNorm() + log_g - spec.log_norm_z();
}

double log_pt_relu_mc(const TargetSpec& spec, double t, const VectorXd& x, long m,
                      uint64_t seed) {
    // Monte Carlo average of the transition kernel over p0 samples.
    ForwardMarginal fm = forward_marginal(t);
    MatrixXd y = sample_p0(spec, int(m), seed);
    VectorXd logs(m);
    for (long i = 0; i < m; ++i)
        logs[i] = log_gaussian(x, (fm.shrink * y.row(i).transpose()).eval(), fm.noise_var);
    return log_sum_exp(logs) - std::log(double(m));
}

}  // namespace

ForwardMarginal forward_marginal(double t) {
    require_positive_time(t);
    ForwardMarginal fm;
    fm.t = t;
    fm.shrink = std::exp(-t);
    fm.noise_var = -std::expm1(-2.0 * t);  // 1 - e^{-2t} without cancellation
    return fm;
}

std::pair<MatrixXd, MatrixXd> forward_sample(const TargetSpec& spec, double t, int n,
                                             uint64_t seed) {
    ForwardMarginal fm = forward_marginal(t);
    MatrixXd x0 = sample_p0(spec, n, seed);
    auto rng = make_rng(seed, 0x0F0F);
    MatrixXd xi = normal_matrix(rng, n, spec.dim());
    MatrixXd xt = fm.shrink * x0 + std::sqrt(fm.noise_var) * xi;
    return {std::move(x0), std::move(xt)};
}

VectorXd conditional_score(const VectorXd& x0, const VectorXd& xt, double t) {
    ForwardMarginal fm = forward_marginal(t);
    return -(xt - fm.shrink * x0) / fm.noise_var;
}

double log_marginal_density(const TargetSpec& spec, double t, const VectorXd& x,
                            const DensityOptions& opts) {
    require_positive_time(t);
    if (x.size() != spec.dim()) throw std::invalid_argument("marginal_density: dim mismatch");
    DensityMode mode = opts.mode;
    if (mode == DensityMode::Auto) {
        if (spec.form() == TargetForm::ReluTilted)
            mode = spec.dim() <= 3 ? DensityMode::GaussHermite : DensityMode::MonteCarlo;
        else
            mode = DensityMode::ClosedForm;
    }
    switch (spec.form()) {
        case TargetForm::StandardGaussian:
            return -0.5 * spec.dim() * kLog2Pi - 0.5 * x.squaredNorm();
        case TargetForm::GaussianMixture: {
            if (mode == DensityMode::MonteCarlo) {
                // available for cross-checks
                ForwardMarginal fm = forward_marginal(t);
                MatrixXd y = sample_p0(spec, int(opts.mc_samples), opts.mc_seed);
                VectorXd logs(opts.mc_samples);
                for (long i = 0; i < opts.mc_samples; ++i)
                    logs[i] =
                        log_gaussian(x, (fm.shrink * y.row(i).transpose()).eval(), fm.noise_var);
                return log_sum_exp(logs) - std::log(double(opts.mc_samples));
            }
            std::call_once(g_mixture_selftest_flag, mixture_closed_form_selftest);
            return log_pt_mixture_closed_form(spec, t, x);
        }
        case TargetForm::ReluTilted: {
            if (mode == DensityMode::GaussHermite) {
                if (spec.dim() > 3)
                    throw ConfigError("marginal_density: quadrature mode supports d <= 3");
                int order = spec.dim() == 3 ? std::min(opts.gh_order, 24) : opts.gh_order;
                return log_pt_relu_gh(spec, t, x, order);
            }
            if (mode == DensityMode::MonteCarlo)
                return log_pt_relu_mc(spec, t, x, opts.mc_samples, opts.mc_seed);
            throw ConfigError("marginal_density: unsupported mode for ReluTilted form");
        }
    }
    throw std::logic_error("unreachable");
}

double marginal_density(const TargetSpec& spec, double t, const VectorXd& x,
                        const DensityOptions& opts) {
    return std::exp(log_marginal_density(spec, t, x, opts));
}

TailCheckReport subgaussian_tail_check(const TargetSpec& spec,
                                       const std::vector<double>& t_list,
                                       const std::vector<double>& radius_grid,
                                       double cap, std::optional<double> beta_override) {
    for (double r : radius_grid)
        if (!(r > 0.0))
            throw std::invalid_argument("subgaussian_tail_check: radii must be positive");
    const int d = spec.dim();
    double beta = beta_override.value_or(spec.beta());
    double one_minus_2b = 1.0 - 2.0 * beta;
    double log_pref = -0.5 * d * std::log(2.0 * M_PI / one_minus_2b);
    TailCheckReport rep;
    std::vector<VectorXd> dirs;
    if (d == 1) {
        dirs = {VectorXd::Constant(1, 1.0), VectorXd::Constant(1, -1.0)};
    } else {
        auto rng = make_rng(0xD1CEull, 99);
        for (int j = 0; j < d; ++j) {
            VectorXd e = VectorXd::Zero(d);
            e[j] = 1.0;
            dirs.push_back(e);
            dirs.push_back(-e);
        }
        while (dirs.size() < 32) {
            VectorXd v = normal_vector(rng, d);
            if (v.norm() > 1e-8) dirs.push_back(v.normalized());
        }
    }
    for (double t : t_list) {
        for (double r : radius_grid) {
            double worst = 0.0;
            for (const auto& dir : dirs) {
                VectorXd x = r * dir;
                double log_bound = log_pref - 0.5 * one_minus_2b * r * r;
                double ratio = std::exp(log_marginal_density(spec, t, x) - log_bound);
                worst = std::max(worst, ratio);
            }
            rep.rows.push_back({t, r, worst});
            if (worst > rep.c_check) {
                rep.c_check = worst;
                rep.witness_t = t;
                rep.witness_radius = r;
            }
        }
    }
    rep.pass = rep.c_check <= cap;
    return rep;
}

}  // namespace scorelab

#include "scorelab/score_core.hpp"

#include "scorelab/quadrature.hpp"

namespace scorelab {

ScoreQuadrature::ScoreQuadrature(TargetSpec spec, Mode mode, MatrixXd nodes, VectorXd weights)
    : spec_(std::move(spec)), mode_(mode), nodes_(std::move(nodes)),
      weights_(std::move(weights)) {
    double wsum = weights_.sum();
    if (std::abs(wsum - 1.0) > 1e-12)
        throw NumericalError("ScoreQuadrature: weights sum to " + std::to_string(wsum));
}

ScoreQuadrature ScoreQuadrature::gauss_hermite(const TargetSpec& spec, int order_per_axis) {
    if (order_per_axis < 8)
        throw std::invalid_argument("ScoreQuadrature: Gauss-Hermite order >= 8 required");
    if (spec.dim() > 3)
        throw ConfigError("ScoreQuadrature: tensorized Gauss-Hermite supports d <= 3");
    TensorGaussHermite gh = TensorGaussHermite::probabilists(spec.dim(), order_per_axis);
    return ScoreQuadrature(spec, Mode::GaussHermite, std::move(gh.nodes), std::move(gh.weights));
}

ScoreQuadrature ScoreQuadrature::monte_carlo(const TargetSpec& spec, long m, uint64_t seed) {
    if (m < 1000) throw std::invalid_argument("ScoreQuadrature: Monte Carlo m >= 1000 required");
    auto rng = make_rng(seed, 0x5C0FE);
    MatrixXd nodes(spec.dim(), m);
    for (long i = 0; i < m; ++i) nodes.col(i) = normal_vector(rng, spec.dim());
    VectorXd weights = VectorXd::Constant(m, 1.0 / double(m));
    return ScoreQuadrature(spec, Mode::MonteCarlo, std::move(nodes), std::move(weights));
}

std::pair<VectorXd, double> ScoreQuadrature::eval_fg(double t, const VectorXd& x) const {
    ForwardMarginal fm = forward_marginal(t);
    if (x.size() != spec_.dim()) throw std::invalid_argument("eval_fg: dim mismatch");
    const long m = weights_.size();
    const int d = spec_.dim();
    double root_nv = std::sqrt(fm.noise_var);
    VectorXd fvals(m);
    for (long i = 0; i < m; ++i) {
        VectorXd y = fm.shrink * x + root_nv * nodes_.col(i);
        fvals[i] = log_relative_density(spec_, y);
    }
    // Shift by the max before exponentiating; the F/G ratio is invariant.
    double fmax = fvals.maxCoeff();
    VectorXd e = (fvals.array() - fmax).exp();
    double g_shifted = weights_.dot(e);
    VectorXd f_shifted(d);
    for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (long i = 0; i < m; ++i)
            acc += weights_[i] * (fm.shrink * x[j] + root_nv * nodes_(j, i)) * e[i];
        f_shifted[j] = acc;
    }
    double scale = std::exp(fmax);
    double g = g_shifted * scale;
    VectorXd f = f_shifted * scale;
    if (!(g > 0.0) || !std::isfinite(g) || !f.allFinite())
        throw NumericalError("eval_fg: non-finite or non-positive integral (f max over nodes = " +
                             std::to_string(fmax) + ", t = " + std::to_string(t) + ")");
    return {std::move(f), g};
}

VectorXd ScoreQuadrature::true_score(double t, const VectorXd& x) const {
    ForwardMarginal fm = forward_marginal(t);
    auto [f, g] = eval_fg(t, x);
    return (-x + fm.shrink * (f / g)) / fm.noise_var;
}

MatrixXd ScoreQuadrature::true_score_batch(double t, const MatrixXd& X) const {
    MatrixXd S(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) S.col(i) = true_score(t, X.col(i));
    return S;
}

VectorXd mixture_score_oracle(const TargetSpec& spec, double t, const VectorXd& x) {
    if (spec.form() == TargetForm::StandardGaussian) return -x;
    if (spec.form() != TargetForm::GaussianMixture)
        throw std::invalid_argument("mixture_score_oracle: mixture form required");
    if (t < 0.0) throw std::domain_error("mixture_score_oracle: t >= 0 required");
    double shrink = std::exp(-t);
    double noise_var = -std::expm1(-2.0 * t);
    const auto& comps = spec.components();
    VectorXd lw(comps.size());
    std::vector<double> vars(comps.size());
    for (size_t i = 0; i < comps.size(); ++i) {
        vars[i] = shrink * shrink * comps[i].variance + noise_var;
        double d2 = (x - shrink * comps[i].mean).squaredNorm();
        lw[i] = std::log(comps[i].weight) -
                0.5 * spec.dim() * (std::log(2.0 * M_PI) + std::log(vars[i])) -
                0.5 * d2 / vars[i];
    }
    double lse = log_sum_exp(lw);
    VectorXd score = VectorXd::Zero(spec.dim());
    for (size_t i = 0; i < comps.size(); ++i) {
        double resp = std::exp(lw[i] - lse);
        score -= resp / vars[i] * (x - shrink * comps[i].mean);
    }
    return score;
}

MatrixXd mixture_score_oracle_batch(const TargetSpec& spec, double t, const MatrixXd& X) {
    MatrixXd S(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) S.col(i) = mixture_score_oracle(spec, t, X.col(i));
    return S;
}

FgGrowthReport fg_growth_check(const ScoreQuadrature& q, double R,
                               const std::vector<double>& t_list, double cap) {
    const TargetSpec& spec = q.spec();
    const int d = spec.dim();
    double sup_f_inner = 0.0;
    {
        // sup of |f| over the ball of radius r_f, by radial scan
        const int n = 200;
        for (int i = 0; i <= n; ++i) {
            double r = spec.r_f() * i / double(n);
            for (double sgn : {-1.0, 1.0}) {
                VectorXd x = VectorXd::Zero(d);
                x[0] = sgn * r;
                sup_f_inner = std::max(sup_f_inner, std::abs(log_relative_density(spec, x)));
            }
        }
    }
    if (spec.beta() > 0.0) {
        double r_min = std::max(spec.r_f(), std::sqrt(sup_f_inner / spec.beta()));
        if (R < r_min)
            throw std::invalid_argument("fg_growth_check: R must be >= " + std::to_string(r_min));
    }
    FgGrowthReport rep;
    double bpow = std::pow(1.0 - 2.0 * spec.beta(), -0.5 * d);
    rep.f_bound = cap * bpow * std::exp(spec.beta() * R * R);
    rep.g_upper_bound = cap * bpow * std::exp(spec.beta() * R * R);
    rep.g_lower_bound =
        std::pow(1.0 + 2.0 * spec.alpha(), -0.5 * d) * std::exp(-spec.alpha() * R * R);
    rep.measured_g_min = std::numeric_limits<double>::infinity();

    std::vector<double> radii = {0.0, 0.25 * R, 0.5 * R, 0.75 * R, R};
    std::vector<VectorXd> dirs;
    {
        VectorXd e = VectorXd::Zero(d);
        e[0] = 1.0;
        dirs.push_back(e);
        dirs.push_back(-e);
        if (d > 1) {
            auto rng = make_rng(0xD1CEull, 7);
            for (int k = 0; k < 14; ++k) {
                VectorXd v = normal_vector(rng, d);
                if (v.norm() > 1e-8) dirs.push_back(v.normalized());
            }
        }
    }
    for (double t : t_list) {
        for (double r : radii) {
            double f_absmax = 0.0, g_min = std::numeric_limits<double>::infinity(), g_max = 0.0;
            for (const auto& dir : dirs) {
                auto [f, g] = q.eval_fg(t, (r * dir).eval());
                f_absmax = std::max(f_absmax, f.cwiseAbs().maxCoeff());
                g_min = std::min(g_min, g);
                g_max = std::max(g_max, g);
            }
            rep.rows.push_back({t, r, f_absmax, g_min, g_max});
            rep.measured_f_absmax = std::max(rep.measured_f_absmax, f_absmax);
            rep.measured_g_min = std::min(rep.measured_g_min, g_min);
            rep.measured_g_max = std::max(rep.measured_g_max, g_max);
            const double slack = 1.0 - 1e-9;  // keeps the equality case (f == 0) passing
            if (f_absmax > rep.f_bound / slack && rep.failure.empty()) {
                rep.pass = false;
                rep.failure = "|F| bound exceeded at t=" + std::to_string(t) +
                              " r=" + std::to_string(r);
            }
            if (g_max > rep.g_upper_bound / slack && rep.failure.empty()) {
                rep.pass = false;
                rep.failure = "G upper bound exceeded at t=" + std::to_string(t) +
                              " r=" + std::to_string(r);
            }
            if (g_min < rep.g_lower_bound * slack && rep.failure.empty()) {
                rep.pass = false;
                rep.failure = "G lower bound violated at t=" + std::to_string(t) +
                              " r=" + std::to_string(r) + " (G=" + std::to_string(g_min) +
                              " < " + std::to_string(rep.g_lower_bound) + ")";
            }
        }
    }
    return rep;
}

}  // namespace scorelab

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "scorelab/dsm_training.hpp"
#include "scorelab/eval_metrics.hpp"
#include "scorelab/score_core.hpp"

using namespace scorelab;

namespace {

TargetSpec two_mode_mixture_1d() {
    std::vector<MixtureComponent> comps(2);
    comps[0] = {0.5, VectorXd::Constant(1, -2.0), 1.0};
    comps[1] = {0.5, VectorXd::Constant(1, 2.0), 1.0};
    return TargetSpec::gaussian_mixture(1, comps, 0.05, 0.05, 40.0);
}

ScoreFn oracle_fn(const TargetSpec& spec) {
    return [spec](double t, const MatrixXd& X) {
        return mixture_score_oracle_batch(spec, t, X);
    };
}

ScoreFn zero_fn(int d) {
    return [d](double, const MatrixXd& X) { return MatrixXd::Zero(d, X.cols()); };
}

}  // namespace

TEST_CASE("parametrization identity holds exactly") {
    auto rng = make_rng(21);
    ScoreModel m;
    m.times = {0.3, 1.0};
    for (int k = 0; k < 2; ++k) {
        MatrixXd w = normal_matrix(rng, 8, 1);
        VectorXd b = normal_vector(rng, 8);
        MatrixXd a = normal_matrix(rng, 1, 8);
        m.nets.push_back(ReluNet({AffineLayer{w, b}, AffineLayer{a, VectorXd::Zero(1)}}));
    }
    for (int k = 0; k < 2; ++k) {
        ForwardMarginal fm = forward_marginal(m.times[k]);
        for (int i = 0; i < 20; ++i) {
            VectorXd x = normal_vector(rng, 1);
            VectorXd s = m.score_at(k, x);
            VectorXd lhs = s * fm.noise_var + x;
            VectorXd rhs = fm.shrink * m.nets[k].eval(x);
            CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
        }
    }
}

TEST_CASE("loss of the zero score matches the closed-form gaussian moment") {
    TargetSpec g = TargetSpec::standard_gaussian(1);
    // E l = E |Psi|^2 = 1 / (1 - e^{-2t}) for s == 0
    for (double t : {0.3, 1.0}) {
        RiskConfig cfg;
        cfg.n_inner = 400;
        cfg.seed = 31;
        MatrixXd data = sample_p0(g, 500, 32);
        double risk = empirical_risk(zero_fn(1), t, data, cfg);
        double expect = 1.0 / (1.0 - std::exp(-2.0 * t));
        CHECK(risk == doctest::Approx(expect).epsilon(0.05));
    }
}

TEST_CASE("N = 1 empirical risk reduces to loss_at") {
    TargetSpec g = TargetSpec::standard_gaussian(2);
    RiskConfig cfg;
    cfg.n_inner = 16;
    cfg.seed = 41;
    VectorXd x0(2);
    x0 << 0.4, -1.2;
    double l = loss_at(zero_fn(2), 0.7, x0, cfg);
    double r = empirical_risk(zero_fn(2), 0.7, x0.transpose(), cfg);
    CHECK(l == doctest::Approx(r).epsilon(1e-15));
}

TEST_CASE("oracle risk is below the zero-score risk") {
    TargetSpec g = TargetSpec::standard_gaussian(1);
    RiskConfig cfg;
    cfg.n_inner = 8;
    cfg.seed = 51;
    MatrixXd data = sample_p0(g, 1000, 52);
    double r_oracle = empirical_risk(oracle_fn(g), 0.5, data, cfg);
    double r_zero = empirical_risk(zero_fn(1), 0.5, data, cfg);
    CHECK(r_oracle < r_zero);
}

TEST_CASE("truncation: limits, zero-S, monotonicity, decay in S") {
    TargetSpec m = two_mode_mixture_1d();
    MatrixXd data = sample_p0(m, 10000, 61);
    RiskConfig cfg;
    cfg.n_inner = 4;
    cfg.seed = 62;
    double full = empirical_risk(zero_fn(1), 0.5, data, cfg);

    RiskConfig inf_cfg = cfg;
    inf_cfg.trunc_S = 1e9;
    inf_cfg.trunc_R = 1e12;
    CHECK(truncated_risk(zero_fn(1), 0.5, data, inf_cfg) == full);  // identical seeds/draws

    RiskConfig s0 = cfg;
    s0.trunc_S = 1e-12;
    s0.trunc_R = 1.0;
    CHECK(truncated_risk(zero_fn(1), 0.5, data, s0) == 0.0);

    double prev_gap = std::numeric_limits<double>::infinity();
    for (double S : {2.0, 4.0, 6.0}) {
        RiskConfig tc = cfg;
        tc.trunc_S = S;
        tc.trunc_R = S + 2.0;
        double tr = truncated_risk(zero_fn(1), 0.5, data, tc);
        CHECK(tr <= full + 1e-15);  // indicators only remove non-negative terms
        double gap = full - tr;
        CHECK(gap <= prev_gap + 1e-12);
        prev_gap = gap;
    }
}

TEST_CASE("risk difference decomposes exactly over shared draws") {
    TargetSpec m = two_mode_mixture_1d();
    MatrixXd data = sample_p0(m, 2000, 71);
    RiskConfig cfg;
    cfg.n_inner = 4;
    cfg.seed = 72;
    ScoreFn s_hat = [](double t, const MatrixXd& X) {
        return (-1.1 * X).eval();  // deliberately wrong score
    };
    auto dec = risk_difference_decomposition(s_hat, oracle_fn(m), 0.5, data, cfg);
    CHECK(std::abs(dec.diff() - (dec.sq_err + dec.cross)) <= 1e-8);
    // statistical form of the same identity: the cross term is mean-zero, so
    // the risk difference estimates the squared score error
    double se = std::abs(dec.cross) / std::sqrt(double(data.rows()));
    CHECK(std::abs(dec.diff() - dec.sq_err) <=
          3.0 * std::max(se, 0.05 * dec.sq_err) + 0.05 * dec.sq_err);
}

TEST_CASE("analytic parameter gradient matches finite differences") {
    auto rng = make_rng(81);
    std::vector<AffineLayer> layers;
    layers.push_back({normal_matrix(rng, 6, 2), normal_vector(rng, 6)});
    layers.push_back({normal_matrix(rng, 6, 6), normal_vector(rng, 6)});
    layers.push_back({normal_matrix(rng, 2, 6), normal_vector(rng, 2)});
    ReluNet phi(std::move(layers));
    MatrixXd x0 = normal_matrix(rng, 2, 5);
    MatrixXd xi = normal_matrix(rng, 2, 5);
    double t = 0.6;
    VectorXd grad;
    dsm_detail::loss_and_gradient(phi, t, x0, xi, &grad);
    VectorXd theta = dsm_detail::flatten_params(phi);
    auto idx_rng = make_rng(82);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Index i = Eigen::Index(uniform01(idx_rng) * theta.size());
        if (i == theta.size()) --i;
        VectorXd tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        ReluNet np = phi, nm = phi;
        dsm_detail::unflatten_params(np, tp);
        dsm_detail::unflatten_params(nm, tm);
        double lp = dsm_detail::loss_and_gradient(np, t, x0, xi, nullptr);
        double lm = dsm_detail::loss_and_gradient(nm, t, x0, xi, nullptr);
        double fd = (lp - lm) / (2.0 * h);
        CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("training the standard gaussian reaches a small relative L2 error") {
    TargetSpec g = TargetSpec::standard_gaussian(1);
    MatrixXd data = sample_p0(g, 20000, 91);
    TrainOptions opt;
    opt.width = 32;
    opt.steps = 5000;
    std::ostringstream telemetry;
    ScoreModel model = train(g, {0.5}, data, opt, 92, &telemetry);
    ScoreFn fn = [model](double, const MatrixXd& X) { return model.score_batch(0, X); };
    L2ErrorReport rep = score_l2_error(fn, g, 0.5, 4000, 93);
    CHECK(rep.rel_error < 0.1);
    CHECK(telemetry.str().find("time_index,step") == 0);
    CHECK(model.phi_zero_norm(0) < 1e3);
}

TEST_CASE("path-norm budget is enforced by output rescaling") {
    TargetSpec g = TargetSpec::standard_gaussian(1);
    MatrixXd data = sample_p0(g, 4000, 95);
    TrainOptions opt;
    opt.width = 16;
    opt.steps = 600;
    opt.k_budget = 1.5;
    ScoreModel model = train(g, {0.5}, data, opt, 96);
    CHECK(model.nets[0].path_norm() <= 1.5 + 1e-9);
}

TEST_CASE("training rejects invalid inputs and serializes round-trip") {
    TargetSpec g = TargetSpec::standard_gaussian(1);
    MatrixXd data = sample_p0(g, 100, 97);
    CHECK_THROWS_AS(train(g, {}, data, {}, 1), ConfigError);
    CHECK_THROWS_AS(train(g, {-0.5}, data, {}, 1), std::domain_error);

    TrainOptions opt;
    opt.width = 8;
    opt.steps = 100;
    ScoreModel model = train(g, {0.3, 0.9}, data, opt, 98);
    std::ostringstream os;
    model.save(os);
    std::istringstream is(os.str());
    ScoreModel back = ScoreModel::load(is);
    CHECK(back.times == model.times);
    auto rng = make_rng(99);
    for (int i = 0; i < 10; ++i) {
        VectorXd x = normal_vector(rng, 1);
        CHECK((back.score_at(1, x) - model.score_at(1, x)).norm() == 0.0);
    }
    CHECK_THROWS_AS(model.index_of_time(0.123), ConfigError);
    CHECK(model.index_of_time(0.9) == 1);
    CHECK(model.nearest_time_index(1.4) == 1);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "scorelab/ei_sampler.hpp"
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

}  // namespace

TEST_CASE("ei_step: drift consistency, zero-input variance, determinism") {
    // zero score, zero noise: pure e^{dt} growth
    VectorXd y = VectorXd::Constant(2, 1.5);
    VectorXd out = ei_step(y, VectorXd::Zero(2), 0.3, VectorXd::Zero(2));
    CHECK((out - std::exp(0.3) * y).norm() <= 1e-14);

    // infinitesimal consistency with the drift y + 2s
    VectorXd s = VectorXd::Constant(2, -0.75);  // s = -y/2
    double dt = 1e-4;
    VectorXd step = ei_step(y, s, dt, VectorXd::Zero(2));
    VectorXd taylor = y + (y + 2.0 * s) * dt;  // drift vanishes here
    CHECK((step - taylor).norm() <= 5e-8);

    CHECK_THROWS_AS(ei_step(y, s, 0.0, VectorXd::Zero(2)), std::domain_error);
}

TEST_CASE("ei_step noise variance matches the Ito integral e^{2dt} - 1") {
    double dt = 0.37;
    auto rng = make_rng(7);
    const int n = 100000;
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = ei_step(VectorXd::Zero(1), VectorXd::Zero(1), dt,
                           VectorXd::Constant(1, std_normal(rng)))[0];
        acc += v;
        acc2 += v * v;
    }
    double var = acc2 / n - sq(acc / n);
    CHECK(var == doctest::Approx(std::expm1(2.0 * dt)).epsilon(0.01));
}

TEST_CASE("ei_step update validated against fine Euler-Maruyama") {
    // dY = (Y + 2s) dt + sqrt(2) dB with constant s: compare mean and
    // variance of one EI macro-step against many EM micro-steps
    double dt = 0.3, y0 = 0.8, s = -0.4;
    // deterministic part: EM with tiny steps on the ODE
    double y_ode = y0;
    const int n_ode = 300000;
    for (int i = 0; i < n_ode; ++i) y_ode += (y_ode + 2.0 * s) * (dt / n_ode);
    double ei_mean = ei_step(VectorXd::Constant(1, y0), VectorXd::Constant(1, s), dt,
                             VectorXd::Zero(1))[0];
    CHECK(ei_mean == doctest::Approx(y_ode).epsilon(1e-6));

    // stochastic part: EM variance with 300 steps, 50k paths, 3-sigma band
    auto rng = make_rng(8);
    const int paths = 50000, steps = 300;
    double h = dt / steps;
    double acc = 0.0, acc2 = 0.0;
    for (int p = 0; p < paths; ++p) {
        double y = y0;
        for (int k = 0; k < steps; ++k)
            y += (y + 2.0 * s) * h + std::sqrt(2.0 * h) * std_normal(rng);
        acc += y;
        acc2 += y * y;
    }
    double em_var = acc2 / paths - sq(acc / paths);
    double ei_var = std::expm1(2.0 * dt);
    // EM variance has O(h) bias and MC error ~ var*sqrt(2/paths)
    CHECK(std::abs(em_var - ei_var) <= 3.0 * ei_var * std::sqrt(2.0 / paths) + 0.01 * ei_var);
}

TEST_CASE("stationarity: oracle -x score keeps N(0,1) up to the O(kappa) bias") {
    ScoreFn gauss_score = [](double, const MatrixXd& X) { return (-X).eval(); };
    // per-step variance recursion V <- (2 - e^dt)^2 V + e^{2dt} - 1 has fixed
    // point 1 + O(dt); the discretization bias shrinks with kappa
    double prev_bias = 1e9;
    for (int M : {40, 600}) {
        SamplerSchedule sched = SamplerSchedule::uniform(3.0, 0.05, M);
        MatrixXd s = sample_reverse(gauss_score, sched, 100000, 1, 11);
        CHECK(std::abs(s.col(0).mean()) < 0.015);
        double var = (s.col(0).array() - s.col(0).mean()).square().mean();
        double dt = sched.kappa;
        double fixed_point = std::expm1(2.0 * dt) / (1.0 - sq(2.0 - std::exp(dt)));
        CHECK(std::abs(var - fixed_point) < 0.02);
        CHECK(std::abs(var - 1.0) < prev_bias + 0.02);
        prev_bias = std::abs(fixed_point - 1.0);
    }
}

TEST_CASE("semigroup: two steps with the same frozen score equal one step") {
    // moments: one step of dt1+dt2 vs dt1 then dt2 with combined noise
    VectorXd y = VectorXd::Constant(1, 0.7), s = VectorXd::Constant(1, -0.3);
    double dt1 = 0.2, dt2 = 0.35;
    double mean_two = ei_step(ei_step(y, s, dt1, VectorXd::Zero(1)), s, dt2, VectorXd::Zero(1))[0];
    double mean_one = ei_step(y, s, dt1 + dt2, VectorXd::Zero(1))[0];
    CHECK(mean_two == doctest::Approx(mean_one).epsilon(1e-12));
    // variances: e^{2dt2}(e^{2dt1}-1) + (e^{2dt2}-1) = e^{2(dt1+dt2)}-1
    double v_two = std::exp(2.0 * dt2) * std::expm1(2.0 * dt1) + std::expm1(2.0 * dt2);
    CHECK(v_two == doctest::Approx(std::expm1(2.0 * (dt1 + dt2))).epsilon(1e-12));
}

TEST_CASE("schedule construction and validation") {
    SamplerSchedule u = SamplerSchedule::uniform(5.0, 0.01, 200);
    CHECK(u.kappa == doctest::Approx((5.0 - 0.01) / 200.0));
    CHECK(u.taus[200] == doctest::Approx(4.99));
    SamplerSchedule g = SamplerSchedule::geometric(5.0, 0.01, 100);
    CHECK(g.taus[100] == doctest::Approx(4.99));
    // geometric grid refines near t0: last step smaller than first
    CHECK(g.taus[100] - g.taus[99] < g.taus[1] - g.taus[0]);
    CHECK_THROWS_AS(SamplerSchedule::uniform(1.0, 2.0, 10), ConfigError);
}

TEST_CASE("default schedule: worked example and monotone trends") {
    SamplerSchedule s = default_schedule(0.1, 1, 0.0, 0.0, 1.0);
    CHECK(s.T == doctest::Approx(std::log(10.0)));  // max(1, log 10)
    CHECK(s.t0 == doctest::Approx(0.01));
    // eps = 1 floors T; a large M_beta exercises the t0 floor
    SamplerSchedule f = default_schedule(1.0, 1, 0.0, 0.0, 200.0);
    CHECK(f.T == 1.0);
    CHECK(f.t0 == doctest::Approx(1e-4));
    // with M_beta = 1 the raw t0 would exceed T and is capped below it
    SamplerSchedule f2 = default_schedule(1.0, 1, 0.0, 0.0, 1.0);
    CHECK(f2.t0 < f2.T);
    // monotone in eps
    double prev_T = 0.0, prev_t0 = 1e9;
    int prev_M = 0;
    for (double eps : {0.5, 0.2, 0.1, 0.05}) {
        SamplerSchedule x = default_schedule(eps, 1, 0.02, 0.02, 2.0);
        CHECK(x.T >= prev_T);
        CHECK(x.t0 <= prev_t0);
        CHECK(x.M >= prev_M);
        prev_T = x.T;
        prev_t0 = x.t0;
        prev_M = x.M;
    }
    CHECK(schedule_step_count_diagnostic(0.1, 1, 2.3) == doctest::Approx(0.23));
}

TEST_CASE("oracle mixture sampling: TV to the target and discretization trend") {
    TargetSpec m = two_mode_mixture_1d();
    ScoreFn oracle = [m](double t, const MatrixXd& X) {
        return mixture_score_oracle_batch(m, t, X);
    };
    auto density = [&](double x) {
        return std::exp(log_density_p0(m, VectorXd::Constant(1, x)));
    };
    // moderate-size run of the acceptance configuration
    SamplerSchedule fine = SamplerSchedule::uniform(5.0, 0.01, 200);
    MatrixXd sf = sample_reverse(oracle, fine, 20000, 1, 21);
    MetricReport tv_fine = tv_histogram_density(sf.col(0), density, 64, -6.0, 6.0);
    CHECK(tv_fine.value < 0.06);  // noise floor at n = 2e4 is ~0.03

    // M = 20 is visibly worse than M = 200 (median over 5 seeds)
    SamplerSchedule coarse = SamplerSchedule::uniform(5.0, 0.01, 20);
    std::vector<double> dfine, dcoarse;
    for (uint64_t s = 0; s < 5; ++s) {
        MatrixXd a = sample_reverse(oracle, fine, 20000, 1, 100 + s);
        MatrixXd b = sample_reverse(oracle, coarse, 20000, 1, 100 + s);
        dfine.push_back(tv_histogram_density(a.col(0), density, 64, -6.0, 6.0).value);
        dcoarse.push_back(tv_histogram_density(b.col(0), density, 64, -6.0, 6.0).value);
    }
    std::sort(dfine.begin(), dfine.end());
    std::sort(dcoarse.begin(), dcoarse.end());
    CHECK(dcoarse[2] > dfine[2]);
}

TEST_CASE("sample csv has metadata header and data rows") {
    SamplerSchedule sched = SamplerSchedule::uniform(1.0, 0.01, 4);
    ScoreFn gauss_score = [](double, const MatrixXd& X) { return (-X).eval(); };
    MatrixXd s = sample_reverse(gauss_score, sched, 5, 2, 3);
    std::ostringstream os;
    write_samples_csv(os, s, sched, 3, "oracle");
    std::string text = os.str();
    CHECK(text.find("# schedule T=1") == 0);
    CHECK(text.find("# seed 3") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 8);  // 3 header + 5 rows
}

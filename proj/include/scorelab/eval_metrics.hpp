#pragma once

#include <string>

#include "scorelab/dsm_training.hpp"
#include "scorelab/score_core.hpp"

namespace scorelab {

struct MetricReport {
    std::string name;
    double value = 0.0;
    double std_error = 0.0;
    long n = 0;
    uint64_t seed = 0;
    std::string config;
};

struct L2ErrorReport {
    double abs_error = 0.0, abs_se = 0.0;
    double rel_error = 0.0, rel_se = 0.0;  // normalized by E|true score|^2
    long n = 0;
};

// Monte-Carlo estimate of E_{p_t} |s_hat - grad log p_t|^2 over forward
// samples, against the quadrature score (or a supplied reference).
L2ErrorReport score_l2_error(const ScoreFn& s_hat, const TargetSpec& spec, double t, int n,
                             uint64_t seed);
L2ErrorReport score_l2_error(const ScoreFn& s_hat, const ScoreFn& s_ref,
                             const TargetSpec& spec, double t, int n, uint64_t seed);

// M_beta(f) = Int |grad f(x / (1-2 beta))|^2 gamma_d(dx), Monte Carlo with SE.
MetricReport m_beta(const TargetSpec& spec, double beta, long n, uint64_t seed);
// Gauss-Hermite cross-check (d <= 2).
double m_beta_quadrature(const TargetSpec& spec, double beta, int order = 64);
// The |f|^2-based variant of the same functional, kept under its own name.
MetricReport m_beta_value(const TargetSpec& spec, double beta, long n, uint64_t seed);

struct KlRow {
    double t, kl, bound;
};
struct KlCheckReport {
    std::vector<KlRow> rows;
    bool pass = true;
    double m_beta_used = 0.0;
    double c_used = 10.0;
};

// KL(p_t || p0) by density quadrature on a grid of short times; passes iff
// KL(t) <= C * M_beta(f) * t at every grid point. d <= 2.
KlCheckReport kl_short_time_check(const TargetSpec& spec, const std::vector<double>& t_grid,
                                  double C = 10.0);

// Total variation between 1-d histograms: 0.5 sum_b |h_a - h_b|, with a
// bootstrap standard error (200 resamples). The range must cover >= 99.9% of
// each input's mass.
MetricReport tv_histogram(const VectorXd& samples_a, const VectorXd& samples_b, int bins,
                          double lo, double hi, uint64_t bootstrap_seed = 7);
MetricReport tv_histogram_density(const VectorXd& samples,
                                  const std::function<double(double)>& density, int bins,
                                  double lo, double hi, uint64_t bootstrap_seed = 7);

struct RademacherReport {
    double estimate = 0.0;  // multi-restart ascent value: a lower bound on the sup
    double bound = 0.0;     // max_i |x_i|_inf * 2^L * K * sqrt(2 log(2d+2) / N)
    bool pass = true;       // estimate <= bound
};

// Empirical Rademacher complexity of depth-L, path-norm-K scalar ReLU
// networks on the given points, estimated by projected gradient ascent.
RademacherReport empirical_rademacher(int depth, double K, int width, const MatrixXd& points,
                                      int n_draws, uint64_t seed);

}  // namespace scorelab

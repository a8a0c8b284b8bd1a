#pragma once

#include <vector>

#include "scorelab/ou_process.hpp"

namespace scorelab {

// Ground-truth score evaluation through the decomposition
//   (grad log p_t(x))_j = (1-e^{-2t})^{-1} ( -x_j + e^{-t} F_t^j(x) / G_t(x) ),
//   F_t^j(x) = Int (e^{-t} x_j + sqrt(1-e^{-2t}) u_j) e^{f(e^{-t}x + sqrt(1-e^{-2t})u)} gamma_d(du),
//   G_t(x)  = Int e^{f(e^{-t}x + sqrt(1-e^{-2t})u)} gamma_d(du).
// Integrals are evaluated by tensorized Gauss-Hermite or seeded Monte Carlo
// sharing one node set between F and G (self-normalized ratio). Exponentials
// are shifted by the max of f over the nodes before exponentiation.
class ScoreQuadrature {
  public:
    enum class Mode { GaussHermite, MonteCarlo };

    static ScoreQuadrature gauss_hermite(const TargetSpec& spec, int order_per_axis = 64);
    static ScoreQuadrature monte_carlo(const TargetSpec& spec, long m, uint64_t seed);

    std::pair<VectorXd, double> eval_fg(double t, const VectorXd& x) const;
    VectorXd true_score(double t, const VectorXd& x) const;
    MatrixXd true_score_batch(double t, const MatrixXd& X) const;  // d x n -> d x n

    const TargetSpec& spec() const { return spec_; }
    Mode mode() const { return mode_; }
    long node_count() const { return weights_.size(); }

  private:
    ScoreQuadrature(TargetSpec spec, Mode mode, MatrixXd nodes, VectorXd weights);
    TargetSpec spec_;
    Mode mode_;
    MatrixXd nodes_;    // d x m, read-only after construction
    VectorXd weights_;  // sums to 1
};

// Closed-form score of an evolved Gaussian mixture; t = 0 gives the data
// score. Exact reference for quadrature and samplers.
VectorXd mixture_score_oracle(const TargetSpec& spec, double t, const VectorXd& x);
MatrixXd mixture_score_oracle_batch(const TargetSpec& spec, double t, const MatrixXd& X);

struct FgGrowthRow {
    double t;
    double radius;
    double f_absmax;
    double g_min;
    double g_max;
};

struct FgGrowthReport {
    bool pass = true;
    std::vector<FgGrowthRow> rows;
    // Reference values at radius R
    double f_bound = 0.0;        // cap * (1-2b)^{-d/2} e^{b R^2}
    double g_lower_bound = 0.0;  // (1+2a)^{-d/2} e^{-a R^2} (no constant)
    double g_upper_bound = 0.0;  // cap * (1-2b)^{-d/2} e^{b R^2}
    // Measured extremes over the whole grid (used to size quotient domains).
    double measured_f_absmax = 0.0;
    double measured_g_min = 0.0;
    double measured_g_max = 0.0;
    std::string failure;
};

// Verifies the growth bounds for F and G on a ball grid of radii up to R
// (radius 0 included; the lower G bound is constant-free, the upper bounds
// carry the configurable cap).
FgGrowthReport fg_growth_check(const ScoreQuadrature& q, double R,
                               const std::vector<double>& t_list, double cap = 1e3);

}  // namespace scorelab

#pragma once

#include <functional>

#include "scorelab/score_core.hpp"

namespace scorelab {

// Accuracy budget for the constructive score approximation.
struct ApproxBudget {
    double eps = 0.05;    // target accuracy driving every sub-builder tolerance
    double R = 4.0;       // certification / truncation radius
    int m_neurons = 4096; // Monte-Carlo node count for the Gaussian integral
    double eta = 0.0;     // measured path norm of phi_f (recorded, never assumed)
    int L_f = 2;          // depth of the f approximant
};

// m-term discretization of F(x) = Int g(x, theta) mu(dtheta) over a bounded
// 1-d parameter set, with i.i.d. nodes from the normalized |mu| and sign
// labels: F_m(x) = (|mu|_TV / m) sum_i a_i g(x, theta_i).
struct FiniteSumApprox {
    std::function<double(const VectorXd&, double)> g;
    VectorXd thetas;
    VectorXd signs;  // +-1
    double tv_mass = 0.0;
    double eval(const VectorXd& x) const;
};

FiniteSumApprox mc_discretize(std::function<double(const VectorXd&, double)> g,
                              std::function<double(double)> density, double lo, double hi,
                              double tv_mass, int m, uint64_t seed);

struct BuilderOptions {
    double path_constant = 10.0;  // C in the path-norm assertions
    int grid_points = 10000;      // certification grid size (per axis pair for 2-d)
    long m_cap = 10000000;        // hard cap on neuron count
    int m_start = 0;              // 0 = builder picks its own start
};

struct BuilderResult {
    ReluNet net;
    double cert_error = 0.0;  // measured sup error on the certification grid
    int m = 0;                // neurons used by the integral discretization
    double path_norm = 0.0;
    double path_bound = 0.0;  // asserted bound C * (order from the construction)
};

// Shallow approximants built from one-dimensional neuron integrals with
// deterministic equal-error strata (see docs/formats.md for the layout).
BuilderResult build_exp(double a, double b, double eps, const BuilderOptions& = {});
BuilderResult build_square(double R, double eps, const BuilderOptions& = {});   // on [-R, R]
BuilderResult build_prod(double R, double eps, const BuilderOptions& = {});     // on [-R, R]^2
BuilderResult build_inv(double a, double b, double eps, const BuilderOptions& = {});
BuilderResult build_log(double a, double b, double eps, const BuilderOptions& = {});
// x/y on [-R, R] x [a, b]; two hidden layers (product of x with an inverse net).
BuilderResult build_quot(double R, double a, double b, double eps,
                         const BuilderOptions& = {});
// x*y on [-range_x, range_x] x [-range_y, range_y] with internally balanced
// scaling; build_prod(R, eps) is the symmetric special case.
BuilderResult build_prod_rect(double range_x, double range_y, double eps,
                              const BuilderOptions& = {});

// Approximant of the tilt f, with an optional fast evaluation path that
// avoids the materialized middle layer of the composed network.
struct PhiF {
    ReluNet net;  // the certified approximant (used for path-norm accounting)
    // Mixture recipe pieces: f = log_net(mix(y)) + norm(y). Empty for direct nets.
    ReluNet mix, log_net, norm;
    bool has_pieces = false;
    double cert_error = 0.0;  // sup |phi_f - f| on the build ball
    double build_radius = 0.0;

    Eigen::RowVectorXd eval_batch(const MatrixXd& Y) const;
    double eval(const VectorXd& y) const;
    static PhiF direct(ReluNet n);
};

// Two-hidden-layer tilt approximant for a one-dimensional Gaussian mixture:
// an inner shallow net approximates the density, an outer shallow net the
// logarithm on its range, plus a shallow |x|^2/2 corrector. Certified to
// sup error <= R * eps on [-R, R].
PhiF mixture_phi_f(const TargetSpec& spec, double R, double eps, const BuilderOptions& = {});

// phi_exp composed with phi_f, certified against e^{f} on the R-ball.
BuilderResult build_f_exp(const PhiF& phi_f, const TargetSpec& spec, const ApproxBudget& budget,
                          const BuilderOptions& = {});

// Score map assembled from networks:
//   Phi_G(x)   = (w_R/m) sum_i  fexp(e^{-t}x + s u_i)
//   Phi_F^j(x) = (w_R/m) sum_i  prod((e^{-t}x + s u_i)_j, fexp(e^{-t}x + s u_i))
//   score_j(x) = (1-e^{-2t})^{-1} ( -x_j + e^{-t} quot(Phi_F^j(x), Phi_G(x)) )
// with u_i ~ gamma_d restricted to the R-ball and w_R its Gaussian mass.
// Evaluation composes the stored sub-networks directly; the materialized
// parallel sum would have m copies of every layer.
class ConstructedScore {
  public:
    MatrixXd eval_batch(const MatrixXd& X) const;  // d x n -> d x n
    VectorXd eval(const VectorXd& x) const;
    // Phi_F (d x n) and Phi_G (n) for diagnostics and gate checks.
    std::pair<MatrixXd, VectorXd> eval_fg_nets(const MatrixXd& X) const;

    double t = 0.0;
    double shrink = 0.0, noise_var = 0.0;
    ApproxBudget budget;           // echo, with eta filled in
    PhiF phi_f;
    ReluNet f_exp;                 // materialized phi_exp . phi_f
    ReluNet phi_exp;               // the exponential factor alone (fast path)
    ReluNet prod_net;              // (y_j, z) -> y_j z
    ReluNet quot_net;              // (F, G) -> F/G
    MatrixXd nodes;                // d x m
    double tv_gamma_r = 1.0;       // Gaussian mass of the R-ball
    double g_gate = 0.0;           // 0.5 (1+2a)^{-d/2} e^{-a R^2}
    double g_min_cert = 0.0, g_max_cert = 0.0, f_absmax_cert = 0.0;
    double l2_rel_error = 0.0;     // measured against the true score
    double l2_abs_error = 0.0;
    double path_norm_f_exp = 0.0, path_norm_phi_g = 0.0, path_norm_phi_fj = 0.0,
           path_norm_total = 0.0;
};

ConstructedScore build_score_net(const TargetSpec& spec, const PhiF& phi_f, double t,
                                 const ApproxBudget& budget, uint64_t seed,
                                 const BuilderOptions& = {});

// Gaussian mass of the d-dimensional R-ball (d <= 3).
double gaussian_ball_mass(int dim, double R);

}  // namespace scorelab

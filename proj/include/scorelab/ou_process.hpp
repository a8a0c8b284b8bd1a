#pragma once

#include <utility>
#include <vector>

#include "scorelab/target_dist.hpp"

namespace scorelab {

// Forward process dX_t = -X_t dt + sqrt(2) dW_t started from p0. At time t,
// X_t = e^{-t} X_0 + sqrt(1 - e^{-2t}) xi with xi ~ N(0, I).
struct ForwardMarginal {
    double t;
    double shrink;     // e^{-t}
    double noise_var;  // 1 - e^{-2t}
};

ForwardMarginal forward_marginal(double t);

// Coupled (X_0, X_t) pairs, each n x d.
std::pair<MatrixXd, MatrixXd> forward_sample(const TargetSpec& spec, double t, int n,
                                             uint64_t seed);

// Score of the Gaussian transition kernel: -(x_t - e^{-t} x_0) / (1 - e^{-2t}).
VectorXd conditional_score(const VectorXd& x0, const VectorXd& xt, double t);

enum class DensityMode { Auto, ClosedForm, GaussHermite, MonteCarlo };

struct DensityOptions {
    DensityMode mode = DensityMode::Auto;
    int gh_order = 64;     // per axis (use ~24 for d = 3)
    long mc_samples = 100000;
    uint64_t mc_seed = 1;
};

// Marginal density p_t(x). Gaussian/mixture forms use the closed form
// (components evolve as N(e^{-t} mu, e^{-2t} sigma^2 + 1 - e^{-2t})), which is
// self-tested against direct numerical integration once per process.
// ReluTilted uses the completed-square identity
//   p_t(x) = (2 pi)^{d/2} Z^{-1} gamma_d(x) G_t(x)
// with G_t evaluated by Gauss-Hermite quadrature (d <= 3) or Monte Carlo.
double marginal_density(const TargetSpec& spec, double t, const VectorXd& x,
                        const DensityOptions& opts = {});
double log_marginal_density(const TargetSpec& spec, double t, const VectorXd& x,
                            const DensityOptions& opts = {});

struct TailCheckRow {
    double t;
    double radius;
    double c_check;  // max over directions of p_t(x) / bound(x)
};

struct TailCheckReport {
    bool pass = true;
    double c_check = 0.0;  // max over rows
    double witness_t = 0.0, witness_radius = 0.0;
    std::vector<TailCheckRow> rows;
};

// Verifies p_t(x) <= C (2 pi (1-2 beta)^{-1})^{-d/2} exp(-(1-2 beta)|x|^2/2)
// on the radius grid; passes iff the measured C stays below cap. beta_override
// substitutes a claimed beta into the bound (for non-vacuity checks); the
// check is report-only and accepts any positive radii.
TailCheckReport subgaussian_tail_check(const TargetSpec& spec,
                                       const std::vector<double>& t_list,
                                       const std::vector<double>& radius_grid,
                                       double cap = 1e3,
                                       std::optional<double> beta_override = std::nullopt);

}  // namespace scorelab

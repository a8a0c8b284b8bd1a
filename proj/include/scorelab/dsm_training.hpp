#pragma once

#include <functional>
#include <iosfwd>
#include <optional>

#include "scorelab/ou_process.hpp"

namespace scorelab {

// A time-indexed score field: (t, X with columns as points) -> score columns.
using ScoreFn = std::function<MatrixXd(double, const MatrixXd&)>;

// Per-time collection of networks phi_k wrapped in the parametrization
//   s_{t_k}(x) = (1 - e^{-2 t_k})^{-1} ( -x + e^{-t_k} phi_k(x) ).
struct ScoreModel {
    std::vector<double> times;
    std::vector<ReluNet> nets;  // phi_k: R^d -> R^d
    std::optional<double> k_budget;

    int dim() const;
    int index_of_time(double t) const;    // exact match or ConfigError
    int nearest_time_index(double t) const;

    MatrixXd score_batch(int k, const MatrixXd& X) const;  // d x n -> d x n
    VectorXd score_at(int k, const VectorXd& x) const;
    double phi_zero_norm(int k) const;    // |phi_k(0)|, logged against k_budget

    // Score source for the sampler; times are resolved by nearest lookup.
    ScoreFn as_score_fn() const;

    void save(std::ostream& os) const;
    static ScoreModel load(std::istream& is);
};

struct RiskConfig {
    int n_inner = 8;                        // conditional draws per data point
    std::optional<double> trunc_S, trunc_R; // data / path truncation radii
    uint64_t seed = 0;
};

// Denoising loss at one data point: Monte-Carlo estimate over n_inner draws of
// E_{X_t | X_0 = x0} |s(X_t) - Psi_t(X_t|X_0)|^2.
double loss_at(const ScoreFn& score, double t, const VectorXd& x0, const RiskConfig& cfg);

// Mean of loss_at over rows of data (n x d), with one RNG substream per row.
double empirical_risk(const ScoreFn& score, double t, const MatrixXd& data,
                      const RiskConfig& cfg);

// Indicator-masked risk: rows with |x0| > S contribute zero, and each inner
// draw is masked by |X_t| <= R + |X_0| (the path event checked at the draw
// times). Inner draws are identical to empirical_risk under the same seed.
double truncated_risk(const ScoreFn& score, double t, const MatrixXd& data,
                      const RiskConfig& cfg);

// Both risks over shared draws plus the exact pointwise decomposition
//   |a - psi|^2 - |b - psi|^2 = |a - b|^2 + 2 <a - b, b - psi>.
struct RiskDecomposition {
    double risk_a = 0.0, risk_b = 0.0;
    double sq_err = 0.0;  // mean |a - b|^2 over the shared draws
    double cross = 0.0;   // mean 2 <a - b, b - psi>
    double diff() const { return risk_a - risk_b; }
};
RiskDecomposition risk_difference_decomposition(const ScoreFn& a, const ScoreFn& b, double t,
                                                const MatrixXd& data, const RiskConfig& cfg);

struct TrainOptions {
    int depth = 3;       // affine layers (2 hidden)
    int width = 32;
    std::optional<double> k_budget;  // path-norm budget, enforced by output rescaling
    int steps = 5000;
    int batch = 64;
    double lr = 0.02;    // cosine-decayed
    int telemetry_every = 100;
};

// Trains one network per time by mini-batch SGD on the denoising objective
// with fresh conditional draws each step. Telemetry rows (if a stream is
// given): time_index,step,risk,path_norm,grad_norm.
ScoreModel train(const TargetSpec& spec, const std::vector<double>& times,
                 const MatrixXd& data, const TrainOptions& opt, uint64_t seed,
                 std::ostream* telemetry = nullptr);

namespace dsm_detail {
// Batch DSM loss for FIXED noise draws and its parameter gradient, for
// finite-difference verification. Parameter order: per layer, W row-major
// then b.
double loss_and_gradient(const ReluNet& phi, double t, const MatrixXd& x0_cols,
                         const MatrixXd& xi_cols, VectorXd* grad);
VectorXd flatten_params(const ReluNet& net);
void unflatten_params(ReluNet& net, const VectorXd& v);
}  // namespace dsm_detail

}  // namespace scorelab

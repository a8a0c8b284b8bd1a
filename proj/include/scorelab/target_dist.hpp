#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scorelab/relu_net.hpp"

namespace scorelab {

enum class TargetForm { StandardGaussian, GaussianMixture, ReluTilted };

struct MixtureComponent {
    double weight;
    VectorXd mean;
    double variance;  // isotropic sigma^2
};

// Target density p0(x) = Z^{-1} exp(-|x|^2/2 + f(x)) with the tilt f growing
// at most quadratically outside radius r_f:
//     -alpha |x|^2 <= f(x) <= beta |x|^2   for |x| >= r_f.
// For the Gaussian forms f is the log density relative to gamma_d, so
// Z = (2*pi)^{d/2} exactly; for ReluTilted f is the supplied network and Z is
// computed numerically (never trusted from input).
class TargetSpec {
  public:
    static TargetSpec standard_gaussian(int dim);
    static TargetSpec gaussian_mixture(int dim, std::vector<MixtureComponent> components,
                                       double alpha, double beta, double r_f);
    static TargetSpec relu_tilted(int dim, ReluNet f_net, double alpha, double beta,
                                  double r_f, uint64_t z_seed = 20240901);

    TargetForm form() const { return form_; }
    int dim() const { return dim_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double r_f() const { return r_f_; }
    double log_norm_z() const { return log_norm_z_; }
    const std::vector<MixtureComponent>& components() const { return components_; }
    const ReluNet& f_net() const { return f_net_; }

    // The two versions of the admissibility constant that appear with
    // different denominators; construction gates on c_assumption < 1.
    double c_assumption() const { return 4.0 * (alpha_ + beta_) / (1.0 - beta_); }
    double c_mixture() const { return 4.0 * (alpha_ + beta_) / (1.0 - 2.0 * beta_); }

    // (2*pi)^{d/2} / Z, reported as a diagnostic (not a gate).
    double z_ratio_diagnostic() const;

    nlohmann::json to_json() const;
    static TargetSpec from_json(const nlohmann::json& j);

  private:
    TargetSpec() = default;
    void validate_and_finalize(uint64_t z_seed);

    TargetForm form_ = TargetForm::StandardGaussian;
    int dim_ = 1;
    double alpha_ = 0.0, beta_ = 0.0, r_f_ = 1.0;
    double log_norm_z_ = 0.0;
    std::vector<MixtureComponent> components_;
    ReluNet f_net_;
};

// f(x): 0 for StandardGaussian; log(p0/gamma_d) for mixtures; f_net(x) for
// ReluTilted. Throws std::domain_error on non-finite x.
double log_relative_density(const TargetSpec& spec, const VectorXd& x);

// Analytic gradient of f. ReLU kinks use the right-derivative convention
// (activation derivative 0 at 0).
VectorXd grad_f(const TargetSpec& spec, const VectorXd& x);

// log of the normalized density p0.
double log_density_p0(const TargetSpec& spec, const VectorXd& x);

struct GrowthReport {
    bool pass = false;
    double worst_lower_margin = 0.0;  // min over grid of f + alpha|x|^2 (>= 0 required)
    double worst_upper_margin = 0.0;  // min over grid of beta|x|^2 - f   (>= 0 required)
    VectorXd witness;                 // violating point when !pass
    bool has_witness = false;
    // Tightest constants implied by the mixture bandwidth display (mixture form only).
    std::optional<double> implied_alpha, implied_beta;
};

// Scans a deterministic radial grid with |x| in [r_f, 3 r_f].
GrowthReport growth_constants_check(const TargetSpec& spec, int n_grid);

// Smallest radius at which the quadratic growth bounds hold on a scan,
// for picking r_f when constructing mixtures.
double suggest_r_f(int dim, const std::vector<MixtureComponent>& components, double alpha,
                   double beta);

// Exact i.i.d. samples, n x d. Mixtures sample the component then the
// Gaussian; ReluTilted uses rejection from N(0, (1-2 beta)^{-1} I).
MatrixXd sample_p0(const TargetSpec& spec, int n, uint64_t seed);

}  // namespace scorelab

#pragma once

#include "scorelab/dsm_training.hpp"

namespace scorelab {

// Reverse-time grid for the exponential integrator: 0 = tau_0 < ... < tau_M,
// the score at step k is taken at forward time T - tau_k, and the run stops
// at tau_M = T - t0 (early stopping).
struct SamplerSchedule {
    double T = 0.0;
    double t0 = 0.0;
    double kappa = 0.0;  // max step
    int M = 0;
    VectorXd taus;  // size M + 1

    static SamplerSchedule uniform(double T, double t0, int M);
    // log-spaced forward times, refining near t0 where the score stiffens
    static SamplerSchedule geometric(double T, double t0, int M);
    void validate() const;
};

// Chooses T, t0, M from the accuracy target:
//   T  = max(1, (log(1/d) + 2 d log(1+2a) + 2 (1-c) log(1/eps)) / 2)
//   t0 = max(1e-4, eps^2 / M_beta^2)
//   M  = ceil(d T / eps)      (the alternative count d*T*eps is logged only)
SamplerSchedule default_schedule(double eps, int d, double alpha, double beta,
                                 double m_beta_f);
// The literal step-count reading, exposed as a diagnostic.
double schedule_step_count_diagnostic(double eps, int d, double T);

// One exponential-integrator step for dY = (Y + 2 s) dt + sqrt(2) dB with the
// score frozen: exact solution of the linear SDE over dt,
//   y' = e^{dt} y + 2 (e^{dt} - 1) s + sqrt(e^{2 dt} - 1) * noise.
VectorXd ei_step(const VectorXd& y, const VectorXd& s_val, double dt, const VectorXd& noise);

// n trajectories from Y_0 ~ N(0, I) through the schedule; returns an n x d
// matrix of approximate p_{t0} samples.
MatrixXd sample_reverse(const ScoreFn& score, const SamplerSchedule& sched, int n, int d,
                        uint64_t seed);

// CSV with a metadata header (# schedule/seed/source lines), one row per sample.
void write_samples_csv(std::ostream& os, const MatrixXd& samples,
                       const SamplerSchedule& sched, uint64_t seed,
                       const std::string& source_id);

}  // namespace scorelab

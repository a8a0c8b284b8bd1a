#include "scorelab/ei_sampler.hpp"

#include <iostream>

namespace scorelab {

void SamplerSchedule::validate() const {
    if (M < 1) throw ConfigError("SamplerSchedule: M >= 1 required");
    if (!(t0 > 0.0)) throw ConfigError("SamplerSchedule: t0 > 0 required");
    if (taus.size() != M + 1 || taus[0] != 0.0)
        throw ConfigError("SamplerSchedule: taus must start at 0 with M+1 entries");
    double maxstep = 0.0;
    for (int k = 0; k < M; ++k) {
        double dt = taus[k + 1] - taus[k];
        if (!(dt > 0.0)) throw ConfigError("SamplerSchedule: taus must increase strictly");
        maxstep = std::max(maxstep, dt);
    }
    if (maxstep > kappa + 1e-12)
        throw ConfigError("SamplerSchedule: max step exceeds kappa");
    if (std::abs(T - taus[M] - t0) > 1e-9)
        throw ConfigError("SamplerSchedule: T - tau_M must equal t0");
}

SamplerSchedule SamplerSchedule::uniform(double T, double t0, int M) {
    if (!(T > t0 && t0 > 0.0)) throw ConfigError("SamplerSchedule: T > t0 > 0 required");
    SamplerSchedule s;
    s.T = T;
    s.t0 = t0;
    s.M = M;
    s.taus.resize(M + 1);
    for (int k = 0; k <= M; ++k) s.taus[k] = (T - t0) * k / double(M);
    s.taus[M] = T - t0;
    s.kappa = (T - t0) / M;
    s.validate();
    return s;
}

SamplerSchedule SamplerSchedule::geometric(double T, double t0, int M) {
    if (!(T > t0 && t0 > 0.0)) throw ConfigError("SamplerSchedule: T > t0 > 0 required");
    SamplerSchedule s;
    s.T = T;
    s.t0 = t0;
    s.M = M;
    s.taus.resize(M + 1);
    s.taus[0] = 0.0;
    for (int k = 1; k <= M; ++k) {
        // forward time decays geometrically from T to t0
        double t_fwd = t0 * std::pow(T / t0, (M - k) / double(M));
        s.taus[k] = T - t_fwd;
    }
    s.kappa = 0.0;
    for (int k = 0; k < M; ++k) s.kappa = std::max(s.kappa, s.taus[k + 1] - s.taus[k]);
    s.validate();
    return s;
}

SamplerSchedule default_schedule(double eps, int d, double alpha, double beta,
                                 double m_beta_f) {
    if (!(eps > 0.0 && eps < 1.0 + 1e-12)) throw ConfigError("default_schedule: eps in (0,1]");
    double c = 4.0 * (alpha + beta) / (1.0 - beta);
    double T = std::max(
        1.0, 0.5 * (std::log(1.0 / d) + 2.0 * d * std::log1p(2.0 * alpha) +
                    2.0 * (1.0 - c) * std::log(1.0 / eps)));
    double t0 = std::max(1e-4, eps * eps / std::max(m_beta_f * m_beta_f, 1e-12));
    t0 = std::min(t0, 0.5 * T);
    int M = std::max(1, int(std::ceil(d * T / eps)));
    return SamplerSchedule::uniform(T, t0, M);
}

double schedule_step_count_diagnostic(double eps, int d, double T) { return d * T * eps; }

VectorXd ei_step(const VectorXd& y, const VectorXd& s_val, double dt, const VectorXd& noise) {
    if (!(dt > 0.0)) throw std::domain_error("ei_step: dt > 0 required");
    double growth = std::exp(dt);
    double noise_sd = std::sqrt(std::expm1(2.0 * dt));
    return growth * y + 2.0 * (growth - 1.0) * s_val + noise_sd * noise;
}

MatrixXd sample_reverse(const ScoreFn& score, const SamplerSchedule& sched, int n, int d,
                        uint64_t seed) {
    sched.validate();
    auto rng = make_rng(seed, 0xE1);
    MatrixXd Y = normal_matrix(rng, d, n);  // columns are trajectories
    for (int k = 0; k < sched.M; ++k) {
        double dt = sched.taus[k + 1] - sched.taus[k];
        double t_score = sched.T - sched.taus[k];
        MatrixXd S = score(t_score, Y);
        double growth = std::exp(dt);
        double noise_sd = std::sqrt(std::expm1(2.0 * dt));
        Y = growth * Y + 2.0 * (growth - 1.0) * S + noise_sd * normal_matrix(rng, d, n);
        if (!Y.allFinite())
            throw NumericalError("sample_reverse: non-finite state at step " +
                                 std::to_string(k) + " (t_score = " +
                                 std::to_string(t_score) + ")");
    }
    return Y.transpose();
}

void write_samples_csv(std::ostream& os, const MatrixXd& samples,
                       const SamplerSchedule& sched, uint64_t seed,
                       const std::string& source_id) {
    os.precision(17);
    os << "# schedule T=" << sched.T << " t0=" << sched.t0 << " M=" << sched.M
       << " kappa=" << sched.kappa << "\n";
    os << "# seed " << seed << "\n";
    os << "# score_source " << source_id << "\n";
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        for (Eigen::Index j = 0; j < samples.cols(); ++j)
            os << samples(i, j) << (j + 1 < samples.cols() ? ',' : '\n');
    }
}

}  // namespace scorelab

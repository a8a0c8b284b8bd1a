#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace scorelab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Bad user input (config files, invalid parameter combinations). CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A numerical routine left its validity envelope (overflow, divergence,
// rejection-sampler starvation). CLI exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A quantitative check asserted by an experiment failed. CLI exit code 1.
struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent substream per (seed, stream). All randomness in the library is
// drawn from caller-supplied (seed, stream) pairs; there is no global RNG.
inline std::mt19937_64 make_rng(uint64_t seed, uint64_t stream = 0) {
    uint64_t s = seed ^ (0x632be59bd9b4e019ULL * (stream + 1));
    uint64_t a = splitmix64(s), b = splitmix64(s);
    std::seed_seq seq{uint32_t(a), uint32_t(a >> 32), uint32_t(b), uint32_t(b >> 32)};
    return std::mt19937_64(seq);
}

inline double uniform01(std::mt19937_64& rng) {
    // 53-bit mantissa uniform in (0,1]; avoids exact 0 so log() is safe.
    return (double(rng() >> 11) + 1.0) * 0x1.0p-53;
}

inline double std_normal(std::mt19937_64& rng) {
    // Box-Muller, cosine branch only. Deterministic across library versions,
    // unlike std::normal_distribution.
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline VectorXd normal_vector(std::mt19937_64& rng, Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std_normal(rng);
    return v;
}

// Row-major fill so a matrix of samples (rows = draws) is reproducible
// independent of how columns are consumed.
inline MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std_normal(rng);
    return m;
}

inline double log_sum_exp(const VectorXd& v) {
    double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((v.array() - mx).exp().sum());
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double sq(double x) { return x * x; }

}  // namespace scorelab

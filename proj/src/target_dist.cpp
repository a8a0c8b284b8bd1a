#include "scorelab/target_dist.hpp"

#include <nlohmann/json.hpp>

#include "scorelab/quadrature.hpp"

namespace scorelab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_finite(const VectorXd& x) {
    if (!x.allFinite()) throw std::domain_error("non-finite input point");
}

// Per-component log weights of the mixture at x: log w_i + log N(x; mu_i, s2_i I).
VectorXd mixture_component_logs(const TargetSpec& spec, const VectorXd& x) {
    const auto& comps = spec.components();
    VectorXd lw(comps.size());
    for (size_t i = 0; i < comps.size(); ++i) {
        double d2 = (x - comps[i].mean).squaredNorm();
        lw[i] = std::log(comps[i].weight) -
                0.5 * spec.dim() * (kLog2Pi + std::log(comps[i].variance)) -
                0.5 * d2 / comps[i].variance;
    }
    return lw;
}

// Gradient of a scalar-output ReLU network, right-derivative at kinks.
VectorXd net_input_gradient(const ReluNet& net, const VectorXd& x) {
    const auto& layers = net.layers();
    std::vector<VectorXd> pre(layers.size());
    VectorXd h = x;
    for (size_t k = 0; k < layers.size(); ++k) {
        pre[k] = layers[k].W * h + layers[k].b;
        h = (k + 1 < layers.size()) ? pre[k].cwiseMax(0.0).eval() : pre[k];
    }
    VectorXd g = layers.back().W.transpose() * VectorXd::Ones(1);
    for (size_t k = layers.size() - 1; k-- > 0;) {
        VectorXd mask = (pre[k].array() > 0.0).cast<double>();
        g = layers[k].W.transpose() * (mask.asDiagonal() * g);
    }
    return g;
}

// Deterministic direction set for radial scans.
std::vector<VectorXd> scan_directions(int dim) {
    std::vector<VectorXd> dirs;
    for (int j = 0; j < dim; ++j) {
        VectorXd e = VectorXd::Zero(dim);
        e[j] = 1.0;
        dirs.push_back(e);
        dirs.push_back(-e);
    }
    if (dim > 1) {
        VectorXd ones = VectorXd::Constant(dim, 1.0 / std::sqrt(double(dim)));
        dirs.push_back(ones);
        dirs.push_back(-ones);
        auto rng = make_rng(0xD1CEull, dim);
        while (dirs.size() < 64) {
            VectorXd v = normal_vector(rng, dim);
            double n = v.norm();
            if (n > 1e-8) dirs.push_back(v / n);
        }
    }
    return dirs;
}

double compute_log_z_relu(const TargetSpec& spec, uint64_t seed);

}  // namespace

double log_relative_density(const TargetSpec& spec, const VectorXd& x) {
    check_finite(x);
    if (x.size() != spec.dim()) throw std::invalid_argument("log_relative_density: dim mismatch");
    switch (spec.form()) {
        case TargetForm::StandardGaussian:
            return 0.0;
        case TargetForm::GaussianMixture:
            // f = log p0 - log gamma_d
            return log_sum_exp(mixture_component_logs(spec, x)) + 0.5 * x.squaredNorm() +
                   0.5 * spec.dim() * kLog2Pi;
        case TargetForm::ReluTilted:
            return spec.f_net().eval(x)[0];
    }
    throw std::logic_error("unreachable");
}

VectorXd grad_f(const TargetSpec& spec, const VectorXd& x) {
    check_finite(x);
    if (x.size() != spec.dim()) throw std::invalid_argument("grad_f: dim mismatch");
    switch (spec.form()) {
        case TargetForm::StandardGaussian:
            return VectorXd::Zero(spec.dim());
        case TargetForm::GaussianMixture: {
            VectorXd lw = mixture_component_logs(spec, x);
            VectorXd resp = (lw.array() - log_sum_exp(lw)).exp();
            VectorXd g = x;
            const auto& comps = spec.components();
            for (size_t i = 0; i < comps.size(); ++i)
                g -= resp[i] / comps[i].variance * (x - comps[i].mean);
            return g;
        }
        case TargetForm::ReluTilted:
            return net_input_gradient(spec.f_net(), x);
    }
    throw std::logic_error("unreachable");
}

double log_density_p0(const TargetSpec& spec, const VectorXd& x) {
    check_finite(x);
    switch (spec.form()) {
        case TargetForm::StandardGaussian:
            return -0.5 * spec.dim() * kLog2Pi - 0.5 * x.squaredNorm();
        case TargetForm::GaussianMixture:
            return log_sum_exp(mixture_component_logs(spec, x));
        case TargetForm::ReluTilted:
            return -0.5 * x.squaredNorm() + spec.f_net().eval(x)[0] - spec.log_norm_z();
    }
    throw std::logic_error("unreachable");
}

GrowthReport growth_constants_check(const TargetSpec& spec, int n_grid) {
    if (n_grid < 100) throw std::invalid_argument("growth_constants_check: n_grid >= 100 required");
    GrowthReport rep;
    rep.worst_lower_margin = std::numeric_limits<double>::infinity();
    rep.worst_upper_margin = std::numeric_limits<double>::infinity();
    rep.pass = true;
    auto dirs = scan_directions(spec.dim());
    for (int i = 0; i < n_grid; ++i) {
        double r = spec.r_f() * (1.0 + 2.0 * i / double(n_grid - 1));  // [r_f, 3 r_f]
        for (const auto& dir : dirs) {
            VectorXd x = r * dir;
            double f = log_relative_density(spec, x);
            double lower = f + spec.alpha() * r * r;
            double upper = spec.beta() * r * r - f;
            if (lower < rep.worst_lower_margin) rep.worst_lower_margin = lower;
            if (upper < rep.worst_upper_margin) rep.worst_upper_margin = upper;
            if ((lower < 0.0 || upper < 0.0) && !rep.has_witness) {
                rep.witness = x;
                rep.has_witness = true;
            }
        }
    }
    rep.pass = rep.worst_lower_margin >= 0.0 && rep.worst_upper_margin >= 0.0;
    if (spec.form() == TargetForm::GaussianMixture) {
        double s2min = std::numeric_limits<double>::infinity(), s2max = 0.0;
        for (const auto& c : spec.components()) {
            s2min = std::min(s2min, c.variance);
            s2max = std::max(s2max, c.variance);
        }
        // Bandwidth-implied constants in the limit of vanishing slack.
        rep.implied_alpha = (1.0 - s2min) / (2.0 * s2min);
        rep.implied_beta = (s2max - 1.0) / (2.0 * s2max);
    }
    return rep;
}

double suggest_r_f(int dim, const std::vector<MixtureComponent>& components, double alpha,
                   double beta) {
    auto mixture_f = [&](const VectorXd& x) {
        VectorXd lw(components.size());
        for (size_t i = 0; i < components.size(); ++i) {
            double d2 = (x - components[i].mean).squaredNorm();
            lw[i] = std::log(components[i].weight) -
                    0.5 * dim * (kLog2Pi + std::log(components[i].variance)) -
                    0.5 * d2 / components[i].variance;
        }
        return log_sum_exp(lw) + 0.5 * x.squaredNorm() + 0.5 * dim * kLog2Pi;
    };
    auto dirs = scan_directions(dim);
    const int n = 1200;
    const double r_lo = 0.05, r_hi = 400.0;
    std::vector<double> radii(n);
    for (int i = 0; i < n; ++i)
        radii[i] = r_lo * std::pow(r_hi / r_lo, i / double(n - 1));
    int first_ok = -1;
    for (int i = n - 1; i >= 0; --i) {
        double r = radii[i];
        bool ok = true;
        for (const auto& dir : dirs) {
            double f = mixture_f((r * dir).eval());
            if (f + alpha * r * r < 0.0 || beta * r * r - f < 0.0) {
                ok = false;
                break;
            }
        }
        if (!ok) break;
        first_ok = i;
    }
    if (first_ok < 0)
        throw NumericalError("suggest_r_f: growth bounds never hold on the scan range");
    return radii[first_ok] * 1.02;
}

MatrixXd sample_p0(const TargetSpec& spec, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_p0: n >= 1 required");
    auto rng = make_rng(seed, 0);
    const int d = spec.dim();
    MatrixXd out(n, d);
    switch (spec.form()) {
        case TargetForm::StandardGaussian:
            out = normal_matrix(rng, n, d);
            return out;
        case TargetForm::GaussianMixture: {
            const auto& comps = spec.components();
            for (int i = 0; i < n; ++i) {
                double u = uniform01(rng), acc = 0.0;
                size_t pick = comps.size() - 1;
                for (size_t c = 0; c < comps.size(); ++c) {
                    acc += comps[c].weight;
                    if (u <= acc) {
                        pick = c;
                        break;
                    }
                }
                out.row(i) = (comps[pick].mean +
                              std::sqrt(comps[pick].variance) * normal_vector(rng, d))
                                 .transpose();
            }
            return out;
        }
        case TargetForm::ReluTilted: {
            // Rejection from q = N(0, (1-2 beta)^{-1} I). The log acceptance
            // ratio is f(x) - beta|x|^2 - B with B an envelope constant found
            // by radial scan; it is <= 0 outside r_f by the growth bounds.
            double sigma_q = 1.0 / std::sqrt(1.0 - 2.0 * spec.beta());
            auto dirs = scan_directions(d);
            double scan_radius = std::max(spec.r_f(), 1.0);
            double b_env = 0.0;
            int n_radial = std::max(40, int(scan_radius / (0.05 * std::max(spec.r_f(), 0.05))));
            for (int i = 0; i <= n_radial; ++i) {
                double r = scan_radius * i / double(n_radial);
                for (const auto& dir : dirs) {
                    VectorXd x = r * dir;
                    double v = log_relative_density(spec, x) - spec.beta() * r * r;
                    b_env = std::max(b_env, v);
                }
            }
            b_env += 1e-3;
            long proposals = 0, accepted_total = 0;
            for (int i = 0; i < n;) {
                VectorXd x = sigma_q * normal_vector(rng, d);
                double log_acc =
                    log_relative_density(spec, x) - spec.beta() * x.squaredNorm() - b_env;
                ++proposals;
                if (std::log(uniform01(rng)) < log_acc) {
                    out.row(i++) = x.transpose();
                    ++accepted_total;
                }
                if (proposals % 100000 == 0 &&
                    accepted_total < 1e-4 * double(proposals)) {
                    throw NumericalError(
                        "sample_p0: rejection acceptance rate below 1e-4 after " +
                        std::to_string(proposals) + " proposals (envelope B=" +
                        std::to_string(b_env) + ")");
                }
            }
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// TargetSpec construction
// ---------------------------------------------------------------------------

TargetSpec TargetSpec::standard_gaussian(int dim) {
    TargetSpec s;
    s.form_ = TargetForm::StandardGaussian;
    s.dim_ = dim;
    s.alpha_ = 0.0;
    s.beta_ = 0.0;
    s.r_f_ = 1.0;
    s.validate_and_finalize(0);
    return s;
}

TargetSpec TargetSpec::gaussian_mixture(int dim, std::vector<MixtureComponent> components,
                                        double alpha, double beta, double r_f) {
    TargetSpec s;
    s.form_ = TargetForm::GaussianMixture;
    s.dim_ = dim;
    s.components_ = std::move(components);
    s.alpha_ = alpha;
    s.beta_ = beta;
    s.r_f_ = r_f;
    s.validate_and_finalize(0);
    return s;
}

TargetSpec TargetSpec::relu_tilted(int dim, ReluNet f_net, double alpha, double beta,
                                   double r_f, uint64_t z_seed) {
    TargetSpec s;
    s.form_ = TargetForm::ReluTilted;
    s.dim_ = dim;
    s.f_net_ = std::move(f_net);
    s.alpha_ = alpha;
    s.beta_ = beta;
    s.r_f_ = r_f;
    s.validate_and_finalize(z_seed);
    return s;
}

void TargetSpec::validate_and_finalize(uint64_t z_seed) {
    if (dim_ < 1) throw std::invalid_argument("TargetSpec: dim >= 1 required");
    if (alpha_ < 0.0) throw std::invalid_argument("TargetSpec: alpha >= 0 required");
    if (beta_ < 0.0 || beta_ >= 0.5)
        throw std::invalid_argument("TargetSpec: beta in [0, 1/2) required");
    if (r_f_ <= 0.0) throw std::invalid_argument("TargetSpec: r_f > 0 required");
    if (c_assumption() >= 1.0)
        throw std::invalid_argument("TargetSpec: c(alpha,beta) = 4(alpha+beta)/(1-beta) = " +
                                    std::to_string(c_assumption()) + " must be < 1");
    if (form_ == TargetForm::GaussianMixture) {
        if (components_.empty() || components_.size() > 8)
            throw std::invalid_argument("TargetSpec: 1..8 mixture components supported");
        double wsum = 0.0;
        for (const auto& c : components_) {
            if (c.variance <= 0.0)
                throw std::invalid_argument("TargetSpec: mixture variances must be positive");
            if (c.weight <= 0.0)
                throw std::invalid_argument("TargetSpec: mixture weights must be positive");
            if (c.mean.size() != dim_)
                throw std::invalid_argument("TargetSpec: mixture mean dim mismatch");
            wsum += c.weight;
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw std::invalid_argument("TargetSpec: mixture weights must sum to 1 (got " +
                                        std::to_string(wsum) + ")");
    }
    if (form_ == TargetForm::ReluTilted) {
        if (f_net_.empty() || f_net_.in_dim() != dim_ || f_net_.out_dim() != 1)
            throw std::invalid_argument("TargetSpec: f_net must map R^dim -> R");
    }

    if (form_ == TargetForm::ReluTilted) {
        log_norm_z_ = compute_log_z_relu(*this, z_seed);
    } else {
        log_norm_z_ = 0.5 * dim_ * kLog2Pi;  // f is relative to gamma_d
    }

    GrowthReport g = growth_constants_check(*this, 200);
    if (!g.pass) {
        std::string where = g.has_witness ? (" (witness |x| = " +
                                             std::to_string(g.witness.norm()) + ")")
                                          : "";
        throw std::invalid_argument(
            "TargetSpec: growth bounds -alpha|x|^2 <= f <= beta|x|^2 fail on [r_f, 3 r_f]" +
            where);
    }
}

double TargetSpec::z_ratio_diagnostic() const {
    return std::exp(0.5 * dim_ * kLog2Pi - log_norm_z_);
}

namespace {

double compute_log_z_relu(const TargetSpec& spec, uint64_t seed) {
    const int d = spec.dim();
    auto tilt = [&](const VectorXd& x) {
        return std::exp(-0.5 * x.squaredNorm() + spec.f_net().eval(x)[0]);
    };
    double span = std::max(2.0 * spec.r_f(), 14.0 / std::sqrt(1.0 - 2.0 * spec.beta()));
    if (d == 1) {
        double z = adaptive_simpson(
            [&](double x) { return tilt(VectorXd::Constant(1, x)); }, -span, span, 1e-12);
        return std::log(z);
    }
    if (d == 2) {
        const int n = 500;
        auto inner = [&](double x0) {
            return simpson_uniform(
                [&](double x1) {
                    VectorXd x(2);
                    x << x0, x1;
                    return tilt(x);
                },
                -span, span, n);
        };
        double z = simpson_uniform(inner, -span, span, n);
        return std::log(z);
    }
    // Importance sampling against N(0, (1-2 beta)^{-1} I).
    const long m = 1000000;
    double s2 = 1.0 / (1.0 - 2.0 * spec.beta());
    auto rng = make_rng(seed, 0xFEED);
    VectorXd logs(m);
    for (long i = 0; i < m; ++i) {
        VectorXd x = std::sqrt(s2) * normal_vector(rng, d);
        double logq = -0.5 * d * (kLog2Pi + std::log(s2)) - 0.5 * x.squaredNorm() / s2;
        logs[i] = -0.5 * x.squaredNorm() + spec.f_net().eval(x)[0] - logq;
    }
    return log_sum_exp(logs) - std::log(double(m));
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON serialization (schema documented in docs/formats.md)
// ---------------------------------------------------------------------------

nlohmann::json TargetSpec::to_json() const {
    nlohmann::json j;
    j["dim"] = dim_;
    j["alpha"] = alpha_;
    j["beta"] = beta_;
    j["r_f"] = r_f_;
    switch (form_) {
        case TargetForm::StandardGaussian:
            j["form"] = "standard_gaussian";
            break;
        case TargetForm::GaussianMixture: {
            j["form"] = "gaussian_mixture";
            nlohmann::json comps = nlohmann::json::array();
            for (const auto& c : components_) {
                nlohmann::json jc;
                jc["weight"] = c.weight;
                jc["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
                jc["variance"] = c.variance;
                comps.push_back(jc);
            }
            j["components"] = comps;
            break;
        }
        case TargetForm::ReluTilted: {
            j["form"] = "relu_tilted";
            std::ostringstream os;
            f_net_.save(os);
            j["f_net"] = os.str();
            break;
        }
    }
    return j;
}

TargetSpec TargetSpec::from_json(const nlohmann::json& j) {
    try {
        std::string form = j.at("form").get<std::string>();
        int dim = j.at("dim").get<int>();
        if (form == "standard_gaussian") return standard_gaussian(dim);
        double alpha = j.at("alpha").get<double>();
        double beta = j.at("beta").get<double>();
        double r_f = j.at("r_f").get<double>();
        if (form == "gaussian_mixture") {
            std::vector<MixtureComponent> comps;
            for (const auto& jc : j.at("components")) {
                MixtureComponent c;
                c.weight = jc.at("weight").get<double>();
                auto mv = jc.at("mean").get<std::vector<double>>();
                c.mean = Eigen::Map<const VectorXd>(mv.data(), mv.size());
                c.variance = jc.at("variance").get<double>();
                comps.push_back(std::move(c));
            }
            return gaussian_mixture(dim, std::move(comps), alpha, beta, r_f);
        }
        if (form == "relu_tilted") {
            std::istringstream is(j.at("f_net").get<std::string>());
            return relu_tilted(dim, ReluNet::load(is), alpha, beta, r_f);
        }
        throw ConfigError("TargetSpec: unknown form '" + form + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("TargetSpec: malformed json: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("TargetSpec: ") + e.what());
    }
}

}  // namespace scorelab

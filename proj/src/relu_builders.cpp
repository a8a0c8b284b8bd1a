#include "scorelab/relu_builders.hpp"

#include <algorithm>
#include <numeric>

#include "scorelab/quadrature.hpp"

namespace scorelab {

namespace {

// ---------------------------------------------------------------------------
// Deterministic discretization of a signed 1-d measure rho(t) dt on [lo, hi].
// Strata equalize the kink error mass_k * width_k, which makes the breakpoints
// the quantiles of sqrt(|rho|); nodes are mass centroids, weights the signed
// stratum masses. The sup error of sum_k w_k (x - t_k)^+ against the integral
// decays like 1/m^2, so grid certification converges in a few doublings.
// ---------------------------------------------------------------------------
struct Strata {
    VectorXd nodes;
    VectorXd weights;
};

Strata quantile_strata(const std::function<double(double)>& rho, double lo, double hi, int m) {
    const int fine = std::max(20000, 12 * m);
    VectorXd t(fine + 1), v(fine + 1), cum_sqrt(fine + 1);
    double h = (hi - lo) / fine;
    for (int i = 0; i <= fine; ++i) {
        t[i] = lo + i * h;
        v[i] = rho(t[i]);
    }
    cum_sqrt[0] = 0.0;
    for (int i = 1; i <= fine; ++i)
        cum_sqrt[i] = cum_sqrt[i - 1] +
                      0.5 * (std::sqrt(std::abs(v[i - 1])) + std::sqrt(std::abs(v[i]))) * h;
    double total = cum_sqrt[fine];
    Strata s;
    if (total <= 0.0 || m < 1) {
        s.nodes.resize(0);
        s.weights.resize(0);
        return s;
    }
    s.nodes.resize(m);
    s.weights.resize(m);
    int pos = 0;
    double prev_edge = lo;
    for (int k = 0; k < m; ++k) {
        double target = total * (k + 1) / double(m);
        while (pos < fine && cum_sqrt[pos + 1] < target) ++pos;
        double edge;
        if (k + 1 == m) {
            edge = hi;
        } else {
            double c0 = cum_sqrt[pos], c1 = cum_sqrt[pos + 1];
            double frac = (c1 > c0) ? (target - c0) / (c1 - c0) : 1.0;
            edge = t[pos] + frac * h;
        }
        // signed mass and |rho|-centroid over [prev_edge, edge] by local trapezoid
        const int sub = 64;
        double mass = 0.0, absmass = 0.0, moment = 0.0;
        double w = (edge - prev_edge) / sub;
        for (int i = 0; i < sub; ++i) {
            double a = prev_edge + i * w, b = a + w;
            double va = rho(a), vb = rho(b);
            mass += 0.5 * (va + vb) * w;
            absmass += 0.5 * (std::abs(va) + std::abs(vb)) * w;
            moment += 0.5 * (std::abs(va) * a + std::abs(vb) * b) * w;
        }
        s.weights[k] = mass;
        s.nodes[k] = absmass > 0.0 ? moment / absmass : 0.5 * (prev_edge + edge);
        prev_edge = edge;
    }
    return s;
}

// Shallow net sum_k scale*w_k (x - t_k)^+ [+ mirrored family] + c_lin x + c_bias.
ReluNet assemble_neuron_net(const Strata& s, bool mirrored, double c_lin, double c_bias,
                            double weight_scale = 1.0) {
    int m = int(s.nodes.size());
    int rows = (mirrored ? 2 * m : m) + 2;
    MatrixXd w(rows, 1);
    VectorXd b(rows), a(rows);
    for (int k = 0; k < m; ++k) {
        w(k, 0) = 1.0;
        b[k] = -s.nodes[k];
        a[k] = weight_scale * s.weights[k];
        if (mirrored) {
            w(m + k, 0) = -1.0;
            b[m + k] = -s.nodes[k];
            a[m + k] = weight_scale * s.weights[k];
        }
    }
    int base = mirrored ? 2 * m : m;
    w(base, 0) = 1.0;
    b[base] = 0.0;
    a[base] = c_lin;
    w(base + 1, 0) = -1.0;
    b[base + 1] = 0.0;
    a[base + 1] = -c_lin;
    return shallow_net(w, b, a, c_bias);
}

double cert_1d(const ReluNet& net, const std::function<double(double)>& target, double lo,
               double hi, int n) {
    MatrixXd X(1, n);
    for (int i = 0; i < n; ++i) X(0, i) = lo + (hi - lo) * i / double(n - 1);
    MatrixXd Y = net.eval_batch(X);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(Y(0, i) - target(X(0, i))));
    return worst;
}

double cert_2d(const ReluNet& net, const std::function<double(double, double)>& target,
               double xlo, double xhi, double ylo, double yhi, int n_axis) {
    MatrixXd X(2, Eigen::Index(n_axis) * n_axis);
    Eigen::Index c = 0;
    for (int i = 0; i < n_axis; ++i)
        for (int j = 0; j < n_axis; ++j) {
            X(0, c) = xlo + (xhi - xlo) * i / double(n_axis - 1);
            X(1, c) = ylo + (yhi - ylo) * j / double(n_axis - 1);
            ++c;
        }
    MatrixXd Y = net.eval_batch(X);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i)
        worst = std::max(worst, std::abs(Y(0, i) - target(X(0, i), X(1, i))));
    return worst;
}

void check_path_bound(BuilderResult& r, double bound, const char* what) {
    r.path_bound = bound;
    if (r.path_norm > bound)
        throw CheckFailure(std::string(what) + ": path norm " + std::to_string(r.path_norm) +
                           " exceeds asserted bound " + std::to_string(bound));
}

[[noreturn]] void cap_exceeded(const char* what, long m) {
    throw NumericalError(std::string(what) + ": neuron budget exceeded (m = " +
                         std::to_string(m) + ") before grid certification met");
}

}  // namespace

double FiniteSumApprox::eval(const VectorXd& x) const {
    if (tv_mass == 0.0 || thetas.size() == 0) return 0.0;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < thetas.size(); ++i) acc += signs[i] * g(x, thetas[i]);
    return tv_mass / double(thetas.size()) * acc;
}

FiniteSumApprox mc_discretize(std::function<double(const VectorXd&, double)> g,
                              std::function<double(double)> density, double lo, double hi,
                              double tv_mass, int m, uint64_t seed) {
    if (m < 1) throw std::invalid_argument("mc_discretize: m >= 1 required");
    FiniteSumApprox fs;
    fs.g = std::move(g);
    fs.tv_mass = tv_mass;
    fs.thetas = VectorXd::Zero(m);
    fs.signs = VectorXd::Ones(m);
    if (tv_mass == 0.0) return fs;
    // inverse-CDF sampling of the normalized |density| on a fine grid
    const int fine = 20000;
    VectorXd cum(fine + 1);
    double h = (hi - lo) / fine;
    cum[0] = 0.0;
    for (int i = 1; i <= fine; ++i) {
        double a = std::abs(density(lo + (i - 1) * h));
        double b = std::abs(density(lo + i * h));
        cum[i] = cum[i - 1] + 0.5 * (a + b) * h;
    }
    double total = cum[fine];
    if (total <= 0.0) throw std::invalid_argument("mc_discretize: density integrates to zero");
    auto rng = make_rng(seed, 0xD15C);
    for (int i = 0; i < m; ++i) {
        double u = uniform01(rng) * total;
        int pos = int(std::lower_bound(cum.data(), cum.data() + fine + 1, u) - cum.data());
        pos = std::clamp(pos, 1, fine);
        double c0 = cum[pos - 1], c1 = cum[pos];
        double frac = (c1 > c0) ? (u - c0) / (c1 - c0) : 0.5;
        double theta = lo + (pos - 1 + frac) * h;
        fs.thetas[i] = theta;
        fs.signs[i] = density(theta) >= 0.0 ? 1.0 : -1.0;
    }
    return fs;
}

// ---------------------------------------------------------------------------
// Shallow builders. Each realizes a one-dimensional integral identity with a
// neuron kernel plus an exactly representable affine part, then doubles the
// neuron count until the grid certificate holds.
// ---------------------------------------------------------------------------

BuilderResult build_exp(double a, double b, double eps, const BuilderOptions& opt) {
    if (!(a < b)) throw std::invalid_argument("build_exp: a < b required");
    if (!(eps > 0.0)) throw std::invalid_argument("build_exp: eps > 0 required");
    // e^x - e^a (x - a + 1) = Int_a^b (x - t)^+ e^t dt on [a, b]
    long m0 = opt.m_start > 0
                  ? opt.m_start
                  : std::clamp(long(std::ceil(1e-4 * std::exp(2.0 * b) / (eps * eps))), 1L,
                               4096L);
    for (long m = m0;; m *= 2) {
        Strata s = quantile_strata([](double t) { return std::exp(t); }, a, b, int(m));
        double ea = std::exp(a);
        ReluNet net = assemble_neuron_net(s, false, ea, ea * (1.0 - a));
        BuilderResult r;
        r.cert_error = cert_1d(net, [](double x) { return std::exp(x); }, a, b, opt.grid_points);
        r.net = std::move(net);
        r.m = int(m);
        r.path_norm = r.net.path_norm();
        if (r.cert_error <= eps) {
            check_path_bound(r, opt.path_constant * std::exp(b), "build_exp");
            return r;
        }
        if (2 * m > opt.m_cap) cap_exceeded("build_exp", m);
    }
}

BuilderResult build_square(double R, double eps, const BuilderOptions& opt) {
    if (!(R > 0.0)) throw std::invalid_argument("build_square: R > 0 required");
    // x^2 = Int_0^R 2(|x| - t)^+ dt = Int_0^R [2(x-t)^+ + 2(-x-t)^+] dt on [-R, R]
    long m0 = opt.m_start > 0
                  ? opt.m_start
                  : std::clamp(long(std::ceil(0.5 * R * std::sqrt(2.0 / eps))), 1L, 4096L);
    for (long m = m0;; m *= 2) {
        Strata s = quantile_strata([](double) { return 2.0; }, 0.0, R, int(m));
        ReluNet net = assemble_neuron_net(s, true, 0.0, 0.0);
        BuilderResult r;
        r.cert_error = cert_1d(net, [](double x) { return x * x; }, -R, R, opt.grid_points);
        r.net = std::move(net);
        r.m = int(m);
        r.path_norm = r.net.path_norm();
        if (r.cert_error <= eps) {
            check_path_bound(r, opt.path_constant * R * (1.0 + R), "build_square");
            return r;
        }
        if (2 * m > opt.m_cap) cap_exceeded("build_square", m);
    }
}

BuilderResult build_prod_rect(double range_x, double range_y, double eps,
                              const BuilderOptions& opt) {
    if (!(range_x > 0.0) || !(range_y > 0.0))
        throw std::invalid_argument("build_prod_rect: positive ranges required");
    // xy = ((x/c + cy)^2 - (x/c - cy)^2) / 4 with c balancing the two ranges
    double c = std::sqrt(range_x / range_y);
    double W = range_x / c + c * range_y;  // = 2 sqrt(range_x range_y)
    int n_axis = std::max(3, int(std::sqrt(double(opt.grid_points))));
    long m0 = opt.m_start > 0
                  ? opt.m_start
                  : std::clamp(long(std::ceil(0.5 * W * std::sqrt(2.0 / eps))), 1L, 4096L);
    for (long m = m0;; m *= 2) {
        Strata s = quantile_strata([](double) { return 2.0; }, 0.0, W, int(m));
        int rows = 4 * int(m);
        MatrixXd w(rows, 2);
        VectorXd b(rows), av(rows);
        for (int k = 0; k < m; ++k) {
            double q = 0.25 * s.weights[k];
            int r0 = 4 * k;
            w.row(r0) << 1.0 / c, c;
            w.row(r0 + 1) << -1.0 / c, -c;
            w.row(r0 + 2) << 1.0 / c, -c;
            w.row(r0 + 3) << -1.0 / c, c;
            b[r0] = b[r0 + 1] = b[r0 + 2] = b[r0 + 3] = -s.nodes[k];
            av[r0] = q;
            av[r0 + 1] = q;
            av[r0 + 2] = -q;
            av[r0 + 3] = -q;
        }
        ReluNet net = shallow_net(w, b, av, 0.0);
        BuilderResult r;
        r.cert_error = cert_2d(net, [](double x, double y) { return x * y; }, -range_x,
                               range_x, -range_y, range_y, n_axis);
        r.net = std::move(net);
        r.m = int(m);
        r.path_norm = r.net.path_norm();
        if (r.cert_error <= eps) {
            check_path_bound(r,
                             opt.path_constant * (1.0 + range_x + range_y + range_x * range_y),
                             "build_prod_rect");
            return r;
        }
        if (2 * m > opt.m_cap) cap_exceeded("build_prod_rect", m);
    }
}

BuilderResult build_prod(double R, double eps, const BuilderOptions& opt) {
    BuilderResult r = build_prod_rect(R, R, eps, opt);
    check_path_bound(r, opt.path_constant * R * R, "build_prod");
    return r;
}

BuilderResult build_inv(double a, double b, double eps, const BuilderOptions& opt) {
    if (!(0.0 < a && a < b)) throw std::invalid_argument("build_inv: 0 < a < b required");
    // 1/x = Int_a^b (x - t)^+ 2 t^{-3} dt + 2/a - x/a^2 on [a, b]
    long m0 = opt.m_start > 0
                  ? opt.m_start
                  : std::clamp(long(std::ceil(std::sqrt(8.0 / (a * eps)))), 1L, 4096L);
    for (long m = m0;; m *= 2) {
        Strata s = quantile_strata([](double t) { return 2.0 / (t * t * t); }, a, b, int(m));
        ReluNet net = assemble_neuron_net(s, false, -1.0 / (a * a), 2.0 / a);
        BuilderResult r;
        r.cert_error = cert_1d(net, [](double x) { return 1.0 / x; }, a, b, opt.grid_points);
        r.net = std::move(net);
        r.m = int(m);
        r.path_norm = r.net.path_norm();
        if (r.cert_error <= eps) {
            check_path_bound(r, opt.path_constant * b / (a * a), "build_inv");
            return r;
        }
        if (2 * m > opt.m_cap) cap_exceeded("build_inv", m);
    }
}

BuilderResult build_log(double a, double b, double eps, const BuilderOptions& opt) {
    if (!(0.0 < a && a < b)) throw std::invalid_argument("build_log: 0 < a < b required");
    // log x = log a + (x - a)/a - Int_a^b (x - t)^+ t^{-2} dt on [a, b]
    long m0 = opt.m_start > 0
                  ? opt.m_start
                  : std::clamp(long(std::ceil(std::sqrt(4.0 / (a * eps)))), 1L, 4096L);
    for (long m = m0;; m *= 2) {
        Strata s = quantile_strata([](double t) { return 1.0 / (t * t); }, a, b, int(m));
        ReluNet net = assemble_neuron_net(s, false, 1.0 / a, std::log(a) - 1.0, -1.0);
        BuilderResult r;
        r.cert_error = cert_1d(net, [](double x) { return std::log(x); }, a, b, opt.grid_points);
        r.net = std::move(net);
        r.m = int(m);
        r.path_norm = r.net.path_norm();
        if (r.cert_error <= eps) {
            check_path_bound(r, opt.path_constant * (1.0 / a + std::abs(std::log(a)) + 2.0),
                             "build_log");
            return r;
        }
        if (2 * m > opt.m_cap) cap_exceeded("build_log", m);
    }
}

BuilderResult build_quot(double R, double a, double b, double eps, const BuilderOptions& opt) {
    if (!(0.0 < a && a < b)) throw std::invalid_argument("build_quot: 0 < a < b required");
    if (!(R > 0.0)) throw std::invalid_argument("build_quot: R > 0 required");
    double eps_inv = eps / (2.0 * (R + 1.0));
    double eps_prod = 0.45 * eps;
    for (int round = 0; round < 4; ++round) {
        BuilderResult inv = build_inv(a, b, eps_inv, opt);
        double z_max = 1.0 / a + eps_inv;
        BuilderResult prod = build_prod_rect(R * 1.02, z_max * 1.02, eps_prod, opt);
        // inner: (x, y) -> (x, inv(y)); x passes through an identity pair
        const auto& l1 = inv.net.layers()[0];
        const auto& l2 = inv.net.layers()[1];
        Eigen::Index mi = l1.out();
        MatrixXd W1 = MatrixXd::Zero(mi + 2, 2);
        VectorXd b1 = VectorXd::Zero(mi + 2);
        W1(0, 0) = 1.0;
        W1(1, 0) = -1.0;
        W1.block(2, 1, mi, 1) = l1.W;
        b1.segment(2, mi) = l1.b;
        MatrixXd W2 = MatrixXd::Zero(2, mi + 2);
        VectorXd b2 = VectorXd::Zero(2);
        W2(0, 0) = 1.0;
        W2(0, 1) = -1.0;
        W2.block(1, 2, 1, mi) = l2.W;
        b2[1] = l2.b[0];
        ReluNet inner({AffineLayer{W1, b1}, AffineLayer{W2, b2}});
        ReluNet quot = compose(prod.net, inner);
        BuilderResult r;
        r.cert_error = cert_2d(quot, [](double x, double y) { return x / y; }, -R, R, a, b,
                               std::max(3, int(std::sqrt(double(opt.grid_points)))));
        r.net = std::move(quot);
        r.m = inv.m + prod.m;
        r.path_norm = r.net.path_norm();
        if (r.cert_error <= eps) {
            double M = std::max(R, b / (a * a));
            check_path_bound(r, opt.path_constant * M * M * b / (a * a), "build_quot");
            return r;
        }
        eps_inv *= 0.5;
        eps_prod *= 0.5;
    }
    throw NumericalError("build_quot: certification not met after tolerance halvings");
}

// ---------------------------------------------------------------------------
// PhiF
// ---------------------------------------------------------------------------

PhiF PhiF::direct(ReluNet n) {
    PhiF p;
    p.net = std::move(n);
    p.has_pieces = false;
    p.cert_error = 0.0;
    p.build_radius = std::numeric_limits<double>::infinity();
    return p;
}

Eigen::RowVectorXd PhiF::eval_batch(const MatrixXd& Y) const {
    if (!has_pieces) return net.eval_batch(Y).row(0);
    // f = log_net(mix(y)) + norm(y), avoiding the materialized middle layer
    MatrixXd p = mix.eval_batch(Y);
    return log_net.eval_batch(p).row(0) + norm.eval_batch(Y).row(0);
}

double PhiF::eval(const VectorXd& y) const {
    return eval_batch(y)(0);
}

PhiF mixture_phi_f(const TargetSpec& spec, double R, double eps, const BuilderOptions& opt) {
    if (spec.form() != TargetForm::GaussianMixture)
        throw std::invalid_argument("mixture_phi_f: mixture form required");
    if (spec.dim() != 1)
        throw ConfigError("mixture_phi_f: the density/log recipe is implemented for d = 1");
    const auto& comps = spec.components();
    auto p0 = [&](double y) {
        double acc = 0.0;
        for (const auto& cmp : comps)
            acc += cmp.weight * std::exp(-0.5 * sq(y - cmp.mean[0]) / cmp.variance) /
                   std::sqrt(2.0 * M_PI * cmp.variance);
        return acc;
    };
    auto dp0 = [&](double y) {
        double acc = 0.0;
        for (const auto& cmp : comps)
            acc += cmp.weight * (-(y - cmp.mean[0]) / cmp.variance) *
                   std::exp(-0.5 * sq(y - cmp.mean[0]) / cmp.variance) /
                   std::sqrt(2.0 * M_PI * cmp.variance);
        return acc;
    };
    auto ddp0 = [&](double y) {
        double acc = 0.0;
        for (const auto& cmp : comps) {
            double z = y - cmp.mean[0];
            acc += cmp.weight * (z * z / sq(cmp.variance) - 1.0 / cmp.variance) *
                   std::exp(-0.5 * z * z / cmp.variance) /
                   std::sqrt(2.0 * M_PI * cmp.variance);
        }
        return acc;
    };

    // density range on the build ball drives the log domain
    double p_min = std::numeric_limits<double>::infinity(), p_max = 0.0;
    const int n_scan = 4001;
    for (int i = 0; i < n_scan; ++i) {
        double y = -R + 2.0 * R * i / double(n_scan - 1);
        double p = p0(y);
        p_min = std::min(p_min, p);
        p_max = std::max(p_max, p);
    }
    double tol_total = R * eps;
    double eps_mix = 0.45 * tol_total * p_min;
    double eps_log = 0.45 * tol_total;
    double eps_norm = 0.05 * tol_total;

    for (int round = 0; round < 4; ++round) {
        // inner shallow net: the density itself, from its curvature measure
        long m0 = std::clamp(long(std::ceil(std::sqrt(12.0 / std::max(eps_mix, 1e-300)))), 8L,
                             65536L);
        ReluNet mix_net;
        double mix_err = eps_mix;
        bool mix_ok = false;
        for (long m = m0; m <= opt.m_cap; m *= 2) {
            Strata s = quantile_strata(ddp0, -R, R, int(m));
            ReluNet net = assemble_neuron_net(s, false, dp0(-R), p0(-R) + R * dp0(-R));
            double err = cert_1d(net, p0, -R, R, 4001);
            if (err <= eps_mix) {
                mix_net = std::move(net);
                mix_err = err;
                mix_ok = true;
                break;
            }
        }
        if (!mix_ok) cap_exceeded("mixture_phi_f(mix)", opt.m_cap);

        BuilderResult lg = build_log(p_min * 0.8, p_max * 1.2, eps_log, opt);
        BuilderResult sqr = build_square(R * 1.02, 2.0 * eps_norm, opt);
        // f = log p0 + |x|^2/2 + (1/2) log 2pi; the constant rides on the norm part
        ReluNet norm_net = scale_output(sqr.net, 0.5, 0.5 * std::log(2.0 * M_PI));

        PhiF phi;
        phi.mix = mix_net;
        phi.log_net = lg.net;
        phi.norm = norm_net;
        phi.has_pieces = true;
        phi.build_radius = R;
        phi.net = parallel_sum({compose(lg.net, mix_net), lift_depth(norm_net, 3)},
                               VectorXd::Ones(2), 0.0);
        // certify the assembled approximant against the true tilt
        double err = 0.0;
        for (int i = 0; i < n_scan; ++i) {
            double y = -R + 2.0 * R * i / double(n_scan - 1);
            VectorXd yv = VectorXd::Constant(1, y);
            err = std::max(err, std::abs(phi.eval(yv) - log_relative_density(spec, yv)));
        }
        phi.cert_error = err;
        if (err <= tol_total) {
            // pieces must agree with the materialized network
            auto rng = make_rng(0xF00D, 1);
            for (int i = 0; i < 16; ++i) {
                VectorXd y = VectorXd::Constant(1, (2.0 * uniform01(rng) - 1.0) * R);
                double a1 = phi.eval(y), a2 = phi.net.eval(y)[0];
                if (std::abs(a1 - a2) > 1e-9 * std::max(1.0, std::abs(a1)))
                    throw NumericalError("mixture_phi_f: piece evaluation disagrees with net");
            }
            (void)mix_err;
            return phi;
        }
        eps_mix *= 0.5;
        eps_log *= 0.5;
        eps_norm *= 0.5;
    }
    throw NumericalError("mixture_phi_f: certification not met after tolerance halvings");
}

BuilderResult build_f_exp(const PhiF& phi_f, const TargetSpec& spec, const ApproxBudget& budget,
                          const BuilderOptions& opt) {
    const double R = budget.R;
    if (spec.dim() != phi_f.net.in_dim())
        throw std::invalid_argument("build_f_exp: phi_f input dim mismatch");
    if (phi_f.build_radius < R)
        throw std::invalid_argument("build_f_exp: phi_f certified on a smaller ball than R");
    // range of phi_f on the R-ball fixes the exponential's domain
    std::vector<VectorXd> grid;
    if (spec.dim() == 1) {
        for (int i = 0; i < 4001; ++i)
            grid.push_back(VectorXd::Constant(1, -R + 2.0 * R * i / 4000.0));
    } else {
        auto rng = make_rng(0xBEEF, spec.dim());
        for (int i = 0; i < 3000; ++i) {
            VectorXd v = normal_vector(rng, spec.dim());
            double r = R * std::pow(uniform01(rng), 1.0 / spec.dim());
            grid.push_back(r * v.normalized());
        }
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& y : grid) {
        double v = phi_f.eval(y);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    BuilderResult ex = build_exp(lo - 0.5, hi + 0.5, budget.eps, opt);
    BuilderResult r;
    r.net = compose(ex.net, phi_f.net);
    r.m = ex.m;
    r.path_norm = r.net.path_norm();
    double worst = 0.0;
    for (const auto& y : grid) {
        double approx = ex.net.eval(VectorXd::Constant(1, phi_f.eval(y)))[0];
        worst = std::max(worst, std::abs(approx - std::exp(log_relative_density(spec, y))));
    }
    r.cert_error = worst;
    double ebr2 = std::exp(spec.beta() * R * R);
    double eta = std::max(phi_f.net.path_norm(), 1.0);
    check_path_bound(r, opt.path_constant * ebr2 * eta, "build_f_exp");
    // the exponential amplifies the phi_f certificate; respect that floor
    double target = std::exp(hi) * phi_f.cert_error + std::max(1.0, ebr2) * budget.eps * 1.5;
    if (r.cert_error > target)
        throw CheckFailure("build_f_exp: certified error " + std::to_string(r.cert_error) +
                           " exceeds composition budget " + std::to_string(target));
    return r;
}

// ---------------------------------------------------------------------------
// Assembled score network
// ---------------------------------------------------------------------------

double gaussian_ball_mass(int dim, double R) {
    switch (dim) {
        case 1:
            return 2.0 * normal_cdf(R) - 1.0;
        case 2:
            return -std::expm1(-0.5 * R * R);
        case 3:
            return 2.0 * normal_cdf(R) - 1.0 -
                   std::sqrt(2.0 / M_PI) * R * std::exp(-0.5 * R * R);
        default:
            throw ConfigError("gaussian_ball_mass: d <= 3 supported");
    }
}

std::pair<MatrixXd, VectorXd> ConstructedScore::eval_fg_nets(const MatrixXd& X) const {
    const int d = int(X.rows());
    const Eigen::Index n = X.cols();
    MatrixXd F = MatrixXd::Zero(d, n);
    Eigen::RowVectorXd G = Eigen::RowVectorXd::Zero(n);
    double root_nv = std::sqrt(noise_var);
    MatrixXd pin(2, n);
    for (Eigen::Index i = 0; i < nodes.cols(); ++i) {
        MatrixXd Y = (shrink * X).colwise() + (root_nv * nodes.col(i)).eval();
        Eigen::RowVectorXd fv = phi_f.eval_batch(Y);
        Eigen::RowVectorXd ev = phi_exp.eval_batch(fv).row(0);
        G += ev;
        pin.row(1) = ev;
        for (int j = 0; j < d; ++j) {
            pin.row(0) = Y.row(j);
            F.row(j) += prod_net.eval_batch(pin).row(0);
        }
    }
    double scale = tv_gamma_r / double(nodes.cols());
    F *= scale;
    return {std::move(F), (scale * G).transpose()};
}

MatrixXd ConstructedScore::eval_batch(const MatrixXd& X) const {
    auto [F, G] = eval_fg_nets(X);
    MatrixXd S(X.rows(), X.cols());
    MatrixXd qin(2, X.cols());
    qin.row(1) = G.transpose();
    for (int j = 0; j < X.rows(); ++j) {
        qin.row(0) = F.row(j);
        S.row(j) = (-X.row(j) + shrink * quot_net.eval_batch(qin).row(0)) / noise_var;
    }
    return S;
}

VectorXd ConstructedScore::eval(const VectorXd& x) const {
    return eval_batch(x).col(0);
}

ConstructedScore build_score_net(const TargetSpec& spec, const PhiF& phi_f, double t,
                                 const ApproxBudget& budget, uint64_t seed,
                                 const BuilderOptions& opt) {
    if (spec.dim() > 3) throw ConfigError("build_score_net: d <= 3 supported");
    ForwardMarginal fm = forward_marginal(t);
    const int d = spec.dim();
    const double R = budget.R;
    ConstructedScore cs;
    cs.t = t;
    cs.shrink = fm.shrink;
    cs.noise_var = fm.noise_var;
    cs.budget = budget;
    cs.phi_f = phi_f;

    // Monte-Carlo nodes from the Gaussian restricted to the R-ball
    auto rng = make_rng(seed, 0xB1D);
    cs.nodes.resize(d, budget.m_neurons);
    double max_node_inf = 0.0, max_node = 0.0;
    for (int i = 0; i < budget.m_neurons; ++i) {
        VectorXd u;
        do {
            u = normal_vector(rng, d);
        } while (u.norm() > R);
        cs.nodes.col(i) = u;
        max_node_inf = std::max(max_node_inf, u.lpNorm<Eigen::Infinity>());
        max_node = std::max(max_node, u.norm());
    }
    cs.tv_gamma_r = gaussian_ball_mass(d, R);

    double root_nv = std::sqrt(fm.noise_var);
    double reach = fm.shrink * R + root_nv * max_node;
    if (phi_f.build_radius < reach - 1e-9)
        throw ConfigError("build_score_net: phi_f must be built on radius >= " +
                          std::to_string(reach) + " (got " +
                          std::to_string(phi_f.build_radius) + ")");

    // exponential factor over the realized range of phi_f on the reach ball
    double f_lo = std::numeric_limits<double>::infinity(), f_hi = -f_lo;
    double f_hi_core = -std::numeric_limits<double>::infinity();
    double reach_core = fm.shrink * R + root_nv * std::min(3.0, R);
    {
        const int n = 2001;
        for (int i = 0; i < n; ++i) {
            double r = -reach + 2.0 * reach * i / double(n - 1);
            VectorXd y = VectorXd::Zero(d);
            y[0] = r;
            double v = phi_f.eval(y);
            f_lo = std::min(f_lo, v);
            f_hi = std::max(f_hi, v);
            if (std::abs(r) <= reach_core) f_hi_core = std::max(f_hi_core, v);
        }
        if (d > 1) {
            auto rng2 = make_rng(seed, 0xA11);
            for (int i = 0; i < 2000; ++i) {
                VectorXd y = normal_vector(rng2, d);
                y = (uniform01(rng2) * reach) * y.normalized();
                double v = phi_f.eval(y);
                f_lo = std::min(f_lo, v);
                f_hi = std::max(f_hi, v);
                if (y.norm() <= reach_core) f_hi_core = std::max(f_hi_core, v);
            }
        }
    }
    double eps_exp = 0.25 * budget.eps * std::max(0.2, std::exp(std::min(f_lo, 0.0)));
    BuilderResult ex = build_exp(f_lo - 0.5, f_hi + 0.5, eps_exp, opt);
    cs.phi_exp = ex.net;
    cs.f_exp = compose(ex.net, phi_f.net);
    cs.path_norm_f_exp = cs.f_exp.path_norm();

    // product factor sized from the realized value ranges
    {
        double g0 = 0.0;
        for (Eigen::Index i = 0; i < cs.nodes.cols(); ++i) {
            VectorXd y = root_nv * cs.nodes.col(i);
            g0 += cs.phi_exp.eval(VectorXd::Constant(1, phi_f.eval(y)))[0];
        }
        g0 *= cs.tv_gamma_r / double(cs.nodes.cols());
        double y_range = reach + 0.1;
        double z_core = std::exp(f_hi_core) * 1.1 + eps_exp;
        double eps_prod = 0.5 * budget.eps * std::max(0.2, g0);
        BuilderResult pr = build_prod_rect(y_range, z_core, eps_prod, opt);
        cs.prod_net = pr.net;
    }

    // gate and range certification for the assembled F and G networks
    cs.g_gate = 0.5 * std::pow(1.0 + 2.0 * spec.alpha(), -0.5 * d) *
                std::exp(-spec.alpha() * R * R);
    {
        MatrixXd grid;
        if (d == 1) {
            grid.resize(1, 161);
            for (int i = 0; i < 161; ++i) grid(0, i) = -R + 2.0 * R * i / 160.0;
        } else {
            auto rng3 = make_rng(seed, 0xC3);
            grid.resize(d, 400);
            for (int i = 0; i < 400; ++i) {
                VectorXd v = normal_vector(rng3, d).normalized();
                grid.col(i) = (std::pow(uniform01(rng3), 1.0 / d) * R) * v;
            }
        }
        auto [F, G] = cs.eval_fg_nets(grid);
        cs.g_min_cert = G.minCoeff();
        cs.g_max_cert = G.maxCoeff();
        cs.f_absmax_cert = F.cwiseAbs().maxCoeff();
        if (cs.g_min_cert < cs.g_gate) {
            Eigen::Index witness;
            G.minCoeff(&witness);
            throw NumericalError(
                "build_score_net: denominator network dips below the gate "
                "0.5 (1+2a)^{-d/2} e^{-a R^2} = " +
                std::to_string(cs.g_gate) + " (Phi_G = " + std::to_string(cs.g_min_cert) +
                " at x[0] = " + std::to_string(grid(0, witness)) + ")");
        }
    }

    // quotient over the certified ranges
    double r_quot = cs.f_absmax_cert * 1.3 + 0.5;
    double a_quot = std::min(cs.g_gate * 0.9, cs.g_min_cert * 0.8);
    double b_quot = cs.g_max_cert * 1.3 + 0.1;
    BuilderResult qt = build_quot(r_quot, a_quot, b_quot, budget.eps, opt);
    cs.quot_net = qt.net;

    // path-norm accounting for the assembled map
    cs.path_norm_phi_g =
        cs.tv_gamma_r * path_norm_precomposed_bound(cs.f_exp, fm.shrink, root_nv * max_node_inf);
    double path_fj = cs.prod_net.path_norm() * std::max(2.0, cs.path_norm_f_exp);
    cs.path_norm_phi_fj = cs.tv_gamma_r * (1.0 + 2.0 * R) * path_fj;
    cs.path_norm_total =
        cs.quot_net.path_norm() * std::max(cs.path_norm_phi_fj, cs.path_norm_phi_g);
    cs.budget.eta = phi_f.net.path_norm();

    // measured L2(p_t) error against the true score
    {
        const int n_l2 = 800;
        auto [x0, xt] = forward_sample(spec, t, n_l2, seed ^ 0x5EED);
        MatrixXd X = xt.transpose();
        MatrixXd S_hat = cs.eval_batch(X);
        MatrixXd S_ref;
        if (spec.form() == TargetForm::GaussianMixture ||
            spec.form() == TargetForm::StandardGaussian) {
            S_ref = mixture_score_oracle_batch(spec, t, X);
        } else {
            auto q = ScoreQuadrature::gauss_hermite(spec, d <= 2 ? 48 : 24);
            S_ref = q.true_score_batch(t, X);
        }
        double num = (S_hat - S_ref).colwise().squaredNorm().mean();
        double den = S_ref.colwise().squaredNorm().mean();
        cs.l2_abs_error = num;
        cs.l2_rel_error = num / std::max(den, 1e-300);
    }
    return cs;
}

}  // namespace scorelab

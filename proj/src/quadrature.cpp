#include "scorelab/quadrature.hpp"

#include <Eigen/Eigenvalues>

namespace scorelab {

GaussHermite GaussHermite::probabilists(int order) {
    if (order < 1) throw ConfigError("GaussHermite: order must be >= 1");
    // Golub-Welsch on the Jacobi matrix of probabilists' Hermite polynomials:
    // zero diagonal, off-diagonal sqrt(k).
    MatrixXd jacobi = MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        double off = std::sqrt(double(k));
        jacobi(k, k - 1) = off;
        jacobi(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(jacobi);
    GaussHermite gh;
    gh.nodes = es.eigenvalues();
    gh.weights = es.eigenvectors().row(0).transpose().array().square();
    gh.weights /= gh.weights.sum();  // total mass of gamma_1 is exactly 1
    return gh;
}

TensorGaussHermite TensorGaussHermite::probabilists(int dim, int order) {
    if (dim < 1) throw ConfigError("TensorGaussHermite: dim must be >= 1");
    GaussHermite base = GaussHermite::probabilists(order);
    Eigen::Index total = 1;
    for (int k = 0; k < dim; ++k) total *= order;
    TensorGaussHermite t;
    t.nodes.resize(dim, total);
    t.weights.resize(total);
    for (Eigen::Index idx = 0; idx < total; ++idx) {
        Eigen::Index rem = idx;
        double w = 1.0;
        for (int k = 0; k < dim; ++k) {
            Eigen::Index j = rem % order;
            rem /= order;
            t.nodes(k, idx) = base.nodes[j];
            w *= base.weights[j];
        }
        t.weights[idx] = w;
    }
    return t;
}

namespace {

double simpson_rule(double fa, double fm, double fb, double h) {
    return (fa + 4.0 * fm + fb) * h / 6.0;
}

double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double m,
                            double b, double fa, double fm, double fb, double whole,
                            double tol, int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson_rule(fa, flm, fm, m - a);
    double right = simpson_rule(fm, frm, fb, b - m);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, lm, m, fa, flm, fm, left, tol / 2, depth - 1) +
           adaptive_simpson_rec(f, m, rm, b, fm, frm, fb, right, tol / 2, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth) {
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = simpson_rule(fa, fm, fb, b - a);
    return adaptive_simpson_rec(f, a, m, b, fa, fm, fb, whole, tol, max_depth);
}

double simpson_uniform(const std::function<double(double)>& f, double a, double b, int n) {
    if (n < 2 || n % 2 != 0) throw ConfigError("simpson_uniform: n must be even and >= 2");
    double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace scorelab

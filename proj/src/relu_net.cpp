#include "scorelab/relu_net.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace scorelab {

namespace {

void check_chain(const std::vector<AffineLayer>& layers) {
    if (layers.empty()) throw ConfigError("ReluNet: at least one affine layer required");
    for (size_t k = 0; k < layers.size(); ++k) {
        if (layers[k].W.rows() != layers[k].b.size())
            throw ConfigError("ReluNet: bias size does not match layer rows");
        if (k > 0 && layers[k].W.cols() != layers[k - 1].W.rows())
            throw ConfigError("ReluNet: consecutive layer dimensions do not chain");
    }
}

}  // namespace

ReluNet::ReluNet(std::vector<AffineLayer> layers) : layers_(std::move(layers)) {
    check_chain(layers_);
    path_norm_ = representation_path_norm(layers_);
}

int ReluNet::in_dim() const { return int(layers_.front().in()); }
int ReluNet::out_dim() const { return int(layers_.back().out()); }

VectorXd ReluNet::eval(const VectorXd& x) const {
    if (x.size() != in_dim()) throw std::invalid_argument("ReluNet::eval: dimension mismatch");
    VectorXd h = x;
    for (size_t k = 0; k < layers_.size(); ++k) {
        h = (layers_[k].W * h + layers_[k].b).eval();
        if (k + 1 < layers_.size()) h = h.cwiseMax(0.0);
    }
    return h;
}

MatrixXd ReluNet::eval_batch(const MatrixXd& X) const {
    if (X.rows() != in_dim()) throw std::invalid_argument("ReluNet::eval_batch: dimension mismatch");
    MatrixXd h = X;
    for (size_t k = 0; k < layers_.size(); ++k) {
        h = ((layers_[k].W * h).colwise() + layers_[k].b).eval();
        if (k + 1 < layers_.size()) h = h.cwiseMax(0.0);
    }
    return h;
}

void ReluNet::refresh_path_norm() { path_norm_ = representation_path_norm(layers_); }

double representation_path_norm(const std::vector<AffineLayer>& layers) {
    check_chain(layers);
    VectorXd c = layers.front().W.cwiseAbs().rowwise().sum() + layers.front().b.cwiseAbs();
    for (size_t k = 1; k + 1 < layers.size(); ++k)
        c = (layers[k].W.cwiseAbs() * c + layers[k].b.cwiseAbs()).eval();
    if (layers.size() == 1) return c.maxCoeff();
    return (layers.back().W.cwiseAbs() * c).maxCoeff();
}

double path_norm_precomposed_bound(const ReluNet& net, double scale, double shift_bound) {
    const auto& layers = net.layers();
    const AffineLayer& first = layers.front();
    VectorXd row_l1 = first.W.cwiseAbs().rowwise().sum();
    VectorXd c = std::abs(scale) * row_l1 + (shift_bound * row_l1 + first.b.cwiseAbs());
    for (size_t k = 1; k + 1 < layers.size(); ++k)
        c = (layers[k].W.cwiseAbs() * c + layers[k].b.cwiseAbs()).eval();
    if (layers.size() == 1) return c.maxCoeff();
    return (layers.back().W.cwiseAbs() * c).maxCoeff();
}

ReluNet compose(const ReluNet& outer, const ReluNet& inner) {
    if (inner.out_dim() != outer.in_dim())
        throw std::invalid_argument("compose: inner.out_dim != outer.in_dim");
    std::vector<AffineLayer> layers;
    layers.reserve(inner.depth() + outer.depth() - 1);
    for (int k = 0; k + 1 < inner.depth(); ++k) layers.push_back(inner.layers()[k]);
    // No ReLU after inner's last layer, so it merges with outer's first.
    const AffineLayer& li = inner.layers().back();
    const AffineLayer& lo = outer.layers().front();
    AffineLayer merged;
    merged.W = lo.W * li.W;
    merged.b = lo.W * li.b + lo.b;
    layers.push_back(std::move(merged));
    for (int k = 1; k < outer.depth(); ++k) layers.push_back(outer.layers()[k]);
    ReluNet result(std::move(layers));
    double product = outer.path_norm() * inner.path_norm();
    if (product < result.path_norm()) result.set_recorded_path_norm(product);
    return result;
}

ReluNet parallel_sum(const std::vector<ReluNet>& parts, const VectorXd& coeffs, double bias) {
    if (parts.empty()) throw std::invalid_argument("parallel_sum: no parts");
    if (Eigen::Index(parts.size()) != coeffs.size())
        throw std::invalid_argument("parallel_sum: coeffs size mismatch");
    int depth = parts.front().depth();
    int in = parts.front().in_dim();
    for (const auto& p : parts) {
        if (p.depth() != depth) throw std::invalid_argument("parallel_sum: depths differ (lift first)");
        if (p.in_dim() != in) throw std::invalid_argument("parallel_sum: input dims differ");
        if (p.out_dim() != 1) throw std::invalid_argument("parallel_sum: scalar outputs required");
    }
    std::vector<AffineLayer> layers(depth);
    for (int k = 0; k < depth; ++k) {
        Eigen::Index rows = 0, cols = 0;
        for (const auto& p : parts) {
            rows += p.layers()[k].out();
            cols += p.layers()[k].in();
        }
        bool is_first = (k == 0), is_last = (k == depth - 1);
        AffineLayer L;
        L.W = MatrixXd::Zero(is_last ? 1 : rows, is_first ? in : cols);
        L.b = VectorXd::Zero(is_last ? 1 : rows);
        Eigen::Index r0 = 0, c0 = 0;
        for (size_t p = 0; p < parts.size(); ++p) {
            const AffineLayer& src = parts[p].layers()[k];
            if (is_last) {
                L.W.block(0, c0, 1, src.in()) = coeffs[p] * src.W;
                L.b[0] += coeffs[p] * src.b[0];
            } else if (is_first) {
                L.W.block(r0, 0, src.out(), in) = src.W;
                L.b.segment(r0, src.out()) = src.b;
            } else {
                L.W.block(r0, c0, src.out(), src.in()) = src.W;
                L.b.segment(r0, src.out()) = src.b;
            }
            r0 += src.out();
            c0 += src.in();
        }
        if (is_last) L.b[0] += bias;
        layers[k] = std::move(L);
    }
    return ReluNet(std::move(layers));
}

ReluNet identity_net(int dim) {
    AffineLayer l1, l2;
    l1.W.resize(2 * dim, dim);
    l1.W << MatrixXd::Identity(dim, dim), -MatrixXd::Identity(dim, dim);
    l1.b = VectorXd::Zero(2 * dim);
    l2.W.resize(dim, 2 * dim);
    l2.W << MatrixXd::Identity(dim, dim), -MatrixXd::Identity(dim, dim);
    l2.b = VectorXd::Zero(dim);
    return ReluNet({l1, l2});
}

ReluNet lift_depth(const ReluNet& net, int target_depth) {
    if (net.depth() > target_depth) throw std::invalid_argument("lift_depth: target too small");
    ReluNet out = net;
    while (out.depth() < target_depth) out = compose(identity_net(out.out_dim()), out);
    return out;
}

ReluNet precompose_affine(const ReluNet& net, const MatrixXd& A, const VectorXd& c) {
    if (A.rows() != net.in_dim() || c.size() != net.in_dim())
        throw std::invalid_argument("precompose_affine: dimension mismatch");
    std::vector<AffineLayer> layers = net.layers();
    layers.front().b = layers.front().W * c + layers.front().b;
    layers.front().W = layers.front().W * A;
    return ReluNet(std::move(layers));
}

ReluNet scale_output(const ReluNet& net, double s, double shift) {
    std::vector<AffineLayer> layers = net.layers();
    layers.back().W *= s;
    layers.back().b = s * layers.back().b + VectorXd::Constant(layers.back().b.size(), shift);
    return ReluNet(std::move(layers));
}

ReluNet shallow_net(const MatrixXd& w, const VectorXd& b, const VectorXd& a, double out_bias) {
    if (w.rows() != b.size() || w.rows() != a.size())
        throw std::invalid_argument("shallow_net: neuron counts disagree");
    AffineLayer l1{w, b};
    AffineLayer l2;
    l2.W = a.transpose();
    l2.b = VectorXd::Constant(1, out_bias);
    return ReluNet({std::move(l1), std::move(l2)});
}

// ---------------------------------------------------------------------------
// Serialization. Text format, one token stream:
//   RELUNET 1
//   <depth> <recorded_path_norm>
//   for each layer: <rows> <cols>, then rows*cols weights row-major, then rows biases
// Doubles printed with max_digits10 so load(save(net)) is bit-exact.
// ---------------------------------------------------------------------------

void ReluNet::save(std::ostream& os) const {
    os << "RELUNET 1\n";
    os << depth() << " " << std::setprecision(17) << path_norm_ << "\n";
    for (const auto& l : layers_) {
        os << l.W.rows() << " " << l.W.cols() << "\n";
        for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.W.cols(); ++j) {
                os << std::setprecision(17) << l.W(i, j);
                os << (j + 1 < l.W.cols() ? ' ' : '\n');
            }
        }
        for (Eigen::Index i = 0; i < l.b.size(); ++i)
            os << std::setprecision(17) << l.b[i] << (i + 1 < l.b.size() ? ' ' : '\n');
        if (l.b.size() == 0) os << "\n";
    }
}

void ReluNet::save_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ConfigError("ReluNet::save_file: cannot open " + path);
    save(os);
}

ReluNet ReluNet::load(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "RELUNET" || version != 1)
        throw ConfigError("ReluNet::load: bad header");
    int depth = 0;
    double recorded = 0.0;
    is >> depth >> recorded;
    if (depth < 1 || depth > 64) throw ConfigError("ReluNet::load: bad depth");
    std::vector<AffineLayer> layers(depth);
    for (auto& l : layers) {
        Eigen::Index rows, cols;
        is >> rows >> cols;
        if (!is || rows < 1 || cols < 1) throw ConfigError("ReluNet::load: bad layer shape");
        l.W.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) is >> l.W(i, j);
        l.b.resize(rows);
        for (Eigen::Index i = 0; i < rows; ++i) is >> l.b[i];
        if (!is) throw ConfigError("ReluNet::load: truncated file");
    }
    ReluNet net(std::move(layers));
    net.set_recorded_path_norm(recorded);
    return net;
}

ReluNet ReluNet::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("ReluNet::load_file: cannot open " + path);
    return load(is);
}

}  // namespace scorelab

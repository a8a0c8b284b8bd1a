#pragma once

// Internal: dense forward/backward passes for small ReLU MLPs, shared by the
// trainer and the Rademacher ascent. Not part of the public API.

#include "scorelab/relu_net.hpp"

namespace scorelab::detail {

struct MlpGrads {
    std::vector<MatrixXd> dW;
    std::vector<VectorXd> db;

    static MlpGrads zero_like(const ReluNet& net) {
        MlpGrads g;
        for (const auto& l : net.layers()) {
            g.dW.push_back(MatrixXd::Zero(l.W.rows(), l.W.cols()));
            g.db.push_back(VectorXd::Zero(l.b.size()));
        }
        return g;
    }
    void scale(double s) {
        for (auto& m : dW) m *= s;
        for (auto& v : db) v *= s;
    }
    double squared_norm() const {
        double acc = 0.0;
        for (const auto& m : dW) acc += m.squaredNorm();
        for (const auto& v : db) acc += v.squaredNorm();
        return acc;
    }
};

struct MlpWorkspace {
    std::vector<MatrixXd> pre;   // preactivations per layer
    std::vector<MatrixXd> post;  // activations fed into each layer (post[0] = X)
    MatrixXd out;
};

inline void mlp_forward(const ReluNet& net, const MatrixXd& X, MlpWorkspace& ws) {
    const auto& layers = net.layers();
    ws.pre.assign(layers.size(), MatrixXd());
    ws.post.assign(layers.size(), MatrixXd());
    MatrixXd h = X;
    for (size_t k = 0; k < layers.size(); ++k) {
        ws.post[k] = h;
        ws.pre[k] = (layers[k].W * h).colwise() + layers[k].b;
        h = (k + 1 < layers.size()) ? ws.pre[k].cwiseMax(0.0).eval() : ws.pre[k];
    }
    ws.out = h;
}

// Accumulates d(sum_batch <Gout_col, out_col>)/dparams into grads.
inline void mlp_backward(const ReluNet& net, const MlpWorkspace& ws, const MatrixXd& Gout,
                         MlpGrads& grads) {
    const auto& layers = net.layers();
    MatrixXd g = Gout;
    for (size_t k = layers.size(); k-- > 0;) {
        grads.dW[k] += g * ws.post[k].transpose();
        grads.db[k] += g.rowwise().sum();
        if (k > 0) {
            g = layers[k].W.transpose() * g;
            g = (ws.pre[k - 1].array() > 0.0).select(g, 0.0);
        }
    }
}

inline void sgd_step(ReluNet& net, const MlpGrads& grads, double lr) {
    auto& layers = net.mutable_layers();
    for (size_t k = 0; k < layers.size(); ++k) {
        layers[k].W -= lr * grads.dW[k];
        layers[k].b -= lr * grads.db[k];
    }
}

}  // namespace scorelab::detail

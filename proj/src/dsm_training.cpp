#include "scorelab/dsm_training.hpp"

#include <iostream>

#include "mlp_grad.hpp"

namespace scorelab {

namespace {

constexpr int kRiskChunk = 4096;  // rows per evaluation block

struct DrawBlock {
    MatrixXd xt;    // d x (rows * n_inner)
    MatrixXd psi;   // conditional scores at the draws
    VectorXd x0_norm;  // per draw, |x0| of its row
};

// Inner draws for rows [row0, row0+rows) with one substream per row; the
// stream layout is independent of any truncation so masked and unmasked risks
// share draws exactly.
DrawBlock make_draws(const MatrixXd& data, double t, int row0, int rows, int n_inner,
                     uint64_t seed) {
    ForwardMarginal fm = forward_marginal(t);
    const int d = int(data.cols());
    double root_nv = std::sqrt(fm.noise_var);
    DrawBlock blk;
    blk.xt.resize(d, Eigen::Index(rows) * n_inner);
    blk.psi.resize(d, Eigen::Index(rows) * n_inner);
    blk.x0_norm.resize(Eigen::Index(rows) * n_inner);
    for (int i = 0; i < rows; ++i) {
        auto rng = make_rng(seed, uint64_t(row0 + i));
        VectorXd x0 = data.row(row0 + i).transpose();
        for (int j = 0; j < n_inner; ++j) {
            VectorXd xi = normal_vector(rng, d);
            Eigen::Index c = Eigen::Index(i) * n_inner + j;
            blk.xt.col(c) = fm.shrink * x0 + root_nv * xi;
            blk.psi.col(c) = -xi / root_nv;
            blk.x0_norm[c] = x0.norm();
        }
    }
    return blk;
}

double masked_mean_sq(const MatrixXd& s_vals, const DrawBlock& blk, int rows, int n_inner,
                      std::optional<double> S, std::optional<double> R) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
        double row_acc = 0.0;
        for (int j = 0; j < n_inner; ++j) {
            Eigen::Index c = Eigen::Index(i) * n_inner + j;
            if (S && blk.x0_norm[c] > *S) continue;
            if (R && blk.xt.col(c).norm() > *R + blk.x0_norm[c]) continue;
            row_acc += (s_vals.col(c) - blk.psi.col(c)).squaredNorm();
        }
        acc += row_acc / double(n_inner);
    }
    return acc / double(rows);
}

double risk_impl(const ScoreFn& score, double t, const MatrixXd& data, const RiskConfig& cfg,
                 bool truncate) {
    if (data.rows() < 1) throw std::invalid_argument("risk: empty data");
    if (cfg.n_inner < 1) throw std::invalid_argument("risk: n_inner >= 1 required");
    std::optional<double> S, R;
    if (truncate) {
        if (!cfg.trunc_S || !cfg.trunc_R)
            throw ConfigError("truncated_risk: S and R must be set");
        if (!(*cfg.trunc_S < *cfg.trunc_R) || !(*cfg.trunc_S > 0.0))
            throw ConfigError("truncated_risk: 0 < S < R required");
        S = cfg.trunc_S;
        R = cfg.trunc_R;
    }
    const int n = int(data.rows());
    double acc = 0.0;
    for (int row0 = 0; row0 < n; row0 += kRiskChunk) {
        int rows = std::min(kRiskChunk, n - row0);
        DrawBlock blk = make_draws(data, t, row0, rows, cfg.n_inner, cfg.seed);
        MatrixXd s_vals = score(t, blk.xt);
        acc += masked_mean_sq(s_vals, blk, rows, cfg.n_inner, S, R) * rows;
    }
    return acc / double(n);
}

ReluNet init_phi(int d, int depth, int width, std::mt19937_64& rng) {
    std::vector<AffineLayer> layers;
    int in = d;
    for (int k = 0; k < depth; ++k) {
        int out = (k + 1 == depth) ? d : width;
        AffineLayer l;
        if (k + 1 == depth) {
            // zero output layer: the initial score field is -x / (1 - e^{-2t})
            l.W = MatrixXd::Zero(out, in);
            l.b = VectorXd::Zero(out);
        } else {
            double scale = 1.0 / std::sqrt(double(in));
            l.W.resize(out, in);
            for (int i = 0; i < out; ++i)
                for (int j = 0; j < in; ++j) l.W(i, j) = scale * (2.0 * uniform01(rng) - 1.0);
            l.b = VectorXd::Zero(out);
        }
        layers.push_back(std::move(l));
        in = out;
    }
    return ReluNet(std::move(layers));
}

void project_path_budget(ReluNet& net, double k_budget) {
    net.refresh_path_norm();
    double pn = net.path_norm();
    if (pn > k_budget && pn > 0.0) {
        double s = k_budget / pn;
        auto& last = net.mutable_layers().back();
        last.W *= s;
        last.b *= s;
        net.refresh_path_norm();
    }
}

}  // namespace

int ScoreModel::dim() const {
    if (nets.empty()) throw ConfigError("ScoreModel: empty model");
    return nets.front().in_dim();
}

int ScoreModel::index_of_time(double t) const {
    for (size_t k = 0; k < times.size(); ++k)
        if (std::abs(times[k] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return int(k);
    throw ConfigError("ScoreModel: time " + std::to_string(t) + " not in the model");
}

int ScoreModel::nearest_time_index(double t) const {
    if (times.empty()) throw ConfigError("ScoreModel: empty model");
    int best = 0;
    double bestd = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < times.size(); ++k) {
        double d = std::abs(std::log(std::max(times[k], 1e-12)) - std::log(std::max(t, 1e-12)));
        if (d < bestd) {
            bestd = d;
            best = int(k);
        }
    }
    return best;
}

MatrixXd ScoreModel::score_batch(int k, const MatrixXd& X) const {
    ForwardMarginal fm = forward_marginal(times.at(k));
    return (-X + fm.shrink * nets.at(k).eval_batch(X)) / fm.noise_var;
}

VectorXd ScoreModel::score_at(int k, const VectorXd& x) const {
    return score_batch(k, x).col(0);
}

double ScoreModel::phi_zero_norm(int k) const {
    return nets.at(k).eval(VectorXd::Zero(dim())).norm();
}

ScoreFn ScoreModel::as_score_fn() const {
    ScoreModel copy = *this;
    return [copy](double t, const MatrixXd& X) {
        return copy.score_batch(copy.nearest_time_index(t), X);
    };
}

void ScoreModel::save(std::ostream& os) const {
    os << "SCOREMODEL 1\n" << times.size() << "\n";
    os.precision(17);
    for (double t : times) os << t << "\n";
    os << (k_budget ? *k_budget : -1.0) << "\n";
    for (const auto& n : nets) n.save(os);
}

ScoreModel ScoreModel::load(std::istream& is) {
    std::string magic;
    int version = 0;
    size_t n = 0;
    is >> magic >> version >> n;
    if (magic != "SCOREMODEL" || version != 1) throw ConfigError("ScoreModel: bad header");
    ScoreModel m;
    m.times.resize(n);
    for (auto& t : m.times) is >> t;
    double kb;
    is >> kb;
    if (kb >= 0.0) m.k_budget = kb;
    for (size_t k = 0; k < n; ++k) m.nets.push_back(ReluNet::load(is));
    return m;
}

double loss_at(const ScoreFn& score, double t, const VectorXd& x0, const RiskConfig& cfg) {
    MatrixXd data = x0.transpose();
    return risk_impl(score, t, data, cfg, cfg.trunc_S.has_value() && cfg.trunc_R.has_value());
}

double empirical_risk(const ScoreFn& score, double t, const MatrixXd& data,
                      const RiskConfig& cfg) {
    return risk_impl(score, t, data, cfg, false);
}

double truncated_risk(const ScoreFn& score, double t, const MatrixXd& data,
                      const RiskConfig& cfg) {
    return risk_impl(score, t, data, cfg, true);
}

RiskDecomposition risk_difference_decomposition(const ScoreFn& a, const ScoreFn& b, double t,
                                                const MatrixXd& data, const RiskConfig& cfg) {
    RiskDecomposition out;
    const int n = int(data.rows());
    double acc_a = 0.0, acc_b = 0.0, acc_sq = 0.0, acc_cross = 0.0;
    for (int row0 = 0; row0 < n; row0 += kRiskChunk) {
        int rows = std::min(kRiskChunk, n - row0);
        DrawBlock blk = make_draws(data, t, row0, rows, cfg.n_inner, cfg.seed);
        MatrixXd sa = a(t, blk.xt);
        MatrixXd sb = b(t, blk.xt);
        for (Eigen::Index c = 0; c < blk.xt.cols(); ++c) {
            acc_a += (sa.col(c) - blk.psi.col(c)).squaredNorm();
            acc_b += (sb.col(c) - blk.psi.col(c)).squaredNorm();
            acc_sq += (sa.col(c) - sb.col(c)).squaredNorm();
            acc_cross += 2.0 * (sa.col(c) - sb.col(c)).dot(sb.col(c) - blk.psi.col(c));
        }
    }
    double total = double(n) * cfg.n_inner;
    out.risk_a = acc_a / total;
    out.risk_b = acc_b / total;
    out.sq_err = acc_sq / total;
    out.cross = acc_cross / total;
    return out;
}

ScoreModel train(const TargetSpec& spec, const std::vector<double>& times,
                 const MatrixXd& data, const TrainOptions& opt, uint64_t seed,
                 std::ostream* telemetry) {
    if (times.empty()) throw ConfigError("train: at least one time required");
    for (double t : times)
        if (!(t > 0.0)) throw std::domain_error("train: times must be positive");
    if (data.rows() < 1) throw std::invalid_argument("train: empty data");
    const int d = int(data.cols());
    const int n = int(data.rows());

    ScoreModel model;
    model.times = times;
    model.k_budget = opt.k_budget;
    if (telemetry) (*telemetry) << "time_index,step,risk,path_norm,grad_norm\n";

    for (size_t k = 0; k < times.size(); ++k) {
        double t = times[k];
        ForwardMarginal fm = forward_marginal(t);
        double root_nv = std::sqrt(fm.noise_var);
        auto rng = make_rng(seed, k);
        ReluNet phi = init_phi(d, opt.depth, opt.width, rng);

        detail::MlpWorkspace ws;
        double initial_risk = -1.0, running = 0.0;
        int running_n = 0;
        for (int step = 0; step < opt.steps; ++step) {
            // fresh mini-batch with fresh conditional noise
            MatrixXd x0(d, opt.batch), xi(d, opt.batch);
            for (int b = 0; b < opt.batch; ++b) {
                int idx = int(uniform01(rng) * n);
                if (idx == n) idx = n - 1;
                x0.col(b) = data.row(idx).transpose();
                xi.col(b) = normal_vector(rng, d);
            }
            MatrixXd xt = fm.shrink * x0 + root_nv * xi;
            detail::mlp_forward(phi, xt, ws);
            // s = (-xt + shrink*phi)/nv, psi = -xi/root_nv
            MatrixXd resid =
                ((-xt + fm.shrink * ws.out) / fm.noise_var) + xi / root_nv;
            double loss = resid.squaredNorm() / opt.batch;
            MatrixXd gout = (2.0 * fm.shrink / (fm.noise_var * opt.batch)) * resid;
            detail::MlpGrads grads = detail::MlpGrads::zero_like(phi);
            detail::mlp_backward(phi, ws, gout, grads);
            double lr = opt.lr * 0.5 * (1.0 + std::cos(M_PI * step / double(opt.steps)));
            detail::sgd_step(phi, grads, lr);
            if (opt.k_budget && (step % 25 == 24)) project_path_budget(phi, *opt.k_budget);

            running += loss;
            ++running_n;
            if (initial_risk < 0.0 && running_n >= 25) {
                initial_risk = running / running_n;
            }
            if (step % opt.telemetry_every == 0 || step + 1 == opt.steps) {
                double risk_est = running / std::max(running_n, 1);
                running = 0.0;
                running_n = 0;
                phi.refresh_path_norm();
                if (telemetry)
                    (*telemetry) << k << "," << step << "," << risk_est << ","
                                 << phi.path_norm() << "," << std::sqrt(grads.squared_norm())
                                 << "\n";
                if (initial_risk > 0.0 && risk_est > 1e3 * initial_risk)
                    throw NumericalError("train: divergence at t=" + std::to_string(t) +
                                         " step=" + std::to_string(step) + " (risk " +
                                         std::to_string(risk_est) + " vs initial " +
                                         std::to_string(initial_risk) + ")");
            }
        }
        if (opt.k_budget) project_path_budget(phi, *opt.k_budget);
        phi.refresh_path_norm();
        model.nets.push_back(std::move(phi));
    }
    return model;
}

namespace dsm_detail {

double loss_and_gradient(const ReluNet& phi, double t, const MatrixXd& x0_cols,
                         const MatrixXd& xi_cols, VectorXd* grad) {
    ForwardMarginal fm = forward_marginal(t);
    double root_nv = std::sqrt(fm.noise_var);
    const int B = int(x0_cols.cols());
    MatrixXd xt = fm.shrink * x0_cols + root_nv * xi_cols;
    detail::MlpWorkspace ws;
    detail::mlp_forward(phi, xt, ws);
    MatrixXd resid = ((-xt + fm.shrink * ws.out) / fm.noise_var) + xi_cols / root_nv;
    double loss = resid.squaredNorm() / B;
    if (grad) {
        MatrixXd gout = (2.0 * fm.shrink / (fm.noise_var * B)) * resid;
        detail::MlpGrads grads = detail::MlpGrads::zero_like(phi);
        detail::mlp_backward(phi, ws, gout, grads);
        VectorXd flat(flatten_params(phi).size());
        Eigen::Index pos = 0;
        for (size_t k = 0; k < grads.dW.size(); ++k) {
            for (Eigen::Index i = 0; i < grads.dW[k].rows(); ++i)
                for (Eigen::Index j = 0; j < grads.dW[k].cols(); ++j)
                    flat[pos++] = grads.dW[k](i, j);
            for (Eigen::Index i = 0; i < grads.db[k].size(); ++i) flat[pos++] = grads.db[k][i];
        }
        *grad = flat;
    }
    return loss;
}

VectorXd flatten_params(const ReluNet& net) {
    Eigen::Index total = 0;
    for (const auto& l : net.layers()) total += l.W.size() + l.b.size();
    VectorXd v(total);
    Eigen::Index pos = 0;
    for (const auto& l : net.layers()) {
        for (Eigen::Index i = 0; i < l.W.rows(); ++i)
            for (Eigen::Index j = 0; j < l.W.cols(); ++j) v[pos++] = l.W(i, j);
        for (Eigen::Index i = 0; i < l.b.size(); ++i) v[pos++] = l.b[i];
    }
    return v;
}

void unflatten_params(ReluNet& net, const VectorXd& v) {
    Eigen::Index pos = 0;
    for (auto& l : net.mutable_layers()) {
        for (Eigen::Index i = 0; i < l.W.rows(); ++i)
            for (Eigen::Index j = 0; j < l.W.cols(); ++j) l.W(i, j) = v[pos++];
        for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = v[pos++];
    }
    net.refresh_path_norm();
}

}  // namespace dsm_detail

}  // namespace scorelab

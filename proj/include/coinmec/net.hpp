#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coinmec/dataset.hpp"
#include "coinmec/model.hpp"
#include "coinmec/rng.hpp"

namespace coinmec {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Large negative stand-in for -inf on masked logits: after max-subtraction the
// exponential underflows to exactly 0 in 64-bit, so padded rows receive zero
// probability without non-finite arithmetic.
inline constexpr double kMaskedLogit = -1e9;

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Mat softplus(const Mat& m) { return m.unaryExpr([](double v) { return softplus(v); }); }
inline Mat sigmoid_mat(const Mat& m) { return m.unaryExpr([](double v) { return sigmoid(v); }); }

struct Hyperparams {
    int hidden = 128;          // phi-net width H
    int latent = 128;          // rho-net width D
    double epsilon = 1e-8;     // masked-mean denominator guard
    double lambda_bin = 1.0;   // SP3 binary-head weight
    double lambda_fac = 1.0;   // SP3 factored-heads weight
    double learning_rate = 1e-3;
    int max_epochs = 150;
    int batch_size = 32;
    int patience = 15;         // epochs without val improvement before stopping
    double min_delta = 1e-4;   // improvement threshold for the plateau test
    double val_fraction = 0.1;
};

// All learnable blocks of the shared encoder and the three task decoders,
// plus the standardization vectors the checkpoint carries.
struct ModelParams {
    Topology topo;
    int i_max = 0;
    int features = 0;
    Hyperparams hp;
    std::vector<double> mu, sigma;

    // phi-net: features -> H -> H, softplus
    Mat enc_w1, enc_w2;
    Vec enc_b1, enc_b2;
    // rho-net: 2H -> D (softplus) -> D (linear)
    Mat rho_w1, rho_w2;
    Vec rho_b1, rho_b2;
    // SP1 decoder: per capacity pool, user weight/bias plus slack logit
    Mat sp1_w;       // pools x D
    Vec sp1_b, sp1_s;
    // SP2 decoder: per slice weight/bias plus a scalar slack logit
    Mat sp2_w;       // slices x D
    Vec sp2_b;
    double sp2_s = 0.0;
    // SP3 heads
    Mat sp3_joint_w;  // classes x D
    Vec sp3_joint_b;
    Vec sp3_bin_w;    // D
    double sp3_bin_b = 0.0;
    Mat sp3_slice_w;  // slices x D
    Vec sp3_slice_b;
    Mat sp3_ap_w;     // aps x D
    Vec sp3_ap_b;
    Mat sp3_node_w;   // nodes x D
    Vec sp3_node_b;

    int pools() const { return topo.pools(); }
    int classes() const { return topo.joint_classes(); }
};

// Named view over every parameter block; the single ordering shared by the
// optimizer, the checkpoint format, and the gradient checks.
struct ParamView {
    std::string name;
    double* data;
    Eigen::Index size;
};

inline std::vector<ParamView> collect_views(ModelParams& p) {
    std::vector<ParamView> views;
    auto add_mat = [&views](const char* name, Mat& m) { views.push_back({name, m.data(), m.size()}); };
    auto add_vec = [&views](const char* name, Vec& v) { views.push_back({name, v.data(), v.size()}); };
    auto add_scalar = [&views](const char* name, double& d) { views.push_back({name, &d, 1}); };
    add_mat("enc_w1", p.enc_w1);
    add_vec("enc_b1", p.enc_b1);
    add_mat("enc_w2", p.enc_w2);
    add_vec("enc_b2", p.enc_b2);
    add_mat("rho_w1", p.rho_w1);
    add_vec("rho_b1", p.rho_b1);
    add_mat("rho_w2", p.rho_w2);
    add_vec("rho_b2", p.rho_b2);
    add_mat("sp1_w", p.sp1_w);
    add_vec("sp1_b", p.sp1_b);
    add_vec("sp1_s", p.sp1_s);
    add_mat("sp2_w", p.sp2_w);
    add_vec("sp2_b", p.sp2_b);
    add_scalar("sp2_s", p.sp2_s);
    add_mat("sp3_joint_w", p.sp3_joint_w);
    add_vec("sp3_joint_b", p.sp3_joint_b);
    add_vec("sp3_bin_w", p.sp3_bin_w);
    add_scalar("sp3_bin_b", p.sp3_bin_b);
    add_mat("sp3_slice_w", p.sp3_slice_w);
    add_vec("sp3_slice_b", p.sp3_slice_b);
    add_mat("sp3_ap_w", p.sp3_ap_w);
    add_vec("sp3_ap_b", p.sp3_ap_b);
    add_mat("sp3_node_w", p.sp3_node_w);
    add_vec("sp3_node_b", p.sp3_node_b);
    return views;
}

inline ModelParams zero_like(const ModelParams& p) {
    ModelParams z = p;
    for (auto& view : collect_views(z)) std::fill(view.data, view.data + view.size, 0.0);
    return z;
}

inline ModelParams init_params(const Topology& topo, int i_max, int features,
                               const Hyperparams& hp, std::uint64_t seed) {
    ModelParams p;
    p.topo = topo;
    p.i_max = i_max;
    p.features = features;
    p.hp = hp;
    const int H = hp.hidden, D = hp.latent;
    const int E = topo.pools(), K = topo.joint_classes();
    p.enc_w1 = Mat::Zero(H, features);
    p.enc_b1 = Vec::Zero(H);
    p.enc_w2 = Mat::Zero(H, H);
    p.enc_b2 = Vec::Zero(H);
    p.rho_w1 = Mat::Zero(D, 2 * H);
    p.rho_b1 = Vec::Zero(D);
    p.rho_w2 = Mat::Zero(D, D);
    p.rho_b2 = Vec::Zero(D);
    p.sp1_w = Mat::Zero(E, D);
    p.sp1_b = Vec::Zero(E);
    p.sp1_s = Vec::Zero(E);
    p.sp2_w = Mat::Zero(topo.slices, D);
    p.sp2_b = Vec::Zero(topo.slices);
    p.sp3_joint_w = Mat::Zero(K, D);
    p.sp3_joint_b = Vec::Zero(K);
    p.sp3_bin_w = Vec::Zero(D);
    p.sp3_slice_w = Mat::Zero(topo.slices, D);
    p.sp3_slice_b = Vec::Zero(topo.slices);
    p.sp3_ap_w = Mat::Zero(topo.aps, D);
    p.sp3_ap_b = Vec::Zero(topo.aps);
    p.sp3_node_w = Mat::Zero(topo.nodes, D);
    p.sp3_node_b = Vec::Zero(topo.nodes);

    // Glorot-uniform weights, zero biases and slack logits.
    Rng rng(derive_seed(seed, "init"));
    auto glorot = [&rng](Mat& w, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
    };
    glorot(p.enc_w1, features, H);
    glorot(p.enc_w2, H, H);
    glorot(p.rho_w1, 2 * H, D);
    glorot(p.rho_w2, D, D);
    glorot(p.sp1_w, D, E);
    glorot(p.sp2_w, D, topo.slices);
    glorot(p.sp3_joint_w, D, K);
    {
        Mat tmp = Mat::Zero(1, D);
        glorot(tmp, D, 1);
        p.sp3_bin_w = tmp.row(0).transpose();
    }
    glorot(p.sp3_slice_w, D, topo.slices);
    glorot(p.sp3_ap_w, D, topo.aps);
    glorot(p.sp3_node_w, D, topo.nodes);
    return p;
}

struct ForwardTrace {
    Mat x;      // i_max x F, standardized
    Vec mask;   // i_max
    double mask_sum = 0.0;

    Mat enc_a1, enc_h1, enc_a2, enc_h2;  // i_max x H
    Vec context;                          // H
    Mat fused;                            // i_max x 2H
    Mat rho_a1, rho_h1;                   // i_max x D
    Mat z;                                // i_max x D (linear output)

    Mat sp1_logits, sp1_p;  // (i_max + 1) x pools, row 0 slack

    Mat sp2_pool_mask;  // aps x i_max
    Vec sp2_pool_sum;   // aps
    Mat sp2_g;          // aps x D
    Mat sp2_p;          // aps x (slices + 1), column 0 slack

    Mat sp3_joint_logits, sp3_joint_p;  // i_max x classes
    Vec sp3_bin_logit, sp3_q;           // i_max
    Mat sp3_slice_logits, sp3_slice_p;  // i_max x slices
    Mat sp3_ap_logits, sp3_ap_p;        // i_max x aps
    Mat sp3_node_logits, sp3_node_p;    // i_max x nodes
};

// Permutation-equivariant encoder: row-wise phi-net, masked-mean context,
// concatenation, row-wise rho-net.
inline void encode(const Mat& x, const Vec& mask, const ModelParams& p, ForwardTrace& t) {
    t.x = x;
    t.mask = mask;
    t.mask_sum = mask.sum();
    t.enc_a1 = (x * p.enc_w1.transpose()).rowwise() + p.enc_b1.transpose();
    t.enc_h1 = softplus(t.enc_a1);
    t.enc_a2 = (t.enc_h1 * p.enc_w2.transpose()).rowwise() + p.enc_b2.transpose();
    t.enc_h2 = softplus(t.enc_a2);
    t.context = (t.enc_h2.transpose() * mask) / (t.mask_sum + p.hp.epsilon);
    const int rows = static_cast<int>(x.rows());
    t.fused.resize(rows, 2 * p.hp.hidden);
    t.fused.leftCols(p.hp.hidden) = t.enc_h2;
    t.fused.rightCols(p.hp.hidden) = t.context.transpose().replicate(rows, 1);
    t.rho_a1 = (t.fused * p.rho_w1.transpose()).rowwise() + p.rho_b1.transpose();
    t.rho_h1 = softplus(t.rho_a1);
    t.z = (t.rho_h1 * p.rho_w2.transpose()).rowwise() + p.rho_b2.transpose();
}

inline Mat encode(const Mat& x, const Vec& mask, const ModelParams& p) {
    ForwardTrace t;
    encode(x, mask, p, t);
    return t.z;
}

namespace detail {

// Column-wise softmax after max subtraction; masked entries sit at
// kMaskedLogit and underflow to exactly zero probability.
inline Mat colwise_softmax(const Mat& logits) {
    Mat p = logits;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double mx = p.col(c).maxCoeff();
        p.col(c) = (p.col(c).array() - mx).exp();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

inline Mat rowwise_softmax(const Mat& logits) {
    Mat p = logits;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

}  // namespace detail

// SP1 decoder: per-pool user logits plus a slack logit, normalized along the
// augmented WD axis. Row 0 is slack; padded rows get zero probability.
inline void decode_sp1(const Mat& z, const Vec& mask, const ModelParams& p, ForwardTrace& t) {
    const int rows = static_cast<int>(z.rows());
    const int pools = p.pools();
    t.sp1_logits.resize(rows + 1, pools);
    t.sp1_logits.row(0) = p.sp1_s.transpose();
    t.sp1_logits.bottomRows(rows) = (z * p.sp1_w.transpose()).rowwise() + p.sp1_b.transpose();
    for (int i = 0; i < rows; ++i)
        if (mask[i] == 0.0) t.sp1_logits.row(i + 1).setConstant(kMaskedLogit);
    t.sp1_p = detail::colwise_softmax(t.sp1_logits);
}

inline Mat decode_sp1(const Mat& z, const Vec& mask, const ModelParams& p) {
    ForwardTrace t;
    decode_sp1(z, mask, p, t);
    return t.sp1_p;
}

// SP2 decoder: masked-mean set embedding, per-slice logits plus scalar slack,
// softmax over the augmented slice axis. Index 0 is slack. The pooling mask
// selects the WDs whose AP is being allocated; the output is identical for
// every WD in the set.
inline Vec decode_sp2(const Mat& z, const Vec& pool_mask, const ModelParams& p) {
    const Vec g = (z.transpose() * pool_mask) / (pool_mask.sum() + p.hp.epsilon);
    Vec logits(p.topo.slices + 1);
    logits[0] = p.sp2_s;
    logits.tail(p.topo.slices) = p.sp2_w * g + p.sp2_b;
    const double mx = logits.maxCoeff();
    Vec probs = (logits.array() - mx).exp();
    probs /= probs.sum();
    return probs;
}

// SP3 decoder heads: joint scores over decision classes, binary local/offload
// probability, and factored slice/AP/node heads. All act row-wise on Z.
inline void decode_sp3(const Mat& z, const Vec& mask, const ModelParams& p, ForwardTrace& t) {
    (void)mask;  // rows are carried through; losses and argmax apply the mask
    t.sp3_joint_logits = (z * p.sp3_joint_w.transpose()).rowwise() + p.sp3_joint_b.transpose();
    t.sp3_joint_p = detail::rowwise_softmax(t.sp3_joint_logits);
    t.sp3_bin_logit = z * p.sp3_bin_w;
    t.sp3_bin_logit.array() += p.sp3_bin_b;
    t.sp3_q = t.sp3_bin_logit.unaryExpr([](double v) { return sigmoid(v); });
    t.sp3_slice_logits = (z * p.sp3_slice_w.transpose()).rowwise() + p.sp3_slice_b.transpose();
    t.sp3_slice_p = detail::rowwise_softmax(t.sp3_slice_logits);
    t.sp3_ap_logits = (z * p.sp3_ap_w.transpose()).rowwise() + p.sp3_ap_b.transpose();
    t.sp3_ap_p = detail::rowwise_softmax(t.sp3_ap_logits);
    t.sp3_node_logits = (z * p.sp3_node_w.transpose()).rowwise() + p.sp3_node_b.transpose();
    t.sp3_node_p = detail::rowwise_softmax(t.sp3_node_logits);
}

// Supervised targets for one example, shaped to match the trace.
struct ExampleTargets {
    Mat sp1_y;   // (i_max + 1) x pools, row 0 slack
    Mat sp2_y;   // aps x (slices + 1), column 0 slack
    std::vector<int> joint_class;  // per real WD
    std::vector<int> bin;
    std::vector<int> slice_idx, ap_idx, node_idx;  // -1 when local
};

struct LossBreakdown {
    double sp1 = 0.0;
    double sp2 = 0.0;
    double sp3_joint = 0.0;
    double sp3_bin = 0.0;
    double sp3_fac = 0.0;

    double sp3(const Hyperparams& hp) const {
        return sp3_joint + hp.lambda_bin * sp3_bin + hp.lambda_fac * sp3_fac;
    }
    double total(const Hyperparams& hp) const { return sp1 + sp2 + sp3(hp); }
};

inline double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

// Masked cross-entropy on the augmented WD axis, averaged over pools.
inline double loss_sp1(const ForwardTrace& t, const Mat& y) {
    const int pools = static_cast<int>(y.cols());
    double loss = 0.0;
    for (int e = 0; e < pools; ++e) {
        loss -= y(0, e) * safe_log(t.sp1_p(0, e));
        for (int i = 0; i < t.mask.size(); ++i)
            if (t.mask[i] == 1.0 && y(i + 1, e) > 0.0) loss -= y(i + 1, e) * safe_log(t.sp1_p(i + 1, e));
    }
    return loss / pools;
}

// Cross-entropy on the augmented slice axis, averaged over APs.
inline double loss_sp2(const ForwardTrace& t, const Mat& y) {
    const int aps = static_cast<int>(y.rows());
    double loss = 0.0;
    for (int a = 0; a < aps; ++a)
        for (int k = 0; k < y.cols(); ++k)
            if (y(a, k) > 0.0) loss -= y(a, k) * safe_log(t.sp2_p(a, k));
    return loss / aps;
}

// Joint, binary, and gated factored cross-entropies, averaged over real WDs.
inline LossBreakdown loss_sp3(const ForwardTrace& t, const ExampleTargets& targets) {
    LossBreakdown out;
    const double denom = std::max(t.mask_sum, 1.0);
    for (std::size_t i = 0; i < targets.joint_class.size(); ++i) {
        if (t.mask[static_cast<int>(i)] != 1.0) continue;
        const int row = static_cast<int>(i);
        out.sp3_joint -= safe_log(t.sp3_joint_p(row, targets.joint_class[i]));
        const double q = t.sp3_q[row];
        out.sp3_bin -= targets.bin[i] == 1 ? safe_log(q) : safe_log(1.0 - q);
        if (targets.bin[i] == 1) {
            out.sp3_fac -= safe_log(t.sp3_slice_p(row, targets.slice_idx[i]));
            out.sp3_fac -= safe_log(t.sp3_ap_p(row, targets.ap_idx[i]));
            out.sp3_fac -= safe_log(t.sp3_node_p(row, targets.node_idx[i]));
        }
    }
    out.sp3_joint /= denom;
    out.sp3_bin /= denom;
    out.sp3_fac /= denom;
    return out;
}

// Runs encoder and all decoders; ap_masks (aps x i_max) are the per-AP
// pooling masks for SP2 (assignment under the teacher decisions at training
// time, under the predicted decisions at inference).
inline LossBreakdown forward(const Mat& x, const Vec& mask, const Mat& ap_masks,
                             const ModelParams& p, ForwardTrace& t,
                             const ExampleTargets* targets = nullptr) {
    encode(x, mask, p, t);
    decode_sp1(t.z, mask, p, t);
    const int aps = p.topo.aps;
    t.sp2_pool_mask = ap_masks;
    t.sp2_pool_sum.resize(aps);
    t.sp2_g.resize(aps, p.hp.latent);
    t.sp2_p.resize(aps, p.topo.slices + 1);
    for (int a = 0; a < aps; ++a) {
        const Vec pool_mask = ap_masks.row(a).transpose();
        t.sp2_pool_sum[a] = pool_mask.sum();
        t.sp2_g.row(a) = ((t.z.transpose() * pool_mask) / (t.sp2_pool_sum[a] + p.hp.epsilon)).transpose();
        Vec logits(p.topo.slices + 1);
        logits[0] = p.sp2_s;
        logits.tail(p.topo.slices) = p.sp2_w * t.sp2_g.row(a).transpose() + p.sp2_b;
        const double mx = logits.maxCoeff();
        Vec probs = (logits.array() - mx).exp();
        probs /= probs.sum();
        t.sp2_p.row(a) = probs.transpose();
    }
    decode_sp3(t.z, mask, p, t);

    LossBreakdown loss;
    if (targets) {
        loss = loss_sp3(t, *targets);
        loss.sp1 = loss_sp1(t, targets->sp1_y);
        loss.sp2 = loss_sp2(t, targets->sp2_y);
    }
    return loss;
}

// Analytic gradients of the total loss for every parameter block; accumulates
// into `grads` (caller zeroes). Aborts on non-finite values naming the block.
inline void backward(const ForwardTrace& t, const ExampleTargets& targets, const ModelParams& p,
                     ModelParams& grads) {
    const int rows = p.i_max;
    const int pools = p.pools();
    const int H = p.hp.hidden, D = p.hp.latent;

    Mat dz = Mat::Zero(rows, D);

    // SP1: d logits = (P - Y) / pools on slack and real rows.
    {
        Mat dlogits = (t.sp1_p - targets.sp1_y) / static_cast<double>(pools);
        for (int i = 0; i < rows; ++i)
            if (t.mask[i] == 0.0) dlogits.row(i + 1).setZero();
        grads.sp1_s += dlogits.row(0).transpose();
        const Mat duser = dlogits.bottomRows(rows);
        grads.sp1_w += duser.transpose() * t.z;
        grads.sp1_b += duser.colwise().sum().transpose();
        dz += duser * p.sp1_w;
    }

    // SP2: per AP, d logits = (p - y) / aps through the pooled embedding.
    {
        const int aps = p.topo.aps;
        for (int a = 0; a < aps; ++a) {
            const Vec d = (t.sp2_p.row(a) - targets.sp2_y.row(a)).transpose() / aps;
            grads.sp2_s += d[0];
            grads.sp2_b += d.tail(p.topo.slices);
            grads.sp2_w += d.tail(p.topo.slices) * t.sp2_g.row(a);
            const Vec dg = p.sp2_w.transpose() * d.tail(p.topo.slices);
            const double denom = t.sp2_pool_sum[a] + p.hp.epsilon;
            for (int i = 0; i < rows; ++i)
                if (t.sp2_pool_mask(a, i) != 0.0)
                    dz.row(i) += (t.sp2_pool_mask(a, i) / denom) * dg.transpose();
        }
    }

    // SP3 heads: masked softmax/sigmoid cross-entropy gradients.
    {
        const double denom = std::max(t.mask_sum, 1.0);
        Mat djoint = Mat::Zero(rows, p.classes());
        Vec dbin = Vec::Zero(rows);
        Mat dslice = Mat::Zero(rows, p.topo.slices);
        Mat dap = Mat::Zero(rows, p.topo.aps);
        Mat dnode = Mat::Zero(rows, p.topo.nodes);
        for (std::size_t i = 0; i < targets.joint_class.size(); ++i) {
            const int row = static_cast<int>(i);
            if (t.mask[row] != 1.0) continue;
            djoint.row(row) = t.sp3_joint_p.row(row) / denom;
            djoint(row, targets.joint_class[i]) -= 1.0 / denom;
            dbin[row] = p.hp.lambda_bin * (t.sp3_q[row] - targets.bin[i]) / denom;
            if (targets.bin[i] == 1) {
                dslice.row(row) = p.hp.lambda_fac * t.sp3_slice_p.row(row) / denom;
                dslice(row, targets.slice_idx[i]) -= p.hp.lambda_fac / denom;
                dap.row(row) = p.hp.lambda_fac * t.sp3_ap_p.row(row) / denom;
                dap(row, targets.ap_idx[i]) -= p.hp.lambda_fac / denom;
                dnode.row(row) = p.hp.lambda_fac * t.sp3_node_p.row(row) / denom;
                dnode(row, targets.node_idx[i]) -= p.hp.lambda_fac / denom;
            }
        }
        grads.sp3_joint_w += djoint.transpose() * t.z;
        grads.sp3_joint_b += djoint.colwise().sum().transpose();
        dz += djoint * p.sp3_joint_w;
        grads.sp3_bin_w += t.z.transpose() * dbin;
        grads.sp3_bin_b += dbin.sum();
        dz += dbin * p.sp3_bin_w.transpose();
        grads.sp3_slice_w += dslice.transpose() * t.z;
        grads.sp3_slice_b += dslice.colwise().sum().transpose();
        dz += dslice * p.sp3_slice_w;
        grads.sp3_ap_w += dap.transpose() * t.z;
        grads.sp3_ap_b += dap.colwise().sum().transpose();
        dz += dap * p.sp3_ap_w;
        grads.sp3_node_w += dnode.transpose() * t.z;
        grads.sp3_node_b += dnode.colwise().sum().transpose();
        dz += dnode * p.sp3_node_w;
    }

    // rho-net backward (second layer linear).
    const Mat da2 = dz;
    grads.rho_w2 += da2.transpose() * t.rho_h1;
    grads.rho_b2 += da2.colwise().sum().transpose();
    const Mat dh1 = da2 * p.rho_w2;
    const Mat da1 = dh1.cwiseProduct(sigmoid_mat(t.rho_a1));
    grads.rho_w1 += da1.transpose() * t.fused;
    grads.rho_b1 += da1.colwise().sum().transpose();
    const Mat dfused = da1 * p.rho_w1;

    // context: c = sum_j m_j h_j / (sum m + eps), broadcast to every row.
    Mat dh2 = dfused.leftCols(H);
    const Vec dcontext = dfused.rightCols(H).colwise().sum().transpose();
    const double pool_denom = t.mask_sum + p.hp.epsilon;
    for (int i = 0; i < rows; ++i)
        if (t.mask[i] == 1.0) dh2.row(i) += dcontext.transpose() / pool_denom;

    // phi-net backward.
    const Mat da2e = dh2.cwiseProduct(sigmoid_mat(t.enc_a2));
    grads.enc_w2 += da2e.transpose() * t.enc_h1;
    grads.enc_b2 += da2e.colwise().sum().transpose();
    const Mat dh1e = da2e * p.enc_w2;
    const Mat da1e = dh1e.cwiseProduct(sigmoid_mat(t.enc_a1));
    grads.enc_w1 += da1e.transpose() * t.x;
    grads.enc_b1 += da1e.colwise().sum().transpose();

    for (auto& view : collect_views(grads))
        for (Eigen::Index k = 0; k < view.size; ++k)
            if (!std::isfinite(view.data[k]))
                throw std::runtime_error("backward: non-finite gradient in block " + view.name);
}

// Adaptive moment estimation with bias correction; parameter order comes from
// collect_views, so updates are deterministic.
struct AdamState {
    ModelParams m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(const ModelParams& p) : m(zero_like(p)), v(zero_like(p)) {}

    void update(ModelParams& params, ModelParams& grads, double lr) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, step);
        const double bc2 = 1.0 - std::pow(beta2, step);
        auto pv = collect_views(params);
        auto gv = collect_views(grads);
        auto mv = collect_views(m);
        auto vv = collect_views(v);
        for (std::size_t b = 0; b < pv.size(); ++b)
            for (Eigen::Index k = 0; k < pv[b].size; ++k) {
                const double g = gv[b].data[k];
                mv[b].data[k] = beta1 * mv[b].data[k] + (1.0 - beta1) * g;
                vv[b].data[k] = beta2 * vv[b].data[k] + (1.0 - beta2) * g * g;
                const double mhat = mv[b].data[k] / bc1;
                const double vhat = vv[b].data[k] / bc2;
                pv[b].data[k] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
    }
};

// ---- checkpoint serialization ----

inline constexpr const char* kCheckpointFormat = "coinmec.checkpoint.v1";

inline Json checkpoint_to_json(const ModelParams& params) {
    Json j;
    j["format"] = kCheckpointFormat;
    j["topology"] = {{"slices", params.topo.slices},
                     {"aps", params.topo.aps},
                     {"nodes", params.topo.nodes}};
    j["i_max"] = params.i_max;
    j["features"] = params.features;
    j["hyperparams"] = {{"hidden", params.hp.hidden},
                        {"latent", params.hp.latent},
                        {"epsilon", params.hp.epsilon},
                        {"lambda_bin", params.hp.lambda_bin},
                        {"lambda_fac", params.hp.lambda_fac},
                        {"learning_rate", params.hp.learning_rate},
                        {"max_epochs", params.hp.max_epochs},
                        {"batch_size", params.hp.batch_size},
                        {"patience", params.hp.patience},
                        {"min_delta", params.hp.min_delta},
                        {"val_fraction", params.hp.val_fraction}};
    j["mu"] = params.mu;
    j["sigma"] = params.sigma;
    Json blocks;
    ModelParams& mut = const_cast<ModelParams&>(params);
    for (const auto& view : collect_views(mut))
        blocks[view.name] = std::vector<double>(view.data, view.data + view.size);
    j["params"] = blocks;
    return j;
}

inline ModelParams checkpoint_from_json(const Json& j) {
    if (j.value("format", "") != kCheckpointFormat)
        throw std::invalid_argument("checkpoint_from_json: unknown format tag");
    Topology topo{j.at("topology").at("slices").get<int>(), j.at("topology").at("aps").get<int>(),
                  j.at("topology").at("nodes").get<int>()};
    Hyperparams hp;
    const Json& jh = j.at("hyperparams");
    hp.hidden = jh.at("hidden").get<int>();
    hp.latent = jh.at("latent").get<int>();
    hp.epsilon = jh.at("epsilon").get<double>();
    hp.lambda_bin = jh.at("lambda_bin").get<double>();
    hp.lambda_fac = jh.at("lambda_fac").get<double>();
    hp.learning_rate = jh.at("learning_rate").get<double>();
    hp.max_epochs = jh.at("max_epochs").get<int>();
    hp.batch_size = jh.at("batch_size").get<int>();
    hp.patience = jh.at("patience").get<int>();
    hp.min_delta = jh.at("min_delta").get<double>();
    hp.val_fraction = jh.at("val_fraction").get<double>();
    ModelParams p = init_params(topo, j.at("i_max").get<int>(), j.at("features").get<int>(), hp, 0);
    p.mu = j.at("mu").get<std::vector<double>>();
    p.sigma = j.at("sigma").get<std::vector<double>>();
    for (auto& view : collect_views(p)) {
        const auto values = j.at("params").at(view.name).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(values.size()) != view.size)
            throw std::invalid_argument("checkpoint_from_json: size mismatch in " + view.name);
        std::copy(values.begin(), values.end(), view.data);
    }
    return p;
}

}  // namespace coinmec

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ugmm/data.hpp"
#include "ugmm/errors.hpp"
#include "ugmm/matrix.hpp"
#include "ugmm/network.hpp"
#include "ugmm/numeric.hpp"

namespace ugmm {

struct OptimConfig {
    double lr0 = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
};

struct ScheduleConfig {
    std::vector<std::size_t> milestones;  // strictly increasing epochs
    double gamma = 0.1;
};

/// Adam moment buffers, one per parameter tensor in declaration order.
struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t t = 0;

    static AdamState init(const NetworkParams& params) {
        AdamState s;
        params.for_each_tensor([&s](const Matrix& p) {
            s.m.push_back(Matrix::zeros_like(p));
            s.v.push_back(Matrix::zeros_like(p));
        });
        return s;
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
};

using TrainReport = std::vector<EpochStats>;

struct LossResult {
    double loss = 0.0;
    Matrix d_out;
};

/// Mean cross-entropy of softmax over the root activations:
/// loss = mean_b (logsumexp(out_b) - out_b[label_b]),
/// d_out = (softmax(out_b) - onehot) / B.
inline LossResult cross_entropy(const Matrix& outputs, std::span<const int> labels) {
    if (labels.size() != outputs.rows) throw std::invalid_argument("cross_entropy: label count");
    LossResult res;
    res.d_out = Matrix(outputs.rows, outputs.cols);
    const double inv_b = 1.0 / double(outputs.rows);
    double loss = 0.0;
    for (std::size_t b = 0; b < outputs.rows; ++b) {
        const int label = labels[b];
        if (label < 0 || std::size_t(label) >= outputs.cols) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                        " out of range");
        }
        const auto row = outputs.row(b);
        loss += logsumexp(row) - row[std::size_t(label)];
        softmax_into(row, res.d_out.row(b));
        for (std::size_t c = 0; c < outputs.cols; ++c) res.d_out(b, c) *= inv_b;
        res.d_out(b, std::size_t(label)) -= inv_b;
    }
    res.loss = loss * inv_b;
    return res;
}

/// Generative joint-likelihood loss: root c is read as log P(y=c, x) and only
/// the true-class root is trained. loss = -mean_b out_b[label_b],
/// d_out = -onehot / B.
inline LossResult generative_nll(const Matrix& outputs, std::span<const int> labels) {
    if (labels.size() != outputs.rows) throw std::invalid_argument("generative_nll: label count");
    LossResult res;
    res.d_out = Matrix(outputs.rows, outputs.cols);
    const double inv_b = 1.0 / double(outputs.rows);
    double loss = 0.0;
    for (std::size_t b = 0; b < outputs.rows; ++b) {
        const int label = labels[b];
        if (label < 0 || std::size_t(label) >= outputs.cols) {
            throw std::invalid_argument("generative_nll: label " + std::to_string(label) +
                                        " out of range");
        }
        loss -= outputs(b, std::size_t(label));
        res.d_out(b, std::size_t(label)) = -inv_b;
    }
    res.loss = loss * inv_b;
    return res;
}

/// Step-decay schedule: lr0 * gamma^(number of milestones <= epoch).
/// Computed by successive multiplication so decade decays stay bit-exact.
inline double lr_at_epoch(const ScheduleConfig& sched, double lr0, std::size_t epoch) {
    double lr = lr0;
    for (std::size_t m : sched.milestones) {
        if (m <= epoch) lr *= sched.gamma;
    }
    return lr;
}

inline double global_grad_norm(const NetworkGrads& grads) {
    double sq = 0.0;
    for (const Matrix& g : grads.tensors) {
        for (double v : g.data) sq += v * v;
    }
    return std::sqrt(sq);
}

/// Scale all gradients so the global norm does not exceed max_norm.
inline void clip_gradients(NetworkGrads& grads, double max_norm) {
    const double norm = global_grad_norm(grads);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (Matrix& g : grads.tensors) {
        for (double& v : g.data) v *= scale;
    }
}

/// One Adam update with bias correction, followed by the uGMM log_sigma
/// clamp to [-10, 10] that prevents variance collapse.
inline void adam_step(NetworkParams& params, const NetworkGrads& grads, AdamState& state,
                      const OptimConfig& cfg, double lr) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
    std::size_t i = 0;
    params.for_each_tensor([&](Matrix& p) {
        const Matrix& g = grads.tensors.at(i);
        if (!p.same_shape(g)) throw std::invalid_argument("adam_step: gradient shape mismatch");
        Matrix& m = state.m.at(i);
        Matrix& v = state.v.at(i);
        for (std::size_t n = 0; n < p.data.size(); ++n) {
            const double gn = g.data[n];
            m.data[n] = cfg.beta1 * m.data[n] + (1.0 - cfg.beta1) * gn;
            v.data[n] = cfg.beta2 * v.data[n] + (1.0 - cfg.beta2) * gn * gn;
            const double m_hat = m.data[n] / bc1;
            const double v_hat = v.data[n] / bc2;
            p.data[n] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
        ++i;
    });
    if (params.spec.kind == ModelKind::ugmm) {
        for (auto& layer : params.ugmm_layers) {
            for (double& ls : layer.log_sigma.data) {
                ls = std::clamp(ls, -10.0, 10.0);
            }
        }
    }
}

/// Fraction of correct argmax predictions; inference only, chunked so large
/// test sets do not blow up the forward cache.
inline double evaluate(const NetworkParams& params, const Matrix& x, std::span<const int> y) {
    constexpr std::size_t kChunk = 4096;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < x.rows; start += kChunk) {
        const std::size_t n = std::min(kChunk, x.rows - start);
        Matrix block(n, x.cols);
        std::copy(x.data.begin() + std::ptrdiff_t(start * x.cols),
                  x.data.begin() + std::ptrdiff_t((start + n) * x.cols), block.data.begin());
        const ForwardCache cache = net_forward(params, block, false, nullptr);
        const std::vector<int> pred = predict(cache.outputs, params.spec.mode);
        for (std::size_t i = 0; i < n; ++i) {
            if (pred[i] == y[start + i]) ++correct;
        }
    }
    return x.rows == 0 ? 0.0 : double(correct) / double(x.rows);
}

struct TrainResult {
    NetworkParams params;
    AdamState adam;
    TrainReport report;
};

/// Full training loop. Per epoch: shuffle the train set, iterate minibatches
/// (forward with dropout, loss, backward, optional global-norm clip, Adam),
/// then evaluate on the test split with dropout disabled.
///
/// Rng consumption order (the reproducibility contract): net_init first, then
/// per epoch one shuffle pass, then per batch the dropout masks in layer
/// order. Everything is bit-deterministic given (seed, config, data).
inline TrainResult train_run(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                             const OptimConfig& optim, const ScheduleConfig& sched,
                             std::size_t epochs, std::size_t batch_size, Rng& rng) {
    spec.validate();
    TrainResult res;
    res.params = net_init(spec, rng);
    res.adam = AdamState::init(res.params);
    const bool generative = spec.mode == TrainMode::generative;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const double lr = lr_at_epoch(sched, optim.lr0, epoch);
        double loss_sum = 0.0;
        for (Batch& batch : batches(train, batch_size, true, rng)) {
            const ForwardCache cache = net_forward(res.params, batch.x, true, &rng);
            const LossResult lres = generative ? generative_nll(cache.outputs, batch.y)
                                               : cross_entropy(cache.outputs, batch.y);
            if (!std::isfinite(lres.loss)) {
                throw NumericError("train_run: non-finite loss at epoch " + std::to_string(epoch));
            }
            NetworkGrads grads = net_backward(res.params, cache, lres.d_out);
            if (optim.grad_clip > 0.0) clip_gradients(grads, optim.grad_clip);
            adam_step(res.params, grads, res.adam, optim, lr);
            loss_sum += lres.loss * double(batch.x.rows);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / double(train.size());
        stats.test_accuracy = evaluate(res.params, test.x, test.y);
        res.report.push_back(stats);
    }
    return res;
}

}  // namespace ugmm

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "ugmm/matrix.hpp"
#include "ugmm/network.hpp"
#include "ugmm/rng.hpp"
#include "ugmm/ugmm_layer.hpp"

namespace ugmm {

/// Finite-difference audit of the analytic gradients. The scalar objective is
/// f = sum(dA . forward(...)), each parameter entry is perturbed by +-1e-5,
/// and the discrepancy metric per entry is
///     |analytic - central_difference| / max(|analytic|, |fd|, 1e-2)
/// which enforces relative error <= tol for gradients of usable size and
/// absolute error <= tol*1e-2 near zero.
namespace gradcheck {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kTolerance = 1e-6;

inline double entry_error(double analytic, double fd) {
    const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-2});
    return std::abs(analytic - fd) / scale;
}

inline double max_grad_err(const Matrix& analytic, const Matrix& fd) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.data.size(); ++i) {
        worst = std::max(worst, entry_error(analytic.data[i], fd.data[i]));
    }
    return worst;
}

/// Central difference of a scalar function with respect to every entry of a
/// tensor owned by the closure; `eval` must re-run the forward path.
inline Matrix central_diff(Matrix& theta, const std::function<double()>& eval,
                           double h = kFdStep) {
    Matrix fd = Matrix::zeros_like(theta);
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
        const double orig = theta.data[i];
        theta.data[i] = orig + h;
        const double up = eval();
        theta.data[i] = orig - h;
        const double down = eval();
        theta.data[i] = orig;
        fd.data[i] = (up - down) / (2.0 * h);
    }
    return fd;
}

struct LayerSizes {
    std::size_t batch = 2;
    std::size_t n_in = 3;
    std::size_t n_out = 4;
};

/// One random uGMM layer instance: analytic backward vs central differences
/// over mu, log_sigma, pi_logit and the inputs. Returns the worst entry
/// metric.
inline double audit_ugmm_layer(std::uint64_t seed, LayerSizes sz, bool with_mask) {
    Rng rng(seed);
    UgmmLayerParams p;
    p.n_in = sz.n_in;
    p.n_out = sz.n_out;
    p.mu = Matrix(sz.n_out, sz.n_in);
    p.log_sigma = Matrix(sz.n_out, sz.n_in);
    p.pi_logit = Matrix(sz.n_out, sz.n_in);
    for (double& v : p.mu.data) v = rng.normal();
    for (double& v : p.log_sigma.data) v = 1.4 * rng.uniform() - 0.7;
    for (double& v : p.pi_logit.data) v = 2.0 * rng.uniform() - 1.0;
    Matrix x(sz.batch, sz.n_in);
    for (double& v : x.data) v = 1.5 * rng.normal();
    Matrix d_a(sz.batch, sz.n_out);
    for (double& v : d_a.data) v = 2.0 * rng.uniform() - 1.0;

    ComponentMask mask;
    const ComponentMask* mp = nullptr;
    if (with_mask) {
        mask = sample_mask(DropoutSpec{0.35, true}, sz.n_out, sz.n_in, rng);
        mp = &mask;
    }

    const Matrix a = ugmm_forward(p, x, mp);
    const UgmmGrads g = ugmm_backward(p, x, a, d_a, mp);

    const auto objective = [&]() {
        const Matrix out = ugmm_forward(p, x, mp);
        double f = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) f += d_a.data[i] * out.data[i];
        return f;
    };

    double worst = 0.0;
    worst = std::max(worst, max_grad_err(g.d_mu, central_diff(p.mu, objective)));
    worst = std::max(worst, max_grad_err(g.d_log_sigma, central_diff(p.log_sigma, objective)));
    worst = std::max(worst, max_grad_err(g.d_pi_logit, central_diff(p.pi_logit, objective)));
    worst = std::max(worst, max_grad_err(g.d_input, central_diff(x, objective)));
    return worst;
}

/// One random whole-network instance. Dropout masks (component or unit) are
/// sampled once and held fixed while differencing. ffnn instances are
/// resampled if any hidden preactivation sits within 1e-4 of the relu kink,
/// where a central difference is meaningless.
inline double audit_network(std::uint64_t seed, ModelKind kind, bool with_dropout) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(seed + attempt * 0x9e37ULL);
        NetworkSpec spec;
        spec.kind = kind;
        spec.mode = TrainMode::discriminative;
        const std::size_t n_hidden = 1 + rng.next_below(2);
        spec.layer_widths.push_back(2 + rng.next_below(4));  // input
        for (std::size_t i = 0; i < n_hidden; ++i) spec.layer_widths.push_back(2 + rng.next_below(3));
        spec.layer_widths.push_back(2 + rng.next_below(2));  // classes
        if (with_dropout) spec.dropout.push_back({0, 0.3});
        spec.seed = seed;

        NetworkParams params = net_init(spec, rng);
        const std::size_t batch = 1 + rng.next_below(3);
        Matrix x(batch, spec.input_width());
        for (double& v : x.data) v = rng.normal();
        Matrix d_out(batch, spec.class_count());
        for (double& v : d_out.data) v = 2.0 * rng.uniform() - 1.0;

        const ForwardCache cache = net_forward(params, x, true, &rng);

        if (kind == ModelKind::ffnn) {
            bool near_kink = false;
            for (std::size_t l = 0; l + 1 < spec.layer_count() && !near_kink; ++l) {
                const Matrix s = detail::dense_affine(params.dense_layers[l], cache.inputs[l]);
                for (double v : s.data) {
                    if (std::abs(v) < 1e-4) {
                        near_kink = true;
                        break;
                    }
                }
            }
            if (near_kink) continue;
        }

        const NetworkGrads grads = net_backward(params, cache, d_out);

        const auto objective = [&]() {
            const ForwardCache c = net_forward_masked(params, x, cache.masks);
            double f = 0.0;
            for (std::size_t i = 0; i < c.outputs.data.size(); ++i) {
                f += d_out.data[i] * c.outputs.data[i];
            }
            return f;
        };

        double worst = 0.0;
        std::size_t tensor_idx = 0;
        params.for_each_tensor([&](Matrix& theta) {
            const Matrix fd = central_diff(theta, objective);
            worst = std::max(worst, max_grad_err(grads.tensors[tensor_idx], fd));
            ++tensor_idx;
        });
        return worst;
    }
}

struct AuditSummary {
    double max_err = 0.0;
    std::size_t instances = 0;
    bool pass() const { return max_err <= kTolerance; }
};

/// The full audit: layer-level and whole-network instances, with and without
/// dropout masks, across a seeded family of shapes.
inline AuditSummary run_full_audit(std::uint64_t seed) {
    AuditSummary summary;
    auto record = [&summary](double err) {
        summary.max_err = std::max(summary.max_err, err);
        summary.instances += 1;
    };
    // 80 layer instances over a small grid of shapes.
    for (std::uint64_t i = 0; i < 40; ++i) {
        Rng shape_rng(seed ^ (0xabcdULL + i));
        LayerSizes sz;
        sz.batch = 1 + shape_rng.next_below(3);
        sz.n_in = 1 + shape_rng.next_below(5);
        sz.n_out = 1 + shape_rng.next_below(5);
        record(audit_ugmm_layer(seed + i, sz, false));
        record(audit_ugmm_layer(seed + 1000 + i, sz, true));
    }
    // 48 whole-network instances split across kinds and dropout settings.
    for (std::uint64_t i = 0; i < 12; ++i) {
        record(audit_network(seed + 2000 + i, ModelKind::ugmm, false));
        record(audit_network(seed + 3000 + i, ModelKind::ugmm, true));
        record(audit_network(seed + 4000 + i, ModelKind::ffnn, false));
        record(audit_network(seed + 5000 + i, ModelKind::ffnn, true));
    }
    return summary;
}

}  // namespace gradcheck
}  // namespace ugmm

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ugmm/errors.hpp"
#include "ugmm/matrix.hpp"
#include "ugmm/numeric.hpp"
#include "ugmm/rng.hpp"
#include "ugmm/ugmm_layer.hpp"

namespace ugmm {

enum class ModelKind : std::uint8_t { ugmm = 0, ffnn = 1 };
enum class TrainMode : std::uint8_t { discriminative = 0, generative = 1 };

struct DropoutPlacement {
    std::size_t layer = 0;  // index into the layer sequence; hidden layers only
    double p = 0.0;
};

/// Architecture description. layer_widths lists input, hidden... and output
/// widths; layer i maps width[i] -> width[i+1]. The output width is the
/// class count.
struct NetworkSpec {
    ModelKind kind = ModelKind::ugmm;
    TrainMode mode = TrainMode::discriminative;
    std::vector<std::size_t> layer_widths;
    std::vector<DropoutPlacement> dropout;
    std::uint64_t seed = 0;

    std::size_t layer_count() const { return layer_widths.empty() ? 0 : layer_widths.size() - 1; }
    std::size_t input_width() const { return layer_widths.front(); }
    std::size_t class_count() const { return layer_widths.back(); }

    void validate() const {
        if (layer_widths.size() < 2) {
            throw ConfigError("layer_widths: need at least input and output widths");
        }
        for (std::size_t w : layer_widths) {
            if (w == 0) throw ConfigError("layer_widths: widths must be positive");
        }
        for (const auto& d : dropout) {
            // Hidden layers are 0 .. layer_count()-2; the last layer is the output.
            if (d.layer >= layer_count() - 1) {
                throw ConfigError("dropout: layer index " + std::to_string(d.layer) +
                                  " does not reference a hidden layer");
            }
            if (!(d.p >= 0.0 && d.p < 1.0)) {
                throw ConfigError("dropout: p must be in [0,1)");
            }
        }
    }

    /// Drop probability configured for a layer, if any.
    std::optional<double> dropout_at(std::size_t layer) const {
        for (const auto& d : dropout) {
            if (d.layer == layer) return d.p;
        }
        return std::nullopt;
    }
};

/// Baseline affine layer, out x in weights plus bias (stored 1 x out so all
/// parameter tensors are matrices).
struct DenseLayerParams {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    Matrix w;  // n_out x n_in
    Matrix b;  // 1 x n_out

    /// Glorot-uniform weights, W ~ Uniform(+-sqrt(6/(fan_in+fan_out))), b = 0.
    static DenseLayerParams init(std::size_t n_out, std::size_t n_in, Rng& rng) {
        DenseLayerParams p;
        p.n_in = n_in;
        p.n_out = n_out;
        p.w = Matrix(n_out, n_in);
        const double limit = std::sqrt(6.0 / static_cast<double>(n_in + n_out));
        for (double& v : p.w.data) v = (2.0 * rng.uniform() - 1.0) * limit;
        p.b = Matrix(1, n_out);
        return p;
    }
};

/// The full parameter set: one entry per layer in the vector matching the
/// spec's kind. Parameter tensors are ordered, per layer, as
/// (mu, log_sigma, pi_logit) for uGMM layers and (w, b) for dense layers;
/// the optimizer and the checkpoint format both rely on this order.
struct NetworkParams {
    NetworkSpec spec;
    std::vector<UgmmLayerParams> ugmm_layers;
    std::vector<DenseLayerParams> dense_layers;

    std::size_t layer_count() const { return spec.layer_count(); }

    /// Visit every parameter tensor in declaration order.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        for (std::size_t l = 0; l < layer_count(); ++l) {
            if (spec.kind == ModelKind::ugmm) {
                fn(ugmm_layers[l].mu);
                fn(ugmm_layers[l].log_sigma);
                fn(ugmm_layers[l].pi_logit);
            } else {
                fn(dense_layers[l].w);
                fn(dense_layers[l].b);
            }
        }
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<NetworkParams*>(this)->for_each_tensor(
            [&fn](Matrix& m) { fn(static_cast<const Matrix&>(m)); });
    }
};

struct DenseGrads {
    Matrix d_w;
    Matrix d_b;
    Matrix d_input;
};

struct NetworkGrads {
    std::vector<Matrix> tensors;  // aligned with NetworkParams::for_each_tensor order

    static NetworkGrads zeros_like(const NetworkParams& params) {
        NetworkGrads g;
        params.for_each_tensor([&g](const Matrix& m) { g.tensors.push_back(Matrix::zeros_like(m)); });
        return g;
    }
};

/// Masks drawn for one training forward pass; index is the layer.
struct NetMasks {
    std::vector<ComponentMask> component;  // ugmm kind; empty mask = no dropout at layer
    std::vector<Matrix> unit;              // ffnn kind; scaled keep masks, empty = none
};

struct ForwardCache {
    std::vector<Matrix> inputs;  // inputs[l] = input to layer l; inputs[0] is the batch
    Matrix outputs;              // B x C root activations
    NetMasks masks;
};

inline NetworkParams net_init(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    NetworkParams p;
    p.spec = spec;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const std::size_t n_in = spec.layer_widths[l];
        const std::size_t n_out = spec.layer_widths[l + 1];
        if (spec.kind == ModelKind::ugmm) {
            p.ugmm_layers.push_back(UgmmLayerParams::init(n_out, n_in, rng));
        } else {
            p.dense_layers.push_back(DenseLayerParams::init(n_out, n_in, rng));
        }
    }
    return p;
}

namespace detail {

inline Matrix dense_affine(const DenseLayerParams& p, const Matrix& x) {
    Matrix y = matmul(x, transpose(p.w));
    for (std::size_t b = 0; b < y.rows; ++b) {
        for (std::size_t j = 0; j < y.cols; ++j) y(b, j) += p.b(0, j);
    }
    return y;
}

}  // namespace detail

/// Forward pass with fixed masks (deterministic replay). Pass empty NetMasks
/// for inference. uGMM layers consume the previous layer's log-density
/// activations directly; dense layers apply affine + relu on hidden layers
/// and affine only at the output, with inverted-scaling unit dropout where
/// masked.
inline ForwardCache net_forward_masked(const NetworkParams& params, const Matrix& x,
                                       NetMasks masks) {
    if (x.cols != params.spec.input_width()) {
        throw std::invalid_argument("net_forward: input has " + std::to_string(x.cols) +
                                    " features, spec expects " +
                                    std::to_string(params.spec.input_width()));
    }
    const std::size_t n_layers = params.layer_count();
    ForwardCache cache;
    cache.masks = std::move(masks);
    if (params.spec.kind == ModelKind::ugmm) {
        cache.masks.component.resize(n_layers);
    } else {
        cache.masks.unit.resize(n_layers);
    }
    cache.inputs.reserve(n_layers);
    cache.inputs.push_back(x);
    Matrix cur = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        Matrix out;
        if (params.spec.kind == ModelKind::ugmm) {
            const ComponentMask& m = cache.masks.component[l];
            out = ugmm_forward(params.ugmm_layers[l], cur, m.empty() ? nullptr : &m);
        } else {
            out = detail::dense_affine(params.dense_layers[l], cur);
            if (l + 1 < n_layers) {
                out = relu(out);
                const Matrix& um = cache.masks.unit[l];
                if (um.size() > 0) {
                    require_shape(um, out.rows, out.cols, "net_forward: unit mask");
                    for (std::size_t i = 0; i < out.data.size(); ++i) {
                        out.data[i] *= um.data[i];
                    }
                }
            }
        }
        if (l + 1 < n_layers) cache.inputs.push_back(out);
        cur = std::move(out);
    }
    cache.outputs = std::move(cur);
    return cache;
}

/// Training entry point: samples dropout masks from rng when training, in
/// layer order (uGMM component masks row-major; ffnn unit masks row-major
/// over the batch). Inference (training=false) never touches rng.
inline ForwardCache net_forward(const NetworkParams& params, const Matrix& x, bool training,
                                Rng* rng) {
    NetMasks masks;
    const std::size_t n_layers = params.layer_count();
    if (params.spec.kind == ModelKind::ugmm) masks.component.resize(n_layers);
    else masks.unit.resize(n_layers);
    if (training) {
        if (!rng) throw std::invalid_argument("net_forward: training requires an rng");
        std::size_t width = x.rows;  // batch
        for (std::size_t l = 0; l < n_layers; ++l) {
            const auto p = params.spec.dropout_at(l);
            if (!p || *p == 0.0) continue;
            if (params.spec.kind == ModelKind::ugmm) {
                const auto& layer = params.ugmm_layers[l];
                masks.component[l] =
                    sample_mask(DropoutSpec{*p, true}, layer.n_out, layer.n_in, *rng);
            } else {
                const std::size_t n_out = params.spec.layer_widths[l + 1];
                Matrix um(width, n_out);
                const double scale = 1.0 / (1.0 - *p);
                for (double& v : um.data) v = rng->bernoulli(1.0 - *p) ? scale : 0.0;
                masks.unit[l] = std::move(um);
            }
        }
    }
    return net_forward_masked(params, x, std::move(masks));
}

/// Layer-by-layer reverse sweep over a cached forward pass.
inline NetworkGrads net_backward(const NetworkParams& params, const ForwardCache& cache,
                                 const Matrix& d_out) {
    const std::size_t n_layers = params.layer_count();
    require_shape(d_out, cache.outputs.rows, cache.outputs.cols, "net_backward: d_out");
    if (cache.inputs.size() != n_layers) {
        throw std::invalid_argument("net_backward: cache does not match network");
    }
    NetworkGrads grads;
    grads.tensors.resize(n_layers * (params.spec.kind == ModelKind::ugmm ? 3 : 2));
    Matrix d = d_out;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& input = cache.inputs[l];
        const Matrix& output = (l + 1 < n_layers) ? cache.inputs[l + 1] : cache.outputs;
        if (params.spec.kind == ModelKind::ugmm) {
            const ComponentMask& m = cache.masks.component[l];
            UgmmGrads g = ugmm_backward(params.ugmm_layers[l], input, output, d,
                                        m.empty() ? nullptr : &m);
            grads.tensors[l * 3 + 0] = std::move(g.d_mu);
            grads.tensors[l * 3 + 1] = std::move(g.d_log_sigma);
            grads.tensors[l * 3 + 2] = std::move(g.d_pi_logit);
            d = std::move(g.d_input);
        } else {
            Matrix ds = d;
            if (l + 1 < n_layers) {
                // Chain through unit dropout and relu. output is the
                // post-relu, post-dropout activation: positive iff the unit
                // was kept and its preactivation was positive.
                const Matrix& um = cache.masks.unit[l];
                for (std::size_t i = 0; i < ds.data.size(); ++i) {
                    const double pass = output.data[i] > 0.0 ? 1.0 : 0.0;
                    ds.data[i] *= pass * (um.size() > 0 ? um.data[i] : 1.0);
                }
            }
            Matrix d_w = matmul(transpose(ds), input);
            Matrix d_b(1, ds.cols);
            for (std::size_t b = 0; b < ds.rows; ++b) {
                for (std::size_t j = 0; j < ds.cols; ++j) d_b(0, j) += ds(b, j);
            }
            d = matmul(ds, params.dense_layers[l].w);
            grads.tensors[l * 2 + 0] = std::move(d_w);
            grads.tensors[l * 2 + 1] = std::move(d_b);
        }
    }
    return grads;
}

/// Argmax prediction per row; ties break toward the lowest class index.
/// Valid for both modes: discriminative softmax and generative posterior
/// inference share the same argmax over root activations.
inline std::vector<int> predict(const Matrix& outputs, TrainMode /*mode*/) {
    std::vector<int> labels(outputs.rows);
    for (std::size_t b = 0; b < outputs.rows; ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < outputs.cols; ++c) {
            if (outputs(b, c) > outputs(b, best)) best = c;
        }
        labels[b] = static_cast<int>(best);
    }
    return labels;
}

}  // namespace ugmm

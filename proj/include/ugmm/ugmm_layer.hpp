#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ugmm/errors.hpp"
#include "ugmm/matrix.hpp"
#include "ugmm/numeric.hpp"
#include "ugmm/rng.hpp"

namespace ugmm {

/// Parameters of one uGMM layer: M neurons, each a univariate Gaussian
/// mixture with N components (one per input of the previous layer).
///
/// Variances are stored as log standard deviations (sigma = exp(log_sigma)),
/// so they are strictly positive by construction. Mixing coefficients are
/// stored as unconstrained logits; pi[j,:] = softmax(pi_logit[j,:]) sums to 1
/// by construction.
struct UgmmLayerParams {
    std::size_t n_in = 0;   // N: components per neuron = previous-layer width
    std::size_t n_out = 0;  // M: neurons in this layer
    Matrix mu;              // M x N means
    Matrix log_sigma;       // M x N log standard deviations
    Matrix pi_logit;        // M x N mixing logits

    /// mu ~ Normal(0,1) drawn row-major, log_sigma = 0, pi_logit = 0
    /// (uniform mixture). Inputs are expected to be of order 1.
    static UgmmLayerParams init(std::size_t n_out, std::size_t n_in, Rng& rng) {
        UgmmLayerParams p;
        p.n_in = n_in;
        p.n_out = n_out;
        p.mu = Matrix(n_out, n_in);
        for (double& m : p.mu.data) m = rng.normal();
        p.log_sigma = Matrix(n_out, n_in, 0.0);
        p.pi_logit = Matrix(n_out, n_in, 0.0);
        return p;
    }
};

struct DropoutSpec {
    double p = 0.0;  // drop probability, in [0, 1)
    bool training = false;
};

/// Bernoulli keep mask over mixture components. Invariant: every row keeps
/// at least one component (enforced by sample_mask's repair rule).
struct ComponentMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> keep;

    ComponentMask() = default;
    ComponentMask(std::size_t r, std::size_t c, std::uint8_t fill = 1)
        : rows(r), cols(c), keep(r * c, fill) {}

    std::uint8_t at(std::size_t j, std::size_t k) const { return keep[j * cols + k]; }
    std::uint8_t& at(std::size_t j, std::size_t k) { return keep[j * cols + k]; }
    bool empty() const { return keep.empty(); }
};

struct UgmmGrads {
    Matrix d_mu;         // M x N
    Matrix d_log_sigma;  // M x N
    Matrix d_pi_logit;   // M x N
    Matrix d_input;      // B x N
};

namespace detail {

// Per-component quantities shared by forward, backward and responsibilities:
//   log_norm[j,k] = ln pi[j,k] - 0.5*ln(2*pi) - log_sigma[j,k]
//   inv_var[j,k]  = exp(-2*log_sigma[j,k])
// so that ln pi + gauss_logpdf(x) = log_norm - 0.5*(x-mu)^2*inv_var.
struct UgmmPrep {
    Matrix log_norm;
    Matrix inv_var;
    Matrix pi;
};

inline UgmmPrep prep(const UgmmLayerParams& p) {
    UgmmPrep q;
    q.log_norm = Matrix(p.n_out, p.n_in);
    q.inv_var = Matrix(p.n_out, p.n_in);
    q.pi = Matrix(p.n_out, p.n_in);
    std::vector<double> ln_pi(p.n_in);
    for (std::size_t j = 0; j < p.n_out; ++j) {
        const auto logits = p.pi_logit.row(j);
        const double lse = logsumexp(logits);
        for (std::size_t k = 0; k < p.n_in; ++k) {
            ln_pi[k] = logits[k] - lse;
            q.pi(j, k) = std::exp(ln_pi[k]);
            q.log_norm(j, k) = ln_pi[k] - 0.5 * kLogTwoPi - p.log_sigma(j, k);
            q.inv_var(j, k) = std::exp(-2.0 * p.log_sigma(j, k));
        }
    }
    return q;
}

inline void check_mask(const ComponentMask* mask, const UgmmLayerParams& p) {
    if (mask && (mask->rows != p.n_out || mask->cols != p.n_in)) {
        throw std::invalid_argument("ugmm: mask shape does not match layer");
    }
}

}  // namespace detail

/// Forward pass: a[b,j] = ln sum over kept k of pi[j,k]*N(x[b,k]; mu, sigma^2),
/// evaluated with the log-sum-exp trick. Component k is evaluated at the k-th
/// input of the sample. Dropped components are excluded from the sum without
/// renormalizing the surviving pi.
inline Matrix ugmm_forward(const UgmmLayerParams& p, const Matrix& x,
                           const ComponentMask* mask = nullptr) {
    if (x.cols != p.n_in) {
        throw std::invalid_argument("ugmm_forward: input has " + std::to_string(x.cols) +
                                    " columns, layer expects " + std::to_string(p.n_in));
    }
    detail::check_mask(mask, p);
    const auto q = detail::prep(p);
    const std::size_t batch = x.rows;
    Matrix a(batch, p.n_out);
#pragma omp parallel for schedule(static) if (batch * p.n_out * p.n_in > (1u << 14))
    for (long long jj = 0; jj < static_cast<long long>(p.n_out); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        std::vector<double> t(p.n_in);
        const double* log_norm = q.log_norm.data.data() + j * p.n_in;
        const double* inv_var = q.inv_var.data.data() + j * p.n_in;
        const double* mu = p.mu.data.data() + j * p.n_in;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xb = x.data.data() + b * x.cols;
            double m = kNegInf;
            bool any = false;
            for (std::size_t k = 0; k < p.n_in; ++k) {
                if (mask && !mask->at(j, k)) continue;
                const double d = xb[k] - mu[k];
                t[k] = log_norm[k] - 0.5 * d * d * inv_var[k];
                m = std::max(m, t[k]);
                any = true;
            }
            if (!any) throw NumericError("ugmm_forward: neuron with no kept components");
            double s = 0.0;
            for (std::size_t k = 0; k < p.n_in; ++k) {
                if (mask && !mask->at(j, k)) continue;
                s += std::exp(t[k] - m);
            }
            a(b, j) = m + std::log(s);
        }
    }
    return a;
}

/// Posterior responsibilities for one sample x:
/// r[j,k] = pi[j,k]*N(x_k; mu, sigma^2) / P_j for kept k, else 0.
/// Each row sums to 1 over the kept components.
inline Matrix ugmm_responsibilities(const UgmmLayerParams& p, std::span<const double> x,
                                    const ComponentMask* mask = nullptr) {
    if (x.size() != p.n_in) {
        throw std::invalid_argument("ugmm_responsibilities: input size mismatch");
    }
    detail::check_mask(mask, p);
    Matrix xm(1, p.n_in);
    std::copy(x.begin(), x.end(), xm.data.begin());
    const Matrix a = ugmm_forward(p, xm, mask);
    const auto q = detail::prep(p);
    Matrix r(p.n_out, p.n_in);
    for (std::size_t j = 0; j < p.n_out; ++j) {
        for (std::size_t k = 0; k < p.n_in; ++k) {
            if (mask && !mask->at(j, k)) continue;
            const double d = x[k] - p.mu(j, k);
            const double t = q.log_norm(j, k) - 0.5 * d * d * q.inv_var(j, k);
            r(j, k) = std::exp(t - a(0, j));
        }
    }
    return r;
}

/// Reverse pass. With r the responsibilities of sample b and
/// z = (x_k - mu)/sigma:
///   da/dmu        = r * z / sigma
///   da/dlog_sigma = r * (z^2 - 1)
///   da/dpi_logit  = r - pi          (r = 0 for dropped components)
///   da/dx_k       = -r * z / sigma summed over neurons j
/// accumulated over the batch weighted by dA.
///
/// Accumulation runs over fixed-size neuron chunks with a fixed merge order,
/// so results are bit-identical for any thread count.
inline UgmmGrads ugmm_backward(const UgmmLayerParams& p, const Matrix& x, const Matrix& a,
                               const Matrix& d_a, const ComponentMask* mask = nullptr) {
    if (x.cols != p.n_in) throw std::invalid_argument("ugmm_backward: input width mismatch");
    require_shape(a, x.rows, p.n_out, "ugmm_backward: activations");
    require_shape(d_a, x.rows, p.n_out, "ugmm_backward: upstream gradient");
    detail::check_mask(mask, p);

    const auto q = detail::prep(p);
    const std::size_t batch = x.rows;

    UgmmGrads g;
    g.d_mu = Matrix(p.n_out, p.n_in);
    g.d_log_sigma = Matrix(p.n_out, p.n_in);
    g.d_pi_logit = Matrix(p.n_out, p.n_in);
    g.d_input = Matrix(batch, p.n_in);

    constexpr std::size_t kChunk = 8;  // neurons per chunk; fixed for determinism
    const std::size_t n_chunks = (p.n_out + kChunk - 1) / kChunk;
    std::vector<Matrix> dx_part(n_chunks);

#pragma omp parallel for schedule(static) if (batch * p.n_out * p.n_in > (1u << 14))
    for (long long cc = 0; cc < static_cast<long long>(n_chunks); ++cc) {
        const auto c = static_cast<std::size_t>(cc);
        Matrix& dx = dx_part[c];
        dx = Matrix(batch, p.n_in);
        const std::size_t j_end = std::min((c + 1) * kChunk, p.n_out);
        for (std::size_t j = c * kChunk; j < j_end; ++j) {
            const double* log_norm = q.log_norm.data.data() + j * p.n_in;
            const double* inv_var = q.inv_var.data.data() + j * p.n_in;
            const double* mu = p.mu.data.data() + j * p.n_in;
            double* dmu = g.d_mu.data.data() + j * p.n_in;
            double* dls = g.d_log_sigma.data.data() + j * p.n_in;
            double* dpi = g.d_pi_logit.data.data() + j * p.n_in;
            double sum_da = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double gb = d_a(b, j);
                sum_da += gb;
                if (gb == 0.0) continue;
                const double* xb = x.data.data() + b * x.cols;
                double* dxb = dx.data.data() + b * p.n_in;
                const double ab = a(b, j);
                for (std::size_t k = 0; k < p.n_in; ++k) {
                    if (mask && !mask->at(j, k)) continue;
                    const double d = xb[k] - mu[k];
                    const double t = log_norm[k] - 0.5 * d * d * inv_var[k];
                    const double r = std::exp(t - ab);
                    const double pull = r * d * inv_var[k];  // r*z/sigma
                    dmu[k] += gb * pull;
                    dls[k] += gb * r * (d * d * inv_var[k] - 1.0);
                    dpi[k] += gb * r;
                    dxb[k] -= gb * pull;
                }
            }
            // Softmax coupling: every logit sees -pi * sum_b dA, dropped ones too.
            const double* pi = q.pi.data.data() + j * p.n_in;
            for (std::size_t k = 0; k < p.n_in; ++k) dpi[k] -= pi[k] * sum_da;
        }
    }

    // Merge the per-chunk input gradients in chunk order.
    for (std::size_t c = 0; c < n_chunks; ++c) {
        for (std::size_t i = 0; i < g.d_input.data.size(); ++i) {
            g.d_input.data[i] += dx_part[c].data[i];
        }
    }
    return g;
}

/// Independent Bernoulli(1-p) keep mask per component, drawn row-major.
/// Any all-dropped row is repaired by force-keeping one uniformly chosen
/// component, since a fully dropped mixture has log-density -inf.
inline ComponentMask sample_mask(const DropoutSpec& spec, std::size_t n_out, std::size_t n_in,
                                 Rng& rng) {
    if (!spec.training) throw std::invalid_argument("sample_mask: requires training mode");
    if (!(spec.p >= 0.0 && spec.p < 1.0)) {
        throw std::invalid_argument("sample_mask: p must be in [0,1)");
    }
    ComponentMask m(n_out, n_in, 0);
    for (std::size_t j = 0; j < n_out; ++j) {
        bool any = false;
        for (std::size_t k = 0; k < n_in; ++k) {
            const bool keep = rng.bernoulli(1.0 - spec.p);
            m.at(j, k) = keep ? 1 : 0;
            any = any || keep;
        }
        if (!any) m.at(j, rng.next_below(n_in)) = 1;
    }
    return m;
}

/// Mixture density of one neuron swept over a grid of evaluation points:
/// P_j(y) = sum_k pi[j,k] * N(y; mu[j,k], sigma^2[j,k]).
inline std::vector<double> density_curve(const UgmmLayerParams& p, std::size_t neuron,
                                         std::span<const double> grid) {
    if (neuron >= p.n_out) throw std::out_of_range("density_curve: neuron index out of range");
    const auto logits = p.pi_logit.row(neuron);
    const std::vector<double> pi = softmax(logits);
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t k = 0; k < p.n_in; ++k) {
        const double mean = p.mu(neuron, k);
        const double var = std::exp(2.0 * p.log_sigma(neuron, k));
        for (std::size_t i = 0; i < grid.size(); ++i) {
            out[i] += pi[k] * std::exp(gauss_logpdf(grid[i], mean, var));
        }
    }
    return out;
}

}  // namespace ugmm

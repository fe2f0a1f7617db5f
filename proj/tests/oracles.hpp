#pragma once

// Test-side oracles, independent of the library's evaluation path: direct
// summation in extended precision, no log-space tricks.

#include <cmath>

#include "ugmm/matrix.hpp"
#include "ugmm/rng.hpp"
#include "ugmm/ugmm_layer.hpp"

namespace oracles {

inline ugmm::Matrix naive_forward(const ugmm::UgmmLayerParams& p, const ugmm::Matrix& x,
                                  const ugmm::ComponentMask* mask) {
    ugmm::Matrix a(x.rows, p.n_out);
    const long double two_pi = 6.283185307179586476925286766559L;
    for (std::size_t b = 0; b < x.rows; ++b) {
        for (std::size_t j = 0; j < p.n_out; ++j) {
            long double z = 0.0L;
            for (std::size_t k = 0; k < p.n_in; ++k) {
                z += expl(static_cast<long double>(p.pi_logit(j, k)));
            }
            long double sum = 0.0L;
            for (std::size_t k = 0; k < p.n_in; ++k) {
                if (mask && !mask->at(j, k)) continue;
                const long double pi_k = expl(static_cast<long double>(p.pi_logit(j, k))) / z;
                const long double sigma = expl(static_cast<long double>(p.log_sigma(j, k)));
                const long double var = sigma * sigma;
                const long double d = static_cast<long double>(x(b, k)) -
                                      static_cast<long double>(p.mu(j, k));
                sum += pi_k * expl(-d * d / (2.0L * var)) / sqrtl(two_pi * var);
            }
            a(b, j) = static_cast<double>(logl(sum));
        }
    }
    return a;
}

inline ugmm::UgmmLayerParams random_params(std::size_t n_out, std::size_t n_in, ugmm::Rng& rng) {
    ugmm::UgmmLayerParams p;
    p.n_in = n_in;
    p.n_out = n_out;
    p.mu = ugmm::Matrix(n_out, n_in);
    p.log_sigma = ugmm::Matrix(n_out, n_in);
    p.pi_logit = ugmm::Matrix(n_out, n_in);
    for (auto& v : p.mu.data) v = 2.0 * rng.normal();
    for (auto& v : p.log_sigma.data) v = 1.6 * rng.uniform() - 0.8;
    for (auto& v : p.pi_logit.data) v = 2.0 * rng.uniform() - 1.0;
    return p;
}

}  // namespace oracles

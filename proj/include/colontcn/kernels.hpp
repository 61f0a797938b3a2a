#pragma once

#include <cstdint>
#include <vector>

#include "colontcn/rng.hpp"
#include "colontcn/seq.hpp"

namespace ctcn {

// Parameters of one dilated acausal 1-D convolution. The learnable tensors
// are direction vectors v, per-output-channel gains g (only when weight
// normalization is enabled) and biases b. The effective kernel is
// w = g * v / ||v|| per output channel with weight norm, otherwise w = v.
struct ConvParams {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 1;    // odd
    int dilation = 1;  // frames between taps
    bool weight_norm = false;

    std::vector<double> v;  // out_ch * in_ch * kernel, [(co*in_ch + ci)*kernel + j]
    std::vector<double> g;  // out_ch (empty when !weight_norm)
    std::vector<double> b;  // out_ch

    ConvParams() = default;
    ConvParams(int in_ch, int out_ch, int kernel, int dilation, bool weight_norm);

    std::size_t at(int co, int ci, int j) const {
        return (std::size_t(co) * in_ch + ci) * kernel + j;
    }
    std::size_t param_count() const { return v.size() + g.size() + b.size(); }

    // ||v[co]|| over (ci, j).
    double direction_norm(int co) const;

    // Effective kernel in tap-major layout [j][ci][co], convenient for the
    // frame loops below. Result has kernel*in_ch*out_ch entries.
    std::vector<double> effective_kernel_tap_major() const;
};

// Gradients for one convolution, shapes congruent with ConvParams.
struct ConvGrads {
    std::vector<double> v, g, b;

    void resize_like(const ConvParams& p) {
        v.assign(p.v.size(), 0.0);
        g.assign(p.g.size(), 0.0);
        b.assign(p.b.size(), 0.0);
    }
    void zero() {
        std::fill(v.begin(), v.end(), 0.0);
        std::fill(g.begin(), g.end(), 0.0);
        std::fill(b.begin(), b.end(), 0.0);
    }
};

// out[t, co] = b[co] + sum_{ci,j} w[co,ci,j] * x[t + (j - (k-1)/2)*dilation, ci]
// with out-of-range frames treated as zero, so the output always has exactly
// as many frames as the input.
SeqMatrix conv1d_forward(const SeqMatrix& x, const ConvParams& p);

// Adjoint of conv1d_forward, including the weight-norm chain rule. Gradients
// accumulate into `grads`; grad_x is returned (same shape as x).
SeqMatrix conv1d_backward(const SeqMatrix& x, const ConvParams& p, const SeqMatrix& grad_out,
                          ConvGrads& grads);

SeqMatrix relu(const SeqMatrix& x);
// Subgradient at 0 is 0: gradient passes only where x > 0.
SeqMatrix relu_backward(const SeqMatrix& x, const SeqMatrix& grad_out);

// Inverted dropout: each element is zeroed with probability `rate` and the
// survivors are scaled by 1/(1-rate), so inference is the identity. The
// returned byte mask (1 = kept) makes the backward pass exact.
SeqMatrix dropout(const SeqMatrix& x, double rate, RngStream& rng, bool training,
                  std::vector<std::uint8_t>& mask_out);
SeqMatrix dropout_backward(const SeqMatrix& grad_out, double rate,
                           const std::vector<std::uint8_t>& mask);

// Row-wise softmax / log-softmax with per-row max subtraction.
SeqMatrix softmax_rows(const SeqMatrix& x);
SeqMatrix log_softmax_rows(const SeqMatrix& x);

// Given dL/d(log_softmax(z)) produce dL/dz.
SeqMatrix log_softmax_backward(const SeqMatrix& probs, const SeqMatrix& grad_logp);
// Given dL/d(softmax(z)) produce dL/dz.
SeqMatrix softmax_backward(const SeqMatrix& probs, const SeqMatrix& grad_probs);

}  // namespace ctcn

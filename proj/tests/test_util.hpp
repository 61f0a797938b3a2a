#pragma once

#include <vector>

#include "colontcn/kernels.hpp"
#include "colontcn/rng.hpp"
#include "colontcn/seq.hpp"

namespace testutil {

inline ctcn::SeqMatrix random_matrix(std::size_t rows, std::size_t cols, ctcn::RngStream& rng,
                                     double lo = -1.0, double hi = 1.0) {
    ctcn::SeqMatrix m(rows, cols);
    for (double& v : m.raw()) v = rng.next_uniform(lo, hi);
    return m;
}

inline ctcn::ConvParams random_conv(int in_ch, int out_ch, int kernel, int dilation,
                                    bool weight_norm, ctcn::RngStream& rng) {
    ctcn::ConvParams p(in_ch, out_ch, kernel, dilation, weight_norm);
    for (double& v : p.v) v = rng.next_uniform(-1.0, 1.0);
    for (double& v : p.b) v = rng.next_uniform(-0.5, 0.5);
    if (weight_norm)
        for (double& v : p.g) v = rng.next_uniform(0.5, 1.5);
    return p;
}

// Independent direct-summation convolution oracle: plain quadruple loop over
// the definition, kept free of the library's layout tricks.
inline ctcn::SeqMatrix conv_oracle(const ctcn::SeqMatrix& x, const ctcn::ConvParams& p) {
    const long T = long(x.rows());
    const int center = (p.kernel - 1) / 2;
    ctcn::SeqMatrix out(x.rows(), std::size_t(p.out_ch));
    for (long t = 0; t < T; ++t) {
        for (int co = 0; co < p.out_ch; ++co) {
            double scale = 1.0;
            if (p.weight_norm) scale = p.g[std::size_t(co)] / p.direction_norm(co);
            double acc = p.b[std::size_t(co)];
            for (int ci = 0; ci < p.in_ch; ++ci) {
                for (int j = 0; j < p.kernel; ++j) {
                    const long s = t + long(j - center) * p.dilation;
                    if (s < 0 || s >= T) continue;
                    acc += scale * p.v[p.at(co, ci, j)] * x(std::size_t(s), std::size_t(ci));
                }
            }
            out(std::size_t(t), std::size_t(co)) = acc;
        }
    }
    return out;
}

inline double max_abs_diff(const ctcn::SeqMatrix& a, const ctcn::SeqMatrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
    return worst;
}

}  // namespace testutil

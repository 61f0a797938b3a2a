#include "colontcn/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace ctcn {

ConvParams::ConvParams(int in_ch_, int out_ch_, int kernel_, int dilation_, bool weight_norm_)
    : in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), dilation(dilation_),
      weight_norm(weight_norm_) {
    require(in_ch >= 1 && out_ch >= 1, "conv: channel counts must be positive");
    require(kernel >= 1 && kernel % 2 == 1, "conv: kernel must be odd and positive");
    require(dilation >= 1, "conv: dilation must be >= 1");
    v.assign(std::size_t(out_ch) * in_ch * kernel, 0.0);
    if (weight_norm) g.assign(out_ch, 0.0);
    b.assign(out_ch, 0.0);
}

double ConvParams::direction_norm(int co) const {
    const std::size_t n = std::size_t(in_ch) * kernel;
    const double* p = v.data() + std::size_t(co) * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i] * p[i];
    return std::sqrt(s);
}

std::vector<double> ConvParams::effective_kernel_tap_major() const {
    std::vector<double> w(v.size());
    std::vector<double> scale(out_ch, 1.0);
    if (weight_norm) {
        for (int co = 0; co < out_ch; ++co) {
            double n = direction_norm(co);
            require(n > 0.0, "conv: zero direction vector with weight norm enabled");
            scale[co] = g[co] / n;
        }
    }
    for (int j = 0; j < kernel; ++j)
        for (int ci = 0; ci < in_ch; ++ci)
            for (int co = 0; co < out_ch; ++co)
                w[(std::size_t(j) * in_ch + ci) * out_ch + co] = scale[co] * v[at(co, ci, j)];
    return w;
}

SeqMatrix conv1d_forward(const SeqMatrix& x, const ConvParams& p) {
    require(int(x.cols()) == p.in_ch, "conv1d_forward: input channel mismatch");
    require(x.rows() >= 1, "conv1d_forward: empty input");
    if (!x.all_finite()) throw NumericError("conv1d_forward: non-finite input");

    const long T = long(x.rows());
    const int k = p.kernel, d = p.dilation, ci_n = p.in_ch, co_n = p.out_ch;
    const int c = (k - 1) / 2;
    const std::vector<double> w = p.effective_kernel_tap_major();

    SeqMatrix out(x.rows(), std::size_t(co_n));
    for (long t = 0; t < T; ++t) {
        double* orow = out.row(std::size_t(t));
        for (int co = 0; co < co_n; ++co) orow[co] = p.b[std::size_t(co)];
        for (int j = 0; j < k; ++j) {
            const long s = t + long(j - c) * d;
            if (s < 0 || s >= T) continue;
            const double* xrow = x.row(std::size_t(s));
            const double* wj = w.data() + std::size_t(j) * ci_n * co_n;
            for (int ci = 0; ci < ci_n; ++ci) {
                const double xv = xrow[ci];
                if (xv == 0.0) continue;
                const double* wrow = wj + std::size_t(ci) * co_n;
                for (int co = 0; co < co_n; ++co) orow[co] += wrow[co] * xv;
            }
        }
    }
    return out;
}

SeqMatrix conv1d_backward(const SeqMatrix& x, const ConvParams& p, const SeqMatrix& grad_out,
                          ConvGrads& grads) {
    require(int(x.cols()) == p.in_ch, "conv1d_backward: input channel mismatch");
    require(grad_out.rows() == x.rows() && int(grad_out.cols()) == p.out_ch,
            "conv1d_backward: grad_out shape mismatch");
    require(grads.v.size() == p.v.size() && grads.b.size() == p.b.size() &&
                grads.g.size() == p.g.size(),
            "conv1d_backward: gradient buffer shape mismatch");

    const long T = long(x.rows());
    const int k = p.kernel, d = p.dilation, ci_n = p.in_ch, co_n = p.out_ch;
    const int c = (k - 1) / 2;
    const std::vector<double> w = p.effective_kernel_tap_major();

    // grad wrt bias and effective kernel (tap-major, like `w`)
    std::vector<double> gw(w.size(), 0.0);
    SeqMatrix grad_x(x.rows(), x.cols());

    for (long t = 0; t < T; ++t) {
        const double* grow = grad_out.row(std::size_t(t));
        for (int co = 0; co < co_n; ++co) grads.b[std::size_t(co)] += grow[co];
        for (int j = 0; j < k; ++j) {
            const long s = t + long(j - c) * d;
            if (s < 0 || s >= T) continue;
            const double* xrow = x.row(std::size_t(s));
            double* gxrow = grad_x.row(std::size_t(s));
            const double* wj = w.data() + std::size_t(j) * ci_n * co_n;
            double* gwj = gw.data() + std::size_t(j) * ci_n * co_n;
            for (int ci = 0; ci < ci_n; ++ci) {
                const double xv = xrow[ci];
                const double* wrow = wj + std::size_t(ci) * co_n;
                double* gwrow = gwj + std::size_t(ci) * co_n;
                double acc = 0.0;
                for (int co = 0; co < co_n; ++co) {
                    const double go = grow[co];
                    acc += wrow[co] * go;
                    gwrow[co] += xv * go;
                }
                gxrow[ci] += acc;
            }
        }
    }

    // Chain from the effective kernel to (v, g).
    const std::size_t per_co = std::size_t(ci_n) * k;
    if (!p.weight_norm) {
        for (int co = 0; co < co_n; ++co)
            for (int ci = 0; ci < ci_n; ++ci)
                for (int j = 0; j < k; ++j)
                    grads.v[p.at(co, ci, j)] += gw[(std::size_t(j) * ci_n + ci) * co_n + co];
    } else {
        for (int co = 0; co < co_n; ++co) {
            const double n = p.direction_norm(co);
            const double gain = p.g[std::size_t(co)];
            const double* vrow = p.v.data() + std::size_t(co) * per_co;
            // dot = <grad_w[co], v[co]>
            double dot = 0.0;
            for (int ci = 0; ci < ci_n; ++ci)
                for (int j = 0; j < k; ++j)
                    dot += gw[(std::size_t(j) * ci_n + ci) * co_n + co] * vrow[std::size_t(ci) * k + j];
            grads.g[std::size_t(co)] += dot / n;
            const double a = gain / n;
            const double bcoef = gain * dot / (n * n * n);
            for (int ci = 0; ci < ci_n; ++ci)
                for (int j = 0; j < k; ++j) {
                    const std::size_t vi = std::size_t(co) * per_co + std::size_t(ci) * k + j;
                    grads.v[vi] += a * gw[(std::size_t(j) * ci_n + ci) * co_n + co] - bcoef * p.v[vi];
                }
        }
    }
    return grad_x;
}

SeqMatrix relu(const SeqMatrix& x) {
    SeqMatrix out = x;
    for (double& v : out.raw()) v = v > 0.0 ? v : 0.0;
    return out;
}

SeqMatrix relu_backward(const SeqMatrix& x, const SeqMatrix& grad_out) {
    require(x.rows() == grad_out.rows() && x.cols() == grad_out.cols(),
            "relu_backward: shape mismatch");
    SeqMatrix gx(x.rows(), x.cols());
    const double* xp = x.data();
    const double* gp = grad_out.data();
    double* op = gx.data();
    for (std::size_t i = 0; i < x.size(); ++i) op[i] = xp[i] > 0.0 ? gp[i] : 0.0;
    return gx;
}

SeqMatrix dropout(const SeqMatrix& x, double rate, RngStream& rng, bool training,
                  std::vector<std::uint8_t>& mask_out) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) {
        mask_out.assign(x.size(), 1);
        return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    mask_out.assign(x.size(), 0);
    SeqMatrix out(x.rows(), x.cols());
    const double* xp = x.data();
    double* op = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (rng.next_double() >= rate) {
            mask_out[i] = 1;
            op[i] = xp[i] * scale;
        }
    }
    return out;
}

SeqMatrix dropout_backward(const SeqMatrix& grad_out, double rate,
                           const std::vector<std::uint8_t>& mask) {
    require(mask.size() == grad_out.size(), "dropout_backward: mask size mismatch");
    const double scale = 1.0 / (1.0 - rate);
    SeqMatrix gx(grad_out.rows(), grad_out.cols());
    const double* gp = grad_out.data();
    double* op = gx.data();
    for (std::size_t i = 0; i < gx.size(); ++i) op[i] = mask[i] ? gp[i] * scale : 0.0;
    return gx;
}

SeqMatrix softmax_rows(const SeqMatrix& x) {
    SeqMatrix out(x.rows(), x.cols());
    const std::size_t C = x.cols();
    for (std::size_t t = 0; t < x.rows(); ++t) {
        const double* xr = x.row(t);
        double* orow = out.row(t);
        double m = xr[0];
        for (std::size_t c = 1; c < C; ++c) m = std::max(m, xr[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            orow[c] = std::exp(xr[c] - m);
            sum += orow[c];
        }
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < C; ++c) orow[c] *= inv;
    }
    return out;
}

SeqMatrix log_softmax_rows(const SeqMatrix& x) {
    SeqMatrix out(x.rows(), x.cols());
    const std::size_t C = x.cols();
    for (std::size_t t = 0; t < x.rows(); ++t) {
        const double* xr = x.row(t);
        double* orow = out.row(t);
        double m = xr[0];
        for (std::size_t c = 1; c < C; ++c) m = std::max(m, xr[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(xr[c] - m);
        const double lse = m + std::log(sum);
        for (std::size_t c = 0; c < C; ++c) orow[c] = xr[c] - lse;
    }
    return out;
}

SeqMatrix log_softmax_backward(const SeqMatrix& probs, const SeqMatrix& grad_logp) {
    require(probs.rows() == grad_logp.rows() && probs.cols() == grad_logp.cols(),
            "log_softmax_backward: shape mismatch");
    SeqMatrix gz(probs.rows(), probs.cols());
    const std::size_t C = probs.cols();
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        const double* pr = probs.row(t);
        const double* gr = grad_logp.row(t);
        double* oz = gz.row(t);
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += gr[c];
        for (std::size_t c = 0; c < C; ++c) oz[c] = gr[c] - pr[c] * s;
    }
    return gz;
}

SeqMatrix softmax_backward(const SeqMatrix& probs, const SeqMatrix& grad_probs) {
    require(probs.rows() == grad_probs.rows() && probs.cols() == grad_probs.cols(),
            "softmax_backward: shape mismatch");
    SeqMatrix gz(probs.rows(), probs.cols());
    const std::size_t C = probs.cols();
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        const double* pr = probs.row(t);
        const double* gr = grad_probs.row(t);
        double* oz = gz.row(t);
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += pr[c] * gr[c];
        for (std::size_t c = 0; c < C; ++c) oz[c] = pr[c] * (gr[c] - s);
    }
    return gz;
}

}  // namespace ctcn

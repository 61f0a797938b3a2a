#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "colontcn/gradcheck.hpp"
#include "colontcn/kernels.hpp"
#include "test_util.hpp"

using namespace ctcn;
using testutil::conv_oracle;
using testutil::max_abs_diff;
using testutil::random_conv;
using testutil::random_matrix;

TEST_CASE("conv1d identity kernel passes input through") {
    RngStream rng(11);
    SeqMatrix x = random_matrix(6, 3, rng);
    ConvParams p(3, 3, 1, 1, false);
    for (int c = 0; c < 3; ++c) p.v[p.at(c, c, 0)] = 1.0;
    SeqMatrix y = conv1d_forward(x, p);
    CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv1d matches hand-computed boxcar examples") {
    // x = [1,2,3], k=3, w=[1,1,1], zero padding -> [3,6,5]
    SeqMatrix x(3, 1);
    x(0, 0) = 1.0;
    x(1, 0) = 2.0;
    x(2, 0) = 3.0;
    ConvParams p(1, 1, 3, 1, false);
    p.v = {1.0, 1.0, 1.0};
    SeqMatrix y = conv1d_forward(x, p);
    CHECK(y(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(y(1, 0) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(y(2, 0) == doctest::Approx(5.0).epsilon(1e-15));

    // dilation 2 spreads the taps: out[t] = x[t-2] + x[t] + x[t+2] with zero
    // padding, so x = [1,0,0,0,2] -> [1,0,3,0,2]
    SeqMatrix x2(5, 1);
    x2(0, 0) = 1.0;
    x2(4, 0) = 2.0;
    ConvParams p2(1, 1, 3, 2, false);
    p2.v = {1.0, 1.0, 1.0};
    SeqMatrix y2 = conv1d_forward(x2, p2);
    const double expected[5] = {1.0, 0.0, 3.0, 0.0, 2.0};
    for (std::size_t t = 0; t < 5; ++t) CHECK(y2(t, 0) == doctest::Approx(expected[t]));
}

TEST_CASE("conv1d agrees with the direct-summation oracle on random instances") {
    RngStream rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int T = 1 + int(rng.next_below(16));
        const int cin = 1 + int(rng.next_below(4));
        const int cout = 1 + int(rng.next_below(4));
        const int k = 1 + 2 * int(rng.next_below(3));
        const int d = 1 + int(rng.next_below(4));
        const bool wn = rng.next_below(2) == 0;
        SeqMatrix x = random_matrix(std::size_t(T), std::size_t(cin), rng);
        ConvParams p = random_conv(cin, cout, k, d, wn, rng);
        CHECK(max_abs_diff(conv1d_forward(x, p), conv_oracle(x, p)) < 1e-12);
    }
}

TEST_CASE("conv1d output frame count equals input frame count") {
    RngStream rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int T = 1 + int(rng.next_below(32));
        const int k = 1 + 2 * int(rng.next_below(4));
        const int d = 1 + int(rng.next_below(8));
        SeqMatrix x = random_matrix(std::size_t(T), 2, rng);
        ConvParams p = random_conv(2, 3, k, d, false, rng);
        CHECK(conv1d_forward(x, p).rows() == std::size_t(T));
    }
}

TEST_CASE("conv1d is linear in the input once the bias is removed") {
    RngStream rng(41);
    ConvParams p = random_conv(3, 2, 5, 2, true, rng);
    std::fill(p.b.begin(), p.b.end(), 0.0);
    SeqMatrix x1 = random_matrix(9, 3, rng);
    SeqMatrix x2 = random_matrix(9, 3, rng);
    const double a = 0.7, b = -1.3;
    SeqMatrix mix(9, 3);
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix.data()[i] = a * x1.data()[i] + b * x2.data()[i];
    SeqMatrix lhs = conv1d_forward(mix, p);
    SeqMatrix y1 = conv1d_forward(x1, p);
    SeqMatrix y2 = conv1d_forward(x2, p);
    for (std::size_t i = 0; i < lhs.size(); ++i)
        CHECK(lhs.data()[i] == doctest::Approx(a * y1.data()[i] + b * y2.data()[i]).epsilon(1e-10));
}

TEST_CASE("weight-normalized effective kernel has norm |g| per output channel") {
    RngStream rng(51);
    ConvParams p = random_conv(3, 4, 7, 1, true, rng);
    const std::vector<double> w = p.effective_kernel_tap_major();
    for (int co = 0; co < p.out_ch; ++co) {
        double norm = 0.0;
        for (int j = 0; j < p.kernel; ++j)
            for (int ci = 0; ci < p.in_ch; ++ci) {
                const double val = w[(std::size_t(j) * p.in_ch + ci) * p.out_ch + co];
                norm += val * val;
            }
        CHECK(std::sqrt(norm) == doctest::Approx(std::fabs(p.g[std::size_t(co)])).epsilon(1e-12));
    }
}

TEST_CASE("conv1d rejects bad inputs") {
    RngStream rng(61);
    SeqMatrix x = random_matrix(4, 3, rng);
    CHECK_THROWS_AS(ConvParams(3, 2, 4, 1, false), std::invalid_argument);  // even kernel
    ConvParams p = random_conv(2, 2, 3, 1, false, rng);
    CHECK_THROWS_AS(conv1d_forward(x, p), std::invalid_argument);  // channel mismatch
    SeqMatrix bad = random_matrix(4, 2, rng);
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(conv1d_forward(bad, p), NumericError);
}

TEST_CASE("conv1d backward: zero cotangent gives zero gradients") {
    RngStream rng(71);
    SeqMatrix x = random_matrix(5, 2, rng);
    ConvParams p = random_conv(2, 3, 3, 1, true, rng);
    ConvGrads g;
    g.resize_like(p);
    SeqMatrix zero(5, 3);
    SeqMatrix gx = conv1d_backward(x, p, zero, g);
    for (double v : gx.raw()) CHECK(v == 0.0);
    for (double v : g.v) CHECK(v == 0.0);
    for (double v : g.g) CHECK(v == 0.0);
    for (double v : g.b) CHECK(v == 0.0);
}

namespace {

// Packs (x, v, g, b) into one flat vector and checks the analytic gradient of
// sum(conv(x)) coordinates against central differences.
void check_conv_gradients(int T, int cin, int cout, int k, int d, bool wn, std::uint64_t seed) {
    RngStream rng(seed);
    SeqMatrix x0 = random_matrix(std::size_t(T), std::size_t(cin), rng);
    ConvParams p0 = random_conv(cin, cout, k, d, wn, rng);
    SeqMatrix weights = random_matrix(std::size_t(T), std::size_t(cout), rng);

    const std::size_t nx = x0.size(), nv = p0.v.size(), ng = p0.g.size();
    std::vector<double> point;
    point.insert(point.end(), x0.raw().begin(), x0.raw().end());
    point.insert(point.end(), p0.v.begin(), p0.v.end());
    point.insert(point.end(), p0.g.begin(), p0.g.end());
    point.insert(point.end(), p0.b.begin(), p0.b.end());

    auto unpack = [&](const std::vector<double>& q, SeqMatrix& x, ConvParams& p) {
        x = x0;
        p = p0;
        std::copy(q.begin(), q.begin() + long(nx), x.raw().begin());
        std::copy(q.begin() + long(nx), q.begin() + long(nx + nv), p.v.begin());
        std::copy(q.begin() + long(nx + nv), q.begin() + long(nx + nv + ng), p.g.begin());
        std::copy(q.begin() + long(nx + nv + ng), q.end(), p.b.begin());
    };

    auto f = [&](const std::vector<double>& q) {
        SeqMatrix x;
        ConvParams p;
        unpack(q, x, p);
        SeqMatrix y = conv1d_forward(x, p);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += weights.data()[i] * y.data()[i];
        return s;
    };

    ConvGrads grads;
    grads.resize_like(p0);
    SeqMatrix gx = conv1d_backward(x0, p0, weights, grads);
    std::vector<double> analytic;
    analytic.insert(analytic.end(), gx.raw().begin(), gx.raw().end());
    analytic.insert(analytic.end(), grads.v.begin(), grads.v.end());
    analytic.insert(analytic.end(), grads.g.begin(), grads.g.end());
    analytic.insert(analytic.end(), grads.b.begin(), grads.b.end());

    CHECK(grad_check(f, point, analytic, 1e-5) < 1e-5);
}

}  // namespace

TEST_CASE("conv1d backward matches central finite differences") {
    check_conv_gradients(7, 2, 3, 3, 2, false, 101);
    check_conv_gradients(7, 2, 3, 3, 2, true, 102);
    check_conv_gradients(5, 1, 1, 1, 1, true, 103);
    check_conv_gradients(9, 3, 2, 5, 4, true, 104);
}

TEST_CASE("weight norm: doubling g scales the zero-bias output and grad matches") {
    RngStream rng(111);
    SeqMatrix x = random_matrix(6, 2, rng);
    ConvParams p = random_conv(2, 2, 3, 1, true, rng);
    std::fill(p.b.begin(), p.b.end(), 0.0);
    SeqMatrix y1 = conv1d_forward(x, p);
    ConvParams p2 = p;
    for (double& g : p2.g) g *= 2.0;
    SeqMatrix y2 = conv1d_forward(x, p2);
    for (std::size_t i = 0; i < y1.size(); ++i)
        CHECK(y2.data()[i] == doctest::Approx(2.0 * y1.data()[i]).epsilon(1e-12));
    check_conv_gradients(6, 2, 2, 3, 1, true, 112);
}

TEST_CASE("relu forward and backward") {
    SeqMatrix x(2, 2);
    x(0, 0) = -1.0;
    x(0, 1) = 2.0;
    x(1, 0) = 0.0;
    x(1, 1) = -3.0;
    SeqMatrix y = relu(x);
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == 2.0);
    CHECK(y(1, 0) == 0.0);
    CHECK(y(1, 1) == 0.0);

    RngStream rng(121);
    SeqMatrix pos = random_matrix(4, 3, rng, 0.5, 2.0);
    CHECK(max_abs_diff(relu(pos), pos) == 0.0);

    // Gradient check away from the kink.
    SeqMatrix x0 = random_matrix(5, 3, rng);
    for (double& v : x0.raw())
        if (std::fabs(v) < 0.05) v += 0.1;
    SeqMatrix w = random_matrix(5, 3, rng);
    auto f = [&](const std::vector<double>& q) {
        SeqMatrix m(5, 3);
        std::copy(q.begin(), q.end(), m.raw().begin());
        SeqMatrix y2 = relu(m);
        double s = 0.0;
        for (std::size_t i = 0; i < y2.size(); ++i) s += w.data()[i] * y2.data()[i];
        return s;
    };
    SeqMatrix gx = relu_backward(x0, w);
    std::vector<double> analytic(gx.raw());
    CHECK(grad_check(f, x0.raw(), analytic, 1e-6) < 1e-6);
}

TEST_CASE("dropout: rate 0 and inference are identities") {
    RngStream rng(131);
    SeqMatrix x = random_matrix(4, 4, rng);
    std::vector<std::uint8_t> mask;
    SeqMatrix y = dropout(x, 0.0, rng, true, mask);
    CHECK(max_abs_diff(x, y) == 0.0);
    for (auto m : mask) CHECK(m == 1);

    SeqMatrix z = dropout(x, 0.9, rng, false, mask);
    CHECK(max_abs_diff(x, z) == 0.0);

    CHECK_THROWS_AS(dropout(x, 1.0, rng, true, mask), std::invalid_argument);
}

TEST_CASE("dropout statistics at rate 0.5 over 1e5 elements") {
    RngStream rng(141);
    const std::size_t T = 1000, C = 100;
    SeqMatrix x(T, C, 1.0);
    std::vector<std::uint8_t> mask;
    SeqMatrix y = dropout(x, 0.5, rng, true, mask);
    std::size_t survivors = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        survivors += mask[i];
        sum += y.data()[i];
    }
    const double frac = double(survivors) / double(T * C);
    CHECK(frac > 0.49);
    CHECK(frac < 0.51);
    // Inverted scaling keeps the expectation: mean output close to input.
    CHECK(sum / double(T * C) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("dropout is bit-reproducible for a fixed stream") {
    SeqMatrix x(8, 8, 1.0);
    std::vector<std::uint8_t> m1, m2;
    RngStream a(99), b(99);
    SeqMatrix y1 = dropout(x, 0.3, a, true, m1);
    SeqMatrix y2 = dropout(x, 0.3, b, true, m2);
    CHECK(y1 == y2);
    CHECK(m1 == m2);
}

TEST_CASE("dropout backward matches the saved mask") {
    RngStream rng(151);
    SeqMatrix x = random_matrix(6, 5, rng);
    std::vector<std::uint8_t> mask;
    SeqMatrix y = dropout(x, 0.4, rng, true, mask);
    SeqMatrix dy = random_matrix(6, 5, rng);
    SeqMatrix dx = dropout_backward(dy, 0.4, mask);
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (mask[i])
            CHECK(dx.data()[i] == doctest::Approx(dy.data()[i] / 0.6).epsilon(1e-15));
        else
            CHECK(dx.data()[i] == 0.0);
    }
    (void)y;
}

TEST_CASE("softmax rows: symmetry, stability, normalization") {
    SeqMatrix flat(1, 3);
    SeqMatrix s = softmax_rows(flat);
    for (std::size_t c = 0; c < 3; ++c) CHECK(s(0, c) == doctest::Approx(1.0 / 3).epsilon(1e-15));

    SeqMatrix big(1, 2);
    big(0, 0) = 1000.0;
    SeqMatrix sb = softmax_rows(big);
    CHECK(std::isfinite(sb(0, 0)));
    CHECK(sb(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sb(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

    RngStream rng(161);
    SeqMatrix x = random_matrix(4, 5, rng, -3.0, 3.0);
    SeqMatrix p = softmax_rows(x);
    SeqMatrix lp = log_softmax_rows(x);
    for (std::size_t t = 0; t < 4; ++t) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
            sum += p(t, c);
            CHECK(p(t, c) >= 0.0);
            CHECK(std::exp(lp(t, c)) == doctest::Approx(p(t, c)).epsilon(1e-12));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        // argmax of softmax equals argmax of logits
        std::size_t am_x = 0, am_p = 0;
        for (std::size_t c = 1; c < 5; ++c) {
            if (x(t, c) > x(t, am_x)) am_x = c;
            if (p(t, c) > p(t, am_p)) am_p = c;
        }
        CHECK(am_x == am_p);
    }
}

TEST_CASE("softmax and log-softmax backward match finite differences") {
    RngStream rng(171);
    SeqMatrix z0 = random_matrix(3, 4, rng, -2.0, 2.0);
    SeqMatrix w = random_matrix(3, 4, rng);

    auto f_log = [&](const std::vector<double>& q) {
        SeqMatrix z(3, 4);
        std::copy(q.begin(), q.end(), z.raw().begin());
        SeqMatrix lp = log_softmax_rows(z);
        double s = 0.0;
        for (std::size_t i = 0; i < lp.size(); ++i) s += w.data()[i] * lp.data()[i];
        return s;
    };
    SeqMatrix probs = softmax_rows(z0);
    SeqMatrix gz = log_softmax_backward(probs, w);
    CHECK(grad_check(f_log, z0.raw(), gz.raw(), 1e-5) < 1e-6);

    auto f_soft = [&](const std::vector<double>& q) {
        SeqMatrix z(3, 4);
        std::copy(q.begin(), q.end(), z.raw().begin());
        SeqMatrix p = softmax_rows(z);
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += w.data()[i] * p.data()[i];
        return s;
    };
    SeqMatrix gz2 = softmax_backward(probs, w);
    CHECK(grad_check(f_soft, z0.raw(), gz2.raw(), 1e-5) < 1e-6);
}

TEST_CASE("grad_check on an analytic quadratic") {
    auto f = [](const std::vector<double>& q) {
        double s = 0.0;
        for (double x : q) s += x * x;
        return s;
    };
    std::vector<double> point = {1.0, 2.0};
    std::vector<double> analytic = {2.0, 4.0};
    CHECK(grad_check(f, point, analytic, 1e-5) < 1e-8);
}

TEST_CASE("rng: same seed gives identical streams, derive gives independent ones") {
    RngStream a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    RngStream c = a.derive(1), d = a.derive(2);
    CHECK(c.next_u64() != d.next_u64());

    // uniformity smoke: mean of many draws near 0.5
    RngStream e(12345);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += e.next_double();
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));

    // normal draws: mean 0, variance 1
    RngStream f(54321);
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = f.next_normal();
        mean += x;
        var += x * x;
    }
    mean /= n;
    var = var / n - mean * mean;
    CHECK(mean == doctest::Approx(0.0).epsilon(0.02));
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "colontcn/gradcheck.hpp"
#include "colontcn/loss.hpp"
#include "colontcn/model.hpp"
#include "test_util.hpp"

using namespace ctcn;
using testutil::max_abs_diff;
using testutil::random_matrix;

namespace {

ModelConfig tiny_config(int T_dim, int F, int C, int L, int stages = 0, double dropout = 0.0) {
    ModelConfig cfg;
    cfg.base.levels = L;
    cfg.base.input_dim = T_dim;
    cfg.base.num_classes = C;
    cfg.base.use_fr = T_dim != F;
    cfg.base.block.channels = F;
    cfg.base.block.kernel = 3;
    cfg.base.block.dropout_rate = dropout;
    cfg.refinement_stages = stages;
    cfg.refinement_levels = L;
    return cfg;
}

ModelConfig paper_config(int levels, bool double_conv, bool weight_norm = true) {
    ModelConfig cfg;
    cfg.base.levels = levels;
    cfg.base.input_dim = 2048;
    cfg.base.num_classes = 9;
    cfg.base.use_fr = true;
    cfg.base.block.channels = 64;
    cfg.base.block.kernel = 7;
    cfg.base.block.double_conv = double_conv;
    cfg.base.block.weight_norm = weight_norm;
    return cfg;
}

}  // namespace

TEST_CASE("receptive field closed form") {
    StageConfig s;
    s.block.kernel = 7;
    s.block.double_conv = true;
    s.levels = 11;
    CHECK(receptive_field(s) == 24565);
    s.levels = 1;
    CHECK(receptive_field(s) == 13);
    s.levels = 14;
    s.block.double_conv = false;
    CHECK(receptive_field(s) == 98299);
    s.levels = 13;
    s.block.double_conv = true;
    CHECK(receptive_field(s) == 98293);
}

TEST_CASE("parameter counts reproduce the published budgets") {
    // 13-level, F=64, D=2048, C=9, double conv + weight norm, single stage
    CHECK(count_params(paper_config(13, true)) == 880521);
    // TeCNO-style: 14 levels, single conv per block
    const std::int64_t tecno = count_params(paper_config(14, false));
    CHECK(tecno == 534921);
    CHECK(double(tecno) / 1e6 > 0.5);
    CHECK(double(tecno) / 1e6 < 0.56);
    // degenerate L=0 stage: FR + head only
    ModelConfig degen = paper_config(0, true);
    CHECK(count_params(degen) == (2048 * 64 + 64) + (64 * 9 + 9));
}

TEST_CASE("count_params equals the number of scalars actually allocated") {
    for (ModelConfig cfg : {tiny_config(8, 4, 3, 2, 1), paper_config(3, true),
                            tiny_config(6, 6, 4, 2, 2), paper_config(2, false)}) {
        RngStream rng(5);
        ModelParams params = init_params(cfg, rng);
        CHECK(std::int64_t(params.scalar_count()) == count_params(cfg));
        std::size_t visited = 0;
        for_each_tensor(params, [&](const std::string&, const std::vector<double>& v) {
            visited += v.size();
        });
        CHECK(std::int64_t(visited) == count_params(cfg));
    }
}

TEST_CASE("tensor visitation order is lexicographic") {
    ModelConfig cfg = tiny_config(8, 4, 3, 2, 1);
    RngStream rng(6);
    ModelParams params = init_params(cfg, rng);
    std::string prev;
    for_each_tensor(params, [&](const std::string& name, const std::vector<double>&) {
        CHECK(prev < name);
        prev = name;
    });
}

TEST_CASE("estimate_flops: definition and linearity in T") {
    // single 1x1 conv D->F over T frames contributes 2*T*D*F
    ModelConfig degen = paper_config(0, true);
    const std::int64_t fr_head = estimate_flops(degen, 100);
    CHECK(fr_head == 2 * 100 * (2048 * 64 + 64 * 9));
    ModelConfig cfg = paper_config(13, true);
    CHECK(estimate_flops(cfg, 2000) * 2 == estimate_flops(cfg, 4000));
    // published profile figures at the reference length T=2500
    CHECK(double(estimate_flops(cfg, 2500)) / 1e9 == doctest::Approx(4.386).epsilon(1e-3));
    CHECK(double(estimate_flops(paper_config(12, true), 2500)) / 1e9 ==
          doctest::Approx(4.099).epsilon(1e-3));
}

TEST_CASE("init_params is deterministic and weight-norm-consistent") {
    ModelConfig cfg = tiny_config(8, 4, 3, 2);
    RngStream r1(77), r2(77);
    ModelParams a = init_params(cfg, r1);
    ModelParams b = init_params(cfg, r2);
    bool equal = true;
    std::vector<const std::vector<double>*> ta, tb;
    for_each_tensor(a, [&](const std::string&, const std::vector<double>& v) { ta.push_back(&v); });
    for_each_tensor(b, [&](const std::string&, const std::vector<double>& v) { tb.push_back(&v); });
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (*ta[i] != *tb[i]) equal = false;
    CHECK(equal);

    // g equals per-channel ||v|| at init
    for (const BlockParams& blk : a.stages[0].blocks) {
        for (int co = 0; co < blk.conv1.out_ch; ++co)
            CHECK(blk.conv1.g[std::size_t(co)] ==
                  doctest::Approx(blk.conv1.direction_norm(co)).epsilon(1e-12));
    }
}

TEST_CASE("initial logits are near zero so softmax rows start near uniform") {
    ModelConfig cfg = tiny_config(16, 8, 5, 3);
    const double inv_c = 1.0 / 5.0;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        RngStream rng(seed);
        ModelParams params = init_params(cfg, rng);
        SeqMatrix x = random_matrix(12, 16, rng);  // unit-scale input
        RngStream frng(0);
        SeqMatrix probs = stage_forward(x, cfg.base, params.stages[0], frng, false);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            CHECK(probs.data()[i] > inv_c - 0.2);
            CHECK(probs.data()[i] < inv_c + 0.2);
        }
    }
}

TEST_CASE("fr_forward: identity kernel on nonnegative input, and shapes") {
    RngStream rng(8);
    ConvParams fr(3, 3, 1, 1, false);
    for (int c = 0; c < 3; ++c) fr.v[fr.at(c, c, 0)] = 1.0;
    SeqMatrix x = random_matrix(5, 3, rng, 0.1, 2.0);
    CHECK(max_abs_diff(fr_forward(x, fr), x) == 0.0);

    ConvParams reduce(2048, 64, 1, 1, false);
    for (double& v : reduce.v) v = 1e-3;
    SeqMatrix wide = random_matrix(4, 2048, rng);
    SeqMatrix narrow = fr_forward(wide, reduce);
    CHECK(narrow.rows() == 4);
    CHECK(narrow.cols() == 64);
}

TEST_CASE("temporal block: zero weights with residual pass nonnegative input through") {
    ModelConfig cfg = tiny_config(4, 4, 3, 1);
    cfg.base.block.weight_norm = false;  // zero direction vectors need plain convs
    ModelParams params = zero_params(cfg);
    RngStream rng(9);
    SeqMatrix h = random_matrix(6, 4, rng, 0.0, 1.0);
    RngStream frng(1);
    SeqMatrix out = temporal_block_forward(h, cfg.base.block, params.stages[0].blocks[0], frng,
                                           /*training=*/true);
    CHECK(max_abs_diff(out, h) == 0.0);
}

TEST_CASE("temporal block with double and residual off reduces to conv+relu+dropout") {
    ModelConfig cfg = tiny_config(4, 4, 3, 1);
    cfg.base.block.double_conv = false;
    cfg.base.block.residual = false;
    cfg.base.block.dropout_rate = 0.0;
    RngStream rng(10);
    ModelParams params = init_params(cfg, rng);
    SeqMatrix h = random_matrix(6, 4, rng);
    RngStream frng(2);
    SeqMatrix out = temporal_block_forward(h, cfg.base.block, params.stages[0].blocks[0], frng, true);
    SeqMatrix expect = relu(conv1d_forward(h, params.stages[0].blocks[0].conv1));
    CHECK(max_abs_diff(out, expect) == 0.0);
}

TEST_CASE("stage_forward: all-zero params give uniform rows; rows sum to 1") {
    ModelConfig cfg = tiny_config(6, 4, 5, 1);
    ModelParams zeros = zero_params(cfg);
    // zero direction vectors break weight norm; disable it for this check
    cfg.base.block.weight_norm = false;
    ModelConfig cfg2 = cfg;
    ModelParams z2 = zero_params(cfg2);
    RngStream rng(11);
    SeqMatrix x = random_matrix(7, 6, rng);
    RngStream frng(3);
    SeqMatrix probs = stage_forward(x, cfg2.base, z2.stages[0], frng, false);
    for (std::size_t t = 0; t < probs.rows(); ++t)
        for (std::size_t c = 0; c < probs.cols(); ++c)
            CHECK(probs(t, c) == doctest::Approx(0.2).epsilon(1e-12));
    (void)zeros;

    ModelParams params = init_params(cfg2, rng);
    SeqMatrix p2 = stage_forward(x, cfg2.base, params.stages[0], frng, false);
    for (std::size_t t = 0; t < p2.rows(); ++t) {
        double sum = 0.0;
        for (std::size_t c = 0; c < p2.cols(); ++c) sum += p2(t, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("forward output frame count equals input frame count for every config") {
    RngStream rng(12);
    for (int trial = 0; trial < 4; ++trial) {
        ModelConfig cfg = tiny_config(5, 4, 3, 1 + trial % 3, trial % 2);
        ModelParams params = init_params(cfg, rng);
        const std::size_t T = 3 + rng.next_below(40);
        SeqMatrix x = random_matrix(T, 5, rng);
        RngStream frng(4);
        ProbOutput out = multistage_forward(x, cfg, params, frng, false);
        CHECK(out.stages.size() == std::size_t(cfg.refinement_stages) + 1);
        for (const SeqMatrix& p : out.stages) CHECK(p.rows() == T);
    }
}

TEST_CASE("multistage with M=0 is bitwise identical to stage_forward") {
    ModelConfig cfg = tiny_config(6, 4, 3, 2, 0);
    RngStream rng(13);
    ModelParams params = init_params(cfg, rng);
    SeqMatrix x = random_matrix(10, 6, rng);
    RngStream f1(5), f2(5);
    ProbOutput multi = multistage_forward(x, cfg, params, f1, false);
    SeqMatrix single = stage_forward(x, cfg.base, params.stages[0], f2, false);
    CHECK(multi.stages.size() == 1);
    CHECK(multi.stages[0] == single);
}

TEST_CASE("refinement stages run at width C without an FR layer") {
    ModelConfig cfg = tiny_config(6, 4, 3, 2, 3);
    const std::vector<StageConfig> stages = cfg.stage_configs();
    CHECK(stages.size() == 4);
    for (std::size_t s = 1; s < stages.size(); ++s) {
        CHECK(stages[s].input_dim == 3);
        CHECK(stages[s].block.channels == 3);
        CHECK_FALSE(stages[s].use_fr);
    }
    RngStream rng(14);
    ModelParams params = init_params(cfg, rng);
    for (std::size_t s = 1; s < params.stages.size(); ++s) {
        CHECK_FALSE(params.stages[s].fr.has_value());
        CHECK(params.stages[s].blocks[0].conv1.in_ch == 3);
    }
    SeqMatrix x = random_matrix(9, 6, rng);
    RngStream frng(6);
    ProbOutput out = multistage_forward(x, cfg, params, frng, false);
    CHECK(out.stages.size() == 4);
}

TEST_CASE("a 13-level base with 11-level refinements and M=3 is constructible") {
    ModelConfig cfg = paper_config(13, true);
    cfg.refinement_stages = 3;
    cfg.refinement_levels = 11;
    cfg.validate();
    CHECK(cfg.stage_configs().size() == 4);
    CHECK(cfg.stage_configs()[1].levels == 11);
}

TEST_CASE("receptive field is exact: delta input probes the influence window") {
    // Positive weights and biases keep every ReLU active, so influence
    // equals the conv support exactly.
    ModelConfig cfg = tiny_config(2, 3, 2, 2);  // k=3, L=2, double -> RF = 1+2*2*3 = 13
    cfg.base.block.weight_norm = false;
    ModelParams params = zero_params(cfg);
    RngStream rng(15);
    auto positive_fill = [&](ConvParams& p) {
        for (double& v : p.v) v = rng.next_uniform(0.01, 0.1);
        for (double& v : p.b) v = rng.next_uniform(0.1, 0.2);
    };
    StageParams& sp = params.stages[0];
    positive_fill(*sp.fr);
    for (BlockParams& b : sp.blocks) {
        positive_fill(b.conv1);
        if (b.conv2) positive_fill(*b.conv2);
    }
    positive_fill(sp.head);

    const std::int64_t rf = receptive_field(cfg.base);
    CHECK(rf == 13);
    const std::int64_t half = (rf - 1) / 2;

    const std::size_t T = 41;
    SeqMatrix x = random_matrix(T, 2, rng, 0.5, 1.0);
    RngStream f1(7);
    std::vector<StageTape> base_tape = multistage_forward_tape(x, cfg, params, f1, false);
    SeqMatrix x2 = x;
    const std::size_t t0 = 20;
    x2(t0, 0) += 0.25;
    RngStream f2(7);
    std::vector<StageTape> mod_tape = multistage_forward_tape(x2, cfg, params, f2, false);

    const SeqMatrix& a = base_tape.back().logits;
    const SeqMatrix& b = mod_tape.back().logits;
    for (std::size_t t = 0; t < T; ++t) {
        double diff = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) diff += std::fabs(a(t, c) - b(t, c));
        const bool inside = std::llabs(std::int64_t(t) - std::int64_t(t0)) <= half;
        if (inside)
            CHECK(diff > 1e-12);
        else
            CHECK(diff == 0.0);
    }
}

TEST_CASE("argmax prediction is invariant under positive rescaling of head logits") {
    ModelConfig cfg = tiny_config(5, 4, 4, 2);
    RngStream rng(16);
    ModelParams params = init_params(cfg, rng);
    SeqMatrix x = random_matrix(15, 5, rng);
    RngStream f1(8);
    SeqMatrix p1 = stage_forward(x, cfg.base, params.stages[0], f1, false);
    for (double& v : params.stages[0].head.v) v *= 3.5;
    for (double& v : params.stages[0].head.b) v *= 3.5;
    RngStream f2(8);
    SeqMatrix p2 = stage_forward(x, cfg.base, params.stages[0], f2, false);
    for (std::size_t t = 0; t < p1.rows(); ++t) {
        std::size_t a1 = 0, a2 = 0;
        for (std::size_t c = 1; c < p1.cols(); ++c) {
            if (p1(t, c) > p1(t, a1)) a1 = c;
            if (p2(t, c) > p2(t, a2)) a2 = c;
        }
        CHECK(a1 == a2);
    }
}

namespace {

// Flattens every parameter of the model, evaluates the combined loss as a
// function of that flat vector, and compares the analytic gradient from the
// hand-written backward pass against central differences.
//
// Two details make the comparison well-posed:
//  - biases are jittered away from zero so no ReLU pre-activation sits
//    exactly on the kink (the subgradient there is fixed to 0, which a
//    central difference cannot reproduce);
//  - the smoothing term treats the earlier frame of each pair as a
//    constant, so the differenced function freezes those log-probs at
//    their base-point values.
double full_model_grad_error(const ModelConfig& cfg, std::size_t T, std::uint64_t seed,
                             double eps) {
    RngStream rng(seed);
    ModelParams params = init_params(cfg, rng);
    for (StageParams& sp : params.stages) {
        auto jitter = [&](ConvParams& c) {
            for (double& b : c.b) b = rng.next_uniform(-0.15, 0.15);
        };
        if (sp.fr) jitter(*sp.fr);
        for (BlockParams& bp : sp.blocks) {
            jitter(bp.conv1);
            if (bp.conv2) jitter(*bp.conv2);
        }
        jitter(sp.head);
    }
    SeqMatrix x = random_matrix(T, std::size_t(cfg.base.input_dim), rng);
    std::vector<int> labels(T);
    for (std::size_t t = 0; t < T; ++t)
        labels[t] = int(rng.next_below(std::uint64_t(cfg.base.num_classes)));
    ClassWeights weights;
    weights.w.assign(std::size_t(cfg.base.num_classes), 1.0);
    weights.w[0] = 1.5;
    LossConfig loss_cfg;  // tau=4, lambda=0.15, tmse on
    FrameMask mask;

    std::vector<std::vector<double>*> tensors;
    for_each_tensor(params, [&](const std::string&, std::vector<double>& v,
                                std::vector<double>&) { tensors.push_back(&v); });
    std::vector<double> flat;
    for (auto* t : tensors) flat.insert(flat.end(), t->begin(), t->end());

    auto load_flat = [&](const std::vector<double>& q) {
        std::size_t off = 0;
        for (auto* t : tensors) {
            std::copy(q.begin() + long(off), q.begin() + long(off + t->size()), t->begin());
            off += t->size();
        }
    };

    auto forward_logs = [&]() {
        RngStream frng(1);
        std::vector<StageTape> tapes = multistage_forward_tape(x, cfg, params, frng, false);
        std::vector<SeqMatrix> logs;
        for (const StageTape& tp : tapes) logs.push_back(tp.log_probs);
        return logs;
    };
    const std::vector<SeqMatrix> base_logs = forward_logs();

    auto frozen_tmse = [&](const SeqMatrix& lp, const SeqMatrix& lp0) {
        const std::size_t C = lp.cols();
        double sum = 0.0;
        for (std::size_t t = 1; t < lp.rows(); ++t)
            for (std::size_t c = 0; c < C; ++c) {
                const double d = lp(t, c) - lp0(t - 1, c);
                sum += std::fabs(d) <= loss_cfg.tau ? d * d : loss_cfg.tau * loss_cfg.tau;
            }
        return sum / (double(lp.rows()) * double(C));
    };

    auto f = [&](const std::vector<double>& q) {
        load_flat(q);
        const std::vector<SeqMatrix> logs = forward_logs();
        double total = 0.0;
        for (std::size_t s = 0; s < logs.size(); ++s) {
            SeqMatrix no_grad;
            total += weighted_cross_entropy_grad(logs[s], labels, weights, mask, no_grad, 0.0);
            total += loss_cfg.lambda * frozen_tmse(logs[s], base_logs[s]);
        }
        return total / double(logs.size());
    };

    // analytic gradient at the starting point
    load_flat(flat);
    params.zero_grads();
    RngStream frng(1);
    std::vector<StageTape> tapes = multistage_forward_tape(x, cfg, params, frng, false);
    std::vector<const SeqMatrix*> ptrs;
    for (const StageTape& tp : tapes) ptrs.push_back(&tp.log_probs);
    std::vector<SeqMatrix> grads(tapes.size());
    combined_loss_grad(ptrs, labels, weights, loss_cfg, mask, grads);
    multistage_backward(tapes, cfg, params, grads);

    std::vector<double> analytic;
    for_each_tensor(params, [&](const std::string&, std::vector<double>&, std::vector<double>& g) {
        analytic.insert(analytic.end(), g.begin(), g.end());
    });
    const double err = grad_check(f, flat, analytic, eps);
    load_flat(flat);
    return err;
}

}  // namespace

TEST_CASE("single-block gradient matches finite differences (dropout off)") {
    ModelConfig cfg = tiny_config(5, 3, 2, 1);
    CHECK(full_model_grad_error(cfg, 7, 31, 1e-5) < 1e-5);
}

TEST_CASE("FR gradient matches finite differences on T=5, D=6, F=2") {
    ModelConfig cfg = tiny_config(6, 2, 2, 1);
    CHECK(full_model_grad_error(cfg, 5, 32, 1e-5) < 1e-5);
}

TEST_CASE("full tiny multistage model gradient matches finite differences within 1e-3") {
    ModelConfig cfg = tiny_config(8, 4, 3, 3, 1);
    CHECK(full_model_grad_error(cfg, 20, 33, 1e-5) < 1e-3);
}

TEST_CASE("an average-length 5 fps video processes in one pass") {
    ModelConfig cfg = tiny_config(16, 8, 9, 4);
    RngStream rng(17);
    ModelParams params = init_params(cfg, rng);
    SeqMatrix x = random_matrix(8471, 16, rng);
    RngStream frng(9);
    SeqMatrix probs = stage_forward(x, cfg.base, params.stages[0], frng, false);
    CHECK(probs.rows() == 8471);
}

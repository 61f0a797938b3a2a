#include "colontcn/model.hpp"

#include <cmath>
#include <cstdio>

namespace ctcn {

void StageConfig::validate() const {
    if (levels < 0) throw ConfigError("stage: levels must be >= 0");
    if (input_dim < 1) throw ConfigError("stage: input_dim must be >= 1");
    if (num_classes < 1) throw ConfigError("stage: num_classes must be >= 1");
    if (block.channels < 1) throw ConfigError("stage: block channels must be >= 1");
    if (block.kernel < 1 || block.kernel % 2 == 0)
        throw ConfigError("stage: kernel must be odd and positive");
    if (block.dropout_rate < 0.0 || block.dropout_rate >= 1.0)
        throw ConfigError("stage: dropout rate must be in [0, 1)");
    if (use_fr != (input_dim != block.channels))
        throw ConfigError("stage: FR layer is required exactly when input_dim != channels");
}

std::vector<StageConfig> ModelConfig::stage_configs() const {
    std::vector<StageConfig> cfgs;
    cfgs.push_back(base);
    for (int s = 0; s < refinement_stages; ++s) {
        StageConfig r = base;
        r.levels = refinement_levels > 0 ? refinement_levels : base.levels;
        // Refinement stages consume the previous stage's probabilities and
        // run at width C, which removes the FR layer.
        r.input_dim = base.num_classes;
        r.block.channels = base.num_classes;
        r.use_fr = false;
        cfgs.push_back(r);
    }
    return cfgs;
}

void ModelConfig::validate() const {
    if (refinement_stages < 0) throw ConfigError("model: refinement_stages must be >= 0");
    for (const StageConfig& s : stage_configs()) s.validate();
}

void ModelParams::zero_grads() {
    for (StageParams& s : stages) {
        s.fr_g.zero();
        for (BlockParams& b : s.blocks) {
            b.conv1_g.zero();
            b.conv2_g.zero();
        }
        s.head_g.zero();
    }
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const StageParams& s : stages) {
        if (s.fr) n += s.fr->param_count();
        for (const BlockParams& b : s.blocks) {
            n += b.conv1.param_count();
            if (b.conv2) n += b.conv2->param_count();
        }
        n += s.head.param_count();
    }
    return n;
}

namespace {

std::string tensor_name(int stage, const char* layer, const char* field) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "s%02d/%s/%s", stage, layer, field);
    return buf;
}

std::string block_layer(int level, const char* conv) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "b%02d/%s", level, conv);
    return buf;
}

// Emits tensors of one conv in lexicographic field order: b < g < v.
template <typename Fn>
void visit_conv(int stage, const std::string& layer, ConvParams& p, ConvGrads& g, Fn&& fn) {
    fn(tensor_name(stage, layer.c_str(), "b"), p.b, g.b);
    if (p.weight_norm) fn(tensor_name(stage, layer.c_str(), "g"), p.g, g.g);
    fn(tensor_name(stage, layer.c_str(), "v"), p.v, g.v);
}

}  // namespace

void for_each_tensor(ModelParams& params,
                     const std::function<void(const std::string&, std::vector<double>&,
                                              std::vector<double>&)>& fn) {
    // Emission order matches lexicographic name order: within a stage,
    // "b##" < "fr" < "head"; within a conv, "b" < "g" < "v".
    for (int si = 0; si < int(params.stages.size()); ++si) {
        StageParams& s = params.stages[std::size_t(si)];
        for (int l = 0; l < int(s.blocks.size()); ++l) {
            BlockParams& blk = s.blocks[std::size_t(l)];
            visit_conv(si, block_layer(l, "c1"), blk.conv1, blk.conv1_g, fn);
            if (blk.conv2) visit_conv(si, block_layer(l, "c2"), *blk.conv2, blk.conv2_g, fn);
        }
        if (s.fr) visit_conv(si, "fr", *s.fr, s.fr_g, fn);
        visit_conv(si, "head", s.head, s.head_g, fn);
    }
}

void for_each_tensor(const ModelParams& params,
                     const std::function<void(const std::string&, const std::vector<double>&)>& fn) {
    auto& mut = const_cast<ModelParams&>(params);
    for_each_tensor(mut, [&](const std::string& name, std::vector<double>& value,
                             std::vector<double>&) { fn(name, value); });
}

ModelParams zero_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams params;
    for (const StageConfig& sc : cfg.stage_configs()) {
        StageParams sp;
        const int F = sc.block.channels;
        if (sc.use_fr) {
            sp.fr.emplace(sc.input_dim, F, 1, 1, false);
            sp.fr_g.resize_like(*sp.fr);
        }
        for (int l = 0; l < sc.levels; ++l) {
            BlockParams bp;
            const int dilation = 1 << l;
            const int in1 = sc.use_fr || l > 0 ? F : sc.input_dim;
            bp.conv1 = ConvParams(in1, F, sc.block.kernel, dilation, sc.block.weight_norm);
            bp.conv1_g.resize_like(bp.conv1);
            if (sc.block.double_conv) {
                bp.conv2.emplace(F, F, sc.block.kernel, dilation, sc.block.weight_norm);
                bp.conv2_g.resize_like(*bp.conv2);
            }
            sp.blocks.push_back(std::move(bp));
        }
        sp.head = ConvParams(F, sc.num_classes, 1, 1, false);
        sp.head_g.resize_like(sp.head);
        params.stages.push_back(std::move(sp));
    }
    return params;
}

namespace {

void init_conv(ConvParams& p, RngStream& rng) {
    const double bound = std::sqrt(1.0 / (double(p.in_ch) * p.kernel));
    for (double& x : p.v) x = rng.next_uniform(-bound, bound);
    if (p.weight_norm)
        for (int co = 0; co < p.out_ch; ++co) p.g[std::size_t(co)] = p.direction_norm(co);
    // biases stay zero
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, RngStream& rng) {
    ModelParams params = zero_params(cfg);
    for (StageParams& s : params.stages) {
        if (s.fr) init_conv(*s.fr, rng);
        for (BlockParams& b : s.blocks) {
            init_conv(b.conv1, rng);
            if (b.conv2) init_conv(*b.conv2, rng);
        }
        init_conv(s.head, rng);
    }
    return params;
}

SeqMatrix fr_forward(const SeqMatrix& x, const ConvParams& fr) {
    return relu(conv1d_forward(x, fr));
}

namespace {

BlockTape block_forward_tape(SeqMatrix h_prev, const BlockConfig& cfg, const BlockParams& params,
                             RngStream& rng, bool training) {
    BlockTape tape;
    tape.in = std::move(h_prev);
    SeqMatrix c = relu(conv1d_forward(tape.in, params.conv1));
    tape.c1_post = dropout(c, cfg.dropout_rate, rng, training, tape.m1);
    const SeqMatrix* last = &tape.c1_post;
    if (cfg.double_conv) {
        SeqMatrix c2 = relu(conv1d_forward(tape.c1_post, *params.conv2));
        tape.c2_post = dropout(c2, cfg.dropout_rate, rng, training, tape.m2);
        last = &tape.c2_post;
    }
    const bool can_residual = cfg.residual && tape.in.cols() == last->cols();
    if (can_residual) {
        SeqMatrix sum = *last;
        const double* ip = tape.in.data();
        double* sp = sum.data();
        for (std::size_t i = 0; i < sum.size(); ++i) sp[i] += ip[i];
        tape.out = relu(sum);
    } else {
        tape.out = *last;
    }
    return tape;
}

// dOut -> gradients of the block's convs; returns dIn.
SeqMatrix block_backward(const BlockTape& tape, const BlockConfig& cfg, BlockParams& params,
                         const SeqMatrix& grad_out) {
    const SeqMatrix* last = cfg.double_conv ? &tape.c2_post : &tape.c1_post;
    const bool used_residual = cfg.residual && tape.in.cols() == last->cols();

    SeqMatrix d_last(grad_out.rows(), grad_out.cols());
    SeqMatrix d_in(tape.in.rows(), tape.in.cols());
    if (used_residual) {
        // out = relu(in + last): the final ReLU gate applies to both branches.
        d_last = relu_backward(tape.out, grad_out);
        d_in = d_last;
    } else {
        d_last = grad_out;
    }

    SeqMatrix d = d_last;
    if (cfg.double_conv) {
        // c2_post = dropout(relu(conv2(c1_post)))
        SeqMatrix d_relu = dropout_backward(d, cfg.dropout_rate, tape.m2);
        // Surviving positives keep c2_post > 0; dropped entries already have
        // zero gradient, so gating on c2_post recovers the ReLU mask.
        SeqMatrix d_conv = relu_backward(tape.c2_post, d_relu);
        d = conv1d_backward(tape.c1_post, *params.conv2, d_conv, params.conv2_g);
    }
    SeqMatrix d_relu1 = dropout_backward(d, cfg.dropout_rate, tape.m1);
    SeqMatrix d_conv1 = relu_backward(tape.c1_post, d_relu1);
    SeqMatrix d_x = conv1d_backward(tape.in, params.conv1, d_conv1, params.conv1_g);

    if (used_residual) {
        const double* xp = d_x.data();
        double* ip = d_in.data();
        for (std::size_t i = 0; i < d_in.size(); ++i) ip[i] += xp[i];
        return d_in;
    }
    return d_x;
}

StageTape stage_forward_tape(const SeqMatrix& x, const StageConfig& cfg, const StageParams& params,
                             RngStream& rng, bool training) {
    require(int(x.cols()) == cfg.input_dim, "stage_forward: input width mismatch");
    StageTape tape;
    tape.input = x;
    const SeqMatrix* h = &tape.input;
    if (params.fr) {
        tape.fr_out = fr_forward(tape.input, *params.fr);
        h = &tape.fr_out;
    }
    tape.blocks.reserve(params.blocks.size());
    for (const BlockParams& bp : params.blocks) {
        tape.blocks.push_back(block_forward_tape(*h, cfg.block, bp, rng, training));
        h = &tape.blocks.back().out;
    }
    tape.logits = conv1d_forward(*h, params.head);
    tape.probs = softmax_rows(tape.logits);
    tape.log_probs = log_softmax_rows(tape.logits);
    return tape;
}

// dLogits -> gradients of the stage; returns d(stage input).
SeqMatrix stage_backward(const StageTape& tape, const StageConfig& cfg, StageParams& params,
                         const SeqMatrix& grad_logits) {
    const SeqMatrix* head_in =
        tape.blocks.empty() ? (params.fr ? &tape.fr_out : &tape.input) : &tape.blocks.back().out;
    SeqMatrix d = conv1d_backward(*head_in, params.head, grad_logits, params.head_g);
    for (std::size_t l = tape.blocks.size(); l-- > 0;)
        d = block_backward(tape.blocks[l], cfg.block, params.blocks[l], d);
    if (params.fr) {
        SeqMatrix d_conv = relu_backward(tape.fr_out, d);
        d = conv1d_backward(tape.input, *params.fr, d_conv, params.fr_g);
    }
    return d;
}

}  // namespace

SeqMatrix temporal_block_forward(const SeqMatrix& h_prev, const BlockConfig& cfg,
                                 const BlockParams& params, RngStream& rng, bool training) {
    return block_forward_tape(h_prev, cfg, params, rng, training).out;
}

SeqMatrix stage_forward(const SeqMatrix& x, const StageConfig& cfg, const StageParams& params,
                        RngStream& rng, bool training) {
    return stage_forward_tape(x, cfg, params, rng, training).probs;
}

ProbOutput multistage_forward(const SeqMatrix& x, const ModelConfig& cfg,
                              const ModelParams& params, RngStream& rng, bool training) {
    const std::vector<StageConfig> cfgs = cfg.stage_configs();
    require(cfgs.size() == params.stages.size(), "multistage_forward: config/params mismatch");
    ProbOutput out;
    const SeqMatrix* in = &x;
    for (std::size_t s = 0; s < cfgs.size(); ++s) {
        out.stages.push_back(stage_forward(*in, cfgs[s], params.stages[s], rng, training));
        in = &out.stages.back();
    }
    return out;
}

std::vector<StageTape> multistage_forward_tape(const SeqMatrix& x, const ModelConfig& cfg,
                                               const ModelParams& params, RngStream& rng,
                                               bool training) {
    const std::vector<StageConfig> cfgs = cfg.stage_configs();
    require(cfgs.size() == params.stages.size(), "multistage_forward: config/params mismatch");
    std::vector<StageTape> tapes;
    tapes.reserve(cfgs.size());
    const SeqMatrix* in = &x;
    for (std::size_t s = 0; s < cfgs.size(); ++s) {
        tapes.push_back(stage_forward_tape(*in, cfgs[s], params.stages[s], rng, training));
        in = &tapes.back().probs;
    }
    return tapes;
}

SeqMatrix multistage_backward(const std::vector<StageTape>& tapes, const ModelConfig& cfg,
                              ModelParams& params, const std::vector<SeqMatrix>& grad_log_probs) {
    const std::vector<StageConfig> cfgs = cfg.stage_configs();
    require(tapes.size() == params.stages.size() && grad_log_probs.size() == tapes.size(),
            "multistage_backward: size mismatch");
    // Walk stages from last to first; d_probs carries the gradient flowing
    // into a stage's output from the following stage's input.
    SeqMatrix d_probs;
    SeqMatrix d_input;
    for (std::size_t s = tapes.size(); s-- > 0;) {
        SeqMatrix d_logits = log_softmax_backward(tapes[s].probs, grad_log_probs[s]);
        if (!d_probs.empty()) {
            SeqMatrix from_next = softmax_backward(tapes[s].probs, d_probs);
            double* dz = d_logits.data();
            const double* fn = from_next.data();
            for (std::size_t i = 0; i < d_logits.size(); ++i) dz[i] += fn[i];
        }
        d_input = stage_backward(tapes[s], cfgs[s], params.stages[s], d_logits);
        d_probs = d_input;  // becomes d(previous stage's probs)
    }
    return d_input;
}

std::int64_t receptive_field(const StageConfig& cfg) {
    const int n_conv = cfg.block.double_conv ? 2 : 1;
    std::int64_t dil_sum = 0;
    for (int l = 0; l < cfg.levels; ++l) dil_sum += std::int64_t(1) << l;
    return 1 + std::int64_t(n_conv) * (cfg.block.kernel - 1) * dil_sum;
}

std::int64_t count_params(const ModelConfig& cfg) {
    std::int64_t n = 0;
    for (const StageConfig& sc : cfg.stage_configs()) {
        const std::int64_t F = sc.block.channels;
        const std::int64_t k = sc.block.kernel;
        const std::int64_t gains = sc.block.weight_norm ? F : 0;
        if (sc.use_fr) n += std::int64_t(sc.input_dim) * F + F;
        for (int l = 0; l < sc.levels; ++l) {
            const std::int64_t in1 = (sc.use_fr || l > 0) ? F : sc.input_dim;
            n += in1 * F * k + gains + F;                             // conv1
            if (sc.block.double_conv) n += F * F * k + gains + F;     // conv2
        }
        n += F * sc.num_classes + sc.num_classes;                     // head
    }
    return n;
}

std::int64_t estimate_flops(const ModelConfig& cfg, std::int64_t frames) {
    require(frames >= 1, "estimate_flops: frames must be >= 1");
    std::int64_t macs_per_frame = 0;
    for (const StageConfig& sc : cfg.stage_configs()) {
        const std::int64_t F = sc.block.channels;
        const std::int64_t k = sc.block.kernel;
        if (sc.use_fr) macs_per_frame += std::int64_t(sc.input_dim) * F;
        for (int l = 0; l < sc.levels; ++l) {
            const std::int64_t in1 = (sc.use_fr || l > 0) ? F : sc.input_dim;
            macs_per_frame += in1 * F * k;
            if (sc.block.double_conv) macs_per_frame += F * F * k;
        }
        macs_per_frame += F * sc.num_classes;
    }
    return 2 * frames * macs_per_frame;
}

}  // namespace ctcn

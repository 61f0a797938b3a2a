#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "colontcn/kernels.hpp"
#include "colontcn/rng.hpp"
#include "colontcn/seq.hpp"

namespace ctcn {

// One temporal block: one or two weight-normalized dilated acausal
// convolutions, each followed by ReLU and dropout, plus an optional residual
// connection closed by a final ReLU.
struct BlockConfig {
    int kernel = 7;
    int channels = 64;
    double dropout_rate = 0.5;
    bool double_conv = true;
    bool residual = true;
    bool weight_norm = true;
};

// A stack of temporal blocks with dilation 2^l at level l, preceded by an
// optional 1x1 feature-reduction layer and closed by a 1x1 softmax head.
// The FR layer exists exactly when the input width differs from the block
// width; refinement stages consume C-wide probability tensors and run their
// blocks at width C, so they have no FR layer.
struct StageConfig {
    int levels = 1;
    int input_dim = 2048;
    bool use_fr = true;
    BlockConfig block;
    int num_classes = 9;

    void validate() const;
};

struct ModelConfig {
    StageConfig base;
    int refinement_stages = 0;   // M
    int refinement_levels = 0;   // levels per refinement stage (0 = same as base)

    std::vector<StageConfig> stage_configs() const;
    void validate() const;
};

struct BlockParams {
    ConvParams conv1;
    ConvGrads conv1_g;
    std::optional<ConvParams> conv2;
    ConvGrads conv2_g;
};

struct StageParams {
    std::optional<ConvParams> fr;
    ConvGrads fr_g;
    std::vector<BlockParams> blocks;
    ConvParams head;
    ConvGrads head_g;
};

// Every learnable tensor of a (multi-stage) model, each paired with a
// congruent gradient buffer.
struct ModelParams {
    std::vector<StageParams> stages;

    void zero_grads();
    std::size_t scalar_count() const;
};

// Visits every parameter tensor in lexicographic name order, paired with its
// gradient buffer. The same order is used by the optimizer and the
// checkpoint format.
void for_each_tensor(ModelParams& params,
                     const std::function<void(const std::string&, std::vector<double>&,
                                              std::vector<double>&)>& fn);
void for_each_tensor(const ModelParams& params,
                     const std::function<void(const std::string&, const std::vector<double>&)>& fn);

// Allocates parameters and gradient buffers for a config. Direction vectors
// are drawn uniform in +-sqrt(1/(in_ch*k)); gains start at ||v|| per channel
// so the initial effective kernel equals v; biases start at zero.
ModelParams init_params(const ModelConfig& cfg, RngStream& rng);

// Allocates zeroed parameters (used by loaders).
ModelParams zero_params(const ModelConfig& cfg);

// ---- forward / backward ----

struct BlockTape {
    SeqMatrix in;                       // H_{l-1}
    SeqMatrix c1_post;                  // after conv1 + ReLU + dropout
    SeqMatrix c2_post;                  // after conv2 + ReLU + dropout (double only)
    SeqMatrix out;                      // block output H_l
    std::vector<std::uint8_t> m1, m2;   // dropout masks
};

struct StageTape {
    SeqMatrix input;
    SeqMatrix fr_out;
    std::vector<BlockTape> blocks;
    SeqMatrix logits;
    SeqMatrix probs;
    SeqMatrix log_probs;
};

// Per-stage class probability matrices Y^S, S = 1..M+1.
struct ProbOutput {
    std::vector<SeqMatrix> stages;
    const SeqMatrix& last() const { return stages.back(); }
};

SeqMatrix fr_forward(const SeqMatrix& x, const ConvParams& fr);

SeqMatrix temporal_block_forward(const SeqMatrix& h_prev, const BlockConfig& cfg,
                                 const BlockParams& params, RngStream& rng, bool training);

// Full stage: optional FR -> L blocks (dilation 2^l) -> 1x1 head -> softmax.
SeqMatrix stage_forward(const SeqMatrix& x, const StageConfig& cfg, const StageParams& params,
                        RngStream& rng, bool training);

ProbOutput multistage_forward(const SeqMatrix& x, const ModelConfig& cfg,
                              const ModelParams& params, RngStream& rng, bool training);

// Training-path forward that records every intermediate needed by the
// backward pass. Tapes are returned per stage, in stage order.
std::vector<StageTape> multistage_forward_tape(const SeqMatrix& x, const ModelConfig& cfg,
                                               const ModelParams& params, RngStream& rng,
                                               bool training);

// Reverse pass over all stages. `grad_log_probs[s]` is dL/d(log_probs of
// stage s); gradients accumulate into the buffers in `params` and the
// gradient with respect to the model input is returned.
SeqMatrix multistage_backward(const std::vector<StageTape>& tapes, const ModelConfig& cfg,
                              ModelParams& params, const std::vector<SeqMatrix>& grad_log_probs);

// ---- profiling ----

// RF = 1 + n_conv * (k-1) * sum_{l=0}^{L-1} 2^l with n_conv = 2 when blocks
// use double convolutions.
std::int64_t receptive_field(const StageConfig& cfg);

std::int64_t count_params(const ModelConfig& cfg);

// 2 * multiply-accumulates over all convolutions for a forward pass at
// sequence length T. Activations and softmax are not counted.
std::int64_t estimate_flops(const ModelConfig& cfg, std::int64_t frames);

}  // namespace ctcn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpf/tensor.hpp"

// The gated progressive fusion network: modality projections, stacked gated
// fusion layers with multi-head self-attention, and a final transformer
// encoder producing the fused feature.
namespace gpf {

enum class AblationMode { Baseline, TextOnly, ImageOnly, Full };

std::string ablation_name(AblationMode mode);
AblationMode ablation_from_name(const std::string& name);

struct ModelConfig {
    std::size_t d_model = 512;
    std::size_t img_dim = 2048;
    std::size_t txt_dim = 768;
    std::size_t fusion_layers = 4;
    std::size_t fusion_heads = 8;
    std::size_t encoder_layers = 4;
    std::size_t encoder_heads = 4;
    std::size_t num_identities = 2;
    AblationMode ablation = AblationMode::Full;

    void validate() const;
};

struct Linear {
    Tensor w;  // out x in
    Tensor b;  // 1 x out
};

struct AttentionWeights {
    Tensor q, k, v, o;  // each d_model x d_model, no biases
};

struct LayerNormParams {
    Tensor gamma, beta;  // 1 x width
};

struct FusionLayer {
    Linear gate;
    AttentionWeights attn;
    LayerNormParams ln1, ln2;
};

struct EncoderLayer {
    AttentionWeights attn;
    Linear ff1, ff2;  // d -> 4d -> d
    LayerNormParams ln1, ln2;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
    bool is_matrix;  // weight matrix vs bias/LayerNorm parameter (decay group)
};

struct GpfModel {
    ModelConfig config;
    Linear img_proj, txt_proj;
    std::vector<FusionLayer> fusion;
    std::vector<EncoderLayer> encoder;
    Linear classifier;

    // Xavier-uniform matrices, zero biases, unit/zero LayerNorm parameters.
    static GpfModel init(const ModelConfig& cfg, std::uint64_t seed);
    // Shapes allocated, values left zero (checkpoint loading fills them in).
    static GpfModel shell(const ModelConfig& cfg);

    std::vector<NamedParam> parameters();
    void set_requires_grad(bool on);
    void zero_grads();
};

struct FusedFeature {
    Tensor vector;        // K_f, 1 x d_model
    Tensor intermediate;  // K_f1, 1 x d_model
};

constexpr double kLayerNormEps = 1e-5;

// Fixed sinusoidal positional encoding, s x d.
Tensor positional_encoding(std::size_t s, std::size_t d);

Tensor project_image(const GpfModel& model, const Tensor& x_img /* 1 x img_dim */);
// tokens: n x txt_dim, n >= 1; mean-pooled then projected.
Tensor project_text(const GpfModel& model, const Tensor& tokens);

Tensor gate(const GpfModel& model, std::size_t layer_index, const Tensor& img_feat);
Tensor gated_mix(const Tensor& z, const Tensor& text_state, const Tensor& img_feat);

// seq: s x d_model. attn_probs, when given, receives one s x s attention
// weight matrix per head (forward values, detached).
Tensor multi_head_attention(const Tensor& seq, std::size_t heads, const AttentionWeights& w,
                            std::vector<Tensor>* attn_probs = nullptr);

Tensor fusion_layer_forward(const GpfModel& model, std::size_t layer_index,
                            const Tensor& img_feat, const Tensor& fused_state);

Tensor encoder_layer_forward(const GpfModel& model, std::size_t layer_index, const Tensor& seq);

FusedFeature forward(const GpfModel& model, const Tensor& x_img, const Tensor& tokens);

Tensor classify(const GpfModel& model, const Tensor& fused /* 1 x d_model */);

}  // namespace gpf

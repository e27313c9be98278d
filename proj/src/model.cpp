#include "gpf/model.hpp"

#include <cmath>
#include <random>

namespace gpf {

std::string ablation_name(AblationMode mode) {
    switch (mode) {
        case AblationMode::Baseline: return "baseline";
        case AblationMode::TextOnly: return "text_only";
        case AblationMode::ImageOnly: return "image_only";
        case AblationMode::Full: return "full";
    }
    throw ContractError("unknown ablation mode");
}

AblationMode ablation_from_name(const std::string& name) {
    if (name == "baseline") return AblationMode::Baseline;
    if (name == "text_only") return AblationMode::TextOnly;
    if (name == "image_only") return AblationMode::ImageOnly;
    if (name == "full") return AblationMode::Full;
    throw ContractError("unknown ablation mode: " + name);
}

void ModelConfig::validate() const {
    if (d_model == 0 || img_dim == 0 || txt_dim == 0)
        throw DimensionError("ModelConfig: dimensions must be positive");
    if (fusion_layers < 1 || encoder_layers < 1)
        throw DimensionError("ModelConfig: layer counts must be >= 1");
    if (num_identities < 2) throw DimensionError("ModelConfig: num_identities must be >= 2");
    if (fusion_heads == 0 || d_model % fusion_heads != 0)
        throw DimensionError("ModelConfig: d_model " + std::to_string(d_model) +
                             " not divisible by fusion_heads " + std::to_string(fusion_heads));
    if (encoder_heads == 0 || d_model % encoder_heads != 0)
        throw DimensionError("ModelConfig: d_model " + std::to_string(d_model) +
                             " not divisible by encoder_heads " + std::to_string(encoder_heads));
}

namespace {

Tensor xavier(std::size_t out, std::size_t in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t = Tensor::zeros({out, in});
    for (double& v : t.data_mut()) v = dist(rng);
    return t;
}

Linear make_linear(std::size_t out, std::size_t in, std::mt19937_64& rng) {
    return {xavier(out, in, rng), Tensor::zeros({1, out})};
}

Linear shell_linear(std::size_t out, std::size_t in) {
    return {Tensor::zeros({out, in}), Tensor::zeros({1, out})};
}

LayerNormParams make_ln(std::size_t d) {
    return {Tensor::full({1, d}, 1.0), Tensor::zeros({1, d})};
}

AttentionWeights make_attn(std::size_t d, std::mt19937_64& rng) {
    return {xavier(d, d, rng), xavier(d, d, rng), xavier(d, d, rng), xavier(d, d, rng)};
}

AttentionWeights shell_attn(std::size_t d) {
    return {Tensor::zeros({d, d}), Tensor::zeros({d, d}), Tensor::zeros({d, d}),
            Tensor::zeros({d, d})};
}

Tensor linear_forward(const Tensor& x, const Linear& lin) {
    return add_bias(matmul(x, transpose(lin.w)), lin.b);
}

void add_linear_params(std::vector<NamedParam>& out, const std::string& prefix, Linear& lin) {
    out.push_back({prefix + ".w", lin.w, true});
    out.push_back({prefix + ".b", lin.b, false});
}

void add_attn_params(std::vector<NamedParam>& out, const std::string& prefix,
                     AttentionWeights& w) {
    out.push_back({prefix + ".q", w.q, true});
    out.push_back({prefix + ".k", w.k, true});
    out.push_back({prefix + ".v", w.v, true});
    out.push_back({prefix + ".o", w.o, true});
}

void add_ln_params(std::vector<NamedParam>& out, const std::string& prefix,
                   LayerNormParams& ln) {
    out.push_back({prefix + ".gamma", ln.gamma, false});
    out.push_back({prefix + ".beta", ln.beta, false});
}

}  // namespace

GpfModel GpfModel::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    GpfModel m;
    m.config = cfg;
    const std::size_t d = cfg.d_model;
    m.img_proj = make_linear(d, cfg.img_dim, rng);
    m.txt_proj = make_linear(d, cfg.txt_dim, rng);
    for (std::size_t l = 0; l < cfg.fusion_layers; ++l) {
        FusionLayer fl;
        fl.gate = make_linear(d, d, rng);
        fl.attn = make_attn(d, rng);
        fl.ln1 = make_ln(d);
        fl.ln2 = make_ln(d);
        m.fusion.push_back(std::move(fl));
    }
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
        EncoderLayer el;
        el.attn = make_attn(d, rng);
        el.ff1 = make_linear(4 * d, d, rng);
        el.ff2 = make_linear(d, 4 * d, rng);
        el.ln1 = make_ln(d);
        el.ln2 = make_ln(d);
        m.encoder.push_back(std::move(el));
    }
    m.classifier = make_linear(cfg.num_identities, d, rng);
    return m;
}

GpfModel GpfModel::shell(const ModelConfig& cfg) {
    cfg.validate();
    GpfModel m;
    m.config = cfg;
    const std::size_t d = cfg.d_model;
    m.img_proj = shell_linear(d, cfg.img_dim);
    m.txt_proj = shell_linear(d, cfg.txt_dim);
    for (std::size_t l = 0; l < cfg.fusion_layers; ++l) {
        FusionLayer fl{shell_linear(d, d), shell_attn(d), make_ln(d), make_ln(d)};
        m.fusion.push_back(std::move(fl));
    }
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
        EncoderLayer el{shell_attn(d), shell_linear(4 * d, d), shell_linear(d, 4 * d),
                        make_ln(d), make_ln(d)};
        m.encoder.push_back(std::move(el));
    }
    m.classifier = shell_linear(cfg.num_identities, d);
    return m;
}

std::vector<NamedParam> GpfModel::parameters() {
    std::vector<NamedParam> out;
    add_linear_params(out, "img_proj", img_proj);
    add_linear_params(out, "txt_proj", txt_proj);
    for (std::size_t l = 0; l < fusion.size(); ++l) {
        const std::string p = "fusion." + std::to_string(l);
        add_linear_params(out, p + ".gate", fusion[l].gate);
        add_attn_params(out, p + ".attn", fusion[l].attn);
        add_ln_params(out, p + ".ln1", fusion[l].ln1);
        add_ln_params(out, p + ".ln2", fusion[l].ln2);
    }
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        const std::string p = "encoder." + std::to_string(l);
        add_attn_params(out, p + ".attn", encoder[l].attn);
        add_linear_params(out, p + ".ff1", encoder[l].ff1);
        add_linear_params(out, p + ".ff2", encoder[l].ff2);
        add_ln_params(out, p + ".ln1", encoder[l].ln1);
        add_ln_params(out, p + ".ln2", encoder[l].ln2);
    }
    add_linear_params(out, "classifier", classifier);
    return out;
}

void GpfModel::set_requires_grad(bool on) {
    for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

void GpfModel::zero_grads() {
    for (auto& p : parameters()) p.tensor.zero_grad();
}

Tensor positional_encoding(std::size_t s, std::size_t d) {
    if (s < 1) throw DimensionError("positional_encoding: sequence length must be >= 1");
    Tensor pe = Tensor::zeros({s, d});
    auto& data = pe.data_mut();
    for (std::size_t p = 0; p < s; ++p) {
        for (std::size_t i = 0; i * 2 < d; ++i) {
            const double freq =
                std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(d));
            const double angle = static_cast<double>(p) * freq;
            data[p * d + 2 * i] = std::sin(angle);
            if (2 * i + 1 < d) data[p * d + 2 * i + 1] = std::cos(angle);
        }
    }
    return pe;
}

Tensor project_image(const GpfModel& model, const Tensor& x_img) {
    if (x_img.rank() != 2 || x_img.rows() != 1 || x_img.cols() != model.config.img_dim)
        throw DimensionError("project_image: expected 1x" +
                             std::to_string(model.config.img_dim) + " input, got " +
                             shape_str(x_img.shape()));
    return linear_forward(x_img, model.img_proj);
}

Tensor project_text(const GpfModel& model, const Tensor& tokens) {
    if (tokens.rank() != 2 || tokens.cols() != model.config.txt_dim)
        throw DimensionError("project_text: expected n x " +
                             std::to_string(model.config.txt_dim) + " tokens, got " +
                             shape_str(tokens.shape()));
    if (tokens.rows() < 1) throw DimensionError("project_text: empty text");
    return linear_forward(mean_rows(tokens), model.txt_proj);
}

Tensor gate(const GpfModel& model, std::size_t layer_index, const Tensor& img_feat) {
    if (layer_index >= model.fusion.size())
        throw ContractError("gate: layer index out of range");
    return sigmoid(linear_forward(img_feat, model.fusion[layer_index].gate));
}

Tensor gated_mix(const Tensor& z, const Tensor& text_state, const Tensor& img_feat) {
    // K' = z * T + (1 - z) * I
    Tensor one_minus_z = add_scalar(mul_scalar(z, -1.0), 1.0);
    return add(mul(z, text_state), mul(one_minus_z, img_feat));
}

Tensor multi_head_attention(const Tensor& seq, std::size_t heads, const AttentionWeights& w,
                            std::vector<Tensor>* attn_probs) {
    const std::size_t d = seq.cols();
    if (heads == 0 || d % heads != 0)
        throw DimensionError("multi_head_attention: width " + std::to_string(d) +
                             " not divisible by " + std::to_string(heads) + " heads");
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor q = matmul(seq, transpose(w.q));
    Tensor k = matmul(seq, transpose(w.k));
    Tensor v = matmul(seq, transpose(w.v));

    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    if (attn_probs) attn_probs->clear();
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
        Tensor probs = softmax(scores, 1);
        if (attn_probs) attn_probs->push_back(probs.detach());
        head_out.push_back(matmul(probs, vh));
    }
    return matmul(concat_cols(head_out), transpose(w.o));
}

Tensor fusion_layer_forward(const GpfModel& model, std::size_t layer_index,
                            const Tensor& img_feat, const Tensor& fused_state) {
    if (layer_index >= model.fusion.size())
        throw ContractError("fusion_layer_forward: layer index out of range");
    const FusionLayer& fl = model.fusion[layer_index];

    Tensor z = gate(model, layer_index, img_feat);
    Tensor mixed = gated_mix(z, fused_state, img_feat);
    Tensor seq = concat_rows({img_feat, mixed});
    Tensor normed = layer_norm_rows(seq, fl.ln1.gamma, fl.ln1.beta, kLayerNormEps);
    Tensor attended = multi_head_attention(normed, model.config.fusion_heads, fl.attn);
    Tensor out = layer_norm_rows(add(attended, normed), fl.ln2.gamma, fl.ln2.beta,
                                 kLayerNormEps);
    return slice_rows(out, 1, 2);
}

Tensor encoder_layer_forward(const GpfModel& model, std::size_t layer_index,
                             const Tensor& seq) {
    if (layer_index >= model.encoder.size())
        throw ContractError("encoder_layer_forward: layer index out of range");
    const EncoderLayer& el = model.encoder[layer_index];

    Tensor attended = multi_head_attention(seq, model.config.encoder_heads, el.attn);
    Tensor x = layer_norm_rows(add(seq, attended), el.ln1.gamma, el.ln1.beta, kLayerNormEps);
    Tensor ff = linear_forward(relu(linear_forward(x, el.ff1)), el.ff2);
    return layer_norm_rows(add(x, ff), el.ln2.gamma, el.ln2.beta, kLayerNormEps);
}

FusedFeature forward(const GpfModel& model, const Tensor& x_img, const Tensor& tokens) {
    const ModelConfig& cfg = model.config;

    if (cfg.ablation == AblationMode::Baseline) {
        // Unimodal bypass: projected image feature, no fusion, no text.
        Tensor img = project_image(model, x_img);
        return {img, img};
    }

    Tensor img_in = cfg.ablation == AblationMode::TextOnly
                        ? Tensor::zeros({1, cfg.img_dim})
                        : x_img;
    Tensor tok_in = cfg.ablation == AblationMode::ImageOnly
                        ? Tensor::zeros(tokens.shape())
                        : tokens;

    Tensor img = project_image(model, img_in);
    Tensor txt = project_text(model, tok_in);

    Tensor pe = positional_encoding(2, cfg.d_model);
    img = add(img, slice_rows(pe, 0, 1));
    Tensor fused = add(txt, slice_rows(pe, 1, 2));

    for (std::size_t l = 0; l < cfg.fusion_layers; ++l)
        fused = fusion_layer_forward(model, l, img, fused);
    Tensor intermediate = fused;

    Tensor seq = concat_rows({img, intermediate});
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l)
        seq = encoder_layer_forward(model, l, seq);

    return {mean_rows(seq), intermediate};
}

Tensor classify(const GpfModel& model, const Tensor& fused) {
    if (fused.rank() != 2 || fused.rows() != 1 || fused.cols() != model.config.d_model)
        throw DimensionError("classify: expected 1x" + std::to_string(model.config.d_model) +
                             " feature, got " + shape_str(fused.shape()));
    return linear_forward(fused, model.classifier);
}

}  // namespace gpf

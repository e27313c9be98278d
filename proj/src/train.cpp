#include "gpf/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace gpf {

void TrainConfig::validate() const {
    if (iterations < 1) throw ContractError("TrainConfig: iterations must be >= 1");
    if (margin < 0.0) throw ContractError("TrainConfig: margin must be >= 0");
    if (p_identities * k_instances != batch_size)
        throw ContractError("TrainConfig: p_identities * k_instances (" +
                            std::to_string(p_identities) + "*" +
                            std::to_string(k_instances) + ") != batch_size " +
                            std::to_string(batch_size));
    if (k_instances < 2)
        throw ContractError("TrainConfig: k_instances must be >= 2 for triplet mining");
}

namespace {

// sqrt is smoothed at zero so batch-hard gradients stay finite when an
// anchor coincides with its hardest positive.
Tensor euclidean(const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return sqrt(add_scalar(sum(mul(d, d)), 1e-12));
}

}  // namespace

Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                    double margin) {
    Tensor dap = euclidean(anchor, positive);
    Tensor dan = euclidean(anchor, negative);
    return relu(add_scalar(sub(dap, dan), margin));
}

Tensor id_loss(const Tensor& logits, std::size_t label) {
    if (logits.rank() != 2 || logits.rows() != 1)
        throw DimensionError("id_loss: logits must be a 1 x M row");
    if (label >= logits.cols())
        throw ContractError("id_loss: label " + std::to_string(label) + " out of range M=" +
                            std::to_string(logits.cols()));
    return mul_scalar(pick(log_softmax_rows(logits), 0, label), -1.0);
}

std::vector<Triplet> batch_hard_mining(const Tensor& features,
                                       const std::vector<std::uint32_t>& labels) {
    const std::size_t b = features.rows();
    const std::size_t d = features.cols();
    if (labels.size() != b)
        throw DimensionError("batch_hard_mining: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(b) + " feature rows");

    std::vector<double> dist(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = features(i, c) - features(j, c);
                s += diff * diff;
            }
            dist[i * b + j] = dist[j * b + i] = std::sqrt(s);
        }

    std::vector<Triplet> out;
    out.reserve(b);
    for (std::size_t a = 0; a < b; ++a) {
        std::size_t best_pos = b, best_neg = b;
        double pos_d = -1.0, neg_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b; ++j) {
            if (j == a) continue;
            const double dj = dist[a * b + j];
            if (labels[j] == labels[a]) {
                if (dj > pos_d) {
                    pos_d = dj;
                    best_pos = j;
                }
            } else if (dj < neg_d) {
                neg_d = dj;
                best_neg = j;
            }
        }
        if (best_pos == b)
            throw SamplingError("batch_hard_mining: label " + std::to_string(labels[a]) +
                                " has a single instance in the batch");
        if (best_neg == b)
            throw SamplingError("batch_hard_mining: batch contains a single label");
        out.push_back({a, best_pos, best_neg});
    }
    return out;
}

void AdamState::init(const std::vector<NamedParam>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
        m.emplace_back(p.tensor.numel(), 0.0);
        v.emplace_back(p.tensor.numel(), 0.0);
    }
    t = 0;
}

void adam_step_param(Tensor& param, const std::vector<double>& grad, std::vector<double>& m,
                     std::vector<double>& v, std::uint64_t t, double lr,
                     double weight_decay) {
    auto& p = param.data_mut();
    const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] *= 1.0 - lr * weight_decay;
        const double g = i < grad.size() ? grad[i] : 0.0;
        m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * g;
        v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::eps);
    }
}

void adam_step(std::vector<NamedParam>& params, AdamState& state, const TrainConfig& cfg) {
    if (state.m.size() != params.size()) state.init(params);
    ++state.t;
    static const std::vector<double> kNoGrad;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& impl = params[i].tensor.impl();
        const std::vector<double>& g = impl->grad.empty() ? kNoGrad : impl->grad;
        const double wd = params[i].is_matrix ? cfg.weight_decay : cfg.weight_decay_bias;
        adam_step_param(params[i].tensor, g, state.m[i], state.v[i], state.t, cfg.lr, wd);
    }
}

Tensor l2_normalize(const Tensor& row) {
    Tensor norm = sqrt(add_scalar(sum(mul(row, row)), 1e-12));
    return div(row, norm);
}

Tensor total_loss(const GpfModel& model, const Dataset& ds,
                  const std::vector<std::size_t>& batch, const TrainConfig& cfg) {
    if (batch.empty()) throw ContractError("total_loss: empty batch");

    std::vector<Tensor> feats;
    std::vector<std::uint32_t> labels;
    feats.reserve(batch.size());
    Tensor id_sum = Tensor::scalar(0.0);
    for (std::size_t idx : batch) {
        FusedFeature f = forward(model, ds.image_tensor(idx), ds.tokens_tensor(idx));
        id_sum = add(id_sum, id_loss(classify(model, f.vector), ds.records[idx].label));
        feats.push_back(l2_normalize(f.vector));
        labels.push_back(ds.records[idx].label);
    }

    // Mining runs on values only; the loss terms reuse the graph tensors.
    Tensor feat_matrix = Tensor::zeros({batch.size(), model.config.d_model});
    auto& fm = feat_matrix.data_mut();
    for (std::size_t i = 0; i < feats.size(); ++i)
        std::copy(feats[i].data().begin(), feats[i].data().end(),
                  fm.begin() + i * model.config.d_model);
    auto triplets = batch_hard_mining(feat_matrix, labels);

    Tensor tri_sum = Tensor::scalar(0.0);
    for (const auto& t : triplets)
        tri_sum = add(tri_sum, triplet_loss(feats[t.anchor], feats[t.positive],
                                            feats[t.negative], cfg.margin));

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    return add(mul_scalar(id_sum, inv_b), mul_scalar(tri_sum, inv_b));
}

TrainResult train(const Dataset& ds, GpfModel& model, const TrainConfig& cfg) {
    cfg.validate();

    // Fail before step 1 when PK sampling cannot be satisfied.
    {
        auto groups = ds.by_label();
        std::size_t eligible = 0;
        for (const auto& g : groups)
            if (g.size() >= cfg.k_instances) ++eligible;
        if (eligible < cfg.p_identities)
            throw SamplingError("train: need " + std::to_string(cfg.p_identities) +
                                " identities with >= " + std::to_string(cfg.k_instances) +
                                " records, dataset has " + std::to_string(eligible));
    }

    model.set_requires_grad(true);
    auto params = model.parameters();
    AdamState state;
    state.init(params);

    std::mt19937_64 rng(cfg.seed);
    TrainResult result;
    result.loss_history.reserve(cfg.iterations);

    for (std::size_t step = 0; step < cfg.iterations; ++step) {
        auto batch = pk_sample(ds, cfg.p_identities, cfg.k_instances, rng);
        model.zero_grads();
        Tape tape;
        Tensor loss = total_loss(model, ds, batch, cfg);
        tape.run_backward(loss);
        adam_step(params, state, cfg);
        result.loss_history.push_back(loss.item());
    }
    return result;
}

void write_loss_log(const std::vector<double>& history, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t i = 0; i < history.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu\t%.17g\n", i + 1, history[i]);
        os << buf;
    }
}

}  // namespace gpf

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpf/data.hpp"
#include "gpf/model.hpp"
#include "gpf/tensor.hpp"

// Optimization objectives (identity cross-entropy + batch-hard triplet),
// Adam with decoupled weight decay, and the training loop.
namespace gpf {

struct TrainConfig {
    double lr = 3.5e-4;
    double weight_decay = 1e-5;       // weight matrices
    double weight_decay_bias = 1e-7;  // biases and LayerNorm parameters
    std::size_t iterations = 180;
    std::size_t batch_size = 64;
    std::size_t p_identities = 16;
    std::size_t k_instances = 4;
    double margin = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

// max(0, d(a,p) - d(a,n) + margin), Euclidean distance on the (already
// L2-normalized) feature rows.
Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                    double margin);

// Softmax cross-entropy -log p(label) on a 1 x M logits row.
Tensor id_loss(const Tensor& logits, std::size_t label);

struct Triplet {
    std::size_t anchor, positive, negative;
};

// For each anchor: same-label sample at max distance, different-label sample
// at min distance; ties broken by lowest index. features: B x d values.
std::vector<Triplet> batch_hard_mining(const Tensor& features,
                                       const std::vector<std::uint32_t>& labels);

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    std::vector<std::vector<double>> m, v;  // one slot per parameter
    std::uint64_t t = 0;

    void init(const std::vector<NamedParam>& params);
};

// Decoupled weight decay followed by one bias-corrected Adam update. The
// step counter must have been incremented by the caller for this step.
void adam_step_param(Tensor& param, const std::vector<double>& grad,
                     std::vector<double>& m, std::vector<double>& v, std::uint64_t t,
                     double lr, double weight_decay);

// One optimizer step over all parameters of a model. Parameters with empty
// gradients are treated as zero-gradient.
void adam_step(std::vector<NamedParam>& params, AdamState& state, const TrainConfig& cfg);

Tensor l2_normalize(const Tensor& row);

// Mean id_loss over the batch plus mean batch-hard triplet loss.
Tensor total_loss(const GpfModel& model, const Dataset& ds,
                  const std::vector<std::size_t>& batch, const TrainConfig& cfg);

struct TrainResult {
    std::vector<double> loss_history;  // one entry per step
};

TrainResult train(const Dataset& ds, GpfModel& model, const TrainConfig& cfg);

void write_loss_log(const std::vector<double>& history, const std::string& path);

}  // namespace gpf

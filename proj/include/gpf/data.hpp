#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gpf/tensor.hpp"

// Embedding dataset ingestion, synthetic generation and PK batch sampling.
// Two on-disk formats: JSON-lines (inspectable) and packed binary (fast).
namespace gpf {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmbeddingRecord {
    std::string id;
    std::uint32_t label = 0;
    std::optional<std::uint32_t> camera;
    std::vector<float> image_vec;                  // img_dim
    std::vector<std::vector<float>> text_tokens;   // n x txt_dim, n >= 1
};

struct Dataset {
    std::uint32_t img_dim = 0;
    std::uint32_t txt_dim = 0;
    std::uint32_t num_identities = 0;
    std::vector<EmbeddingRecord> records;

    void validate() const;
    // Record indices grouped by label, in file order.
    std::vector<std::vector<std::size_t>> by_label() const;

    // Tensor views of one record (1 x img_dim and n x txt_dim, doubles).
    Tensor image_tensor(std::size_t index) const;
    Tensor tokens_tensor(std::size_t index) const;
};

enum class DataFormat { Jsonl, Binary };

// Format inferred from path extension (".jsonl" vs anything else -> binary)
// unless given explicitly.
DataFormat format_from_path(const std::string& path);

void save_dataset(const Dataset& ds, const std::string& path, DataFormat format);
// Detects the format from the file's leading bytes.
Dataset load_dataset(const std::string& path);

struct SyntheticSpec {
    std::size_t identities = 8;
    std::size_t per_identity = 4;
    std::size_t img_dim = 128;
    std::size_t txt_dim = 64;
    std::size_t n_tokens = 4;
    std::size_t latent_dim = 32;
    double noise_sigma = 0.1;        // image channel
    double text_noise_sigma = -1.0;  // < 0 means: same as noise_sigma
    std::uint64_t seed = 0;
};

// Per identity a gaussian latent is drawn once; records are fixed linear
// maps of it plus channel noise. Deterministic given the seed.
Dataset gen_synthetic(const SyntheticSpec& spec);

// p distinct identities, k records each, batch order shuffled.
std::vector<std::size_t> pk_sample(const Dataset& ds, std::size_t p, std::size_t k,
                                   std::mt19937_64& rng);

}  // namespace gpf

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpf/data.hpp"
#include "gpf/model.hpp"

// Retrieval evaluation: cosine ranking of gallery against queries,
// protocol filtering, CMC@k and mAP.
namespace gpf {

struct EvalItem {
    std::vector<double> feature;
    std::uint32_t label = 0;
    std::optional<std::uint32_t> camera;
    std::string id;  // self-exclusion key when the query appears in the gallery
};

struct RankedQuery {
    std::vector<std::size_t> order;  // admissible gallery indices, best first
    std::vector<double> scores;      // non-increasing
    std::vector<bool> relevant;      // per ranked position
    bool skipped = false;
};

struct EvalReport {
    double map = 0.0;
    std::map<int, double> cmc;
    std::size_t num_queries = 0;
    std::size_t num_skipped = 0;

    std::string to_json() const;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Excludes gallery entries sharing (label, camera) with the query when both
// cameras are present, and entries with the query's own id. Remaining
// entries sorted by descending similarity, ties by ascending gallery index.
RankedQuery rank_gallery(const EvalItem& query, const std::vector<EvalItem>& gallery);

// CMC@k = fraction of non-skipped queries whose first hit is at position <= k.
std::map<int, double> compute_cmc(const std::vector<RankedQuery>& rankings,
                                  const std::vector<int>& ks);

// AP = mean over relevant hits i (1-based) of i / rank_i; mAP over queries.
double compute_map(const std::vector<RankedQuery>& rankings);

EvalReport evaluate_items(const std::vector<EvalItem>& queries,
                          const std::vector<EvalItem>& gallery, const std::vector<int>& ks);

// Features are L2-normalized fused vectors from forward(). Queries fan out
// across threads; the merge is by query index.
EvalReport evaluate(const GpfModel& model, const Dataset& query_set,
                    const Dataset& gallery_set, const std::vector<int>& ks);

std::vector<EvalItem> extract_features(const GpfModel& model, const Dataset& ds);

}  // namespace gpf

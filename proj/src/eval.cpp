#include "gpf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace gpf {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw DimensionError("cosine_similarity: length mismatch " +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw ContractError("cosine_similarity: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

RankedQuery rank_gallery(const EvalItem& query, const std::vector<EvalItem>& gallery) {
    std::vector<std::size_t> admissible;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
        const EvalItem& item = gallery[g];
        if (!query.id.empty() && item.id == query.id) continue;
        if (query.camera && item.camera && item.label == query.label &&
            *item.camera == *query.camera)
            continue;
        admissible.push_back(g);
    }

    RankedQuery out;
    if (admissible.empty()) {
        out.skipped = true;
        return out;
    }

    std::vector<double> sims(admissible.size());
    for (std::size_t i = 0; i < admissible.size(); ++i)
        sims[i] = cosine_similarity(query.feature, gallery[admissible[i]].feature);

    std::vector<std::size_t> perm(admissible.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return admissible[a] < admissible[b];
    });

    out.order.reserve(perm.size());
    out.scores.reserve(perm.size());
    out.relevant.reserve(perm.size());
    for (std::size_t i : perm) {
        out.order.push_back(admissible[i]);
        out.scores.push_back(sims[i]);
        out.relevant.push_back(gallery[admissible[i]].label == query.label);
    }
    return out;
}

namespace {

bool evaluable(const RankedQuery& r) {
    if (r.skipped) return false;
    return std::find(r.relevant.begin(), r.relevant.end(), true) != r.relevant.end();
}

}  // namespace

std::map<int, double> compute_cmc(const std::vector<RankedQuery>& rankings,
                                  const std::vector<int>& ks) {
    std::map<int, double> cmc;
    std::size_t n = 0;
    std::vector<std::size_t> hits(ks.size(), 0);
    for (const auto& r : rankings) {
        if (!evaluable(r)) continue;
        ++n;
        std::size_t first = r.relevant.size();
        for (std::size_t i = 0; i < r.relevant.size(); ++i)
            if (r.relevant[i]) {
                first = i + 1;  // 1-based rank of first correct match
                break;
            }
        for (std::size_t j = 0; j < ks.size(); ++j)
            if (first <= static_cast<std::size_t>(ks[j])) ++hits[j];
    }
    for (std::size_t j = 0; j < ks.size(); ++j)
        cmc[ks[j]] = n == 0 ? 0.0 : static_cast<double>(hits[j]) / static_cast<double>(n);
    return cmc;
}

double compute_map(const std::vector<RankedQuery>& rankings) {
    double ap_sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rankings) {
        if (!evaluable(r)) continue;
        ++n;
        double ap = 0.0;
        std::size_t found = 0;
        for (std::size_t i = 0; i < r.relevant.size(); ++i)
            if (r.relevant[i]) {
                ++found;
                ap += static_cast<double>(found) / static_cast<double>(i + 1);
            }
        ap_sum += ap / static_cast<double>(found);
    }
    return n == 0 ? 0.0 : ap_sum / static_cast<double>(n);
}

EvalReport evaluate_items(const std::vector<EvalItem>& queries,
                          const std::vector<EvalItem>& gallery, const std::vector<int>& ks) {
    std::vector<RankedQuery> rankings(queries.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t q = 0; q < queries.size(); ++q)
        rankings[q] = rank_gallery(queries[q], gallery);

    EvalReport report;
    for (const auto& r : rankings)
        if (evaluable(r))
            ++report.num_queries;
        else
            ++report.num_skipped;
    report.cmc = compute_cmc(rankings, ks);
    report.map = compute_map(rankings);
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["mAP"] = map;
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cmc) c[std::to_string(k)] = v;
    j["cmc"] = std::move(c);
    j["num_queries"] = num_queries;
    j["num_skipped"] = num_skipped;
    return j.dump(2) + "\n";
}

std::vector<EvalItem> extract_features(const GpfModel& model, const Dataset& ds) {
    std::vector<EvalItem> items(ds.records.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        NoGrad ng;
        FusedFeature f = forward(model, ds.image_tensor(i), ds.tokens_tensor(i));
        // L2-normalize; cosine ranking is scale-free but the stored features
        // should match the training-time metric space.
        double n2 = 0.0;
        for (double v : f.vector.data()) n2 += v * v;
        const double inv = 1.0 / std::sqrt(n2 + 1e-12);
        items[i].feature.resize(f.vector.numel());
        for (std::size_t c = 0; c < f.vector.numel(); ++c)
            items[i].feature[c] = f.vector.data()[c] * inv;
        items[i].label = ds.records[i].label;
        items[i].camera = ds.records[i].camera;
        items[i].id = ds.records[i].id;
    }
    return items;
}

EvalReport evaluate(const GpfModel& model, const Dataset& query_set,
                    const Dataset& gallery_set, const std::vector<int>& ks) {
    auto queries = extract_features(model, query_set);
    auto gallery = extract_features(model, gallery_set);
    return evaluate_items(queries, gallery, ks);
}

}  // namespace gpf

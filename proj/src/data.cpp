#include "gpf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace gpf {

namespace {

using ordered_json = nlohmann::ordered_json;

void fail_record(const std::string& id, const std::string& what) {
    throw ValidationError("record '" + id + "': " + what);
}

}  // namespace

void Dataset::validate() const {
    for (const auto& r : records) {
        if (r.image_vec.size() != img_dim)
            fail_record(r.id, "image_vec length " + std::to_string(r.image_vec.size()) +
                                  " != header img_dim " + std::to_string(img_dim));
        if (r.text_tokens.empty()) fail_record(r.id, "empty text_tokens");
        for (const auto& tok : r.text_tokens)
            if (tok.size() != txt_dim)
                fail_record(r.id, "token length " + std::to_string(tok.size()) +
                                      " != header txt_dim " + std::to_string(txt_dim));
        if (r.label >= num_identities)
            fail_record(r.id, "label " + std::to_string(r.label) +
                                  " >= num_identities " + std::to_string(num_identities));
        for (float v : r.image_vec)
            if (!std::isfinite(v)) fail_record(r.id, "non-finite image value");
        for (const auto& tok : r.text_tokens)
            for (float v : tok)
                if (!std::isfinite(v)) fail_record(r.id, "non-finite token value");
    }
    if (!records.empty()) {
        std::vector<bool> seen(num_identities, false);
        for (const auto& r : records) seen[r.label] = true;
        for (std::uint32_t l = 0; l < num_identities; ++l)
            if (!seen[l])
                throw ValidationError("identity " + std::to_string(l) + " has no records");
    }
}

std::vector<std::vector<std::size_t>> Dataset::by_label() const {
    std::vector<std::vector<std::size_t>> groups(num_identities);
    for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].label].push_back(i);
    return groups;
}

Tensor Dataset::image_tensor(std::size_t index) const {
    const auto& r = records.at(index);
    std::vector<double> v(r.image_vec.begin(), r.image_vec.end());
    return Tensor::from(std::move(v), {1, img_dim});
}

Tensor Dataset::tokens_tensor(std::size_t index) const {
    const auto& r = records.at(index);
    std::vector<double> v;
    v.reserve(r.text_tokens.size() * txt_dim);
    for (const auto& tok : r.text_tokens) v.insert(v.end(), tok.begin(), tok.end());
    return Tensor::from(std::move(v), {r.text_tokens.size(), txt_dim});
}

DataFormat format_from_path(const std::string& path) {
    if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0)
        return DataFormat::Jsonl;
    return DataFormat::Binary;
}

namespace {

void save_jsonl(const Dataset& ds, std::ostream& os) {
    ordered_json header;
    header["img_dim"] = ds.img_dim;
    header["txt_dim"] = ds.txt_dim;
    header["num_identities"] = ds.num_identities;
    header["count"] = static_cast<std::uint64_t>(ds.records.size());
    os << header.dump() << '\n';
    for (const auto& r : ds.records) {
        ordered_json j;
        j["id"] = r.id;
        j["label"] = r.label;
        if (r.camera)
            j["camera"] = *r.camera;
        else
            j["camera"] = nullptr;
        j["image_vec"] = r.image_vec;
        ordered_json toks = ordered_json::array();
        for (const auto& tok : r.text_tokens) toks.push_back(tok);
        j["text_tokens"] = std::move(toks);
        os << j.dump() << '\n';
    }
}

Dataset load_jsonl(std::istream& is, const std::string& path) {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) throw ParseError(path + ": missing header line");
    ++lineno;
    std::uint64_t count = 0;
    try {
        auto h = ordered_json::parse(line);
        ds.img_dim = h.at("img_dim").get<std::uint32_t>();
        ds.txt_dim = h.at("txt_dim").get<std::uint32_t>();
        ds.num_identities = h.at("num_identities").get<std::uint32_t>();
        count = h.at("count").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":1: bad header: " + e.what());
    }
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        EmbeddingRecord r;
        try {
            auto j = ordered_json::parse(line);
            r.id = j.at("id").get<std::string>();
            r.label = j.at("label").get<std::uint32_t>();
            if (!j.at("camera").is_null()) r.camera = j.at("camera").get<std::uint32_t>();
            r.image_vec = j.at("image_vec").get<std::vector<float>>();
            r.text_tokens = j.at("text_tokens").get<std::vector<std::vector<float>>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        ds.records.push_back(std::move(r));
    }
    if (ds.records.size() != count)
        throw ValidationError(path + ": header count " + std::to_string(count) +
                              " != record count " + std::to_string(ds.records.size()));
    ds.validate();
    return ds;
}

template <typename T>
void write_le(std::ostream& os, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& path) {
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
        throw ParseError(path + ": truncated file");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

constexpr char kDataMagic[4] = {'G', 'P', 'F', 'E'};

void save_binary(const Dataset& ds, std::ostream& os) {
    os.write(kDataMagic, 4);
    write_le<std::uint16_t>(os, 1);
    write_le<std::uint32_t>(os, ds.img_dim);
    write_le<std::uint32_t>(os, ds.txt_dim);
    write_le<std::uint32_t>(os, ds.num_identities);
    write_le<std::uint64_t>(os, ds.records.size());
    for (const auto& r : ds.records) {
        write_le<std::uint16_t>(os, static_cast<std::uint16_t>(r.id.size()));
        os.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
        write_le<std::uint32_t>(os, r.label);
        write_le<std::int64_t>(os, r.camera ? static_cast<std::int64_t>(*r.camera) : -1);
        write_le<std::uint16_t>(os, static_cast<std::uint16_t>(r.text_tokens.size()));
        for (float v : r.image_vec) write_le<float>(os, v);
        for (const auto& tok : r.text_tokens)
            for (float v : tok) write_le<float>(os, v);
    }
}

Dataset load_binary(std::istream& is, const std::string& path) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kDataMagic, 4) != 0)
        throw ParseError(path + ": bad magic, not a GPFE dataset");
    const auto version = read_le<std::uint16_t>(is, path);
    if (version != 1)
        throw ParseError(path + ": unsupported version " + std::to_string(version));
    Dataset ds;
    ds.img_dim = read_le<std::uint32_t>(is, path);
    ds.txt_dim = read_le<std::uint32_t>(is, path);
    ds.num_identities = read_le<std::uint32_t>(is, path);
    const auto count = read_le<std::uint64_t>(is, path);
    ds.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        EmbeddingRecord r;
        const auto id_len = read_le<std::uint16_t>(is, path);
        r.id.resize(id_len);
        if (!is.read(r.id.data(), id_len)) throw ParseError(path + ": truncated file");
        r.label = read_le<std::uint32_t>(is, path);
        const auto cam = read_le<std::int64_t>(is, path);
        if (cam >= 0) r.camera = static_cast<std::uint32_t>(cam);
        const auto n_tokens = read_le<std::uint16_t>(is, path);
        r.image_vec.resize(ds.img_dim);
        for (auto& v : r.image_vec) v = read_le<float>(is, path);
        r.text_tokens.resize(n_tokens);
        for (auto& tok : r.text_tokens) {
            tok.resize(ds.txt_dim);
            for (auto& v : tok) v = read_le<float>(is, path);
        }
        ds.records.push_back(std::move(r));
    }
    ds.validate();
    return ds;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path, DataFormat format) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    if (format == DataFormat::Jsonl)
        save_jsonl(ds, os);
    else
        save_binary(ds, os);
    if (!os) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4] = {};
    is.read(magic, 4);
    is.clear();
    is.seekg(0);
    if (std::memcmp(magic, kDataMagic, 4) == 0) return load_binary(is, path);
    return load_jsonl(is, path);
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
    if (spec.identities < 1 || spec.per_identity < 1 || spec.img_dim < 1 ||
        spec.txt_dim < 1 || spec.n_tokens < 1 || spec.latent_dim < 1)
        throw ValidationError("gen_synthetic: all counts must be >= 1");

    const double txt_sigma =
        spec.text_noise_sigma < 0.0 ? spec.noise_sigma : spec.text_noise_sigma;

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Fixed mixing maps shared by all identities.
    std::vector<double> map_img(spec.img_dim * spec.latent_dim);
    std::vector<double> map_txt(spec.txt_dim * spec.latent_dim);
    const double img_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    for (auto& v : map_img) v = gauss(rng) * img_scale;
    for (auto& v : map_txt) v = gauss(rng) * img_scale;

    Dataset ds;
    ds.img_dim = static_cast<std::uint32_t>(spec.img_dim);
    ds.txt_dim = static_cast<std::uint32_t>(spec.txt_dim);
    ds.num_identities = static_cast<std::uint32_t>(spec.identities);

    std::vector<double> latent(spec.latent_dim);
    for (std::size_t id = 0; id < spec.identities; ++id) {
        for (auto& v : latent) v = gauss(rng);
        for (std::size_t s = 0; s < spec.per_identity; ++s) {
            EmbeddingRecord r;
            r.id = "id" + std::to_string(id) + "_s" + std::to_string(s);
            r.label = static_cast<std::uint32_t>(id);
            r.image_vec.resize(spec.img_dim);
            for (std::size_t i = 0; i < spec.img_dim; ++i) {
                double v = 0.0;
                for (std::size_t l = 0; l < spec.latent_dim; ++l)
                    v += map_img[i * spec.latent_dim + l] * latent[l];
                r.image_vec[i] = static_cast<float>(v + spec.noise_sigma * gauss(rng));
            }
            r.text_tokens.resize(spec.n_tokens);
            for (auto& tok : r.text_tokens) {
                tok.resize(spec.txt_dim);
                for (std::size_t i = 0; i < spec.txt_dim; ++i) {
                    double v = 0.0;
                    for (std::size_t l = 0; l < spec.latent_dim; ++l)
                        v += map_txt[i * spec.latent_dim + l] * latent[l];
                    tok[i] = static_cast<float>(v + txt_sigma * gauss(rng));
                }
            }
            ds.records.push_back(std::move(r));
        }
    }
    ds.validate();
    return ds;
}

std::vector<std::size_t> pk_sample(const Dataset& ds, std::size_t p, std::size_t k,
                                   std::mt19937_64& rng) {
    if (p < 1 || k < 1) throw SamplingError("pk_sample: p and k must be >= 1");
    auto groups = ds.by_label();
    std::vector<std::size_t> eligible;
    for (std::size_t l = 0; l < groups.size(); ++l)
        if (groups[l].size() >= k) eligible.push_back(l);
    if (eligible.size() < p)
        throw SamplingError("pk_sample: need " + std::to_string(p) + " identities with >= " +
                            std::to_string(k) + " records, found " +
                            std::to_string(eligible.size()));

    std::shuffle(eligible.begin(), eligible.end(), rng);
    std::vector<std::size_t> batch;
    batch.reserve(p * k);
    for (std::size_t i = 0; i < p; ++i) {
        auto& members = groups[eligible[i]];
        std::shuffle(members.begin(), members.end(), rng);
        batch.insert(batch.end(), members.begin(), members.begin() + k);
    }
    std::shuffle(batch.begin(), batch.end(), rng);
    return batch;
}

}  // namespace gpf

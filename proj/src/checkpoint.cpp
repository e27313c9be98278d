#include "gpf/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace gpf {

namespace {

constexpr char kMagic[4] = {'G', 'P', 'F', 'N'};

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
        throw std::runtime_error(path + ": truncated checkpoint");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["d_model"] = cfg.d_model;
    j["img_dim"] = cfg.img_dim;
    j["txt_dim"] = cfg.txt_dim;
    j["fusion_layers"] = cfg.fusion_layers;
    j["fusion_heads"] = cfg.fusion_heads;
    j["encoder_layers"] = cfg.encoder_layers;
    j["encoder_heads"] = cfg.encoder_heads;
    j["num_identities"] = cfg.num_identities;
    j["ablation_mode"] = ablation_name(cfg.ablation);
    return j;
}

ModelConfig config_from_json(const nlohmann::ordered_json& j) {
    ModelConfig cfg;
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.img_dim = j.at("img_dim").get<std::size_t>();
    cfg.txt_dim = j.at("txt_dim").get<std::size_t>();
    cfg.fusion_layers = j.at("fusion_layers").get<std::size_t>();
    cfg.fusion_heads = j.at("fusion_heads").get<std::size_t>();
    cfg.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    cfg.encoder_heads = j.at("encoder_heads").get<std::size_t>();
    cfg.num_identities = j.at("num_identities").get<std::size_t>();
    cfg.ablation = ablation_from_name(j.at("ablation_mode").get<std::string>());
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, GpfModel& model, std::uint64_t step,
                     std::uint64_t seed) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);

    os.write(kMagic, 4);
    write_le<std::uint16_t>(os, 1);

    nlohmann::ordered_json j;
    j["config"] = config_to_json(model.config);
    j["step"] = step;
    j["seed"] = seed;
    const std::string blob = j.dump();
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(blob.size()));
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    for (auto& p : model.parameters()) {
        write_le<std::uint16_t>(os, static_cast<std::uint16_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        write_le<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
        for (std::size_t d : shape) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        for (double v : p.tensor.data()) write_le<double>(os, v);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": bad magic, not a GPFN checkpoint");
    const auto version = read_le<std::uint16_t>(is, path);
    if (version != 1)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));

    const auto blob_len = read_le<std::uint32_t>(is, path);
    std::string blob(blob_len, '\0');
    if (!is.read(blob.data(), blob_len))
        throw std::runtime_error(path + ": truncated checkpoint");

    Checkpoint ckpt;
    auto j = nlohmann::ordered_json::parse(blob);
    ckpt.config = config_from_json(j.at("config"));
    ckpt.step = j.at("step").get<std::uint64_t>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.model = GpfModel::shell(ckpt.config);

    auto params = ckpt.model.parameters();
    for (auto& p : params) {
        const auto name_len = read_le<std::uint16_t>(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw std::runtime_error(path + ": truncated checkpoint");
        if (name != p.name)
            throw std::runtime_error(path + ": unexpected parameter '" + name +
                                     "', wanted '" + p.name + "'");
        const auto rank = read_le<std::uint8_t>(is, path);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = read_le<std::uint32_t>(is, path);
        if (shape != p.tensor.shape())
            throw std::runtime_error(path + ": parameter '" + name + "' has shape " +
                                     shape_str(shape) + ", expected " +
                                     shape_str(p.tensor.shape()));
        for (double& v : p.tensor.data_mut()) v = read_le<double>(is, path);
    }
    return ckpt;
}

}  // namespace gpf

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "gpf/checkpoint.hpp"

using namespace gpf;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.img_dim = 10;
    cfg.txt_dim = 6;
    cfg.fusion_layers = 2;
    cfg.fusion_heads = 2;
    cfg.encoder_layers = 1;
    cfg.encoder_heads = 2;
    cfg.num_identities = 3;
    cfg.ablation = AblationMode::Full;
    return cfg;
}

}  // namespace

TEST_CASE("save -> load -> save is byte identical and metadata survives") {
    GpfModel model = GpfModel::init(small_config(), 99);
    TempFile f1("/tmp/gpf_ck1.gpfn"), f2("/tmp/gpf_ck2.gpfn");
    save_checkpoint(f1.path, model, 42, 99);

    Checkpoint ckpt = load_checkpoint(f1.path);
    CHECK(ckpt.step == 42);
    CHECK(ckpt.seed == 99);
    CHECK(ckpt.config.d_model == 8);
    CHECK(ckpt.config.num_identities == 3);
    CHECK(ablation_name(ckpt.config.ablation) == "full");

    save_checkpoint(f2.path, ckpt.model, ckpt.step, ckpt.seed);
    CHECK(read_file(f1.path) == read_file(f2.path));

    auto orig = model.parameters();
    auto back = ckpt.model.parameters();
    REQUIRE(orig.size() == back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i].name == back[i].name);
        CHECK(orig[i].tensor.data() == back[i].tensor.data());
    }
}

TEST_CASE("loaded model reproduces forward passes bit for bit") {
    GpfModel model = GpfModel::init(small_config(), 7);
    TempFile f("/tmp/gpf_ck_fw.gpfn");
    save_checkpoint(f.path, model, 0, 7);
    Checkpoint ckpt = load_checkpoint(f.path);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (int it = 0; it < 10; ++it) {
        Tensor img = Tensor::zeros({1, 10});
        for (double& v : img.data_mut()) v = dist(rng);
        Tensor toks = Tensor::zeros({3, 6});
        for (double& v : toks.data_mut()) v = dist(rng);
        FusedFeature a = forward(model, img, toks);
        FusedFeature b = forward(ckpt.model, img, toks);
        CHECK(a.vector.data() == b.vector.data());
        CHECK(a.intermediate.data() == b.intermediate.data());
    }
}

TEST_CASE("ablation mode round trips") {
    ModelConfig cfg = small_config();
    cfg.ablation = AblationMode::TextOnly;
    GpfModel model = GpfModel::init(cfg, 1);
    TempFile f("/tmp/gpf_ck_abl.gpfn");
    save_checkpoint(f.path, model, 1, 1);
    CHECK(load_checkpoint(f.path).config.ablation == AblationMode::TextOnly);
}

TEST_CASE("corrupt checkpoints are rejected with a clear message") {
    GpfModel model = GpfModel::init(small_config(), 5);
    TempFile f("/tmp/gpf_ck_bad.gpfn");
    save_checkpoint(f.path, model, 3, 5);
    const std::string good = read_file(f.path);

    SUBCASE("bad magic") {
        std::string bytes = good;
        bytes[0] = 'X';
        std::ofstream(f.path, std::ios::binary).write(bytes.data(), bytes.size());
        try {
            load_checkpoint(f.path);
            FAIL("expected failure");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("magic") != std::string::npos);
        }
    }
    SUBCASE("unsupported version") {
        std::string bytes = good;
        bytes[4] = 9;
        std::ofstream(f.path, std::ios::binary).write(bytes.data(), bytes.size());
        try {
            load_checkpoint(f.path);
            FAIL("expected failure");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("truncated parameter data") {
        std::string bytes = good.substr(0, good.size() - 12);
        std::ofstream(f.path, std::ios::binary).write(bytes.data(), bytes.size());
        try {
            load_checkpoint(f.path);
            FAIL("expected failure");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        }
    }
    SUBCASE("parameter name mismatch") {
        // corrupt the first parameter name ("img_proj.w") in place
        std::string bytes = good;
        const auto pos = bytes.find("img_proj.w", 16);
        REQUIRE(pos != std::string::npos);
        bytes[pos] = 'x';
        std::ofstream(f.path, std::ios::binary).write(bytes.data(), bytes.size());
        try {
            load_checkpoint(f.path);
            FAIL("expected failure");
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("unexpected parameter") != std::string::npos);
            CHECK(msg.find("img_proj.w") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint("/tmp/gpf_no_such_ckpt.gpfn"), std::runtime_error);
    }
}

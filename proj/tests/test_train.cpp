#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "gpf/train.hpp"

using namespace gpf;

namespace {

ModelConfig tiny_model_config(const Dataset& ds) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.img_dim = ds.img_dim;
    cfg.txt_dim = ds.txt_dim;
    cfg.fusion_layers = 2;
    cfg.fusion_heads = 4;
    cfg.encoder_layers = 2;
    cfg.encoder_heads = 2;
    cfg.num_identities = ds.num_identities;
    return cfg;
}

Dataset tiny_dataset(std::uint64_t seed = 11, double noise = 0.1) {
    SyntheticSpec spec;
    spec.identities = 4;
    spec.per_identity = 4;
    spec.img_dim = 12;
    spec.txt_dim = 8;
    spec.n_tokens = 2;
    spec.latent_dim = 6;
    spec.noise_sigma = noise;
    spec.seed = seed;
    return gen_synthetic(spec);
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.p_identities = 4;
    cfg.k_instances = 2;
    cfg.iterations = 1;
    return cfg;
}

}  // namespace

TEST_CASE("train config invariants") {
    TrainConfig cfg = tiny_train_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_train_config();
    cfg.p_identities = 3;  // 3*2 != 8
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_train_config();
    cfg.k_instances = 1;
    cfg.p_identities = 8;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_train_config();
    cfg.margin = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("triplet_loss examples") {
    Tensor a = Tensor::row({0, 0});

    SUBCASE("tie gives the margin") {
        Tensor p = Tensor::row({1, 0});
        Tensor n = Tensor::row({0, 1});
        CHECK(triplet_loss(a, p, n, 0.3).item() == doctest::Approx(0.3).epsilon(1e-9));
    }
    SUBCASE("satisfied by a wide gap") {
        // d(a,p)=0.2, d(a,n)=0.9 -> max(0, -0.4) = 0
        Tensor p = Tensor::row({0.2, 0});
        Tensor n = Tensor::row({0.9, 0});
        CHECK(triplet_loss(a, p, n, 0.3).item() == 0.0);
    }
    SUBCASE("positive equals anchor, negative beyond margin") {
        Tensor n = Tensor::row({0.5, 0});
        CHECK(triplet_loss(a, a, n, 0.3).item() == 0.0);
    }
    SUBCASE("violation is linear in the gap") {
        Tensor p = Tensor::row({0.6, 0});
        Tensor n = Tensor::row({0.1, 0});
        CHECK(triplet_loss(a, p, n, 0.3).item() == doctest::Approx(0.8).epsilon(1e-6));
    }
}

TEST_CASE("id_loss examples") {
    SUBCASE("uniform logits give ln M") {
        for (std::size_t m : {2, 3, 8}) {
            Tensor logits = Tensor::full({1, m}, 1.7);
            CHECK(id_loss(logits, 0).item() ==
                  doctest::Approx(std::log(double(m))).epsilon(1e-12));
        }
    }
    SUBCASE("peaked logits") {
        Tensor logits = Tensor::row({10, 0, 0});
        const double want = -std::log(std::exp(10.0) / (std::exp(10.0) + 2.0));
        CHECK(id_loss(logits, 0).item() == doctest::Approx(want).epsilon(1e-9));
        CHECK(id_loss(logits, 0).item() == doctest::Approx(9.08e-5).epsilon(1e-3));
    }
    SUBCASE("shift invariance") {
        Tensor logits = Tensor::row({0.3, -1.2, 2.0});
        CHECK(id_loss(logits, 1).item() ==
              doctest::Approx(id_loss(add_scalar(logits, 7.5), 1).item()).epsilon(1e-12));
    }
    SUBCASE("label out of range") {
        CHECK_THROWS_AS(id_loss(Tensor::row({1, 2}), 2), ContractError);
    }
}

TEST_CASE("batch_hard_mining") {
    SUBCASE("3-sample hand case") {
        // anchor 0 with positives at distances 1 and 2, nearest negative at
        // 0.5 (the second negative sits far away and never wins)
        Tensor feats = Tensor::matrix({{0, 0}, {1, 0}, {2, 0}, {0.5, 0}, {0.5, 8}});
        std::vector<std::uint32_t> labels = {0, 0, 0, 1, 1};
        auto trips = batch_hard_mining(feats, labels);
        CHECK(trips[0].anchor == 0);
        CHECK(trips[0].positive == 2);  // distance 2 beats 1
        CHECK(trips[0].negative == 3);
    }
    SUBCASE("identical features: every triplet loss equals the margin") {
        Tensor feats = Tensor::full({4, 3}, 0.7);
        std::vector<std::uint32_t> labels = {0, 0, 1, 1};
        auto trips = batch_hard_mining(feats, labels);
        CHECK(trips.size() == 4);
        for (const auto& t : trips) {
            Tensor loss = triplet_loss(slice_rows(feats, t.anchor, t.anchor + 1),
                                       slice_rows(feats, t.positive, t.positive + 1),
                                       slice_rows(feats, t.negative, t.negative + 1), 0.25);
            CHECK(loss.item() == doctest::Approx(0.25).epsilon(1e-6));
        }
        // ties resolve to the lowest index
        CHECK(trips[0].positive == 1);
        CHECK(trips[0].negative == 2);
        CHECK(trips[3].positive == 2);
        CHECK(trips[3].negative == 0);
    }
    SUBCASE("separated clusters give zero loss below the gap") {
        Tensor feats = Tensor::matrix({{0, 0}, {0.1, 0}, {10, 0}, {10.1, 0}});
        std::vector<std::uint32_t> labels = {0, 0, 1, 1};
        for (const auto& t : batch_hard_mining(feats, labels)) {
            Tensor loss = triplet_loss(slice_rows(feats, t.anchor, t.anchor + 1),
                                       slice_rows(feats, t.positive, t.positive + 1),
                                       slice_rows(feats, t.negative, t.negative + 1), 0.3);
            CHECK(loss.item() == 0.0);
        }
    }
    SUBCASE("relabeling identities does not change the chosen indices") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> dist(-1, 1);
        Tensor feats = Tensor::zeros({6, 4});
        for (double& v : feats.data_mut()) v = dist(rng);
        std::vector<std::uint32_t> l1 = {0, 0, 0, 1, 1, 1};
        std::vector<std::uint32_t> l2 = {7, 7, 7, 3, 3, 3};
        auto a = batch_hard_mining(feats, l1);
        auto b = batch_hard_mining(feats, l2);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].positive == b[i].positive);
            CHECK(a[i].negative == b[i].negative);
        }
    }
    SUBCASE("single-instance label is an error") {
        Tensor feats = Tensor::matrix({{0, 0}, {1, 0}, {2, 0}});
        std::vector<std::uint32_t> labels = {0, 0, 1};
        CHECK_THROWS_AS(batch_hard_mining(feats, labels), SamplingError);
        std::vector<std::uint32_t> mono = {0, 0, 0};
        CHECK_THROWS_AS(batch_hard_mining(feats, mono), SamplingError);
    }
}

TEST_CASE("adam_step_param") {
    SUBCASE("first step moves by about -lr * sign(grad)") {
        Tensor p = Tensor::row({1.0, -2.0, 0.5});
        std::vector<double> g = {0.3, -4.0, 1e-3};
        std::vector<double> m(3, 0.0), v(3, 0.0);
        adam_step_param(p, g, m, v, 1, 0.01, 0.0);
        CHECK(p(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
        CHECK(p(0, 1) == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
        CHECK(p(0, 2) == doctest::Approx(0.5 - 0.01).epsilon(1e-3));
    }
    SUBCASE("zero gradients with zero decay leave the parameter fixed") {
        Tensor p = Tensor::row({3.0, -1.0});
        std::vector<double> g = {0.0, 0.0};
        std::vector<double> m(2, 0.0), v(2, 0.0);
        for (std::uint64_t t = 1; t <= 5; ++t) adam_step_param(p, g, m, v, t, 0.01, 0.0);
        CHECK(p(0, 0) == 3.0);
        CHECK(p(0, 1) == -1.0);
    }
    SUBCASE("decay alone shrinks geometrically: (1 - lr*wd)^t") {
        Tensor p = Tensor::row({2.0});
        std::vector<double> g = {0.0};
        std::vector<double> m(1, 0.0), v(1, 0.0);
        const double lr = 0.1, wd = 0.5;
        const int steps = 7;
        for (std::uint64_t t = 1; t <= steps; ++t) adam_step_param(p, g, m, v, t, lr, wd);
        CHECK(p(0, 0) == doctest::Approx(2.0 * std::pow(1.0 - lr * wd, steps)).epsilon(1e-12));
    }
    SUBCASE("adam_step increments t and applies the per-group decay") {
        Dataset ds = tiny_dataset();
        GpfModel model = GpfModel::init(tiny_model_config(ds), 5);
        auto params = model.parameters();
        AdamState state;
        state.init(params);
        TrainConfig cfg = tiny_train_config();
        cfg.lr = 0.1;
        cfg.weight_decay = 0.5;
        cfg.weight_decay_bias = 0.0;
        const double w0 = params[0].tensor(0, 0);  // img_proj.w, a matrix
        // LayerNorm gamma starts at 1 and must stay there under zero grads
        adam_step(params, state, cfg);
        CHECK(state.t == 1);
        CHECK(params[0].tensor(0, 0) == doctest::Approx(w0 * 0.95).epsilon(1e-12));
        for (const auto& p : params)
            if (p.name == "fusion.0.ln1.gamma") CHECK(p.tensor(0, 0) == 1.0);
    }
}

TEST_CASE("l2_normalize") {
    Tensor v = Tensor::row({3, 4});
    Tensor n = l2_normalize(v);
    CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-9));
    // already-normalized rows are fixed points
    Tensor nn = l2_normalize(n);
    CHECK(nn(0, 0) == doctest::Approx(n(0, 0)).epsilon(1e-9));
}

TEST_CASE("total_loss in the maximum-entropy regime is ln M + margin") {
    // Zeroed projections make every feature identical; a zeroed classifier
    // makes the logits uniform. The two loss terms then take their
    // closed-form values exactly.
    Dataset ds = tiny_dataset();
    ModelConfig mcfg = tiny_model_config(ds);
    GpfModel model = GpfModel::init(mcfg, 3);
    model.img_proj.w = Tensor::zeros(model.img_proj.w.shape());
    model.img_proj.b = Tensor::zeros(model.img_proj.b.shape());
    model.txt_proj.w = Tensor::zeros(model.txt_proj.w.shape());
    model.txt_proj.b = Tensor::zeros(model.txt_proj.b.shape());
    model.classifier.w = Tensor::zeros(model.classifier.w.shape());
    model.classifier.b = Tensor::zeros(model.classifier.b.shape());

    TrainConfig cfg = tiny_train_config();
    std::mt19937_64 rng(9);
    auto batch = pk_sample(ds, cfg.p_identities, cfg.k_instances, rng);
    const double loss = total_loss(model, ds, batch, cfg).item();
    const double want = std::log(double(ds.num_identities)) + cfg.margin;
    CHECK(loss == doctest::Approx(want).epsilon(0.2));
    CHECK(loss == doctest::Approx(want).epsilon(1e-6));  // exact in this regime
}

TEST_CASE("total_loss is a finite scalar on an untrained model") {
    Dataset ds = tiny_dataset();
    GpfModel model = GpfModel::init(tiny_model_config(ds), 21);
    TrainConfig cfg = tiny_train_config();
    std::mt19937_64 rng(2);
    auto batch = pk_sample(ds, cfg.p_identities, cfg.k_instances, rng);
    Tensor loss = total_loss(model, ds, batch, cfg);
    CHECK(loss.numel() == 1);
    CHECK(std::isfinite(loss.item()));
    CHECK(loss.item() > 0.0);
    CHECK_THROWS_AS(total_loss(model, ds, {}, cfg), ContractError);
}

TEST_CASE("train loop") {
    Dataset ds = tiny_dataset();

    SUBCASE("iterations = 0 is rejected before any work") {
        GpfModel model = GpfModel::init(tiny_model_config(ds), 1);
        TrainConfig cfg = tiny_train_config();
        cfg.iterations = 0;
        CHECK_THROWS_AS(train(ds, model, cfg), ContractError);
    }
    SUBCASE("infeasible PK shape fails before step 1") {
        GpfModel model = GpfModel::init(tiny_model_config(ds), 1);
        TrainConfig cfg = tiny_train_config();
        cfg.p_identities = 5;  // dataset has 4 identities
        cfg.batch_size = 10;
        try {
            train(ds, model, cfg);
            FAIL("expected SamplingError");
        } catch (const SamplingError& e) {
            CHECK(std::string(e.what()).find("dataset has 4") != std::string::npos);
        }
    }
    SUBCASE("one iteration produces one history entry and changes the weights") {
        GpfModel model = GpfModel::init(tiny_model_config(ds), 1);
        const double before = model.img_proj.w(0, 0);
        TrainConfig cfg = tiny_train_config();
        TrainResult r = train(ds, model, cfg);
        CHECK(r.loss_history.size() == 1);
        CHECK(model.img_proj.w(0, 0) != before);
    }
    SUBCASE("same seed, same data: bit-identical loss histories") {
        TrainConfig cfg = tiny_train_config();
        cfg.iterations = 5;
        GpfModel m1 = GpfModel::init(tiny_model_config(ds), 7);
        GpfModel m2 = GpfModel::init(tiny_model_config(ds), 7);
        TrainResult r1 = train(ds, m1, cfg);
        TrainResult r2 = train(ds, m2, cfg);
        CHECK(r1.loss_history == r2.loss_history);
        for (std::size_t i = 0; i < m1.parameters().size(); ++i)
            CHECK(m1.parameters()[i].tensor.data() == m2.parameters()[i].tensor.data());
        cfg.seed = 1;
        GpfModel m3 = GpfModel::init(tiny_model_config(ds), 7);
        TrainResult r3 = train(ds, m3, cfg);
        CHECK(r1.loss_history != r3.loss_history);
    }
    SUBCASE("loss trends down over a short run") {
        TrainConfig cfg = tiny_train_config();
        cfg.iterations = 30;
        GpfModel model = GpfModel::init(tiny_model_config(ds), 7);
        TrainResult r = train(ds, model, cfg);
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 5; ++i) first += r.loss_history[i];
        for (int i = 25; i < 30; ++i) last += r.loss_history[i];
        CHECK(last < first);
    }
}

TEST_CASE("write_loss_log format") {
    const std::string path = "/tmp/gpf_loss_log.tsv";
    write_loss_log({2.5, 1.25, 0.1}, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "1\t2.5");
    std::getline(is, line);
    CHECK(line == "2\t1.25");
    std::getline(is, line);
    CHECK(line == "3\t0.10000000000000001");
    CHECK_FALSE(std::getline(is, line));
    std::remove(path.c_str());
}

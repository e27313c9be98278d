#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpf/checkpoint.hpp"
#include "gpf/data.hpp"
#include "gpf/eval.hpp"
#include "gpf/model.hpp"
#include "gpf/tensor.hpp"
#include "gpf/train.hpp"

namespace {

struct ModelFlags {
    gpf::ModelConfig cfg;
    std::string ablation_mode = "full";

    void attach(CLI::App* cmd) {
        cmd->add_option("--d_model", cfg.d_model, "common feature width")
            ->capture_default_str();
        cmd->add_option("--fusion_layers", cfg.fusion_layers, "gated fusion layer count")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--fusion_heads", cfg.fusion_heads, "fusion attention heads")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--encoder_layers", cfg.encoder_layers, "encoder layer count")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--encoder_heads", cfg.encoder_heads, "encoder attention heads")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--ablation_mode", ablation_mode,
                        "baseline | text_only | image_only | full")
            ->check(CLI::IsMember({"baseline", "text_only", "image_only", "full"}))
            ->capture_default_str();
    }

    gpf::ModelConfig resolve(const gpf::Dataset& ds) {
        cfg.img_dim = ds.img_dim;
        cfg.txt_dim = ds.txt_dim;
        cfg.num_identities = ds.num_identities;
        cfg.ablation = gpf::ablation_from_name(ablation_mode);
        return cfg;
    }
};

struct TrainFlags {
    gpf::TrainConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--lr", cfg.lr, "Adam step size")->capture_default_str();
        cmd->add_option("--weight_decay", cfg.weight_decay,
                        "decoupled decay on weight matrices")
            ->capture_default_str();
        cmd->add_option("--weight_decay_bias", cfg.weight_decay_bias,
                        "decay on biases and LayerNorm parameters")
            ->capture_default_str();
        cmd->add_option("--iterations", cfg.iterations, "optimizer steps")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--batch_size", cfg.batch_size, "samples per step")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--p_identities", cfg.p_identities, "identities per batch")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--k_instances", cfg.k_instances, "instances per identity")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--margin", cfg.margin, "triplet margin")
            ->check(CLI::NonNegativeNumber)
            ->capture_default_str();
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path);
}

nlohmann::ordered_json report_row(const std::string& mode, const gpf::EvalReport& rep) {
    nlohmann::ordered_json row;
    row["mode"] = mode;
    row["mAP"] = rep.map;
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto& [k, v] : rep.cmc) c[std::to_string(k)] = v;
    row["cmc"] = std::move(c);
    row["num_queries"] = rep.num_queries;
    row["num_skipped"] = rep.num_skipped;
    return row;
}

void check_dims(const gpf::ModelConfig& cfg, const gpf::Dataset& ds, const std::string& what) {
    if (cfg.img_dim != ds.img_dim || cfg.txt_dim != ds.txt_dim)
        throw std::runtime_error("dimension mismatch: checkpoint expects img_dim=" +
                                 std::to_string(cfg.img_dim) + "/txt_dim=" +
                                 std::to_string(cfg.txt_dim) + " but " + what +
                                 " has img_dim=" + std::to_string(ds.img_dim) +
                                 "/txt_dim=" + std::to_string(ds.txt_dim));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gated progressive fusion network for embedding-based re-identification"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "flat key=value config file; flags override it");
    app.failure_message(CLI::FailureMessage::simple);

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "RNG seed")->capture_default_str();

    // ---- gen-synth -------------------------------------------------------
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic embedding dataset");
    gpf::SyntheticSpec spec;
    std::string gen_out, gen_format = "auto", holdout_out;
    std::size_t holdout_ids = 0;
    gen->add_option("--ids", spec.identities, "identity count")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--per-id", spec.per_identity, "records per identity")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--img-dim", spec.img_dim, "image embedding width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--txt-dim", spec.txt_dim, "text token width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--tokens", spec.n_tokens, "tokens per record")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--latent-dim", spec.latent_dim, "shared latent width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--noise", spec.noise_sigma, "image channel noise sigma")
        ->capture_default_str();
    gen->add_option("--noise-text", spec.text_noise_sigma,
                    "text channel noise sigma (default: same as --noise)");
    gen->add_option("--out", gen_out, "output dataset path")->required();
    gen->add_option("--format", gen_format, "jsonl | bin | auto (by extension)")
        ->check(CLI::IsMember({"jsonl", "bin", "auto"}));
    gen->add_option("--holdout-ids", holdout_ids,
                    "extra identities written to --holdout-out with fresh labels");
    gen->add_option("--holdout-out", holdout_out, "holdout dataset path");

    // ---- train -----------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train a model on an embedding dataset");
    ModelFlags tr_model;
    TrainFlags tr_train;
    std::string tr_data, tr_out, tr_loss_log;
    tr->add_option("--data", tr_data, "training dataset")->required();
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--loss-log", tr_loss_log, "write per-step losses (step<TAB>loss)");
    tr_model.attach(tr);
    tr_train.attach(tr);

    // ---- eval ------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "rank a gallery against queries and report mAP/CMC");
    std::string ev_ckpt, ev_query, ev_gallery, ev_out;
    std::vector<int> ev_ks = {1, 5, 10};
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--query", ev_query, "query dataset")->required();
    ev->add_option("--gallery", ev_gallery, "gallery dataset")->required();
    ev->add_option("--out", ev_out, "report JSON path");
    ev->add_option("--ks", ev_ks, "CMC ranks, strictly increasing")
        ->delimiter(',')
        ->capture_default_str();

    // ---- ablate ----------------------------------------------------------
    auto* ab = app.add_subcommand(
        "ablate", "train and evaluate baseline/text_only/image_only/full under one seed");
    ModelFlags ab_model;
    TrainFlags ab_train;
    std::string ab_data, ab_eval_data, ab_out;
    std::vector<int> ab_ks = {1, 5, 10};
    ab->add_option("--data", ab_data, "training dataset")->required();
    ab->add_option("--eval-data", ab_eval_data,
                   "evaluation dataset (default: the training dataset)");
    ab->add_option("--out", ab_out, "combined report JSON path");
    ab->add_option("--ks", ab_ks, "CMC ranks")->delimiter(',')->capture_default_str();
    ab_model.attach(ab);
    ab_train.attach(ab);

    // ---- gradcheck -------------------------------------------------------
    auto* gc = app.add_subcommand("gradcheck",
                                  "finite-difference check of the total loss gradient");
    gpf::ModelConfig gc_cfg;
    gc_cfg.d_model = 16;
    gc_cfg.img_dim = 24;
    gc_cfg.txt_dim = 16;
    gc_cfg.fusion_layers = 2;
    gc_cfg.encoder_layers = 2;
    double gc_tol = 1e-4, gc_eps = 1e-5;
    bool gc_corrupt = false;
    gc->add_option("--d_model", gc_cfg.d_model, "feature width (<= 16)")
        ->check(CLI::Range(std::size_t{2}, std::size_t{16}))
        ->capture_default_str();
    gc->add_option("--img_dim", gc_cfg.img_dim, "image width")->capture_default_str();
    gc->add_option("--txt_dim", gc_cfg.txt_dim, "text width")->capture_default_str();
    gc->add_option("--fusion_layers", gc_cfg.fusion_layers, "")->capture_default_str();
    gc->add_option("--encoder_layers", gc_cfg.encoder_layers, "")->capture_default_str();
    gc->add_option("--fusion_heads", gc_cfg.fusion_heads, "")->capture_default_str();
    gc->add_option("--encoder_heads", gc_cfg.encoder_heads, "")->capture_default_str();
    gc->add_option("--tol", gc_tol, "max relative error allowed")->capture_default_str();
    gc->add_option("--eps", gc_eps, "central difference step")->capture_default_str();
    gc->add_flag("--corrupt-backward", gc_corrupt)->group("");  // test harness hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (*gen) {
            if (gen_format == "auto") gen_format =
                gpf::format_from_path(gen_out) == gpf::DataFormat::Jsonl ? "jsonl" : "bin";
            if (holdout_ids > 0 && holdout_out.empty())
                throw std::runtime_error("--holdout-ids requires --holdout-out");
            spec.seed = seed;

            const std::size_t main_ids = spec.identities;
            spec.identities += holdout_ids;
            gpf::Dataset all = gpf::gen_synthetic(spec);

            auto fmt = gen_format == "jsonl" ? gpf::DataFormat::Jsonl : gpf::DataFormat::Binary;
            if (holdout_ids == 0) {
                gpf::save_dataset(all, gen_out, fmt);
                std::cout << all.records.size() << " records -> " << gen_out << "\n";
            } else {
                gpf::Dataset head, tail;
                head.img_dim = tail.img_dim = all.img_dim;
                head.txt_dim = tail.txt_dim = all.txt_dim;
                head.num_identities = static_cast<std::uint32_t>(main_ids);
                tail.num_identities = static_cast<std::uint32_t>(holdout_ids);
                for (auto& r : all.records) {
                    if (r.label < main_ids) {
                        head.records.push_back(std::move(r));
                    } else {
                        r.label -= static_cast<std::uint32_t>(main_ids);
                        tail.records.push_back(std::move(r));
                    }
                }
                gpf::save_dataset(head, gen_out, fmt);
                gpf::save_dataset(tail, holdout_out, fmt);
                std::cout << head.records.size() << " records -> " << gen_out << ", "
                          << tail.records.size() << " holdout records -> " << holdout_out
                          << "\n";
            }
        } else if (*tr) {
            gpf::Dataset ds = gpf::load_dataset(tr_data);
            if (ds.num_identities < 2)
                throw std::runtime_error("training needs at least 2 identities, dataset has " +
                                         std::to_string(ds.num_identities));
            gpf::ModelConfig mcfg = tr_model.resolve(ds);
            tr_train.cfg.seed = seed;
            gpf::GpfModel model = gpf::GpfModel::init(mcfg, seed);
            gpf::TrainResult result = gpf::train(ds, model, tr_train.cfg);
            gpf::save_checkpoint(tr_out, model, tr_train.cfg.iterations, seed);
            if (!tr_loss_log.empty()) gpf::write_loss_log(result.loss_history, tr_loss_log);
            std::printf("trained %zu steps, final loss %.6f -> %s\n",
                        result.loss_history.size(), result.loss_history.back(),
                        tr_out.c_str());
        } else if (*ev) {
            for (std::size_t i = 1; i < ev_ks.size(); ++i)
                if (ev_ks[i] <= ev_ks[i - 1])
                    throw std::runtime_error("--ks must be strictly increasing");
            gpf::Checkpoint ckpt = gpf::load_checkpoint(ev_ckpt);
            gpf::Dataset query = gpf::load_dataset(ev_query);
            gpf::Dataset gallery = gpf::load_dataset(ev_gallery);
            check_dims(ckpt.config, query, "query set");
            check_dims(ckpt.config, gallery, "gallery set");
            gpf::EvalReport rep = gpf::evaluate(ckpt.model, query, gallery, ev_ks);
            const std::string text = rep.to_json();
            if (!ev_out.empty()) write_text(ev_out, text);
            std::printf("mAP %.4f", rep.map);
            for (const auto& [k, v] : rep.cmc) std::printf("  R%d %.4f", k, v);
            std::printf("  (%zu queries, %zu skipped)\n", rep.num_queries, rep.num_skipped);
        } else if (*ab) {
            gpf::Dataset ds = gpf::load_dataset(ab_data);
            gpf::Dataset eval_ds = ab_eval_data.empty() ? ds : gpf::load_dataset(ab_eval_data);
            ab_train.cfg.seed = seed;

            nlohmann::ordered_json rows = nlohmann::ordered_json::array();
            for (const char* mode : {"baseline", "text_only", "image_only", "full"}) {
                ab_model.ablation_mode = mode;
                gpf::ModelConfig mcfg = ab_model.resolve(ds);
                gpf::GpfModel model = gpf::GpfModel::init(mcfg, seed);
                gpf::train(ds, model, ab_train.cfg);
                gpf::EvalReport rep = gpf::evaluate(model, eval_ds, eval_ds, ab_ks);
                std::printf("%-11s mAP %.4f", mode, rep.map);
                for (const auto& [k, v] : rep.cmc) std::printf("  R%d %.4f", k, v);
                std::printf("\n");
                rows.push_back(report_row(mode, rep));
            }
            nlohmann::ordered_json out;
            out["rows"] = std::move(rows);
            if (!ab_out.empty()) write_text(ab_out, out.dump(2) + "\n");
        } else if (*gc) {
            gc_cfg.num_identities = 2;
            gc_cfg.validate();
            gpf::corrupt_sigmoid_backward() = gc_corrupt;

            gpf::SyntheticSpec micro;
            micro.identities = 2;
            micro.per_identity = 4;
            micro.img_dim = gc_cfg.img_dim;
            micro.txt_dim = gc_cfg.txt_dim;
            // noise 0.4 keeps the per-record gradient contributions diverse;
            // heavily correlated records can cancel a coordinate of the summed
            // gradient down to the finite-difference noise floor (~1e-11)
            // where the relative-error check measures noise, not correctness
            micro.n_tokens = 2;
            micro.latent_dim = 8;
            micro.noise_sigma = 0.4;
            micro.seed = seed;
            gpf::Dataset ds = gpf::gen_synthetic(micro);
            std::vector<std::size_t> batch(ds.records.size());
            for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;

            gpf::TrainConfig tcfg;
            tcfg.p_identities = 2;
            tcfg.k_instances = 4;
            tcfg.batch_size = 8;
            gpf::GpfModel model = gpf::GpfModel::init(gc_cfg, seed + 1);
            model.set_requires_grad(true);

            bool all_ok = true;
            for (auto& p : model.parameters()) {
                const double err = gpf::grad_check(
                    [&](const gpf::Tensor&) {
                        return gpf::total_loss(model, ds, batch, tcfg);
                    },
                    p.tensor, gc_eps);
                const bool ok = err < gc_tol;
                all_ok = all_ok && ok;
                std::printf("%-24s max_rel_err %.3e  %s\n", p.name.c_str(), err,
                            ok ? "ok" : "FAIL");
            }
            if (!all_ok) {
                std::cerr << "gradient check failed (tol " << gc_tol << ")\n";
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

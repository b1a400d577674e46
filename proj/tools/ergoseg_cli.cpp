// Command-line surface: synthesize data, score REBA, train, evaluate,
// predict and render per-video reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ergoseg/data.hpp"
#include "ergoseg/model.hpp"
#include "ergoseg/report.hpp"
#include "ergoseg/training.hpp"
#include "ergoseg/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ergoseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

void emit_summary(bool enabled, const json& summary) {
    if (enabled) std::cout << summary.dump() << "\n";
}

std::vector<size_t> split_indices(const data::Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train_indices;
    if (split == "val") return ds.val_indices;
    if (split == "all") {
        std::vector<size_t> all(ds.sequences.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    throw ContractViolation("split must be train, val or all");
}

int run_synth(const data::SynthConfig& cfg, uint64_t seed, const std::string& out,
              bool json_summary) {
    const std::string manifest = data::write_synthetic_dataset(cfg, seed, out);
    json s{{"command", "synth"},       {"manifest", manifest}, {"videos", cfg.videos},
           {"classes", cfg.classes},   {"seed", seed},         {"noise", cfg.noise},
           {"smoothing", cfg.smoothing}};
    emit_summary(json_summary, s);
    if (!json_summary) std::cout << "wrote " << manifest << "\n";
    return kExitOk;
}

int run_reba(const std::string& manifest_path, const std::string& video,
             const std::string& topology_path, double smoothing, const std::string& up,
             bool json_summary) {
    int rescored = 0;
    if (!manifest_path.empty()) {
        auto m = data::Manifest::load(manifest_path);
        const auto topology = SkeletonTopology::load(m.resolve(m.topology_file));
        for (const auto& entry : m.videos) {
            const std::string path = m.resolve(entry.file);
            auto seq = data::load_sequence(path, topology.joint_count());
            std::vector<reba::RebaContext> ctx(static_cast<size_t>(seq.frames));
            for (int64_t t = 0; t < seq.frames; ++t)
                ctx[static_cast<size_t>(t)] =
                    m.class_context[static_cast<size_t>(seq.labels[static_cast<size_t>(t)])];
            seq.reba_raw = reba::score_sequence(seq.joints, seq.frames, topology, ctx, m.up_axis);
            seq.reba_smooth = reba::smooth_scores(seq.reba_raw, m.smoothing);
            data::save_sequence(seq, path);
            ++rescored;
        }
    } else {
        if (topology_path.empty())
            throw ContractViolation("reba: --topology is required with --video");
        const auto topology = SkeletonTopology::load(topology_path);
        auto seq = data::load_sequence(video, topology.joint_count());
        int up_axis = 1;
        if (up == "x") up_axis = 0;
        else if (up == "y") up_axis = 1;
        else if (up == "z") up_axis = 2;
        else throw ContractViolation("reba: --up-axis must be x, y or z");
        seq.reba_raw = reba::score_sequence(seq.joints, seq.frames, topology,
                                            reba::RebaContext{}, up_axis);
        seq.reba_smooth = reba::smooth_scores(seq.reba_raw, smoothing);
        data::save_sequence(seq, video);
        rescored = 1;
    }
    json s{{"command", "reba"}, {"videos_scored", rescored}};
    emit_summary(json_summary, s);
    if (!json_summary) std::cout << "scored " << rescored << " video(s)\n";
    return kExitOk;
}

int run_train(TrainConfig cfg, bool json_summary) {
    cfg.apply_env_overrides();
    cfg.validate();
    const auto dataset = data::load_dataset(cfg.manifest_path);
    const auto result = fit(cfg, dataset);

    fs::create_directories(cfg.out_dir);
    const std::string tag = variant_name(cfg.variant);
    const std::string ckpt = (fs::path(cfg.out_dir) / (tag + ".ckpt")).string();
    const std::string hist = (fs::path(cfg.out_dir) / (tag + "-history.txt")).string();
    std::map<std::string, std::string> meta{
        {"seed", std::to_string(cfg.seed)},
        {"manifest", cfg.manifest_path},
        {"best-lr", std::to_string(result.best_lr)},
        {"best-epoch", std::to_string(result.best_epoch)},
        {"smoothing", std::to_string(dataset.manifest.smoothing)},
    };
    result.model.save_checkpoint(ckpt, meta);
    std::ofstream hist_out(hist);
    hist_out << result.history_text();

    json s{{"command", "train"},        {"variant", tag},
           {"checkpoint", ckpt},        {"history", hist},
           {"best_lr", result.best_lr}, {"best_epoch", result.best_epoch},
           {"best_val_loss", result.best_val_loss}};
    emit_summary(json_summary, s);
    if (!json_summary)
        std::cout << "best lr " << result.best_lr << " epoch " << result.best_epoch
                  << " val loss " << result.best_val_loss << "\nwrote " << ckpt << "\n";
    return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& manifest, const std::string& split,
             const std::string& out, bool json_summary) {
    const auto model = Model::load_checkpoint(ckpt);
    const auto dataset = data::load_dataset(manifest);
    const auto indices = split_indices(dataset, split);
    if (indices.empty()) throw DataError("eval: split '" + split + "' holds no videos");
    const auto report = evaluate(model, dataset, indices);
    report.save(out);

    json s{{"command", "eval"}, {"report", out}, {"videos", report.videos.size()},
           {"split", split},    {"variant", variant_name(model.cfg.variant)}};
    if (report.has_segmentation) {
        s["mean_f1_10"] = report.aggregate_f1(0).mean;
        s["mean_edit"] = report.aggregate_edit().mean;
        s["mean_map"] = report.aggregate_map().mean;
    }
    if (report.has_regression) {
        s["mean_mse"] = report.aggregate_mse().mean;
        s["mean_spearman"] = report.aggregate_spearman().mean;
    }
    emit_summary(json_summary, s);
    if (!json_summary) std::cout << report.to_text();
    return kExitOk;
}

int run_predict(const std::string& ckpt, const std::string& manifest, const std::string& video,
                const std::string& split, const std::string& out, bool json_summary) {
    const auto model = Model::load_checkpoint(ckpt);
    fs::create_directories(out);
    std::vector<std::string> written;

    auto write_prediction = [&](const data::SkeletonSequence& seq) {
        const auto pred = predict_sequence(model, seq);
        const std::string path = (fs::path(out) / (seq.video_id + "_pred.csv")).string();
        std::ofstream f(path);
        if (!f) throw DataError("predict: cannot write " + path);
        f << "frame";
        if (!pred.labels.empty()) f << ",label";
        if (!pred.risk.empty()) f << ",risk";
        f << "\n";
        for (int64_t t = 0; t < seq.frames; ++t) {
            f << t;
            if (!pred.labels.empty()) f << "," << pred.labels[static_cast<size_t>(t)];
            if (!pred.risk.empty()) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g", pred.risk[static_cast<size_t>(t)]);
                f << "," << buf;
            }
            f << "\n";
        }
        written.push_back(path);
    };

    if (!video.empty()) {
        auto seq = data::load_sequence(video, model.topology.joint_count());
        if (seq.topology_hash != model.topology.hash())
            throw DataError("predict: sequence topology does not match the checkpoint");
        write_prediction(seq);
    } else {
        const auto dataset = data::load_dataset(manifest);
        if (model.topology.hash() != dataset.topology.hash())
            throw DataError("predict: dataset topology does not match the checkpoint");
        for (size_t idx : split_indices(dataset, split)) write_prediction(dataset.sequences[idx]);
    }

    json s{{"command", "predict"}, {"out", out}, {"videos", written.size()}};
    emit_summary(json_summary, s);
    if (!json_summary)
        for (const auto& p : written) std::cout << "wrote " << p << "\n";
    return kExitOk;
}

int run_report(const std::string& ckpt, const std::string& manifest, const std::string& video_id,
               const std::string& out_prefix, bool json_summary) {
    const auto model = Model::load_checkpoint(ckpt);
    if (!variant_has_segmentation(model.cfg.variant) ||
        !variant_has_regression(model.cfg.variant))
        throw ContractViolation("report: needs a checkpoint with both heads (mtl-base/mtl-emb); " +
                                variant_name(model.cfg.variant) + " lacks one track");
    const auto dataset = data::load_dataset(manifest);
    if (model.topology.hash() != dataset.topology.hash())
        throw DataError("report: dataset topology does not match the checkpoint");
    const data::SkeletonSequence* seq = nullptr;
    for (const auto& s : dataset.sequences)
        if (s.video_id == video_id) seq = &s;
    if (!seq) throw DataError("report: video id '" + video_id + "' not in the manifest");

    const auto pred = predict_sequence(model, *seq);
    RibbonReport rr;
    rr.gt_labels = seq->labels;
    rr.pred_labels = pred.labels;
    rr.gt_reba = seq->reba_smooth;
    rr.pred_reba = pred.risk;
    rr.classes = model.cfg.classes;
    rr.class_names = dataset.manifest.class_names;
    const std::string svg = out_prefix + ".svg";
    const std::string csv = out_prefix + ".csv";
    rr.save(svg, csv);

    json s{{"command", "report"}, {"svg", svg}, {"csv", csv}, {"video", video_id},
           {"frames", seq->frames}};
    emit_summary(json_summary, s);
    if (!json_summary) std::cout << "wrote " << svg << " and " << csv << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skeleton activity segmentation and ergonomic risk pipeline"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    bool json_summary = false;
    app.add_flag("--json-summary", json_summary, "emit a one-line JSON run summary");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    data::SynthConfig synth_cfg;
    uint64_t synth_seed = 7;
    std::string synth_out = "synth-data";
    synth->add_option("--classes", synth_cfg.classes);
    synth->add_option("--videos", synth_cfg.videos);
    synth->add_option("--t-min", synth_cfg.t_min);
    synth->add_option("--t-max", synth_cfg.t_max);
    synth->add_option("--segments", synth_cfg.segments_per_video);
    synth->add_option("--noise", synth_cfg.noise);
    synth->add_option("--smoothing", synth_cfg.smoothing);
    synth->add_option("--val-fraction", synth_cfg.val_fraction);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--out", synth_out)->required();

    // reba
    auto* reba_cmd = app.add_subcommand("reba", "score skeleton files with the REBA rubric");
    std::string reba_manifest, reba_video, reba_topology, reba_up = "y";
    double reba_smoothing = 1.0;
    reba_cmd->add_option("--manifest", reba_manifest);
    reba_cmd->add_option("--video", reba_video);
    reba_cmd->add_option("--topology", reba_topology);
    reba_cmd->add_option("--smoothing", reba_smoothing);
    reba_cmd->add_option("--up-axis", reba_up);

    // train
    auto* train = app.add_subcommand("train", "train a model variant");
    std::string train_config_file, train_variant, train_manifest, train_out;
    std::vector<double> train_lrs;
    int train_epochs = -1, train_patience = -1, train_batch = -1;
    int64_t train_seed = -1;
    double train_dropout = -1.0;
    train->add_option("--config", train_config_file);
    train->add_option("--variant", train_variant);
    train->add_option("--manifest", train_manifest);
    train->add_option("--lr", train_lrs);
    train->add_option("--epochs", train_epochs);
    train->add_option("--patience", train_patience);
    train->add_option("--batch", train_batch);
    train->add_option("--seed", train_seed);
    train->add_option("--out", train_out);
    train->add_option("--dropout", train_dropout);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_manifest, eval_split = "val", eval_out = "report.txt";
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--manifest", eval_manifest)->required();
    eval_cmd->add_option("--split", eval_split);
    eval_cmd->add_option("--out", eval_out);

    // predict
    auto* predict = app.add_subcommand("predict", "write per-frame predictions");
    std::string pr_ckpt, pr_manifest, pr_video, pr_split = "all", pr_out = "predictions";
    predict->add_option("--checkpoint", pr_ckpt)->required();
    predict->add_option("--manifest", pr_manifest);
    predict->add_option("--video", pr_video);
    predict->add_option("--split", pr_split);
    predict->add_option("--out", pr_out);

    // report
    auto* report = app.add_subcommand("report", "render a ribbon/profile report");
    std::string rp_ckpt, rp_manifest, rp_video, rp_out = "report";
    report->add_option("--checkpoint", rp_ckpt)->required();
    report->add_option("--manifest", rp_manifest)->required();
    report->add_option("--video", rp_video)->required();
    report->add_option("--out", rp_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*synth) return run_synth(synth_cfg, synth_seed, synth_out, json_summary);
        if (*reba_cmd) {
            if (reba_manifest.empty() && reba_video.empty())
                throw ContractViolation("reba: pass --manifest or --video");
            return run_reba(reba_manifest, reba_video, reba_topology, reba_smoothing, reba_up,
                            json_summary);
        }
        if (*train) {
            TrainConfig cfg;
            if (!train_config_file.empty()) cfg = TrainConfig::from_file(train_config_file);
            if (!train_variant.empty()) cfg.variant = variant_from_name(train_variant);
            if (!train_manifest.empty()) cfg.manifest_path = train_manifest;
            if (!train_lrs.empty()) cfg.learning_rates = train_lrs;
            if (train_epochs > 0) cfg.max_epochs = train_epochs;
            if (train_patience > 0) cfg.patience = train_patience;
            if (train_batch > 0) cfg.batch_size = train_batch;
            if (train_seed >= 0) cfg.seed = static_cast<uint64_t>(train_seed);
            if (!train_out.empty()) cfg.out_dir = train_out;
            if (train_dropout >= 0.0) cfg.model.tcn.dropout = train_dropout;
            if (cfg.manifest_path.empty())
                throw ContractViolation("train: --manifest (or a config file) is required");
            return run_train(cfg, json_summary);
        }
        if (*eval_cmd) return run_eval(eval_ckpt, eval_manifest, eval_split, eval_out, json_summary);
        if (*predict) {
            if (pr_manifest.empty() && pr_video.empty())
                throw ContractViolation("predict: pass --manifest or --video");
            return run_predict(pr_ckpt, pr_manifest, pr_video, pr_split, pr_out, json_summary);
        }
        if (*report) return run_report(rp_ckpt, rp_manifest, rp_video, rp_out, json_summary);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}

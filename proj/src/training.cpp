#include "ergoseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ergoseg {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

AdamState AdamState::init(const ParamList& params, const AdamConfig& cfg) {
    AdamState s;
    s.cfg = cfg;
    for (const auto& p : params) {
        s.m.emplace_back(p.tensor->values.size(), 0.0);
        s.v.emplace_back(p.tensor->values.size(), 0.0);
    }
    return s;
}

void zero_grads(const ParamList& params) {
    for (const auto& p : params) p.tensor->zero_grad();
}

void adam_step(const ParamList& params, AdamState& state, double lr) {
    if (params.size() != state.m.size())
        throw ContractViolation("adam_step: state does not match parameter list");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& g = params[i].tensor->grad;
        for (double gv : g)
            if (!std::isfinite(gv))
                throw DataError("adam_step: non-finite gradient in " + params[i].name);
    }
    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& values = params[i].tensor->values;
        const auto& grad = params[i].tensor->grad;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < values.size(); ++j) {
            const double g = j < grad.size() ? grad[j] : 0.0;
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            values[j] -= lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps);
        }
    }
}

void TrainConfig::validate() const {
    if (learning_rates.empty())
        throw ContractViolation("TrainConfig: need at least one learning rate");
    if (patience < 1) throw ContractViolation("TrainConfig: patience must be >= 1");
    if (batch_size < 1) throw ContractViolation("TrainConfig: batch size must be >= 1");
    if (max_epochs < 1) throw ContractViolation("TrainConfig: max epochs must be >= 1");
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("train config: cannot open " + path);
    TrainConfig cfg;
    cfg.learning_rates.clear();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        auto need = [&](auto& slot) {
            if (!(ls >> slot)) throw DataError(where + ": key '" + key + "' needs a value");
        };
        if (key == "variant") {
            std::string name;
            need(name);
            cfg.variant = variant_from_name(name);
        } else if (key == "learning-rates") {
            double lr;
            while (ls >> lr) cfg.learning_rates.push_back(lr);
        } else if (key == "batch-size") {
            need(cfg.batch_size);
        } else if (key == "max-epochs") {
            need(cfg.max_epochs);
        } else if (key == "patience") {
            need(cfg.patience);
        } else if (key == "seed") {
            need(cfg.seed);
        } else if (key == "manifest") {
            need(cfg.manifest_path);
        } else if (key == "out-dir") {
            need(cfg.out_dir);
        } else if (key == "dropout") {
            need(cfg.model.tcn.dropout);
        } else if (key == "tcn-kernel") {
            need(cfg.model.tcn.kernel);
        } else if (key == "pool") {
            std::string mode;
            need(mode);
            if (mode == "max")
                cfg.model.tcn.use_max_pool = true;
            else if (mode == "avg")
                cfg.model.tcn.use_max_pool = false;
            else
                throw DataError(where + ": pool must be max or avg");
        } else if (key == "normalized-relu") {
            int flag;
            need(flag);
            cfg.model.tcn.use_normalized_relu = flag != 0;
        } else if (key == "lstm-hidden") {
            need(cfg.model.lstm_hidden);
        } else if (key == "lstm-layers") {
            need(cfg.model.lstm_layers);
        } else if (key == "regressor-fc") {
            need(cfg.model.regressor_fc);
        } else {
            throw DataError(where + ": unknown key '" + key + "'");
        }
    }
    if (cfg.learning_rates.empty()) cfg.learning_rates = {1e-3, 3e-4};
    return cfg;
}

void TrainConfig::apply_env_overrides() {
    if (const char* env = std::getenv("ERGOSEG_SEED")) seed = std::strtoull(env, nullptr, 10);
    if (const char* env = std::getenv("ERGOSEG_OUT")) out_dir = env;
}

namespace {

struct LossBreakdown {
    double total = 0.0;
    bool finite = true;
};

// Sum of the variant's loss over the given videos; tape-recorded when
// training so the same routine serves both passes.
TensorPtr batch_loss(const Model& model, Tape& tape, const ForwardContext& ctx,
                     const data::PaddedBatch& batch) {
    TensorPtr total;
    for (int64_t b = 0; b < batch.batch; ++b) {
        auto joints = batch.video_joints(b);
        auto mask = batch.video_mask(b);
        auto out = model.forward(tape, ctx, joints, mask);
        TensorPtr loss;
        if (model.cfg.variant == Variant::stl_as) {
            loss = has_loss(tape, out.logits, batch.video_labels(b), mask);
        } else if (model.cfg.variant == Variant::stl_pa) {
            auto target = Tensor::from({batch.t_max}, batch.video_targets(b));
            loss = hpa_loss(tape, out.risk, target, model.loss_weights, mask).value;
        } else {
            auto target = Tensor::from({batch.t_max}, batch.video_targets(b));
            auto hpa = hpa_loss(tape, out.risk, target, model.loss_weights, mask).value;
            auto has = has_loss(tape, out.logits, batch.video_labels(b), mask);
            loss = mtl_loss(tape, hpa, has, model.loss_weights);
        }
        total = total ? ops::add(tape, total, loss) : loss;
    }
    return total;
}

struct ValStats {
    double loss = 0.0;
    double accuracy = -1.0;
    double mse = -1.0;
};

ValStats validation_pass(const Model& model, const data::Dataset& dataset,
                         const std::vector<size_t>& indices) {
    ValStats stats;
    double loss = 0.0;
    int64_t correct = 0, seg_frames = 0;
    double sq_err = 0.0;
    int64_t reg_frames = 0;
    for (size_t idx : indices) {
        const auto& seq = dataset.sequences[idx];
        Tape tape;
        tape.recording = false;
        ForwardContext ctx{false, nullptr};
        std::vector<const data::SkeletonSequence*> one{&seq};
        auto batch = data::pad_and_mask(one, seq.frames, dataset.manifest.classes);
        loss += batch_loss(model, tape, ctx, batch)->item();

        Tape tape2;
        tape2.recording = false;
        auto out = model.forward(tape2, ctx, batch.video_joints(0), batch.video_mask(0));
        if (out.logits) {
            for (int64_t t = 0; t < seq.frames; ++t) {
                const double* row = out.logits->values.data() + t * model.cfg.classes;
                int arg = 0;
                for (int c = 1; c < model.cfg.classes; ++c)
                    if (row[c] > row[arg]) arg = c;
                if (arg == seq.labels[static_cast<size_t>(t)]) ++correct;
            }
            seg_frames += seq.frames;
        }
        if (out.risk) {
            for (int64_t t = 0; t < seq.frames; ++t) {
                const double d = out.risk->values[static_cast<size_t>(t)] -
                                 seq.reba_smooth[static_cast<size_t>(t)];
                sq_err += d * d;
            }
            reg_frames += seq.frames;
        }
    }
    stats.loss = loss;
    if (seg_frames > 0) stats.accuracy = static_cast<double>(correct) / seg_frames;
    if (reg_frames > 0) stats.mse = sq_err / static_cast<double>(reg_frames);
    return stats;
}

}  // namespace

FitResult fit(const TrainConfig& config, const data::Dataset& dataset) {
    config.validate();
    ModelConfig model_cfg = config.model;
    model_cfg.variant = config.variant;
    model_cfg.classes = dataset.manifest.classes;

    const std::vector<size_t>& train_idx = dataset.train_indices;
    const std::vector<size_t>& val_idx =
        dataset.val_indices.empty() ? dataset.train_indices : dataset.val_indices;
    if (train_idx.empty()) throw DataError("fit: the manifest assigns no training videos");

    FitResult result;
    result.config = config;
    std::vector<std::vector<double>> best_values;

    for (double lr : config.learning_rates) {
        LrRunResult run;
        run.lr = lr;
        Model model = Model::init(model_cfg, dataset.topology, config.seed);
        auto params = model.parameters();
        AdamState adam = AdamState::init(params);
        Rng run_rng(config.seed);

        std::vector<std::vector<double>> run_best;
        int stale = 0;
        for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
            std::vector<size_t> order = train_idx;
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[static_cast<size_t>(
                                            run_rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
            double train_loss = 0.0;
            bool finite = true;
            for (size_t start = 0; start < order.size() && finite;
                 start += static_cast<size_t>(config.batch_size)) {
                std::vector<const data::SkeletonSequence*> members;
                int64_t t_max = 0;
                for (size_t k = start;
                     k < order.size() && k < start + static_cast<size_t>(config.batch_size); ++k) {
                    members.push_back(&dataset.sequences[order[k]]);
                    t_max = std::max(t_max, dataset.sequences[order[k]].frames);
                }
                auto batch = data::pad_and_mask(members, t_max, dataset.manifest.classes);
                Tape tape;
                ForwardContext ctx{true, &run_rng};
                auto loss = batch_loss(model, tape, ctx, batch);
                if (!std::isfinite(loss->item())) {
                    run.diverged = true;
                    run.divergence_note = "training loss became non-finite at epoch " +
                                          std::to_string(epoch);
                    finite = false;
                    break;
                }
                train_loss += loss->item();
                zero_grads(params);
                tape.backward(loss);
                try {
                    adam_step(params, adam, lr);
                } catch (const DataError& e) {
                    run.diverged = true;
                    run.divergence_note = e.what();
                    finite = false;
                }
            }
            if (!finite) break;

            const ValStats val = validation_pass(model, dataset, val_idx);
            if (!std::isfinite(val.loss)) {
                run.diverged = true;
                run.divergence_note = "validation loss became non-finite at epoch " +
                                      std::to_string(epoch);
                break;
            }
            EpochRecord rec;
            rec.epoch = epoch;
            rec.train_loss = train_loss;
            rec.val_loss = val.loss;
            rec.alpha = model.loss_weights.alpha_value();
            rec.beta = model.loss_weights.beta_value();
            rec.gamma = model.loss_weights.gamma_value();
            rec.val_accuracy = val.accuracy;
            rec.val_mse = val.mse;
            run.history.push_back(rec);

            if (val.loss < run.best_val_loss) {
                run.best_val_loss = val.loss;
                run.best_epoch = epoch;
                run_best = model.snapshot();
                stale = 0;
            } else {
                ++stale;
                if (stale >= config.patience) break;
            }
        }
        if (!run.diverged && run.best_epoch > 0 && run.best_val_loss < result.best_val_loss) {
            result.best_val_loss = run.best_val_loss;
            result.best_epoch = run.best_epoch;
            result.best_lr = lr;
            best_values = run_best;
        }
        result.runs.push_back(std::move(run));
    }

    if (best_values.empty())
        throw DivergenceError("fit: every learning rate diverged; nothing to checkpoint");
    result.model = Model::init(model_cfg, dataset.topology, config.seed);
    result.model.restore(best_values);
    return result;
}

std::string FitResult::history_text() const {
    std::ostringstream os;
    os << "history-version 1\n";
    os << "variant " << variant_name(config.variant) << "\n";
    os << "seed " << config.seed << "\n";
    os << "batch-size " << config.batch_size << "\n";
    for (const auto& run : runs) {
        os << "run lr " << fmt(run.lr) << "\n";
        for (const auto& e : run.history) {
            os << "epoch " << e.epoch << " train_loss " << fmt(e.train_loss) << " val_loss "
               << fmt(e.val_loss) << " alpha " << fmt(e.alpha) << " beta " << fmt(e.beta)
               << " gamma " << fmt(e.gamma);
            if (e.val_accuracy >= 0.0) os << " val_acc " << fmt(e.val_accuracy);
            if (e.val_mse >= 0.0) os << " val_mse " << fmt(e.val_mse);
            os << "\n";
        }
        os << "run-result lr " << fmt(run.lr) << " diverged " << (run.diverged ? 1 : 0)
           << " best_epoch " << run.best_epoch << " best_val_loss " << fmt(run.best_val_loss);
        if (run.diverged) os << " note " << run.divergence_note;
        os << "\n";
    }
    os << "best lr " << fmt(best_lr) << " epoch " << best_epoch << " val_loss "
       << fmt(best_val_loss) << "\n";
    return os.str();
}

Prediction predict_sequence(const Model& model, const data::SkeletonSequence& sequence) {
    Prediction pred;
    std::vector<const data::SkeletonSequence*> one{&sequence};
    auto batch = data::pad_and_mask(one, sequence.frames, std::max(model.cfg.classes, 1));
    Tape tape;
    tape.recording = false;
    ForwardContext ctx{false, nullptr};
    auto out = model.forward(tape, ctx, batch.video_joints(0), batch.video_mask(0));
    if (out.logits) {
        Tape t2;
        t2.recording = false;
        auto probs = ops::softmax_rows(t2, out.logits);
        pred.probs = probs->values;
        pred.labels.resize(static_cast<size_t>(sequence.frames));
        for (int64_t t = 0; t < sequence.frames; ++t) {
            const double* row = probs->values.data() + t * model.cfg.classes;
            int arg = 0;
            for (int c = 1; c < model.cfg.classes; ++c)
            if (row[c] > row[arg]) arg = c;
            pred.labels[static_cast<size_t>(t)] = arg;
        }
    }
    if (out.risk)
        pred.risk.assign(out.risk->values.begin(),
                         out.risk->values.begin() + sequence.frames);
    return pred;
}

metrics::MetricsReport evaluate(const Model& model, const data::Dataset& dataset,
                                const std::vector<size_t>& video_indices) {
    if (model.topology.hash() != dataset.topology.hash())
        throw DataError("evaluate: checkpoint topology does not match the dataset topology");
    metrics::MetricsReport report;
    report.classes = model.cfg.classes;
    report.has_segmentation = variant_has_segmentation(model.cfg.variant);
    report.has_regression = variant_has_regression(model.cfg.variant);
    if (report.has_segmentation)
        report.confusion.assign(
            static_cast<size_t>(report.classes) * static_cast<size_t>(report.classes), 0);

    for (size_t idx : video_indices) {
        const auto& seq = dataset.sequences[idx];
        const auto pred = predict_sequence(model, seq);
        metrics::VideoMetrics vm;
        vm.video_id = seq.video_id;
        vm.frames = seq.frames;
        if (report.has_segmentation) {
            for (double threshold : report.f1_thresholds)
                vm.f1.push_back(metrics::f1_overlap(pred.labels, seq.labels, threshold));
            vm.edit = metrics::segmental_edit_score(pred.labels, seq.labels);
            vm.map = metrics::mean_average_precision(pred.probs, seq.frames, report.classes,
                                                     seq.labels);
            const auto cm = metrics::confusion_matrix(pred.labels, seq.labels, report.classes);
            for (size_t i = 0; i < cm.size(); ++i) report.confusion[i] += cm[i];
        }
        if (report.has_regression) {
            vm.mse = metrics::mse(pred.risk, seq.reba_smooth);
            vm.spearman = metrics::spearman(pred.risk, seq.reba_smooth);
        }
        report.videos.push_back(std::move(vm));
    }
    return report;
}

}  // namespace ergoseg

#include "ergoseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ergoseg/tensor.hpp"

namespace ergoseg::metrics {

std::vector<Segment> labels_to_segments(const std::vector<int>& frames) {
    std::vector<Segment> segments;
    if (frames.empty()) return segments;
    int64_t start = 0;
    for (int64_t t = 1; t <= static_cast<int64_t>(frames.size()); ++t) {
        if (t == static_cast<int64_t>(frames.size()) ||
            frames[static_cast<size_t>(t)] != frames[static_cast<size_t>(start)]) {
            segments.push_back({frames[static_cast<size_t>(start)], start, t});
            start = t;
        }
    }
    return segments;
}

namespace {

double segment_iou(const Segment& a, const Segment& b) {
    const int64_t inter = std::max<int64_t>(0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const int64_t uni = (a.end - a.start) + (b.end - b.start) - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace

double f1_overlap(const std::vector<int>& pred, const std::vector<int>& gt, double iou_threshold) {
    if (pred.size() != gt.size())
        throw ContractViolation("f1_overlap: sequence length mismatch");
    if (iou_threshold <= 0.0 || iou_threshold > 1.0)
        throw ContractViolation("f1_overlap: threshold must lie in (0, 1]");
    const auto pred_segments = labels_to_segments(pred);
    const auto gt_segments = labels_to_segments(gt);

    struct Candidate {
        double iou;
        size_t pred_index, gt_index;
    };
    std::vector<Candidate> candidates;
    for (size_t i = 0; i < pred_segments.size(); ++i) {
        for (size_t j = 0; j < gt_segments.size(); ++j) {
            if (pred_segments[i].label != gt_segments[j].label) continue;
            const double iou = segment_iou(pred_segments[i], gt_segments[j]);
            if (iou >= iou_threshold) candidates.push_back({iou, i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.pred_index != b.pred_index) return a.pred_index < b.pred_index;
        return a.gt_index < b.gt_index;
    });
    std::vector<uint8_t> pred_used(pred_segments.size(), 0), gt_used(gt_segments.size(), 0);
    int64_t matches = 0;
    for (const auto& c : candidates) {
        if (pred_used[c.pred_index] || gt_used[c.gt_index]) continue;
        pred_used[c.pred_index] = 1;
        gt_used[c.gt_index] = 1;
        ++matches;
    }
    const double precision =
        pred_segments.empty() ? 0.0 : static_cast<double>(matches) / pred_segments.size();
    const double recall =
        gt_segments.empty() ? 0.0 : static_cast<double>(matches) / gt_segments.size();
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double segmental_edit_score(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size())
        throw ContractViolation("segmental_edit_score: sequence length mismatch");
    const auto ps = labels_to_segments(pred);
    const auto gs = labels_to_segments(gt);
    const size_t np = ps.size(), ng = gs.size();
    std::vector<int64_t> prev(ng + 1), curr(ng + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (size_t i = 1; i <= np; ++i) {
        curr[0] = static_cast<int64_t>(i);
        for (size_t j = 1; j <= ng; ++j) {
            const int64_t subst = prev[j - 1] + (ps[i - 1].label == gs[j - 1].label ? 0 : 1);
            curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, subst});
        }
        std::swap(prev, curr);
    }
    const int64_t distance = prev[ng];
    const size_t longest = std::max(np, ng);
    if (longest == 0) return 100.0;
    return 100.0 * (1.0 - static_cast<double>(distance) / static_cast<double>(longest));
}

double mean_average_precision(const std::vector<double>& scores, int64_t frames, int classes,
                              const std::vector<int>& gt, std::vector<int>* absent_classes) {
    if (static_cast<int64_t>(gt.size()) != frames ||
        static_cast<int64_t>(scores.size()) != frames * classes)
        throw ContractViolation("mean_average_precision: shape mismatch");
    double total = 0.0;
    int counted = 0;
    std::vector<int64_t> order(static_cast<size_t>(frames));
    for (int c = 0; c < classes; ++c) {
        int64_t positives = 0;
        for (int label : gt)
            if (label == c) ++positives;
        if (positives == 0) {
            if (absent_classes) absent_classes->push_back(c);
            continue;
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            return scores[static_cast<size_t>(a * classes + c)] >
                   scores[static_cast<size_t>(b * classes + c)];
        });
        double ap = 0.0;
        int64_t hits = 0;
        for (int64_t rank = 0; rank < frames; ++rank) {
            if (gt[static_cast<size_t>(order[static_cast<size_t>(rank)])] != c) continue;
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
        total += ap / static_cast<double>(positives);
        ++counted;
    }
    if (counted == 0) throw ContractViolation("mean_average_precision: no class present in gt");
    return total / static_cast<double>(counted);
}

namespace {

// Mid-ranks with averaged ties; empty when the series is constant.
std::optional<std::vector<double>> mid_ranks(const std::vector<double>& values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return values[a] < values[b]; });
    if (values[order.front()] == values[order.back()]) return std::nullopt;
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& pred, const std::vector<double>& gt) {
    if (pred.size() != gt.size() || pred.size() < 2)
        throw ContractViolation("spearman: need two equal-length series with >= 2 points");
    const auto ra = mid_ranks(pred);
    const auto rb = mid_ranks(gt);
    if (!ra || !rb) return std::nullopt;
    const size_t n = pred.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_a += (*ra)[i];
        mean_b += (*rb)[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double da = (*ra)[i] - mean_a;
        const double db = (*rb)[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    return cov / std::sqrt(var_a * var_b);
}

std::vector<int64_t> confusion_matrix(const std::vector<int>& pred, const std::vector<int>& gt,
                                      int classes) {
    if (pred.size() != gt.size()) throw ContractViolation("confusion_matrix: length mismatch");
    std::vector<int64_t> counts(static_cast<size_t>(classes) * static_cast<size_t>(classes), 0);
    for (size_t t = 0; t < gt.size(); ++t) {
        if (gt[t] < 0 || gt[t] >= classes || pred[t] < 0 || pred[t] >= classes)
            throw ContractViolation("confusion_matrix: id out of range at frame " +
                                    std::to_string(t));
        ++counts[static_cast<size_t>(gt[t]) * static_cast<size_t>(classes) +
                 static_cast<size_t>(pred[t])];
    }
    return counts;
}

std::vector<double> row_normalize(const std::vector<int64_t>& counts, int classes) {
    std::vector<double> out(counts.size(), 0.0);
    for (int i = 0; i < classes; ++i) {
        int64_t row_total = 0;
        for (int j = 0; j < classes; ++j)
            row_total += counts[static_cast<size_t>(i * classes + j)];
        if (row_total == 0) continue;
        for (int j = 0; j < classes; ++j)
            out[static_cast<size_t>(i * classes + j)] =
                static_cast<double>(counts[static_cast<size_t>(i * classes + j)]) /
                static_cast<double>(row_total);
    }
    return out;
}

double mse(const std::vector<double>& pred, const std::vector<double>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw ContractViolation("mse: need equal nonempty series");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw ContractViolation("frame_accuracy: need equal nonempty series");
    int64_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == gt[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

Aggregate aggregate_of(const std::vector<double>& values) {
    Aggregate a;
    a.count = static_cast<int64_t>(values.size());
    if (values.empty()) return a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    for (double v : values) a.stddev += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(a.stddev / static_cast<double>(values.size()));
    return a;
}

}  // namespace

Aggregate MetricsReport::aggregate_f1(size_t threshold_index) const {
    std::vector<double> v;
    for (const auto& video : videos) v.push_back(video.f1.at(threshold_index));
    return aggregate_of(v);
}

Aggregate MetricsReport::aggregate_edit() const {
    std::vector<double> v;
    for (const auto& video : videos) v.push_back(video.edit);
    return aggregate_of(v);
}

Aggregate MetricsReport::aggregate_map() const {
    std::vector<double> v;
    for (const auto& video : videos) v.push_back(video.map);
    return aggregate_of(v);
}

Aggregate MetricsReport::aggregate_mse() const {
    std::vector<double> v;
    for (const auto& video : videos) v.push_back(video.mse);
    return aggregate_of(v);
}

Aggregate MetricsReport::aggregate_spearman() const {
    std::vector<double> v;
    for (const auto& video : videos)
        if (video.spearman) v.push_back(*video.spearman);
    return aggregate_of(v);
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "metrics-report-version 1\n";
    os << "classes " << classes << "\n";
    os << "segmentation " << (has_segmentation ? 1 : 0) << "\n";
    os << "regression " << (has_regression ? 1 : 0) << "\n";
    os << "thresholds";
    for (double t : f1_thresholds) os << " " << t;
    os << "\n";
    auto put_video = [&](const VideoMetrics& v) {
        os << "video " << v.video_id << " frames " << v.frames;
        if (has_segmentation) {
            for (size_t i = 0; i < f1_thresholds.size(); ++i)
                os << " f1@" << f1_thresholds[i] << " " << v.f1[i];
            os << " edit " << v.edit << " map " << v.map;
        }
        if (has_regression) {
            os << " mse " << v.mse << " spearman ";
            if (v.spearman)
                os << *v.spearman;
            else
                os << "undefined";
        }
        os << "\n";
    };
    for (const auto& v : videos) put_video(v);
    auto put_aggregate = [&](const char* stat, auto pick) {
        os << "aggregate " << stat;
        if (has_segmentation) {
            for (size_t i = 0; i < f1_thresholds.size(); ++i)
                os << " f1@" << f1_thresholds[i] << " " << pick(aggregate_f1(i));
            os << " edit " << pick(aggregate_edit()) << " map " << pick(aggregate_map());
        }
        if (has_regression)
            os << " mse " << pick(aggregate_mse()) << " spearman " << pick(aggregate_spearman());
        os << "\n";
    };
    put_aggregate("mean", [](const Aggregate& a) { return a.mean; });
    put_aggregate("std", [](const Aggregate& a) { return a.stddev; });
    if (has_segmentation && !confusion.empty()) {
        os << "confusion-rows " << classes << "\n";
        for (int i = 0; i < classes; ++i) {
            os << "row " << i;
            for (int j = 0; j < classes; ++j)
                os << " " << confusion[static_cast<size_t>(i * classes + j)];
            os << "\n";
        }
    }
    return os.str();
}

void MetricsReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("metrics report: cannot write " + path);
    out << to_text();
}

MetricsReport MetricsReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("metrics report: cannot open " + path);
    MetricsReport report;
    report.f1_thresholds.clear();
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        if (word == "metrics-report-version") {
            int v;
            ls >> v;
            if (v != 1) throw DataError("metrics report: unsupported version");
        } else if (word == "classes") {
            ls >> report.classes;
        } else if (word == "segmentation") {
            int f;
            ls >> f;
            report.has_segmentation = f != 0;
        } else if (word == "regression") {
            int f;
            ls >> f;
            report.has_regression = f != 0;
        } else if (word == "thresholds") {
            double t;
            while (ls >> t) report.f1_thresholds.push_back(t);
        } else if (word == "video") {
            VideoMetrics v;
            ls >> v.video_id;
            std::string key;
            while (ls >> key) {
                if (key == "frames") {
                    ls >> v.frames;
                } else if (key.rfind("f1@", 0) == 0) {
                    double value;
                    ls >> value;
                    v.f1.push_back(value);
                } else if (key == "edit") {
                    ls >> v.edit;
                } else if (key == "map") {
                    ls >> v.map;
                } else if (key == "mse") {
                    ls >> v.mse;
                } else if (key == "spearman") {
                    std::string value;
                    ls >> value;
                    if (value != "undefined") v.spearman = std::stod(value);
                }
            }
            report.videos.push_back(std::move(v));
        } else if (word == "row") {
            int row;
            ls >> row;
            if (report.confusion.empty())
                report.confusion.assign(
                    static_cast<size_t>(report.classes) * static_cast<size_t>(report.classes), 0);
            int64_t value;
            int j = 0;
            while (ls >> value)
                report.confusion[static_cast<size_t>(row * report.classes + j++)] = value;
        }
    }
    return report;
}

}  // namespace ergoseg::metrics

#pragma once
// Segmentation and regression evaluation: segment extraction, F1-overlap,
// segmental edit score, frame-level mAP, confusion matrices, MSE and
// Spearman's rank correlation, plus the per-video report container.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ergoseg::metrics {

struct Segment {
    int label = 0;
    int64_t start = 0;  // inclusive
    int64_t end = 0;    // exclusive
};

// Maximal runs of equal labels; concatenating them reproduces the input.
std::vector<Segment> labels_to_segments(const std::vector<int>& frames);

// Greedy one-to-one matching of same-label segments in descending IoU
// order; a pair matches when temporal IoU >= threshold.
double f1_overlap(const std::vector<int>& pred, const std::vector<int>& gt,
                  double iou_threshold);

// 100 * (1 - Levenshtein(pred segments, gt segments) / max length);
// durations are ignored, only the segment label strings count.
double segmental_edit_score(const std::vector<int>& pred, const std::vector<int>& gt);

// Frame-level average precision per class (all-points PR area), averaged
// over the classes present in gt. Ties rank by frame order. Classes absent
// from gt are excluded and reported through absent_classes when given.
double mean_average_precision(const std::vector<double>& scores, int64_t frames, int classes,
                              const std::vector<int>& gt,
                              std::vector<int>* absent_classes = nullptr);

// Pearson correlation of mid-ranks (ties averaged). Empty when either
// series is constant.
std::optional<double> spearman(const std::vector<double>& pred, const std::vector<double>& gt);

// counts[gt * classes + pred]
std::vector<int64_t> confusion_matrix(const std::vector<int>& pred, const std::vector<int>& gt,
                                      int classes);
// Rows scaled to sum to 1; empty rows stay zero.
std::vector<double> row_normalize(const std::vector<int64_t>& counts, int classes);

double mse(const std::vector<double>& pred, const std::vector<double>& gt);
double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt);

struct VideoMetrics {
    std::string video_id;
    int64_t frames = 0;
    std::vector<double> f1;  // parallel to MetricsReport::f1_thresholds
    double edit = 0.0;
    double map = 0.0;
    double mse = 0.0;
    std::optional<double> spearman;
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // population
    int64_t count = 0;
};

struct MetricsReport {
    bool has_segmentation = false;
    bool has_regression = false;
    int classes = 0;
    std::vector<double> f1_thresholds{0.10, 0.25, 0.50};
    std::vector<VideoMetrics> videos;
    std::vector<int64_t> confusion;  // classes x classes, all videos pooled

    Aggregate aggregate_f1(size_t threshold_index) const;
    Aggregate aggregate_edit() const;
    Aggregate aggregate_map() const;
    Aggregate aggregate_mse() const;
    Aggregate aggregate_spearman() const;  // skips undefined entries

    void save(const std::string& path) const;
    static MetricsReport load(const std::string& path);
    std::string to_text() const;
};

}  // namespace ergoseg::metrics

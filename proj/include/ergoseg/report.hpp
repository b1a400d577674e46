#pragma once
// Per-video result rendering: a stacked ribbon (ground truth above
// prediction) for the segmentation, overlaid risk curves color-coded by
// predicted class, and the matching numeric dump. Output is one
// self-contained SVG; no display server involved.

#include <string>
#include <vector>

namespace ergoseg {

struct RibbonReport {
    std::vector<int> gt_labels;
    std::vector<int> pred_labels;
    std::vector<double> gt_reba;
    std::vector<double> pred_reba;
    int classes = 0;
    std::vector<std::string> class_names;  // optional; ids used when empty

    void validate() const;  // all four tracks share the frame count
    std::string render_svg() const;
    std::string render_csv() const;
    void save(const std::string& svg_path, const std::string& csv_path) const;
};

// Deterministic per-class color (golden-ratio hue spacing).
std::string class_color(int class_id);

}  // namespace ergoseg

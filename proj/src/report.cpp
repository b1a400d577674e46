#include "ergoseg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ergoseg/metrics.hpp"
#include "ergoseg/tensor.hpp"

namespace ergoseg {

namespace {

std::string hsv_hex(double h, double s, double v) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c; g = x;
    } else if (hp < 2) {
        r = x; g = c;
    } else if (hp < 3) {
        g = c; b = x;
    } else if (hp < 4) {
        g = x; b = c;
    } else if (hp < 5) {
        r = x; b = c;
    } else {
        r = c; b = x;
    }
    const double m = v - c;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>((r + m) * 255.0 + 0.5),
                  static_cast<int>((g + m) * 255.0 + 0.5),
                  static_cast<int>((b + m) * 255.0 + 0.5));
    return buf;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

std::string class_color(int class_id) {
    const double hue = std::fmod(static_cast<double>(class_id) * 0.61803398874989485, 1.0) * 360.0;
    return hsv_hex(hue, 0.62, 0.85);
}

void RibbonReport::validate() const {
    const size_t frames = gt_labels.size();
    if (frames == 0) throw ContractViolation("RibbonReport: no frames");
    if (pred_labels.size() != frames || gt_reba.size() != frames || pred_reba.size() != frames)
        throw ContractViolation("RibbonReport: the four tracks must share one frame count");
    if (classes < 1) throw ContractViolation("RibbonReport: class count missing");
}

std::string RibbonReport::render_csv() const {
    validate();
    std::ostringstream os;
    os << "frame,gt_label,pred_label,gt_reba,pred_reba\n";
    char buf[64];
    for (size_t t = 0; t < gt_labels.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%zu,%d,%d,%.17g,%.17g\n", t, gt_labels[t], pred_labels[t],
                      gt_reba[t], pred_reba[t]);
        os << buf;
    }
    return os.str();
}

std::string RibbonReport::render_svg() const {
    validate();
    const int64_t frames = static_cast<int64_t>(gt_labels.size());
    const double width = 960.0, margin = 56.0;
    const double plot_w = width - 2.0 * margin;
    const double ribbon_h = 64.0, curve_h = 200.0, gap = 36.0;
    const double legend_h = 26.0 * ((classes + 3) / 4) + 18.0;
    const double height = margin + ribbon_h + gap + curve_h + gap + legend_h + margin;
    const double x_of = plot_w / static_cast<double>(frames);

    double reba_lo = 1.0, reba_hi = 15.0;
    for (double v : gt_reba) {
        reba_lo = std::min(reba_lo, v);
        reba_hi = std::max(reba_hi, v);
    }
    for (double v : pred_reba) {
        reba_lo = std::min(reba_lo, v);
        reba_hi = std::max(reba_hi, v);
    }
    const double pad = 0.5;
    reba_lo -= pad;
    reba_hi += pad;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << fmt(height) << "\" viewBox=\"0 0 " << width << " " << fmt(height) << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    auto x_at = [&](int64_t t) { return margin + x_of * static_cast<double>(t); };

    // Ribbon: ground truth on the top half, predictions on the bottom half.
    const double ribbon_y = margin;
    auto ribbon_row = [&](const std::vector<int>& labels, double y, double h) {
        for (const auto& seg : metrics::labels_to_segments(labels)) {
            os << "<rect x=\"" << fmt(x_at(seg.start)) << "\" y=\"" << fmt(y) << "\" width=\""
               << fmt(x_of * static_cast<double>(seg.end - seg.start)) << "\" height=\"" << fmt(h)
               << "\" fill=\"" << class_color(seg.label) << "\"/>\n";
        }
    };
    ribbon_row(gt_labels, ribbon_y, ribbon_h / 2.0);
    ribbon_row(pred_labels, ribbon_y + ribbon_h / 2.0, ribbon_h / 2.0);
    os << "<rect x=\"" << fmt(margin) << "\" y=\"" << fmt(ribbon_y) << "\" width=\""
       << fmt(plot_w) << "\" height=\"" << fmt(ribbon_h)
       << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << fmt(margin) << "\" y1=\"" << fmt(ribbon_y + ribbon_h / 2.0)
       << "\" x2=\"" << fmt(margin + plot_w) << "\" y2=\"" << fmt(ribbon_y + ribbon_h / 2.0)
       << "\" stroke=\"#333333\" stroke-width=\"0.8\"/>\n";
    os << "<text x=\"" << fmt(margin - 8.0) << "\" y=\"" << fmt(ribbon_y + ribbon_h * 0.25 + 4.0)
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">truth</text>\n";
    os << "<text x=\"" << fmt(margin - 8.0) << "\" y=\"" << fmt(ribbon_y + ribbon_h * 0.75 + 4.0)
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">pred</text>\n";

    // Risk curves.
    const double curve_y = ribbon_y + ribbon_h + gap;
    auto y_at = [&](double v) {
        return curve_y + curve_h - (v - reba_lo) / (reba_hi - reba_lo) * curve_h;
    };
    os << "<rect x=\"" << fmt(margin) << "\" y=\"" << fmt(curve_y) << "\" width=\"" << fmt(plot_w)
       << "\" height=\"" << fmt(curve_h)
       << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    for (int grid = static_cast<int>(std::ceil(reba_lo)); grid <= static_cast<int>(reba_hi);
         grid += 2) {
        os << "<line x1=\"" << fmt(margin) << "\" y1=\"" << fmt(y_at(grid)) << "\" x2=\""
           << fmt(margin + plot_w) << "\" y2=\"" << fmt(y_at(grid))
           << "\" stroke=\"#dddddd\" stroke-width=\"0.6\"/>\n";
        os << "<text x=\"" << fmt(margin - 6.0) << "\" y=\"" << fmt(y_at(grid) + 3.5)
           << "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">" << grid
           << "</text>\n";
    }
    // Ground truth as one continuous line.
    os << "<polyline fill=\"none\" stroke=\"#7fb8c4\" stroke-width=\"2\" points=\"";
    for (int64_t t = 0; t < frames; ++t)
        os << fmt(x_at(t) + x_of * 0.5) << "," << fmt(y_at(gt_reba[static_cast<size_t>(t)])) << " ";
    os << "\"/>\n";
    // Prediction color-coded by the predicted class.
    for (const auto& seg : metrics::labels_to_segments(pred_labels)) {
        os << "<polyline fill=\"none\" stroke=\"" << class_color(seg.label)
           << "\" stroke-width=\"1.6\" points=\"";
        for (int64_t t = seg.start; t < seg.end; ++t)
            os << fmt(x_at(t) + x_of * 0.5) << "," << fmt(y_at(pred_reba[static_cast<size_t>(t)]))
               << " ";
        os << "\"/>\n";
    }
    os << "<text x=\"" << fmt(margin) << "\" y=\"" << fmt(curve_y + curve_h + 16.0)
       << "\" font-size=\"11\" font-family=\"sans-serif\">risk score: truth in muted blue, "
          "prediction colored by predicted class</text>\n";

    // Legend.
    const double legend_y = curve_y + curve_h + gap;
    for (int c = 0; c < classes; ++c) {
        const double lx = margin + static_cast<double>(c % 4) * (plot_w / 4.0);
        const double ly = legend_y + static_cast<double>(c / 4) * 26.0;
        os << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly) << "\" width=\"16\" height=\"16\" "
           << "fill=\"" << class_color(c) << "\"/>\n";
        const std::string label = (c < static_cast<int>(class_names.size()) &&
                                   !class_names[static_cast<size_t>(c)].empty())
                                      ? class_names[static_cast<size_t>(c)]
                                      : "class " + std::to_string(c);
        os << "<text x=\"" << fmt(lx + 22.0) << "\" y=\"" << fmt(ly + 12.5)
           << "\" font-size=\"11\" font-family=\"sans-serif\">" << label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void RibbonReport::save(const std::string& svg_path, const std::string& csv_path) const {
    std::ofstream svg(svg_path);
    if (!svg) throw DataError("report: cannot write " + svg_path);
    svg << render_svg();
    std::ofstream csv(csv_path);
    if (!csv) throw DataError("report: cannot write " + csv_path);
    csv << render_csv();
}

}  // namespace ergoseg

#pragma once

// Self-contained SVG charts: class histograms, embedding trajectories and
// per-berry ripeness curves. Output is plain text with fixed number
// formatting so identical inputs give identical files.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ripelab/albedo.hpp"
#include "ripelab/embed.hpp"
#include "ripelab/format.hpp"

namespace ripelab {

namespace svg {

inline std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string num(double v) { return format_fixed(v, 2); }

inline std::string open(double width, double height, const std::string& title, const std::string& meta) {
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<title>" + escape(title) + "</title>\n";
    if (!meta.empty()) s += "<metadata>" + escape(meta) + "</metadata>\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) + "\" fill=\"#ffffff\"/>\n";
    return s;
}

inline std::string text(double x, double y, const std::string& body, const std::string& extra = {}) {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" + (extra.empty() ? "" : " " + extra) + ">" +
           escape(body) + "</text>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333333") {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
           "\" stroke=\"" + stroke + "\"/>\n";
}

inline std::string hex_color(double r, double g, double b) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s = "#";
    for (double v : {r, g, b}) {
        const int i = std::clamp(static_cast<int>(std::lround(v)), 0, 255);
        s += digits[i >> 4];
        s += digits[i & 15];
    }
    return s;
}

// Green to deep red.
inline const std::array<std::string, kClassCount>& class_colors() {
    static const std::array<std::string, kClassCount> colors{"#3c962d", "#8ca03a", "#c8a046", "#b43c3c", "#6e1428"};
    return colors;
}

// Evenly spaced hues for series.
inline std::string series_color(std::size_t i, std::size_t n) {
    const double h = 360.0 * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(n, 1));
    const double c = 0.65, x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0)), m = 0.15;
    double r = 0, g = 0, b = 0;
    if (h < 60) r = c, g = x;
    else if (h < 120) r = x, g = c;
    else if (h < 180) g = c, b = x;
    else if (h < 240) g = x, b = c;
    else if (h < 300) r = x, b = c;
    else r = c, b = x;
    return hex_color(255 * (r + m), 255 * (g + m), 255 * (b + m));
}

}  // namespace svg

// One panel per bog; one stacked bar of class fractions per date.
inline std::string histograms_svg(std::span<const ClassHistogram> histograms, const std::string& meta = {}) {
    std::map<std::string, std::vector<ClassHistogram>> by_bog;
    for (const auto& h : histograms) by_bog[h.bog_id].push_back(h);
    for (auto& [bog, hs] : by_bog)
        std::stable_sort(hs.begin(), hs.end(), [](const auto& a, const auto& b) { return a.capture_date < b.capture_date; });
    std::size_t max_dates = 1;
    for (const auto& [bog, hs] : by_bog) max_dates = std::max(max_dates, hs.size());

    const double bar_w = 28, gap = 12, left = 60, top = 40, panel_h = 180, plot_h = 120;
    const double width = left + max_dates * (bar_w + gap) + 140;
    const double height = top + std::max<std::size_t>(by_bog.size(), 1) * panel_h + 20;
    std::string s = svg::open(width, height, "Berry color class fractions per date", meta);
    s += svg::text(left, 20, "Berry color class fractions per date", "font-size=\"14\"");
    for (int k = 0; k < kClassCount; ++k) {
        const double y = top + 14.0 * k;
        s += "<rect x=\"" + svg::num(width - 120) + "\" y=\"" + svg::num(y) + "\" width=\"10\" height=\"10\" fill=\"" +
             svg::class_colors()[k] + "\"/>\n";
        s += svg::text(width - 105, y + 9, "class " + std::to_string(k + 1));
    }
    if (by_bog.empty()) s += svg::text(left, top + plot_h / 2, "no detections", "class=\"no-detections\"");

    std::size_t panel = 0;
    for (const auto& [bog, hs] : by_bog) {
        const double y0 = top + panel * panel_h, base = y0 + plot_h + 10;
        s += "<g class=\"bog\" id=\"bog-" + svg::escape(bog) + "\">\n";
        s += svg::text(10, y0 + 20, bog, "font-weight=\"bold\"");
        s += svg::line(left - 4, base, left + hs.size() * (bar_w + gap), base);
        s += svg::line(left - 4, base, left - 4, base - plot_h);
        s += svg::text(left - 30, base - plot_h + 4, "1.0");
        s += svg::text(left - 30, base + 4, "0.0");
        for (std::size_t d = 0; d < hs.size(); ++d) {
            const double x = left + d * (bar_w + gap);
            const auto& h = hs[d];
            s += svg::text(x, base + 14, h.capture_date.size() >= 10 ? h.capture_date.substr(5) : h.capture_date);
            const auto f = h.fractions();
            if (!f) {
                s += svg::text(x, base - 6, "no detections", "class=\"no-detections\" transform=\"rotate(-90 " +
                                                                 svg::num(x + bar_w / 2) + " " + svg::num(base - 6) + ")\"");
                continue;
            }
            double y = base;
            for (int k = 0; k < kClassCount; ++k) {
                const double hgt = (*f)[k] * plot_h;
                if (hgt <= 0.0) continue;
                y -= hgt;
                s += "<rect x=\"" + svg::num(x) + "\" y=\"" + svg::num(y) + "\" width=\"" + svg::num(bar_w) +
                     "\" height=\"" + svg::num(hgt) + "\" fill=\"" + svg::class_colors()[k] + "\"/>\n";
            }
        }
        s += "</g>\n";
        ++panel;
    }
    return s + "</svg>\n";
}

namespace detail {

inline std::map<int, std::vector<EmbeddingRow>> rows_by_berry(std::span<const EmbeddingRow> rows) {
    std::map<int, std::vector<EmbeddingRow>> out;
    for (const auto& r : rows) out[r.berry_id].push_back(r);
    for (auto& [id, v] : out)
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.timepoint < b.timepoint; });
    return out;
}

}  // namespace detail

// Scatter of all points plus one trajectory polyline per berry.
inline std::string embedding_svg(std::span<const EmbeddingRow> rows, const std::string& meta = {}) {
    const double width = 560, height = 520, pad = 40;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!rows.empty()) {
        xmin = xmax = rows[0].x;
        ymin = ymax = rows[0].y;
        for (const auto& r : rows) {
            xmin = std::min(xmin, r.x), xmax = std::max(xmax, r.x);
            ymin = std::min(ymin, r.y), ymax = std::max(ymax, r.y);
        }
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
    auto px = [&](double x) { return pad + (x - xmin) / span * (width - 2 * pad); };
    auto py = [&](double y) { return height - pad - (y - ymin) / span * (height - 2 * pad); };
    int tmax = 1;
    for (const auto& r : rows) tmax = std::max(tmax, r.timepoint);

    std::string s = svg::open(width, height, "Berry feature embedding", meta);
    s += svg::text(pad, 24, "Berry feature embedding (trajectory per berry)", "font-size=\"14\"");
    const auto groups = detail::rows_by_berry(rows);
    std::size_t i = 0;
    for (const auto& [id, pts] : groups) {
        const auto color = svg::series_color(i++, groups.size());
        s += "<g class=\"berry\" id=\"berry-" + std::to_string(id) + "\">\n<polyline fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1\" points=\"";
        for (std::size_t k = 0; k < pts.size(); ++k) s += (k ? " " : "") + svg::num(px(pts[k].x)) + "," + svg::num(py(pts[k].y));
        s += "\"/>\n";
        for (const auto& p : pts) {
            const double t = static_cast<double>(p.timepoint) / tmax;
            s += "<circle cx=\"" + svg::num(px(p.x)) + "\" cy=\"" + svg::num(py(p.y)) + "\" r=\"2.5\" fill=\"" +
                 svg::hex_color(60 + 105 * t, 150 - 125 * t, 45) + "\"/>\n";
        }
        s += "</g>\n";
    }
    return s + "</svg>\n";
}

// Ripeness against capture date, one line per berry. `dates[t]` labels timepoint t when present.
inline std::string ripeness_svg(std::span<const EmbeddingRow> rows, std::span<const std::string> dates = {},
                                const std::string& meta = {}) {
    const double width = 640, height = 360, left = 50, right = 20, top = 40, bottom = 50;
    int tmax = 1;
    for (const auto& r : rows) tmax = std::max(tmax, r.timepoint);
    auto px = [&](double t) { return left + t / tmax * (width - left - right); };
    auto py = [&](double v) { return height - bottom - v * (height - top - bottom); };

    std::string s = svg::open(width, height, "Ripeness per berry over time", meta);
    s += svg::text(left, 24, "Ripeness per berry over time", "font-size=\"14\"");
    s += svg::line(left, py(0), width - right, py(0));
    s += svg::line(left, py(0), left, py(1));
    for (double v : {0.0, 0.5, 1.0}) s += svg::text(left - 30, py(v) + 4, format_fixed(v, 1));
    const int step = std::max(1, tmax / 6);
    for (int t = 0; t <= tmax; t += step) {
        const std::string label = static_cast<std::size_t>(t) < dates.size() ? dates[t] : std::to_string(t);
        s += svg::text(px(t) - 20, py(0) + 16, label);
    }
    const auto groups = detail::rows_by_berry(rows);
    std::size_t i = 0;
    for (const auto& [id, pts] : groups) {
        s += "<polyline class=\"berry\" id=\"berry-" + std::to_string(id) + "\" fill=\"none\" stroke=\"" +
             svg::series_color(i++, groups.size()) + "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t k = 0; k < pts.size(); ++k)
            s += (k ? " " : "") + svg::num(px(pts[k].timepoint)) + "," + svg::num(py(pts[k].ripeness));
        s += "\"/>\n";
    }
    return s + "</svg>\n";
}

}  // namespace ripelab

#pragma once

// Minimal self-contained SVG line charts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fracheat/errors.hpp"

namespace fracheat::svg {

struct Series {
    std::string name;
    std::vector<double> x, y;
    std::string data_key;    // written as data-<key>="<data_value>"
    double data_value = 0.0;
    bool markers = false;    // draw circles instead of a polyline
};

struct StraightLine {
    std::string css_class;   // "fit" or "reference"
    std::string label;
    double slope = 0.0;
    double intercept = 0.0;
    bool anchor_to_first_point = false;  // pass through the first point of series 0
};

struct Chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    std::vector<StraightLine> lines;
    int width = 720;
    int height = 480;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
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

inline const char* color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return palette[i % 10];
}

}  // namespace detail

inline std::string render(const Chart& c) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : c.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]); x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]); y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) throw domain_error("svg: no finite data to plot");
    if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
    if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad; y1 += pad;

    const double left = 80, right = 170, top = 40, bottom = 60;
    const double pw = c.width - left - right, ph = c.height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << c.width << "\" height=\"" << c.height
       << "\" viewBox=\"0 0 " << c.width << ' ' << c.height << "\">\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << c.width << "\" height=\"" << c.height << "\" fill=\"white\"/>\n"
       << "<text x=\"" << c.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(c.title)
       << "</text>\n";

    // axes and ticks
    os << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n"
       << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph << "\"/>\n</g>\n";
    os << "<g class=\"ticks\" font-size=\"11\">\n";
    for (int k = 0; k <= 5; ++k) {
        const double xv = x0 + (x1 - x0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
        os << "<text x=\"" << detail::fmt(px(xv)) << "\" y=\"" << detail::fmt(top + ph + 16)
           << "\" text-anchor=\"middle\">" << detail::fmt(xv) << "</text>\n";
        os << "<text x=\"" << detail::fmt(left - 6) << "\" y=\"" << detail::fmt(py(yv) + 4) << "\" text-anchor=\"end\">"
           << detail::fmt(yv) << "</text>\n";
    }
    os << "</g>\n";
    os << "<text x=\"" << detail::fmt(left + pw / 2) << "\" y=\"" << c.height - 12 << "\" text-anchor=\"middle\">"
       << detail::escape(c.x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << detail::fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << detail::fmt(top + ph / 2) << ")\">" << detail::escape(c.y_label) << "</text>\n";

    std::size_t legend = 0;
    auto legend_entry = [&](const std::string& label, const char* col, bool dashed) {
        const double ly = top + 14 + 18.0 * static_cast<double>(legend++);
        os << "<line x1=\"" << detail::fmt(left + pw + 10) << "\" y1=\"" << detail::fmt(ly) << "\" x2=\""
           << detail::fmt(left + pw + 34) << "\" y2=\"" << detail::fmt(ly) << "\" stroke=\"" << col << "\""
           << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n"
           << "<text x=\"" << detail::fmt(left + pw + 40) << "\" y=\"" << detail::fmt(ly + 4) << "\" font-size=\"11\">"
           << detail::escape(label) << "</text>\n";
    };

    for (std::size_t s = 0; s < c.series.size(); ++s) {
        const Series& ser = c.series[s];
        const std::string data = ser.data_key.empty() ? "" : " data-" + ser.data_key + "=\"" + detail::fmt(ser.data_value) + "\"";
        if (ser.markers) {
            os << "<g class=\"series\"" << data << " fill=\"" << detail::color(s) << "\">\n";
            for (std::size_t i = 0; i < ser.x.size(); ++i)
                if (std::isfinite(ser.y[i]))
                    os << "<circle cx=\"" << detail::fmt(px(ser.x[i])) << "\" cy=\"" << detail::fmt(py(ser.y[i])) << "\" r=\"3.5\"/>\n";
            os << "</g>\n";
        } else {
            os << "<polyline class=\"series\"" << data << " fill=\"none\" stroke=\"" << detail::color(s)
               << "\" stroke-width=\"1.5\" points=\"";
            bool first = true;
            for (std::size_t i = 0; i < ser.x.size(); ++i) {
                if (!std::isfinite(ser.y[i])) continue;
                os << (first ? "" : " ") << detail::fmt(px(ser.x[i])) << ',' << detail::fmt(py(ser.y[i]));
                first = false;
            }
            os << "\"/>\n";
        }
        legend_entry(ser.name, detail::color(s), false);
    }

    for (std::size_t l = 0; l < c.lines.size(); ++l) {
        StraightLine ln = c.lines[l];
        if (ln.anchor_to_first_point && !c.series.empty() && !c.series[0].x.empty())
            ln.intercept = c.series[0].y[0] - ln.slope * c.series[0].x[0];
        // clip the segment to the plotting box in data coordinates
        double xa = x0, xb = x1;
        if (ln.slope != 0.0) {
            const double xlo = (y0 - ln.intercept) / ln.slope, xhi = (y1 - ln.intercept) / ln.slope;
            xa = std::max(xa, std::min(xlo, xhi));
            xb = std::min(xb, std::max(xlo, xhi));
        }
        if (!(xb > xa)) { xa = x0; xb = x1; }
        const char* col = ln.css_class == "reference" ? "#555555" : "#000000";
        os << "<line class=\"" << ln.css_class << "\" data-slope=\"" << detail::fmt(ln.slope) << "\" x1=\"" << detail::fmt(px(xa))
           << "\" y1=\"" << detail::fmt(py(ln.intercept + ln.slope * xa)) << "\" x2=\"" << detail::fmt(px(xb)) << "\" y2=\""
           << detail::fmt(py(ln.intercept + ln.slope * xb)) << "\" stroke=\"" << col << "\""
           << (ln.css_class == "reference" ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
        legend_entry(ln.label, col, ln.css_class == "reference");
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace fracheat::svg

#pragma once

// Native SVG line plots (metric vs guidance scale).
//
// Element order is fixed so output can be snapshot-tested:
//   1. <rect class="background">
//   2. <line class="axis"> x axis, then y axis
//   3. per x tick: <line class="tick"> then <text class="tick-label">
//   4. per y tick (5, bottom to top): <line class="tick"> then <text class="tick-label">
//   5. <text class="x-label">, <text class="y-label">, <text class="title">
//   6. <path class="series">
//   7. one <circle class="point"> per data point, in input order

#include "gdiff/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace gdiff::svg {

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
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

}  // namespace detail

inline constexpr double kWidth = 480.0, kHeight = 320.0;
inline constexpr double kLeft = 64.0, kRight = 16.0, kTop = 32.0, kBottom = 48.0;

inline std::string render(const LinePlot& p) {
    require(!p.x.empty() && p.x.size() == p.y.size(), "plot needs matching, non-empty x and y");
    for (std::size_t i = 0; i < p.x.size(); ++i)
        require(std::isfinite(p.x[i]) && std::isfinite(p.y[i]), "plot values must be finite");
    using detail::num;
    auto [xmin_it, xmax_it] = std::minmax_element(p.x.begin(), p.x.end());
    auto [ymin_it, ymax_it] = std::minmax_element(p.y.begin(), p.y.end());
    double xmin = *xmin_it, xmax = *xmax_it, ymin = *ymin_it, ymax = *ymax_it;
    if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
    if (ymax == ymin) {
        const double pad = std::max(std::abs(ymin) * 0.05, 0.5);
        ymin -= pad;
        ymax += pad;
    } else {
        const double pad = 0.05 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;
    }
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto sx = [&](double v) { return kLeft + (v - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double v) { return kTop + (ymax - v) / (ymax - ymin) * ph; };
    const double x0 = kLeft, y0 = kTop + ph;

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    s += "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" fill=\"white\"/>\n";
    s += "<line class=\"axis\" x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0 + pw) + "\" y2=\"" + num(y0) +
         "\" stroke=\"black\"/>\n";
    s += "<line class=\"axis\" x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(kTop) +
         "\" stroke=\"black\"/>\n";
    std::vector<double> xt(p.x);
    std::sort(xt.begin(), xt.end());
    xt.erase(std::unique(xt.begin(), xt.end()), xt.end());
    for (double v : xt) {
        s += "<line class=\"tick\" x1=\"" + num(sx(v)) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(sx(v)) + "\" y2=\"" +
             num(y0 + 5) + "\" stroke=\"black\"/>\n";
        s += "<text class=\"tick-label\" x=\"" + num(sx(v)) + "\" y=\"" + num(y0 + 18) +
             "\" font-size=\"11\" text-anchor=\"middle\">" + detail::tick(v) + "</text>\n";
    }
    for (int i = 0; i < 5; ++i) {
        const double v = ymin + (ymax - ymin) * i / 4.0;
        s += "<line class=\"tick\" x1=\"" + num(x0 - 5) + "\" y1=\"" + num(sy(v)) + "\" x2=\"" + num(x0) + "\" y2=\"" +
             num(sy(v)) + "\" stroke=\"black\"/>\n";
        s += "<text class=\"tick-label\" x=\"" + num(x0 - 8) + "\" y=\"" + num(sy(v) + 4) +
             "\" font-size=\"11\" text-anchor=\"end\">" + detail::tick(v) + "</text>\n";
    }
    s += "<text class=\"x-label\" x=\"" + num(x0 + pw / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" font-size=\"12\" text-anchor=\"middle\">" + detail::escape(p.x_label) + "</text>\n";
    s += "<text class=\"y-label\" x=\"14\" y=\"" + num(kTop + ph / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         num(kTop + ph / 2) + ")\">" + detail::escape(p.y_label) + "</text>\n";
    s += "<text class=\"title\" x=\"" + num(kWidth / 2) + "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">" +
         detail::escape(p.title) + "</text>\n";
    s += "<path class=\"series\" d=\"";
    for (std::size_t i = 0; i < p.x.size(); ++i) s += (i ? " L " : "M ") + num(sx(p.x[i])) + " " + num(sy(p.y[i]));
    s += "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < p.x.size(); ++i)
        s += "<circle class=\"point\" cx=\"" + num(sx(p.x[i])) + "\" cy=\"" + num(sy(p.y[i])) +
             "\" r=\"3\" fill=\"steelblue\"/>\n";
    s += "</svg>\n";
    return s;
}

}  // namespace gdiff::svg

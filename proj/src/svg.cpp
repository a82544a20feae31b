#include "morphorisk/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace morphorisk::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string open(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + num(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "start", const char* extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\"" + extra + ">" + escape(s) +
         "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const char* colour = "black") {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
         "\" stroke=\"" + colour + "\"/>\n";
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label, int ticks = 5) {
  std::string out;
  out += line(f.px(f.x0), f.py(f.y0), f.px(f.x1), f.py(f.y0));
  out += line(f.px(f.x0), f.py(f.y0), f.px(f.x0), f.py(f.y1));
  for (int k = 0; k <= ticks; ++k) {
    const double x = f.x0 + (f.x1 - f.x0) * k / ticks;
    const double y = f.y0 + (f.y1 - f.y0) * k / ticks;
    out += line(f.px(x), f.py(f.y0), f.px(x), f.py(f.y0) + 4);
    out += text(f.px(x), f.py(f.y0) + 16, label_num(x), "middle");
    out += line(f.px(f.x0) - 4, f.py(y), f.px(f.x0), f.py(y));
    out += text(f.px(f.x0) - 6, f.py(y) + 4, label_num(y), "end");
  }
  out += text((f.px(f.x0) + f.px(f.x1)) / 2, kHeight - 20, x_label, "middle");
  out += "<text transform=\"translate(18," + num((f.py(f.y0) + f.py(f.y1)) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
  return out;
}

std::string legend(const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double y = kTop + 16.0 * static_cast<double>(k);
    const char* c = kPalette[k % kPalette.size()];
    out += line(kWidth - kRight + 10, y, kWidth - kRight + 30, y, c);
    out += text(kWidth - kRight + 34, y + 4, labels[k]);
  }
  return out;
}

}  // namespace

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string km_plot(const std::string& title, const std::vector<StepSeries>& series, double x_max) {
  const Frame f{0, x_max, 0, 1};
  std::string out = open(title) + axes(f, "days", "survival probability");
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& c = series[k].curve;
    std::string pts = num(f.px(0)) + "," + num(f.py(1));
    double s = 1.0;
    for (std::size_t j = 0; j < c.times.size() && c.times[j] <= x_max; ++j) {
      pts += " " + num(f.px(c.times[j])) + "," + num(f.py(s));
      s = c.survival[j];
      pts += " " + num(f.px(c.times[j])) + "," + num(f.py(s));
    }
    pts += " " + num(f.px(x_max)) + "," + num(f.py(s));
    out += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[k % kPalette.size()]) + "\" points=\"" + pts +
           "\"/>\n";
    labels.push_back(series[k].label);
  }
  return out + legend(labels) + "</svg>\n";
}

std::string heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels,
                    const std::vector<std::vector<std::optional<double>>>& values, double lo, double hi) {
  const double left = 90, top = 50;
  const double cw = 48, ch = 14;
  const double width = left + cw * static_cast<double>(col_labels.size()) + 80;
  const double height = top + ch * static_cast<double>(row_labels.size()) + 40;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
                    "\" font-family=\"sans-serif\" font-size=\"10\">\n<rect width=\"100%\" height=\"100%\" "
                    "fill=\"white\"/>\n";
  out += text(width / 2, 20, title, "middle", " font-size=\"13\"");
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    out += text(left + cw * (static_cast<double>(c) + 0.5), top - 6, col_labels[c], "middle");
  }
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    const double y = top + ch * static_cast<double>(r);
    out += text(left - 4, y + ch - 3, row_labels[r], "end");
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const auto& v = values[r][c];
      std::string fill = "#dddddd";
      if (v) {
        const double t = std::clamp((*v - lo) / (hi - lo), 0.0, 1.0);
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(255 - 200 * t), static_cast<int>(255 - 120 * t),
                      255);
        fill = buf;
      }
      out += "<rect x=\"" + num(left + cw * static_cast<double>(c)) + "\" y=\"" + num(y) + "\" width=\"" + num(cw) +
             "\" height=\"" + num(ch) + "\" fill=\"" + fill + "\" stroke=\"white\"/>\n";
      if (v) out += text(left + cw * (static_cast<double>(c) + 0.5), y + ch - 3, num(*v), "middle");
    }
  }
  return out + "</svg>\n";
}

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars, double y_lo,
                      double y_hi) {
  const Frame f{0, static_cast<double>(std::max<std::size_t>(bars.size(), 1)), y_lo, y_hi};
  std::string out = open(title);
  out += line(f.px(f.x0), f.py(y_lo), f.px(f.x1), f.py(y_lo));
  out += line(f.px(f.x0), f.py(y_lo), f.px(f.x0), f.py(y_hi));
  for (int k = 0; k <= 5; ++k) {
    const double y = y_lo + (y_hi - y_lo) * k / 5;
    out += text(f.px(f.x0) - 6, f.py(y) + 4, label_num(y), "end");
  }
  out += "<text transform=\"translate(18," + num((f.py(y_lo) + f.py(y_hi)) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
  for (std::size_t k = 0; k < bars.size(); ++k) {
    const auto& b = bars[k];
    const double cx = f.px(static_cast<double>(k) + 0.5);
    const double w = 0.6 * (f.px(1) - f.px(0));
    out += text(cx, f.py(y_lo) + 16, b.label, "middle");
    if (!b.point) {
      out += text(cx, f.py(y_lo) - 6, "n/a", "middle");
      continue;
    }
    const double top = f.py(std::clamp(*b.point, y_lo, y_hi));
    out += "<rect x=\"" + num(cx - w / 2) + "\" y=\"" + num(top) + "\" width=\"" + num(w) + "\" height=\"" +
           num(f.py(y_lo) - top) + "\" fill=\"" + kPalette[k % kPalette.size()] + "\" fill-opacity=\"0.7\"/>\n";
    if (b.lower && b.upper) {
      const double yl = f.py(std::clamp(*b.lower, y_lo, y_hi)), yu = f.py(std::clamp(*b.upper, y_lo, y_hi));
      out += line(cx, yl, cx, yu);
      out += line(cx - 6, yl, cx + 6, yl);
      out += line(cx - 6, yu, cx + 6, yu);
    }
    out += text(cx, top - 4, num(*b.point), "middle");
  }
  return out + "</svg>\n";
}

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x, const std::vector<LineSeries>& series) {
  double x0 = x.empty() ? 0 : *std::min_element(x.begin(), x.end());
  double x1 = x.empty() ? 1 : *std::max_element(x.begin(), x.end());
  if (!(x1 > x0)) x1 = x0 + 1;
  double y0 = 1, y1 = 0;
  for (const auto& s : series)
    for (const auto& v : s.y)
      if (v) {
        y0 = std::min(y0, *v);
        y1 = std::max(y1, *v);
      }
  if (!(y1 > y0)) {
    y0 = 0;
    y1 = 1;
  }
  y0 = std::floor(y0 * 20) / 20;
  y1 = std::ceil(y1 * 20) / 20;
  if (!(y1 > y0)) y1 = y0 + 0.05;
  const Frame f{x0, x1, y0, y1};
  std::string out = open(title) + axes(f, x_label, y_label);
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = kPalette[k % kPalette.size()];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) out += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" points=\"" + pts + "\"/>\n";
      pts.clear();
    };
    for (std::size_t j = 0; j < x.size() && j < series[k].y.size(); ++j) {
      if (!series[k].y[j]) {
        flush();
        continue;
      }
      pts += (pts.empty() ? "" : " ") + num(f.px(x[j])) + "," + num(f.py(*series[k].y[j]));
    }
    flush();
    labels.push_back(series[k].label);
  }
  return out + legend(labels) + "</svg>\n";
}

}  // namespace morphorisk::svg

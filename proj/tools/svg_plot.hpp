#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "ed/error.hpp"

// Minimal static SVG charts for bench and trace output.
namespace ed::cli::svg {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                 "#edc948", "#b07aa1", "#ff9da7", "#9c755f"};
  return colors[i % std::size(colors)];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out.push_back(c);
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << body;
}

inline void bar_chart(const std::string& path, const std::string& title, const std::string& y_label,
                      const std::vector<std::string>& labels, const std::vector<double>& values) {
  const double width = 120.0 * std::max<std::size_t>(labels.size(), 1) + 120.0;
  const double height = 320.0;
  const double top = 40, bottom = 50, left = 70;
  const double plot_h = height - top - bottom;
  const double vmax = values.empty() ? 1.0 : std::max(1e-12, *std::max_element(values.begin(), values.end()));

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(int(width)) +
                  "\" height=\"" + std::to_string(int(height)) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(int(width / 2)) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
       escape(title) + "</text>\n";
  s += "<text x=\"16\" y=\"" + std::to_string(int(top + plot_h / 2)) +
       "\" font-size=\"12\" transform=\"rotate(-90 16 " + std::to_string(int(top + plot_h / 2)) + ")\">" +
       escape(y_label) + "</text>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double h = plot_h * values[i] / vmax;
    const double x = left + 120.0 * i + 20.0;
    const double y = top + plot_h - h;
    s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"80\" height=\"" +
         std::to_string(h) + "\" fill=\"" + palette(i) + "\"/>\n";
    s += "<text x=\"" + std::to_string(x + 40) + "\" y=\"" + std::to_string(y - 4) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + std::to_string(values[i]) + "</text>\n";
    s += "<text x=\"" + std::to_string(x + 40) + "\" y=\"" + std::to_string(top + plot_h + 18) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + escape(labels[i]) + "</text>\n";
  }
  s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top + plot_h) + "\" x2=\"" +
       std::to_string(width - 20) + "\" y2=\"" + std::to_string(top + plot_h) + "\" stroke=\"black\"/>\n";
  s += "</svg>\n";
  write_file(path, s);
}

/// One polyline per series over a shared integer x axis (decode step).
inline void line_chart(const std::string& path, const std::string& title,
                       const std::vector<std::vector<double>>& series) {
  const double width = 640, height = 320, top = 40, bottom = 40, left = 50, right = 120;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  std::size_t steps = 0;
  for (const auto& s : series) steps = std::max(steps, s.size());
  const double dx = steps > 1 ? plot_w / static_cast<double>(steps - 1) : 0.0;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"320\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + escape(title) + "</text>\n";
  s += "<line x1=\"50\" y1=\"280\" x2=\"520\" y2=\"280\" stroke=\"black\"/>\n";
  s += "<line x1=\"50\" y1=\"40\" x2=\"50\" y2=\"280\" stroke=\"black\"/>\n";
  s += "<text x=\"44\" y=\"44\" text-anchor=\"end\" font-size=\"10\">1</text>\n";
  s += "<text x=\"44\" y=\"280\" text-anchor=\"end\" font-size=\"10\">0</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::string pts;
    for (std::size_t t = 0; t < series[k].size(); ++t) {
      const double x = left + dx * static_cast<double>(t);
      const double y = top + plot_h * (1.0 - std::clamp(series[k][t], 0.0, 1.0));
      pts += std::to_string(x) + "," + std::to_string(y) + " ";
    }
    s += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(palette(k)) + "\" points=\"" + pts +
         "\"/>\n";
    s += "<text x=\"" + std::to_string(width - right + 10) + "\" y=\"" + std::to_string(top + 16.0 * k + 10) +
         "\" font-size=\"12\" fill=\"" + palette(k) + "\">sub-image " + std::to_string(k) + "</text>\n";
  }
  s += "</svg>\n";
  write_file(path, s);
}

}  // namespace ed::cli::svg

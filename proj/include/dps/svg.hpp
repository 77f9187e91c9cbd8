// Copyright 2026 The DPS Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "dps/errors.hpp"
#include "dps/sampling.hpp"

namespace dps {

namespace detail {

inline std::ofstream open_svg(const std::string& path, int w, int h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw storage_error("cannot open '" + path + "' for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  return out;
}

inline std::string blue_shade(double v01) {
  // white -> dark blue, sqrt-scaled so near-one-hot rows stay visible
  const double s = std::sqrt(std::clamp(v01, 0.0, 1.0));
  const int r = static_cast<int>(std::lround(255.0 * (1.0 - s)));
  const int g = static_cast<int>(std::lround(255.0 * (1.0 - 0.85 * s)));
  const int b = static_cast<int>(std::lround(255.0 - 115.0 * s));
  return "rgb(" + std::to_string(r) + "," + std::to_string(g) + "," + std::to_string(b) + ")";
}

}  // namespace detail

/// Cell-per-entry heatmap; values are scaled by the matrix maximum.
inline void write_heatmap_svg(const Eigen::MatrixXd& m, const std::string& path,
                              int cell = 6) {
  if (m.size() == 0) throw config_error("heatmap needs a non-empty matrix");
  const int w = static_cast<int>(m.cols()) * cell;
  const int h = static_cast<int>(m.rows()) * cell;
  auto out = detail::open_svg(path, w, h);
  const double peak = std::max(m.maxCoeff(), 1e-300);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << detail::blue_shade(m(r, c) / peak)
          << "\"/>\n";
    }
  out << "</svg>\n";
  if (!out) throw storage_error("write failed for '" + path + "'");
}

/// One row of N cells with the selected columns filled.
inline void write_pattern_strip_svg(const SamplingPattern& pat, const std::string& path,
                                    int cell = 8) {
  if (pat.signal_length <= 0) throw config_error("pattern strip needs a pattern");
  const int w = pat.signal_length * cell;
  const int h = cell * 2;
  auto out = detail::open_svg(path, w, h);
  out << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
      << "\" fill=\"white\" stroke=\"#999\"/>\n";
  for (int idx : pat.indices)
    out << "<rect x=\"" << idx * cell << "\" y=\"0\" width=\"" << cell << "\" height=\"" << h
        << "\" fill=\"#13406e\"/>\n";
  out << "</svg>\n";
  if (!out) throw storage_error("write failed for '" + path + "'");
}

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

/// Minimal line plot with log10 y-axis, for error-versus-factor summaries.
inline void write_lineplot_svg(const std::vector<PlotSeries>& series, const std::string& path,
                               const std::string& x_label = "factor",
                               const std::string& y_label = "mse") {
  if (series.empty()) throw config_error("line plot needs at least one series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw config_error("line plot series must be non-empty and aligned");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.y[i] > 0.0)) throw config_error("log-scale plot needs positive y values");
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, std::log10(s.y[i]));
      ymax = std::max(ymax, std::log10(s.y[i]));
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;

  const int w = 480, h = 320, ml = 56, mr = 16, mt = 16, mb = 40;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double ylog) { return h - mb - (ylog - ymin) / (ymax - ymin) * (h - mt - mb); };

  auto out = detail::open_svg(path, w, h);
  out << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << (h - mb) << "\" x2=\"" << (w - mr) << "\" y2=\""
      << (h - mb) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << (h - mb)
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (w / 2) << "\" y=\"" << (h - 8) << "\" font-size=\"12\">" << x_label
      << "</text>\n";
  out << "<text x=\"12\" y=\"" << (h / 2) << "\" font-size=\"12\" transform=\"rotate(-90 12 "
      << (h / 2) << ")\">log10 " << y_label << "</text>\n";

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << px(s.x[i]) << ',' << py(std::log10(s.y[i])) << ' ';
    out << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(std::log10(s.y[i]))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << (ml + 8) << "\" y=\"" << (mt + 14 + 14 * static_cast<int>(si))
        << "\" font-size=\"12\" fill=\"" << color << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw storage_error("write failed for '" + path + "'");
}

}  // namespace dps

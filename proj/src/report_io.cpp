// Copyright 2026 The spikeprune Authors
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

#include "spikeprune/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "spikeprune/tensor.hpp"

namespace spikeprune {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot open for write: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    f << (i ? "," : "") << header[i];
  f << "\n";
  for (const auto& row : rows) {
    check_dim(row.size() == header.size(), "csv row width vs header");
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << "\n";
  }
}

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::string& xlabel, const std::string& ylabel,
                     const std::vector<SvgSeries>& series) {
  const double width = 640, height = 420;
  const double ml = 70, mr = 140, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double yr = ymax - ymin;
  ymin -= 0.05 * yr;
  ymax += 0.05 * yr;

  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  static const char* kColors[] = {"#c0392b", "#2980b9", "#27ae60",
                                  "#8e44ad", "#d35400", "#16a085"};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot open for write: " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  // Axes.
  f << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
    << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
    << height - mb << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    f << "<text x=\"" << px(xv) << "\" y=\"" << height - mb + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << fmt_num(xv) << "</text>\n";
    f << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << fmt_num(yv) << "</text>\n";
  }
  f << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
    << xlabel << "</text>\n";
  f << "<text x=\"18\" y=\"" << (mt + height - mb) / 2
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
    << "transform=\"rotate(-90 18 " << (mt + height - mb) / 2 << ")\">" << ylabel
    << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kColors[si % 6];
    f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[si].points)
      f << fmt_num(px(x)) << "," << fmt_num(py(y)) << " ";
    f << "\"/>\n";
    for (const auto& [x, y] : series[si].points)
      f << "<circle cx=\"" << fmt_num(px(x)) << "\" cy=\"" << fmt_num(py(y))
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = mt + 20.0 * static_cast<double>(si);
    f << "<rect x=\"" << width - mr + 10 << "\" y=\"" << ly << "\" width=\"12\" "
      << "height=\"12\" fill=\"" << color << "\"/>\n";
    f << "<text x=\"" << width - mr + 28 << "\" y=\"" << ly + 10
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[si].name
      << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace spikeprune

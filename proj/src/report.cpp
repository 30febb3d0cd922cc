#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fisheval/error.hpp"
#include "fisheval/experiment.hpp"

namespace fisheval {
namespace {

std::string escape_xml(const std::string& s) {
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

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error(ErrorCode::CorruptFile, path.string() + ": row has " + std::to_string(cells.size()) +
                                              " cells, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (first) throw Error(ErrorCode::CorruptFile, path.string() + ": empty CSV");
  return t;
}

std::string render_svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<PlotSeries>& series) {
  const double W = 720, H = 480, left = 70, right = 230, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) x0 = x1 = s.x[i], y1 = s.y[i], any = true;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y1 = std::max(y1, s.y[i]);
      y0 = std::min(y0, s.y[i]);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double ystep = nice_step(y1 - y0, 5);
  y1 = std::ceil(y1 / ystep) * ystep;
  x0 = std::min(x0, 0.0);
  const double xstep = nice_step(x1 - x0, 6);
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape_xml(title) << "</text>\n";
  for (double y = y0; y <= y1 + 1e-9 * ystep; y += ystep) {
    o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(py(y)) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
      << fmt(py(y)) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py(y) + 4) << "\" text-anchor=\"end\">"
      << tick_label(y) << "</text>\n";
  }
  for (double x = std::ceil(x0 / xstep) * xstep; x <= x1 + 1e-9 * xstep; x += xstep) {
    o << "<line x1=\"" << fmt(px(x)) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(px(x)) << "\" y2=\""
      << fmt(top + ph + 5) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(top + ph + 18) << "\" text-anchor=\"middle\">"
      << tick_label(x) << "</text>\n";
  }
  o << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(H - 18) << "\" text-anchor=\"middle\">"
    << escape_xml(x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << fmt(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape_xml(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << fmt(px(s.x[i])) << "," << fmt(py(s.y[i]));
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      o << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i])) << "\" r=\"2.5\" fill=\"" << color
        << "\"/>\n";
    }
    const double ly = top + 10 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << fmt(left + pw + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(left + pw + 30)
      << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << fmt(left + pw + 34) << "\" y=\"" << fmt(ly + 4) << "\" font-size=\"10\">"
      << escape_xml(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> run_report(const std::filesystem::path& out_dir) {
  struct Source {
    const char* file;
    std::vector<std::pair<const char*, const char*>> metrics;  // column, axis label
  };
  const std::vector<Source> sources{
      {"detector.csv", {{"n_matches", "matches"}, {"repeatability", "repeatability"}}},
      {"pipeline.csv",
       {{"n_correct", "correct matches"}, {"matching_score", "matching score"}, {"drop", "drop"}}},
  };
  std::vector<std::filesystem::path> written;
  bool found = false;
  for (const auto& src : sources) {
    const auto path = out_dir / src.file;
    if (!std::filesystem::exists(path)) continue;
    found = true;
    const CsvTable t = read_csv(path);
    auto col = [&](const std::string& name) {
      const auto it = std::find(t.header.begin(), t.header.end(), name);
      if (it == t.header.end()) throw Error(ErrorCode::CorruptFile, path.string() + ": missing column " + name);
      return static_cast<std::size_t>(it - t.header.begin());
    };
    const std::size_t c_setup = col("setup"), c_tol = col("tolerance_m");
    for (const auto& [metric, axis] : src.metrics) {
      const std::size_t c_val = col(metric);
      // setup -> tolerance -> (sum, count); setups keep first-seen order.
      std::vector<std::string> order;
      std::map<std::string, std::map<double, std::pair<double, int>>> acc;
      for (const auto& row : t.rows) {
        bool ok1 = false, ok2 = false;
        const double tol = parse_double(row[c_tol], &ok1);
        const double val = parse_double(row[c_val], &ok2);
        if (!ok1 || !ok2) throw Error(ErrorCode::CorruptFile, path.string() + ": non-numeric cell");
        if (!acc.count(row[c_setup])) order.push_back(row[c_setup]);
        auto& cell = acc[row[c_setup]][tol];
        cell.first += val;
        cell.second += 1;
      }
      std::vector<PlotSeries> series;
      for (const auto& name : order) {
        PlotSeries s;
        s.name = name;
        for (const auto& [tol, sum] : acc[name]) {
          s.x.push_back(tol);
          s.y.push_back(sum.first / sum.second);
        }
        series.push_back(std::move(s));
      }
      const std::string stem = std::filesystem::path(src.file).stem().string();
      const auto svg_path = out_dir / (stem + "_" + metric + ".svg");
      std::ofstream out(svg_path, std::ios::binary);
      if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + svg_path.string());
      out << render_svg_plot(std::string(axis) + " vs tolerance", "tolerance (m)", axis, series);
      written.push_back(svg_path);
    }
  }
  if (!found) throw Error(ErrorCode::MissingFile, "no detector.csv or pipeline.csv in " + out_dir.string());
  return written;
}

}  // namespace fisheval

#include "output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "cavqed/errors.hpp"

namespace cavqed::cli {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x == 0.0 ? 0.0 : x);  // no "-0"
  return buf;
}

void CsvTable::add_row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  add_row(cells);
}

void CsvTable::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_.size()) throw std::logic_error("csv: row width differs from the header");
  rows_.push_back(cells);
}

std::string CsvTable::render(const std::string& config_hash) const {
  std::string out = "# config_hash=" + config_hash + "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(columns_);
  for (const auto& r : rows_) line(r);
  return out;
}

namespace {

const char* kColors[] = {"#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

// Round step of roughly range/5.
double tick_step(double range) {
  if (!(range > 0.0)) return 1.0;
  const double raw = range / 5.0;
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / p;
  return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * p;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<Panel>& panels, const std::string& config_hash) {
  const double width = 720, panel_height = 320, left = 80, right = 20, top = 40, bottom = 50;
  const double height = panel_height * panels.size();
  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<!-- config_hash=" + config_hash + " -->\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
         fmt("%.0f", height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double y0 = p * panel_height;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : panel.series)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    ymin = std::min(ymin, 0.0);
    if (ymax <= ymin) ymax = ymin + 1;
    ymax += 0.05 * (ymax - ymin);

    const double pw = width - left - right, ph = panel_height - top - bottom;
    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return y0 + top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    svg += "<text x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", y0 + 24) + "\" font-size=\"14\">" +
           escape(panel.title) + "</text>\n";
    svg += "<rect x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", y0 + top) + "\" width=\"" + fmt("%.1f", pw) +
           "\" height=\"" + fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

    const double xs = tick_step(xmax - xmin), ys = tick_step(ymax - ymin);
    for (double t = std::ceil(xmin / xs) * xs; t <= xmax + 1e-9 * xs; t += xs) {
      svg += "<line x1=\"" + fmt("%.1f", sx(t)) + "\" y1=\"" + fmt("%.1f", y0 + top + ph) + "\" x2=\"" +
             fmt("%.1f", sx(t)) + "\" y2=\"" + fmt("%.1f", y0 + top + ph + 5) + "\" stroke=\"black\"/>\n";
      svg += "<text x=\"" + fmt("%.1f", sx(t)) + "\" y=\"" + fmt("%.1f", y0 + top + ph + 18) +
             "\" text-anchor=\"middle\">" + format_number(std::abs(t) < 1e-12 * xs ? 0.0 : t) + "</text>\n";
    }
    for (double t = std::ceil(ymin / ys) * ys; t <= ymax + 1e-9 * ys; t += ys) {
      svg += "<line x1=\"" + fmt("%.1f", left - 5) + "\" y1=\"" + fmt("%.1f", sy(t)) + "\" x2=\"" +
             fmt("%.1f", left) + "\" y2=\"" + fmt("%.1f", sy(t)) + "\" stroke=\"black\"/>\n";
      svg += "<text x=\"" + fmt("%.1f", left - 8) + "\" y=\"" + fmt("%.1f", sy(t) + 4) + "\" text-anchor=\"end\">" +
             format_number(std::abs(t) < 1e-12 * ys ? 0.0 : t) + "</text>\n";
    }
    svg += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", y0 + panel_height - 10) +
           "\" text-anchor=\"middle\">" + escape(panel.x_label) + "</text>\n";
    svg += "<text transform=\"translate(18," + fmt("%.1f", y0 + top + ph / 2) +
           ") rotate(-90)\" text-anchor=\"middle\">" + escape(panel.y_label) + "</text>\n";

    for (double m : panel.markers_x)
      if (m >= xmin && m <= xmax)
        svg += "<line x1=\"" + fmt("%.1f", sx(m)) + "\" y1=\"" + fmt("%.1f", y0 + top) + "\" x2=\"" + fmt("%.1f", sx(m)) +
               "\" y2=\"" + fmt("%.1f", y0 + top + ph) + "\" stroke=\"#bbbbbb\" stroke-dasharray=\"3,3\"/>\n";

    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      const Series& s = panel.series[k];
      const char* color = kColors[k % 6];
      if (s.markers) {
        for (std::size_t i = 0; i < s.x.size(); ++i)
          if (std::isfinite(s.y[i]))
            svg += "<circle cx=\"" + fmt("%.2f", sx(s.x[i])) + "\" cy=\"" + fmt("%.2f", sy(s.y[i])) +
                   "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
      } else {
        std::string points;
        for (std::size_t i = 0; i < s.x.size(); ++i)
          if (std::isfinite(s.y[i])) points += fmt("%.2f", sx(s.x[i])) + "," + fmt("%.2f", sy(s.y[i])) + " ";
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + points +
               "\"/>\n";
      }
      svg += "<text x=\"" + fmt("%.1f", left + pw - 8) + "\" y=\"" + fmt("%.1f", y0 + top + 16 + 15 * k) +
             "\" text-anchor=\"end\" fill=\"" + color + "\">" + escape(s.label) + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("write failed for " + path);
}

}  // namespace cavqed::cli

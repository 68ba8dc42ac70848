#pragma once

// Result files: CSV tables, JSON reports and small SVG line plots. Every file
// carries the hash of the configuration that produced it.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cavqed::cli {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// %.9g, the CSV number format.
std::string format_number(double x);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void add_row(const std::vector<double>& values);
  void add_row(const std::vector<std::string>& cells);
  std::size_t rows() const { return rows_.size(); }
  /// First line is "# config_hash=<hash>", then the header, LF line endings.
  std::string render(const std::string& config_hash) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<double> markers_x;  // vertical guide lines
};

std::string render_svg(const std::vector<Panel>& panels, const std::string& config_hash);

void write_text(const std::string& path, const std::string& text);

}  // namespace cavqed::cli

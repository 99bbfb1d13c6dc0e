#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hftmfg/config.hpp"
#include "hftmfg/mean_field.hpp"

namespace hftmfg {

/// Shortest round-trip decimal form ("%.17g"); fixed so files are byte-stable.
std::string num(double x);

/// CSV with a leading "# config_hash=...,grid=..." line and a column header.
class CsvTable {
 public:
  CsvTable(std::string config_hash, int grid, std::vector<std::string> columns);

  void add_row(std::vector<std::string> cells);
  void add_row(const std::vector<double>& values);
  std::string str() const;

 private:
  std::string meta_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

CsvTable make_table(const ModelConfig& cfg, std::vector<std::string> columns);

/// Key-value CSV (columns key,value).
CsvTable key_value_table(const ModelConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv);

/// Writes to a unique temporary file next to `path`, then renames over it.
void write_atomic(const std::filesystem::path& path, const std::string& content);

struct CsvData {
  std::string meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
  std::vector<double> numbers(const std::string& name) const;
};

CsvData read_csv(const std::filesystem::path& path);

/// time, side (L|R), E_1..E_N, mu_1..mu_N, E_agg, mu_agg; one L and one R row
/// at each trade time.
CsvTable equilibrium_table(const ModelConfig& cfg, const MeanFieldSolution& mf);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<PlotSeries> series;
  bool zero_line = true;
};

std::string render_svg(const PlotSpec& plot);

/// Plot of E_agg (and E_i for N > 1) or mu read back from an equilibrium CSV.
PlotSpec equilibrium_plot(const CsvData& csv, const std::string& prefix, const std::string& title);

}  // namespace hftmfg

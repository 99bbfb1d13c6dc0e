#include "hftmfg/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "hftmfg/errors.hpp"

namespace hftmfg {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable::CsvTable(std::string config_hash, int grid, std::vector<std::string> columns)
    : columns_(std::move(columns)) {
  meta_ = "# config_hash=" + config_hash + ",grid=" + std::to_string(grid);
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) throw std::logic_error("csv row width mismatch");
  rows_.push_back(std::move(cells));
}

void CsvTable::add_row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(num(v));
  add_row(std::move(cells));
}

std::string CsvTable::str() const {
  std::string out = meta_ + '\n';
  auto line = [&out](const std::vector<std::string>& cells) {
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

CsvTable make_table(const ModelConfig& cfg, std::vector<std::string> columns) {
  return CsvTable(config_hash(cfg), cfg.solver.grid_steps_per_unit_time, std::move(columns));
}

CsvTable key_value_table(const ModelConfig& cfg,
                         const std::vector<std::pair<std::string, std::string>>& kv) {
  CsvTable t = make_table(cfg, {"key", "value"});
  for (const auto& [k, v] : kv) t.add_row({k, v});
  return t;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(tid % 100000) + "." +
         std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw ParseError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

int CsvData::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

std::vector<double> CsvData::numbers(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw ParseError("csv has no column '" + name + "'");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(std::stod(r[static_cast<std::size_t>(c)]));
  return out;
}

CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read '" + path.string() + "'");
  CsvData d;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    return cells;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      d.meta = line;
    } else if (d.columns.empty()) {
      d.columns = split(line);
    } else {
      d.rows.push_back(split(line));
    }
  }
  return d;
}

CsvTable equilibrium_table(const ModelConfig& cfg, const MeanFieldSolution& mf) {
  const int N = cfg.N();
  std::vector<std::string> cols = {"time", "side"};
  for (int i = 1; i <= N; ++i) cols.push_back("E_" + std::to_string(i));
  for (int i = 1; i <= N; ++i) cols.push_back("mu_" + std::to_string(i));
  cols.push_back("E_agg");
  cols.push_back("mu_agg");
  CsvTable t = make_table(cfg, cols);
  const TimeGrid& g = mf.grid();
  for (int s = 0; s < g.segments(); ++s) {
    for (int n = 0; n <= g.steps(s); ++n) {
      const bool left = n == g.steps(s) && s + 1 < g.segments();
      std::vector<std::string> row = {num(g.time(s, n)), left ? "L" : "R"};
      for (int i = 0; i < N; ++i) row.push_back(num(mf.E.values(s)(i, n)));
      for (int i = 0; i < N; ++i) row.push_back(num(mf.mu.values(s)(i, n)));
      row.push_back(num(mf.E_agg.values(s)(0, n)));
      row.push_back(num(mf.mu_agg.values(s)(0, n)));
      t.add_row(std::move(row));
    }
  }
  return t;
}

namespace {

double nice_step(double range, int target) {
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  return (f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0) * mag;
}

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

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

}  // namespace

std::string render_svg(const PlotSpec& plot) {
  const double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : plot.series) {
    for (double x : s.x) xmin = std::min(xmin, x), xmax = std::max(xmax, x);
    for (double y : s.y) ymin = std::min(ymin, y), ymax = std::max(ymax, y);
  }
  if (!(xmin < xmax)) xmin -= 0.5, xmax += 0.5;
  if (plot.zero_line) ymin = std::min(ymin, 0.0), ymax = std::max(ymax, 0.0);
  if (!(ymax - ymin > 1e-12 * std::max(1.0, std::abs(ymax)))) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\" "
       "font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  o += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(plot.title) + "</text>\n";
  o += "<rect x=\"70\" y=\"40\" width=\"550\" height=\"310\" fill=\"none\" stroke=\"#444\"/>\n";

  const double xs = nice_step(xmax - xmin, 5), ys = nice_step(ymax - ymin, 6);
  for (double x = std::ceil(xmin / xs) * xs; x <= xmax + 1e-9 * xs; x += xs) {
    o += "<line x1=\"" + fmt("%.2f", px(x)) + "\" y1=\"350\" x2=\"" + fmt("%.2f", px(x)) +
         "\" y2=\"355\" stroke=\"#444\"/>\n";
    o += "<text x=\"" + fmt("%.2f", px(x)) + "\" y=\"368\" text-anchor=\"middle\">" +
         fmt("%g", std::abs(x) < 1e-12 * xs ? 0.0 : x) + "</text>\n";
  }
  for (double y = std::ceil(ymin / ys) * ys; y <= ymax + 1e-9 * ys; y += ys) {
    o += "<line x1=\"65\" y1=\"" + fmt("%.2f", py(y)) + "\" x2=\"70\" y2=\"" + fmt("%.2f", py(y)) +
         "\" stroke=\"#444\"/>\n";
    o += "<text x=\"62\" y=\"" + fmt("%.2f", py(y) + 4) + "\" text-anchor=\"end\">" +
         fmt("%g", std::abs(y) < 1e-12 * ys ? 0.0 : y) + "</text>\n";
  }
  if (plot.zero_line && ymin < 0.0 && ymax > 0.0) {
    o += "<line x1=\"70\" y1=\"" + fmt("%.2f", py(0)) + "\" x2=\"620\" y2=\"" + fmt("%.2f", py(0)) +
         "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
  }
  o += "<text x=\"345\" y=\"392\" text-anchor=\"middle\">" + escape(plot.xlabel) + "</text>\n";
  o += "<text x=\"16\" y=\"195\" text-anchor=\"middle\" transform=\"rotate(-90 16 195)\">" +
       escape(plot.ylabel) + "</text>\n";

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const PlotSeries& s = plot.series[k];
    const char* c = colors[k % 6];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) pts += ' ';
      pts += fmt("%.2f", px(s.x[i])) + "," + fmt("%.2f", py(s.y[i]));
    }
    o += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        o += "<circle cx=\"" + fmt("%.2f", px(s.x[i])) + "\" cy=\"" + fmt("%.2f", py(s.y[i])) +
             "\" r=\"3\" fill=\"" + c + "\"/>\n";
      }
    }
    const double ly = 58 + 16 * static_cast<double>(k);
    o += "<line x1=\"480\" y1=\"" + fmt("%.0f", ly - 4) + "\" x2=\"500\" y2=\"" + fmt("%.0f", ly - 4) +
         "\" stroke=\"" + c + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"505\" y=\"" + fmt("%.0f", ly) + "\">" + escape(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

PlotSpec equilibrium_plot(const CsvData& csv, const std::string& prefix, const std::string& title) {
  PlotSpec p;
  p.title = title;
  p.xlabel = "t";
  p.ylabel = prefix;
  const std::vector<double> t = csv.numbers("time");
  p.series.push_back({prefix + "_agg", t, csv.numbers(prefix + "_agg"), false});
  for (int i = 1; csv.column(prefix + "_" + std::to_string(i)) >= 0; ++i) {
    if (csv.column(prefix + "_2") < 0) break;
    const std::string name = prefix + "_" + std::to_string(i);
    p.series.push_back({name, t, csv.numbers(name), false});
  }
  return p;
}

}  // namespace hftmfg

#include "docir/curves.hpp"

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace docir {

namespace fs = std::filesystem;

Series read_metric_series(const fs::path& metrics, const std::string& kind, const std::string& field) {
  std::ifstream in(metrics);
  if (!in) throw std::runtime_error("cannot read metrics " + metrics.string());
  Series s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.value("kind", std::string("update")) != kind) continue;
    const auto it = j.find(field);
    if (it == j.end() || it->is_null()) continue;
    s.steps.push_back(j.at("step").get<long>());
    s.values.push_back(it->get<double>());
  }
  return s;
}

Series rolling_mean(const Series& series, int window) {
  if (window < 1) throw std::invalid_argument("rolling_mean: window must be positive");
  Series out;
  const std::size_t n = series.values.size();
  if (n == 0) return out;
  const std::size_t w = static_cast<std::size_t>(window);
  if (n < w) {
    double s = 0;
    for (double v : series.values) s += v;
    out.steps.push_back(series.steps.back());
    out.values.push_back(s / static_cast<double>(n));
    return out;
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s += series.values[i];
    if (i >= w) s -= series.values[i - w];
    if (i + 1 >= w) {
      out.steps.push_back(series.steps[i]);
      out.values.push_back(s / static_cast<double>(w));
    }
  }
  return out;
}

CurveBand aggregate_seeds(std::span<const Series> per_seed) {
  CurveBand band;
  if (per_seed.empty()) return band;
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& s : per_seed) len = std::min(len, s.values.size());
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : per_seed) {
      sum += s.values[i];
      lo = std::min(lo, s.values[i]);
      hi = std::max(hi, s.values[i]);
    }
    band.steps.push_back(per_seed.front().steps[i]);
    band.mean.push_back(sum / static_cast<double>(per_seed.size()));
    band.min.push_back(lo);
    band.max.push_back(hi);
  }
  return band;
}

void write_curves_csv(const fs::path& path, const CurveSet& curves) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,step,mean,min,max\n";
  out << std::setprecision(6);
  for (const auto& [method, band] : curves) {
    for (std::size_t i = 0; i < band.steps.size(); ++i) {
      out << method << ',' << band.steps[i] << ',' << band.mean[i] << ',' << band.min[i] << ',' << band.max[i] << '\n';
    }
  }
}

namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

}  // namespace

std::string render_svg(const CurveSet& curves, const std::string& title, const std::string& y_label) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  long max_step = 1;
  double y_max = 1.0;
  double y_min = 0.0;
  for (const auto& [_, b] : curves) {
    if (!b.steps.empty()) max_step = std::max(max_step, b.steps.back());
    for (double v : b.max) y_max = std::max(y_max, v);
    for (double v : b.min) y_min = std::min(y_min, v);
  }
  auto x = [&](long s) { return kLeft + pw * static_cast<double>(s) / static_cast<double>(max_step); };
  auto y = [&](double v) { return kTop + ph * (1.0 - (v - y_min) / (y_max - y_min)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = y_min + (y_max - y_min) * t / 4.0;
    const long s = max_step * t / 4;
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(y(v) + 4) << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
    svg << "<text x=\"" << fmt(x(s)) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << s << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">environment steps</text>\n";
  svg << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label << "</text>\n";

  int k = 0;
  for (const auto& [method, b] : curves) {
    const char* color = kColors[k % std::size(kColors)];
    if (!b.steps.empty()) {
      svg << "<path fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
      for (std::size_t i = 0; i < b.steps.size(); ++i) svg << (i ? " L" : "M") << fmt(x(b.steps[i])) << ' ' << fmt(y(b.max[i]));
      for (std::size_t i = b.steps.size(); i-- > 0;) svg << " L" << fmt(x(b.steps[i])) << ' ' << fmt(y(b.min[i]));
      svg << " Z\"/>\n";
      svg << "<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" d=\"";
      for (std::size_t i = 0; i < b.steps.size(); ++i) svg << (i ? " L" : "M") << fmt(x(b.steps[i])) << ' ' << fmt(y(b.mean[i]));
      svg << "\"/>\n";
    }
    const double ly = kTop + 16 + 18 * k;
    svg << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    svg << "<text x=\"" << kLeft + pw + 38 << "\" y=\"" << ly + 4 << "\">" << method << "</text>\n";
    ++k;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<fs::path> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  ::globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

CurveSet curves(const std::vector<fs::path>& metrics_files, const fs::path& out_prefix, int window,
                const std::string& field) {
  if (metrics_files.empty()) throw std::invalid_argument("curves: no metrics files");
  std::map<std::string, std::vector<Series>> by_method;
  for (const auto& f : metrics_files) {
    std::string method = f.parent_path().filename().string();
    const fs::path run = f.parent_path() / "run.json";
    if (fs::exists(run)) {
      std::ifstream in(run);
      const auto j = nlohmann::json::parse(in);
      method = j.value("repr", method);
    }
    by_method[method].push_back(rolling_mean(read_metric_series(f, "update", field), window));
  }
  CurveSet set;
  for (const auto& [method, series] : by_method) set[method] = aggregate_seeds(series);
  if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
  write_curves_csv(out_prefix.string() + ".csv", set);
  std::ofstream(out_prefix.string() + ".svg") << render_svg(set, "Training " + field + " (rolling mean, window " +
                                                                     std::to_string(window) + ")",
                                                            field);
  return set;
}

}  // namespace docir

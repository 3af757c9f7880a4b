#include "afec/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "afec/errors.hpp"
#include "afec/metrics.hpp"

namespace afec {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
  if (!out) throw IoError("write failed for " + path.string());
}

struct Series {
  std::string method;
  std::vector<double> mean;
  std::vector<double> sd;
};

std::vector<Series> collect(std::span<const RunResult> results, bool per_task) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> samples;
  for (const auto& r : results) {
    const std::string m(to_string(r.config.method));
    if (!samples.count(m)) order.push_back(m);
    auto& cols = samples[m];
    const std::size_t T = r.acc_matrix.tasks();
    if (cols.size() < T) cols.resize(T);
    for (std::size_t j = 0; j < T; ++j)
      cols[j].push_back(per_task ? r.acc_matrix.a[j][j] : row_mean(r.acc_matrix, j));
  }
  std::vector<Series> out;
  for (const auto& m : order) {
    Series s;
    s.method = m;
    for (const auto& col : samples[m]) {
      double mu = 0.0;
      for (double v : col) mu += v;
      mu /= static_cast<double>(col.size());
      double var = 0.0;
      for (double v : col) var += (v - mu) * (v - mu);
      var /= static_cast<double>(col.size());
      s.mean.push_back(mu);
      s.sd.push_back(std::sqrt(var));
    }
    out.push_back(std::move(s));
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};

}  // namespace

std::string summary_csv(std::span<const RunResult> results) {
  std::size_t max_t = 0;
  for (const auto& r : results) max_t = std::max(max_t, r.acc_matrix.tasks());
  std::ostringstream os;
  os << "method,seed,T,ACC,BWT,FWT";
  for (std::size_t i = 0; i < max_t; ++i) os << ",A_diag_" << i + 1;
  os << '\n';
  for (const auto& r : results) {
    const AccMatrix& m = r.acc_matrix;
    const std::size_t T = m.tasks();
    os << to_string(r.config.method) << ',' << r.config.seed << ',' << T << ','
       << (T > 0 ? fixed6(acc(m)) : "") << ',';
    if (T >= 2) os << fixed6(bwt(m));
    os << ',';
    if (T >= 2) {
      try {
        os << fixed6(fwt(m));
      } catch (const MetricError&) {
        // Pre-training evaluations were switched off; leave the column blank.
      }
    }
    for (std::size_t i = 0; i < max_t; ++i) {
      os << ',';
      if (i < T) os << fixed6(m.a[i][i]);
    }
    os << '\n';
  }
  return os.str();
}

std::string matrix_json(std::span<const RunResult> results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j = acc_matrix_to_json(r.acc_matrix);
    j["method"] = to_string(r.config.method);
    j["seed"] = r.config.seed;
    j["lambda"] = r.config.lambda;
    j["lambda_e"] = r.config.lambda_e;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string accuracy_svg(std::span<const RunResult> results, bool per_task) {
  const auto series = collect(results, per_task);
  std::size_t max_t = 1;
  for (const auto& s : series) max_t = std::max(max_t, s.mean.size());

  const double W = 640, H = 400, left = 60, right = 150, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](std::size_t j) {
    return max_t == 1 ? left + pw / 2 : left + pw * static_cast<double>(j) / (max_t - 1);
  };
  auto py = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
     << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">"
     << (per_task ? "Accuracy on each new task" : "Averaged accuracy vs tasks learned")
     << "</text>\n";
  // Axes and ticks.
  os << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
     << top + ph << "\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\"/>\n</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    os << "<text x=\"" << left - 8 << "\" y=\"" << fixed2(py(v) + 3)
       << "\" text-anchor=\"end\">" << fixed2(v) << "</text>\n";
  }
  for (std::size_t j = 0; j < max_t; ++j)
    os << "<text x=\"" << fixed2(px(j)) << "\" y=\"" << top + ph + 15
       << "\" text-anchor=\"middle\">" << j + 1 << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\">" << (per_task ? "task" : "tasks learned") << "</text>\n"
     << "</g>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const Series& sr = series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    os << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (std::size_t j = 0; j < sr.mean.size(); ++j)
      os << (j ? " " : "") << fixed2(px(j)) << ',' << fixed2(py(sr.mean[j] + sr.sd[j]));
    for (std::size_t j = sr.mean.size(); j-- > 0;)
      os << ' ' << fixed2(px(j)) << ',' << fixed2(py(sr.mean[j] - sr.sd[j]));
    os << "\"/>\n";
    os << "<polyline data-method=\"" << sr.method << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < sr.mean.size(); ++j)
      os << (j ? " " : "") << fixed2(px(j)) << ',' << fixed2(py(sr.mean[j]));
    os << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << sr.method << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_report(std::span<const RunResult> results, const std::filesystem::path& out_dir) {
  if (results.empty()) throw InputError("emit_report needs at least one result");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "summary.csv", summary_csv(results));
  write_file(out_dir / "matrix.json", matrix_json(results));
  write_file(out_dir / "acc_curve.svg", accuracy_svg(results, false));
  write_file(out_dir / "new_task_acc.svg", accuracy_svg(results, true));
}

}  // namespace afec

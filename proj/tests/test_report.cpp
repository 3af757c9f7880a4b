#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "afec/errors.hpp"
#include "afec/report.hpp"

using namespace afec;
namespace fs = std::filesystem;

namespace {

RunResult fake(Method m, std::uint64_t seed, std::vector<std::vector<double>> a) {
  RunResult r;
  r.config.method = m;
  r.config.seed = seed;
  const std::size_t T = a.size();
  r.acc_matrix.a = std::move(a);
  r.acc_matrix.abar.assign(T, 0.1);
  r.acc_matrix.pre.assign(T, std::nullopt);
  for (std::size_t i = 1; i < T; ++i) r.acc_matrix.pre[i] = 0.125;
  for (std::size_t i = 0; i < T; ++i) r.per_task_new_accuracy.push_back(r.acc_matrix.a[i][i]);
  return r;
}

std::vector<RunResult> sample() {
  return {fake(Method::ewc, 0, {{0.9}, {0.8, 0.7}}), fake(Method::afec, 0, {{0.9}, {0.85, 0.75}}),
          fake(Method::ewc, 1, {{0.8}, {0.6, 0.9}}), fake(Method::afec, 1, {{0.7}, {0.7, 0.8}})};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

// Minimal well-formedness check: a prolog, balanced element nesting and
// closed attribute quotes.
bool well_formed(const std::string& xml) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  if (xml.rfind("<?xml", 0) != 0) return false;
  i = xml.find("?>");
  if (i == std::string::npos) return false;
  i += 2;
  bool root_seen = false;
  while ((i = xml.find('<', i)) != std::string::npos) {
    const std::size_t end = xml.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = xml.substr(i + 1, end - i - 1);
    if (count(tag, "\"") % 2 != 0) return false;
    if (tag.empty()) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
    } else if (tag.back() != '/') {
      const std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
      if (stack.empty() && root_seen) return false;
      root_seen = true;
      stack.push_back(name);
    }
    i = end + 1;
  }
  return root_seen && stack.empty();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("afec_test_report_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("summary.csv: header and one row per run") {
  const auto rs = sample();
  const std::string csv = summary_csv(rs);
  std::istringstream in(csv);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "method,seed,T,ACC,BWT,FWT,A_diag_1,A_diag_2");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "ewc,0,2,0.750000,-0.100000,0.025000,0.900000,0.700000");

  const std::vector<RunResult> one{fake(Method::finetune, 3, {{0.5}})};
  CHECK(summary_csv(one) == "method,seed,T,ACC,BWT,FWT,A_diag_1\nfinetune,3,1,0.500000,,,0.500000\n");

  std::vector<RunResult> nopre{fake(Method::ewc, 0, {{0.9}, {0.8, 0.7}})};
  nopre[0].acc_matrix.pre[1].reset();
  CHECK(summary_csv(nopre).find("ewc,0,2,0.750000,-0.100000,,0.9") != std::string::npos);
}

TEST_CASE("matrix.json lists every run") {
  const auto rs = sample();
  const auto j = nlohmann::json::parse(matrix_json(rs));
  REQUIRE(j.is_array());
  CHECK(j.size() == 4);
  CHECK(j[1]["method"] == "afec");
  CHECK(j[1]["A"][1][0] == 0.85);
  CHECK(j[1]["Abar"].size() == 2);
}

TEST_CASE("SVG: well formed, one polyline and band per method") {
  const auto rs = sample();
  for (bool per_task : {false, true}) {
    const std::string svg = accuracy_svg(rs, per_task);
    CHECK(well_formed(svg));
    CHECK(count(svg, "<polyline") == 2);
    CHECK(count(svg, "class=\"band\"") == 2);
    CHECK(count(svg, "data-method=\"ewc\"") == 1);
    CHECK(count(svg, "data-method=\"afec\"") == 1);
  }
  const std::vector<RunResult> single{fake(Method::si, 0, {{0.5}})};
  CHECK(well_formed(accuracy_svg(single, false)));
}

TEST_CASE("emit_report writes byte-identical files on re-emission") {
  const auto rs = sample();
  const fs::path a = scratch_dir("a"), b = scratch_dir("b");
  emit_report(rs, a);
  emit_report(rs, b);
  for (const char* f : {"summary.csv", "matrix.json", "acc_curve.svg", "new_task_acc.svg"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  emit_report(rs, a);
  CHECK(slurp(a / "summary.csv") == slurp(b / "summary.csv"));
}

TEST_CASE("emit_report errors") {
  const auto rs = sample();
  CHECK_THROWS_AS(emit_report(std::span<const RunResult>{}, scratch_dir("empty")), InputError);
  const fs::path file = scratch_dir("file");
  std::ofstream(file) << "x";
  CHECK_THROWS_AS(emit_report(rs, file / "sub"), IoError);
}

TEST_CASE("format_number round-trips") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1000.0) == "1000");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

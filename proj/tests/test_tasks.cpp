#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "afec/continual.hpp"
#include "afec/errors.hpp"
#include "afec/tasks.hpp"

using namespace afec;
namespace fs = std::filesystem;

namespace {

AngularTaskSpec small_spec(std::uint64_t seed = 0) {
  AngularTaskSpec s;
  s.samples_per_class = 10;
  s.input_dim = 6;
  s.seed = seed;
  return s;
}

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Writes an IDX image/label pair; pixel value of image i is 10 * i + pixel index.
void write_idx(const fs::path& img, const fs::path& lab, std::uint32_t n, std::uint32_t rows,
               std::uint32_t cols, const std::vector<int>& labels, std::size_t drop_pixels = 0,
               std::uint32_t header_labels = 0) {
  std::ofstream i(img, std::ios::binary);
  write_be32(i, 0x00000803);
  write_be32(i, n);
  write_be32(i, rows);
  write_be32(i, cols);
  const std::size_t total = n * rows * cols - drop_pixels;
  for (std::size_t p = 0; p < total; ++p) {
    const std::size_t image = p / (rows * cols), pix = p % (rows * cols);
    i.put(static_cast<char>(10 * image + pix));
  }
  std::ofstream l(lab, std::ios::binary);
  write_be32(l, 0x00000801);
  write_be32(l, header_labels ? header_labels : n);
  for (int v : labels) l.put(static_cast<char>(v));
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("afec_test_tasks_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("identity layout places class k at 36k degrees") {
  const AngularLayout l = AngularLayout::identity(10);
  for (std::size_t k = 0; k < 10; ++k) CHECK(deg(l.angle(k)) == doctest::Approx(36.0 * k).epsilon(1e-12));
  const AngularLayout r = AngularLayout::identity(10, std::numbers::pi / 3);
  CHECK(deg(r.angle(0)) == doctest::Approx(60.0));
  CHECK(deg(r.angle(9)) == doctest::Approx(24.0).epsilon(1e-12));
}

TEST_CASE("angles wrap into [0, 2pi)") {
  CHECK(wrap_angle(2 * std::numbers::pi) == doctest::Approx(0.0));
  CHECK(wrap_angle(-0.5) == doctest::Approx(2 * std::numbers::pi - 0.5));
  CHECK(circular_distance(0.1, 2 * std::numbers::pi - 0.1) == doctest::Approx(0.2));
  CHECK(circular_distance(0.0, std::numbers::pi) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("generated task: shapes, unit targets, validation") {
  const TaskDataset t = gen_angular_task(AngularLayout::identity(10), small_spec(3));
  validate_task(t);
  CHECK(t.num_classes == 10);
  CHECK(t.train.size() + t.test.size() == 100);
  CHECK(t.train.size() == 80);
  CHECK(t.output_dim() == 2);
  CHECK(t.loss_kind() == LossKind::angular_mse);
  for (std::size_t i = 0; i < t.train.size(); ++i) {
    const double c = t.train.targets(i, 0), s = t.train.targets(i, 1);
    CHECK(c * c + s * s == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::atan2(s, c) == doctest::Approx(std::atan2(std::sin(t.class_angles[t.train.labels[i]]),
                                                         std::cos(t.class_angles[t.train.labels[i]]))));
  }
  AngularTaskSpec bad = small_spec();
  bad.samples_per_class = 1;
  CHECK_THROWS_AS(gen_angular_task(AngularLayout::identity(4), bad), InputError);
  bad = small_spec();
  bad.cluster_spread = 0.0;
  CHECK_THROWS_AS(gen_angular_task(AngularLayout::identity(4), bad), InputError);
  AngularLayout broken = AngularLayout::identity(4);
  broken.permutation[1] = 0;
  CHECK_THROWS_AS(broken.validate(), InputError);
}

TEST_CASE("same seed: identical inputs under any layout") {
  const AngularTaskSpec s = small_spec(7);
  const TaskDataset a = gen_angular_task(AngularLayout::identity(10), s);
  const TaskDataset b = gen_angular_task(seeded_derangement(10, 4), s);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.test.inputs == b.test.inputs);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.train.targets != b.train.targets);
  const TaskDataset c = gen_angular_task(AngularLayout::identity(10), small_spec(8));
  CHECK(a.train.inputs != c.train.inputs);
}

TEST_CASE("property: derangements have no fixed points and no rotations or reflections") {
  for (std::size_t n : {2u, 3u, 4u, 5u, 10u}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const AngularLayout l = seeded_derangement(n, seed);
      l.validate();
      for (std::size_t k = 0; k < n; ++k) REQUIRE(l.permutation[k] != k);
      if (n < 4) continue;
      bool dihedral = false;
      for (std::size_t r = 0; r < n && !dihedral; ++r) {
        bool rot = true, ref = true;
        for (std::size_t k = 0; k < n; ++k) {
          rot = rot && l.permutation[k] == (k + r) % n;
          ref = ref && l.permutation[k] == (r + n - k) % n;
        }
        dihedral = rot || ref;
      }
      REQUIRE_FALSE(dihedral);
    }
  }
  CHECK(seeded_derangement(10, 3) == seeded_derangement(10, 3));
  CHECK_THROWS_AS(seeded_derangement(1, 0), InputError);
}

TEST_CASE("conflicting pair and sequences") {
  const auto [a, b] = make_conflicting_pair(10, small_spec(2));
  CHECK(a.head == 0);
  CHECK(b.head == 1);
  CHECK(a.train.inputs == b.train.inputs);
  std::size_t same = 0;
  for (std::size_t k = 0; k < 10; ++k) same += std::abs(a.class_angles[k] - b.class_angles[k]) < 1e-12;
  CHECK(same == 0);

  const auto seq = make_angular_sequence(10, 10, small_spec(2));
  REQUIRE(seq.size() == 10);
  CHECK(seq[0].class_angles == AngularLayout::identity(10).angles());
  std::set<std::vector<double>> layouts;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    CHECK(seq[t].head == static_cast<int>(t));
    CHECK(seq[t].train.inputs == seq[0].train.inputs);
    layouts.insert(seq[t].class_angles);
  }
  CHECK(layouts.size() == 10);
  CHECK_THROWS_AS(make_angular_sequence(0, 10, small_spec()), InputError);
}

TEST_CASE("transfer probe: rotated copy of the base layout") {
  const AngularLayout base = AngularLayout::identity(10);
  const TaskDataset p = make_transfer_probe(base, 180.0, small_spec(1), 5);
  CHECK(p.head == 5);
  for (std::size_t k = 0; k < 10; ++k)
    CHECK(deg(p.class_angles[k]) == doctest::Approx(std::fmod(36.0 * k + 180.0, 360.0)).epsilon(1e-12));
  CHECK(p.name.find("nonstandard") == std::string::npos);
  const TaskDataset q = make_transfer_probe(base, 45.0, small_spec(1), 5);
  CHECK(q.name.find("nonstandard") != std::string::npos);
  for (double r : kProbeRotationsDeg) CHECK(is_standard_probe_rotation(r));
  CHECK_FALSE(is_standard_probe_rotation(90.0));
}

TEST_CASE("property: rotating the layout rotates every target by the same angle") {
  const double rot = 1.234;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const AngularLayout l = seeded_derangement(10, seed);
    AngularLayout lr = l;
    lr.rotation = rot;
    const TaskDataset a = gen_angular_task(l, small_spec(seed)), b = gen_angular_task(lr, small_spec(seed));
    CHECK(a.train.inputs == b.train.inputs);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      const double c = a.train.targets(i, 0), s = a.train.targets(i, 1);
      CHECK(b.train.targets(i, 0) == doctest::Approx(c * std::cos(rot) - s * std::sin(rot)).epsilon(1e-12));
      CHECK(b.train.targets(i, 1) == doctest::Approx(c * std::sin(rot) + s * std::cos(rot)).epsilon(1e-12));
    }
  }
}

TEST_CASE("default benchmark is separable by the default architecture") {
  const AngularTaskSpec spec;  // 10 classes x 50 samples, 16 dims
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    AngularTaskSpec s = spec;
    s.seed = seed;
    const std::vector<TaskDataset> one{gen_angular_task(AngularLayout::identity(10), s)};
    SequenceConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 20;
    const RunResult r = run_sequence(cfg, one);
    CHECK(r.acc_matrix.a[0][0] >= 0.95);
  }
}

TEST_CASE("IDX ingestion") {
  const fs::path d = scratch_dir("idx");
  const std::vector<int> labels{0, 1, 2, 3};
  write_idx(d / "img", d / "lab", 4, 2, 3, labels);
  const RawDataset raw = load_idx(d / "img", d / "lab");
  CHECK(raw.images.rows == 4);
  CHECK(raw.images.cols == 6);
  CHECK(raw.image_rows == 2);
  CHECK(raw.image_cols == 3);
  CHECK(raw.labels == labels);
  CHECK(raw.images(2, 4) == doctest::Approx(24.0 / 255.0));
  for (double v : raw.images.data) CHECK((v >= 0.0 && v <= 1.0));

  SUBCASE("truncated pixel data") {
    write_idx(d / "img2", d / "lab2", 4, 2, 3, labels, 5);
    try {
      load_idx(d / "img2", d / "lab2");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
  SUBCASE("label count mismatch") {
    write_idx(d / "img3", d / "lab3", 4, 2, 3, labels, 0, 5);
    CHECK_THROWS_AS(load_idx(d / "img3", d / "lab3"), FormatError);
  }
  SUBCASE("bad magic and missing file") {
    CHECK_THROWS_AS(load_idx(d / "lab", d / "lab"), FormatError);
    CHECK_THROWS_AS(load_idx(d / "nope", d / "lab"), IoError);
  }
}

TEST_CASE("split_tasks partitions classes with remapped labels") {
  RawDataset raw;
  raw.image_rows = 1;
  raw.image_cols = 2;
  raw.images = Matrix(40, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    raw.labels.push_back(static_cast<int>(i % 4));
    raw.images(i, 0) = static_cast<double>(i) / 40.0;
    raw.images(i, 1) = static_cast<double>(i % 4) / 4.0;
  }
  const auto tasks = split_tasks(raw, 2, 9);
  REQUIRE(tasks.size() == 2);
  std::set<int> seen_originals;
  for (const auto& t : tasks) {
    validate_task(t);
    CHECK(t.kind == TaskKind::classification);
    CHECK(t.train.size() == 16);
    CHECK(t.test.size() == 4);
    for (std::size_t i = 0; i < t.train.size(); ++i) {
      CHECK((t.train.labels[i] == 0 || t.train.labels[i] == 1));
      seen_originals.insert(static_cast<int>(std::lround(t.train.inputs(i, 1) * 4)));
    }
  }
  CHECK(seen_originals.size() == 4);
  CHECK(split_tasks(raw, 2, 9)[0].train.inputs == tasks[0].train.inputs);
  CHECK_THROWS_AS(split_tasks(raw, 3, 0), InputError);
}

TEST_CASE("CSV export") {
  const fs::path d = scratch_dir("csv");
  const TaskDataset t = gen_angular_task(AngularLayout::identity(4), small_spec(0));
  export_task_csv(t, d, "t1");
  std::ifstream in(d / "t1_train.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "x0,x1,x2,x3,x4,x5,angle");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == t.train.size());
  CHECK(fs::exists(d / "t1_test.csv"));
}

#include "afec/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "afec/errors.hpp"
#include "afec/rng.hpp"

namespace afec {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTrainFraction = 0.8;

std::size_t train_count(std::size_t per_class) {
  auto n = static_cast<std::size_t>(std::floor(kTrainFraction * static_cast<double>(per_class)));
  return std::clamp<std::size_t>(n, 1, per_class - 1);
}

void append_row(Matrix& m, std::span<const double> row) {
  if (m.rows == 0) m.cols = row.size();
  m.data.insert(m.data.end(), row.begin(), row.end());
  ++m.rows;
}

bool is_dihedral(const std::vector<std::size_t>& perm) {
  const std::size_t n = perm.size();
  const std::size_t shift = perm[0];
  bool rotation = true;
  bool reflection = true;
  for (std::size_t k = 0; k < n; ++k) {
    rotation = rotation && perm[k] == (k + shift) % n;
    reflection = reflection && perm[k] == (shift + n - k) % n;
  }
  return rotation || reflection;
}

}  // namespace

std::string_view to_string(TaskKind k) {
  return k == TaskKind::regression_angle ? "regression_angle" : "classification";
}

double wrap_angle(double radians) {
  double a = std::fmod(radians, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a >= kTwoPi ? 0.0 : a;
}

double circular_distance(double a, double b) {
  const double d = wrap_angle(a - b);
  return std::min(d, kTwoPi - d);
}

// ---------------------------------------------------------------------------

AngularLayout AngularLayout::identity(std::size_t n, double rotation) {
  AngularLayout l{n, std::vector<std::size_t>(n), rotation};
  std::iota(l.permutation.begin(), l.permutation.end(), std::size_t{0});
  return l;
}

void AngularLayout::validate() const {
  if (num_classes < 2) throw InputError("angular layout needs at least 2 classes");
  if (permutation.size() != num_classes)
    throw InputError("angular layout permutation has wrong length");
  std::vector<bool> seen(num_classes, false);
  for (std::size_t s : permutation) {
    if (s >= num_classes || seen[s]) throw InputError("angular layout permutation is not a bijection");
    seen[s] = true;
  }
  if (!std::isfinite(rotation)) throw InputError("angular layout rotation must be finite");
}

double AngularLayout::angle(std::size_t k) const {
  return wrap_angle(kTwoPi * static_cast<double>(permutation[k]) / static_cast<double>(num_classes) +
                    rotation);
}

std::vector<double> AngularLayout::angles() const {
  std::vector<double> out(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) out[k] = angle(k);
  return out;
}

// ---------------------------------------------------------------------------

void validate_task(const TaskDataset& task) {
  if (task.num_classes < 2) throw InputError(task.name + ": fewer than 2 classes");
  for (const Split* split : {&task.train, &task.test}) {
    if (split->size() == 0) throw InputError(task.name + ": empty split");
    if (split->labels.size() != split->size()) throw InputError(task.name + ": label count mismatch");
    for (int label : split->labels)
      if (label < 0 || static_cast<std::size_t>(label) >= task.num_classes)
        throw InputError(task.name + ": label out of range");
    if (task.kind == TaskKind::regression_angle) {
      if (task.class_angles.size() != task.num_classes)
        throw InputError(task.name + ": class_angles size mismatch");
      if (split->targets.rows != split->size() || split->targets.cols != 2)
        throw InputError(task.name + ": regression targets must be n x 2");
      for (std::size_t i = 0; i < split->size(); ++i) {
        const auto t = split->targets.row(i);
        const double phi = task.class_angles[static_cast<std::size_t>(split->labels[i])];
        if (std::abs(t[0] - std::cos(phi)) > 1e-12 || std::abs(t[1] - std::sin(phi)) > 1e-12)
          throw InputError(task.name + ": target inconsistent with class angle");
      }
    }
  }
  if (task.train.inputs.cols != task.test.inputs.cols)
    throw InputError(task.name + ": train/test input dims differ");
}

TaskDataset gen_angular_task(const AngularLayout& layout, const AngularTaskSpec& spec,
                             std::string name, int task_id) {
  layout.validate();
  if (spec.samples_per_class < 2) throw InputError("samples_per_class must be at least 2");
  if (!(spec.cluster_spread > 0.0)) throw InputError("cluster_spread must be positive");
  if (spec.input_dim == 0) throw InputError("input_dim must be positive");

  TaskDataset task;
  task.name = std::move(name);
  task.task_id = task_id;
  task.head = task_id;
  task.kind = TaskKind::regression_angle;
  task.num_classes = layout.num_classes;
  task.class_angles = layout.angles();
  task.seed = spec.seed;

  const CounterRng root(spec.seed);
  const std::size_t n_train = train_count(spec.samples_per_class);
  std::vector<double> x(spec.input_dim);
  for (std::size_t k = 0; k < layout.num_classes; ++k) {
    CounterRng center_rng = root.split(streams::kClusterCenter).split(k);
    std::vector<double> center(spec.input_dim);
    for (double& c : center) c = spec.center_scale * center_rng.normal();

    std::vector<std::size_t> order(spec.samples_per_class);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng split_rng = root.split(streams::kSplit).split(k);
    shuffle(order.begin(), order.end(), split_rng);

    const double phi = task.class_angles[k];
    const double target[2] = {std::cos(phi), std::sin(phi)};
    for (std::size_t j = 0; j < spec.samples_per_class; ++j) {
      const std::size_t sample = order[j];
      CounterRng sample_rng = root.split(streams::kSample).split(k).split(sample);
      for (std::size_t d = 0; d < spec.input_dim; ++d)
        x[d] = center[d] + spec.cluster_spread * sample_rng.normal();
      Split& split = j < n_train ? task.train : task.test;
      append_row(split.inputs, x);
      append_row(split.targets, target);
      split.labels.push_back(static_cast<int>(k));
    }
  }
  return task;
}

AngularLayout seeded_derangement(std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw InputError("derangement needs at least 2 classes");
  AngularLayout layout = AngularLayout::identity(num_classes);
  CounterRng rng(derive_key(seed, streams::kLayout));
  for (;;) {
    shuffle(layout.permutation.begin(), layout.permutation.end(), rng);
    bool fixed_point = false;
    for (std::size_t k = 0; k < num_classes; ++k) fixed_point = fixed_point || layout.permutation[k] == k;
    if (fixed_point) continue;
    if (num_classes >= 4 && is_dihedral(layout.permutation)) continue;
    return layout;
  }
}

std::pair<TaskDataset, TaskDataset> make_conflicting_pair(std::size_t num_classes,
                                                          const AngularTaskSpec& spec) {
  const AngularLayout a = AngularLayout::identity(num_classes);
  const AngularLayout b = seeded_derangement(num_classes, derive_key(spec.seed, 1));
  return {gen_angular_task(a, spec, "task_A", 0), gen_angular_task(b, spec, "task_B", 1)};
}

std::vector<TaskDataset> make_angular_sequence(std::size_t num_tasks, std::size_t num_classes,
                                               const AngularTaskSpec& spec) {
  if (num_tasks == 0) throw InputError("task sequence needs at least one task");
  std::vector<TaskDataset> tasks;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    const AngularLayout layout = t == 0 ? AngularLayout::identity(num_classes)
                                        : seeded_derangement(num_classes, derive_key(spec.seed, t));
    tasks.push_back(
        gen_angular_task(layout, spec, "task_" + std::to_string(t + 1), static_cast<int>(t)));
  }
  return tasks;
}

bool is_standard_probe_rotation(double degrees) {
  return std::any_of(std::begin(kProbeRotationsDeg), std::end(kProbeRotationsDeg),
                     [&](double r) { return std::abs(r - degrees) < 1e-9; });
}

TaskDataset make_transfer_probe(const AngularLayout& base, double rotation_deg,
                                const AngularTaskSpec& spec, int head) {
  AngularLayout layout = base;
  layout.rotation = base.rotation + rotation_deg * std::numbers::pi / 180.0;
  std::ostringstream name;
  name << "probe_" << rotation_deg;
  if (!is_standard_probe_rotation(rotation_deg)) name << "_nonstandard";
  TaskDataset t = gen_angular_task(layout, spec, name.str(), head);
  t.head = head;
  return t;
}

// ---------------------------------------------------------------------------
// IDX ingestion

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > buf.size())
    throw FormatError(path.string() + ": truncated header at offset " + std::to_string(offset));
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

RawDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  if (const auto magic = read_be32(img, 0, images); magic != 0x00000803)
    throw FormatError(images.string() + ": bad magic at offset 0");
  if (const auto magic = read_be32(lab, 0, labels); magic != 0x00000801)
    throw FormatError(labels.string() + ": bad magic at offset 0");

  const std::size_t n = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_labels = read_be32(lab, 4, labels);
  if (n != n_labels)
    throw FormatError(labels.string() + ": label count " + std::to_string(n_labels) +
                      " at offset 4 does not match image count " + std::to_string(n));
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels)
    throw FormatError(images.string() + ": truncated pixel data at offset " +
                      std::to_string(img.size()));
  if (lab.size() < 8 + n)
    throw FormatError(labels.string() + ": truncated label data at offset " +
                      std::to_string(lab.size()));

  RawDataset raw;
  raw.image_rows = rows;
  raw.image_cols = cols;
  raw.images = Matrix(n, pixels);
  for (std::size_t i = 0; i < n * pixels; ++i) raw.images.data[i] = img[16 + i] / 255.0;
  raw.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) raw.labels[i] = lab[8 + i];
  return raw;
}

std::vector<TaskDataset> split_tasks(const RawDataset& raw, std::size_t classes_per_task,
                                     std::uint64_t seed) {
  if (classes_per_task < 2) throw InputError("classes_per_task must be at least 2");
  const std::set<int> class_set(raw.labels.begin(), raw.labels.end());
  std::vector<int> classes(class_set.begin(), class_set.end());
  if (classes.size() % classes_per_task != 0)
    throw InputError(std::to_string(classes.size()) + " classes are not divisible by " +
                     std::to_string(classes_per_task));

  const CounterRng root(seed);
  CounterRng class_rng = root.split(streams::kLayout);
  shuffle(classes.begin(), classes.end(), class_rng);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < raw.labels.size(); ++i) by_class[raw.labels[i]].push_back(i);

  std::vector<TaskDataset> tasks;
  const std::size_t n_tasks = classes.size() / classes_per_task;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    TaskDataset task;
    task.name = "split_" + std::to_string(t + 1);
    task.task_id = static_cast<int>(t);
    task.head = static_cast<int>(t);
    task.kind = TaskKind::classification;
    task.num_classes = classes_per_task;
    task.seed = seed;
    for (std::size_t local = 0; local < classes_per_task; ++local) {
      const int cls = classes[t * classes_per_task + local];
      std::vector<std::size_t> idx = by_class[cls];
      if (idx.size() < 2)
        throw InputError("class " + std::to_string(cls) + " needs at least 2 samples");
      CounterRng split_rng = root.split(streams::kSplit).split(static_cast<std::uint64_t>(cls));
      shuffle(idx.begin(), idx.end(), split_rng);
      const std::size_t n_train = train_count(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) {
        Split& split = j < n_train ? task.train : task.test;
        append_row(split.inputs, raw.images.row(idx[j]));
        split.labels.push_back(static_cast<int>(local));
      }
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

void export_task_csv(const TaskDataset& task, const std::filesystem::path& dir,
                     const std::string& stem) {
  std::filesystem::create_directories(dir);
  for (const auto& [suffix, split] :
       {std::pair<const char*, const Split*>{"train", &task.train}, {"test", &task.test}}) {
    const auto path = dir / (stem + "_" + suffix + ".csv");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17);
    for (std::size_t d = 0; d < split->inputs.cols; ++d) out << 'x' << d << ',';
    out << (task.kind == TaskKind::regression_angle ? "angle" : "label") << '\n';
    for (std::size_t i = 0; i < split->size(); ++i) {
      for (double v : split->inputs.row(i)) out << v << ',';
      const int label = split->labels[i];
      if (task.kind == TaskKind::regression_angle)
        out << task.class_angles[static_cast<std::size_t>(label)] << '\n';
      else
        out << label << '\n';
    }
  }
}

}  // namespace afec

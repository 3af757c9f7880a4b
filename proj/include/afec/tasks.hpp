#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "afec/nn.hpp"

namespace afec {

enum class TaskKind { regression_angle, classification };

std::string_view to_string(TaskKind k);

struct Split {
  Matrix inputs;
  Matrix targets;           // unit (cos, sin) rows for regression tasks; empty otherwise
  std::vector<int> labels;  // class id of every row, for both task kinds

  std::size_t size() const { return inputs.rows; }
};

/// Labelled samples for one task. Regression tasks also keep the class label
/// so that evaluation can score the nearest class angle.
struct TaskDataset {
  std::string name;
  int task_id = 0;
  int head = 0;
  TaskKind kind = TaskKind::regression_angle;
  Split train;
  Split test;
  std::vector<double> class_angles;  // radians in [0, 2pi); regression only
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return train.inputs.cols; }
  std::size_t output_dim() const { return kind == TaskKind::regression_angle ? 2 : num_classes; }
  LossKind loss_kind() const {
    return kind == TaskKind::regression_angle ? LossKind::angular_mse : LossKind::cross_entropy;
  }
  HeadSpec head_spec() const { return {head, output_dim()}; }

  BatchView train_view(std::span<const std::size_t> rows = {}) const {
    return {&train.inputs, &train.targets, train.labels, rows, head};
  }
  BatchView test_view() const { return {&test.inputs, &test.targets, test.labels, {}, head}; }
};

/// Throws InputError if the dataset breaks its own invariants.
void validate_task(const TaskDataset& task);

/// Class-to-slot assignment around the unit circle.
struct AngularLayout {
  std::size_t num_classes = 0;
  std::vector<std::size_t> permutation;  // class -> slot
  double rotation = 0.0;                 // radians

  static AngularLayout identity(std::size_t n, double rotation = 0.0);

  void validate() const;
  /// angle(k) = 2 pi perm(k) / n + rotation, wrapped to [0, 2 pi).
  double angle(std::size_t k) const;
  std::vector<double> angles() const;

  bool operator==(const AngularLayout&) const = default;
};

struct AngularTaskSpec {
  std::size_t samples_per_class = 50;
  std::size_t input_dim = 16;
  double cluster_spread = 0.3;
  double center_scale = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const AngularTaskSpec&) const = default;
};

double wrap_angle(double radians);
double circular_distance(double a, double b);

/// Gaussian clusters in input space, one per class, with (cos, sin) targets from
/// the layout. Cluster centres and samples depend only on (seed, class), never
/// on the layout, so tasks built from the same seed share their inputs exactly.
TaskDataset gen_angular_task(const AngularLayout& layout, const AngularTaskSpec& spec,
                             std::string name = "angular", int task_id = 0);

/// Seeded derangement of n >= 2 classes. For n >= 4 it also avoids the
/// rotations and reflections of the circle, which a linear head could undo.
AngularLayout seeded_derangement(std::size_t num_classes, std::uint64_t seed);

std::pair<TaskDataset, TaskDataset> make_conflicting_pair(std::size_t num_classes,
                                                          const AngularTaskSpec& spec);

/// Task 1 uses the identity layout; tasks 2..T use independent derangements.
std::vector<TaskDataset> make_angular_sequence(std::size_t num_tasks, std::size_t num_classes,
                                               const AngularTaskSpec& spec);

/// Rotations used for the transfer probe by default.
inline constexpr double kProbeRotationsDeg[] = {60.0, 120.0, 180.0, 240.0, 300.0};
bool is_standard_probe_rotation(double degrees);

/// Same class slots as `base`, rotated by `rotation_deg`. Non-standard
/// rotations are allowed; the dataset name is tagged "nonstandard".
TaskDataset make_transfer_probe(const AngularLayout& base, double rotation_deg,
                                const AngularTaskSpec& spec, int head);

struct RawDataset {
  Matrix images;  // one row per image, pixels scaled to [0, 1]
  std::vector<int> labels;
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
RawDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Seeded class partition into groups of `classes_per_task`, labels remapped
/// to [0, classes_per_task), stratified 80/20 train/test split per task.
std::vector<TaskDataset> split_tasks(const RawDataset& raw, std::size_t classes_per_task,
                                     std::uint64_t seed);

/// Writes <dir>/<stem>_train.csv and <dir>/<stem>_test.csv with one row per
/// sample: features..., label_or_angle.
void export_task_csv(const TaskDataset& task, const std::filesystem::path& dir,
                     const std::string& stem);

}  // namespace afec

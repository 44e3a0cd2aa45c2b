#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace ptedit {

/// Row-major K x 3 coordinate block.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using PartLabel = std::uint8_t;

/// K points in normalized units, optionally labeled with a per-point part id.
struct PointCloud {
  Points points;
  std::vector<PartLabel> labels; // empty or size() entries

  PointCloud() = default;
  explicit PointCloud(Points p) : points(std::move(p)) {}
  PointCloud(Points p, std::vector<PartLabel> l) : points(std::move(p)), labels(std::move(l)) {}

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  bool has_labels() const { return !labels.empty(); }
};

/// Index-aligned edit region; bit i is true when point i may change.
struct EditMask {
  std::vector<std::uint8_t> bits;

  EditMask() = default;
  explicit EditMask(std::vector<std::uint8_t> b) : bits(std::move(b)) {}
  static EditMask filled(std::size_t n, bool value) { return EditMask(std::vector<std::uint8_t>(n, value ? 1 : 0)); }
  /// Bits set where `labels[i] == part`.
  static EditMask from_labels(const std::vector<PartLabel>& labels, PartLabel part);

  std::size_t size() const { return bits.size(); }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  std::size_t count() const;
  bool operator==(const EditMask&) const = default;
};

/// Inpainting condition: masked coordinates zeroed, flag channels set to (1,1,1) there.
struct ConditionedCloud {
  Points coords;
  Points flags;

  std::size_t size() const { return static_cast<std::size_t>(coords.rows()); }
};

/// Center on the centroid and scale so the largest point norm is 1.
/// Throws DegenerateCloud when all points coincide and EmptyCloud for K = 0.
PointCloud normalize(const PointCloud& cloud);

/// Centroid and scale factor used by normalize(): normalized = (p - center) * scale.
struct NormalizationFrame {
  Eigen::RowVector3d center = Eigen::RowVector3d::Zero();
  double scale = 1.0;

  Points apply(const Points& p) const;
};
NormalizationFrame normalization_frame(const Points& points);

/// Mean squared nearest-neighbour distance from every point of `from` to `to`.
double directed_chamfer(const Points& from, const Points& to);

/// Symmetric Chamfer distance: sum of the two directed means of squared NN distances.
double chamfer(const Points& a, const Points& b);
inline double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer(a.points, b.points); }

/// Chamfer distance between the points outside each mask.
double masked_chamfer(const PointCloud& a, const PointCloud& b, const EditMask& mask_a, const EditMask& mask_b);

/// Rows of `points` whose mask bit equals `inside`.
Points select_rows(const Points& points, const EditMask& mask, bool inside);

ConditionedCloud apply_mask(const PointCloud& cloud, const EditMask& mask);

/// Condition with every point visible and all flags zero (the reconstruction regime).
ConditionedCloud full_condition(const PointCloud& cloud);

} // namespace ptedit

#include "ptedit/geometry.hpp"

#include "ptedit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ptedit {

EditMask
EditMask::from_labels(const std::vector<PartLabel>& labels, PartLabel part)
{
  EditMask mask;
  mask.bits.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    mask.bits[i] = labels[i] == part ? 1 : 0;
  return mask;
}

std::size_t
EditMask::count() const
{
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

Points
NormalizationFrame::apply(const Points& p) const
{
  Points out(p.rows(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    out.row(i) = (p.row(i) - center) * scale;
  return out;
}

NormalizationFrame
normalization_frame(const Points& points)
{
  if (points.rows() == 0)
    throw Error(ErrorKind::EmptyCloud, "cannot normalize an empty cloud");
  if (!points.allFinite())
    throw Error(ErrorKind::InvalidParams, "cloud has non-finite coordinates");

  NormalizationFrame frame;
  frame.center = points.colwise().mean();
  double max_norm = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    max_norm = std::max(max_norm, (points.row(i) - frame.center).norm());
  if (!(max_norm > 0.0))
    throw Error(ErrorKind::DegenerateCloud, "all points coincide; scale undefined");
  frame.scale = 1.0 / max_norm;
  return frame;
}

PointCloud
normalize(const PointCloud& cloud)
{
  const auto frame = normalization_frame(cloud.points);
  return PointCloud(frame.apply(cloud.points), cloud.labels);
}

double
directed_chamfer(const Points& from, const Points& to)
{
  if (from.rows() == 0 || to.rows() == 0)
    throw Error(ErrorKind::EmptyCloud, "chamfer needs nonempty clouds");

  double total = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < to.rows(); ++j) {
      const double dx = from(i, 0) - to(j, 0);
      const double dy = from(i, 1) - to(j, 1);
      const double dz = from(i, 2) - to(j, 2);
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    total += best;
  }
  return total / static_cast<double>(from.rows());
}

double
chamfer(const Points& a, const Points& b)
{
  // Both directions are evaluated independently so that chamfer(a, b) and
  // chamfer(b, a) add the same two numbers.
  const double ab = directed_chamfer(a, b);
  const double ba = directed_chamfer(b, a);
  return ab + ba;
}

Points
select_rows(const Points& points, const EditMask& mask, bool inside)
{
  if (mask.size() != static_cast<std::size_t>(points.rows()))
    throw Error(ErrorKind::LengthMismatch, "mask length " + std::to_string(mask.size()) + " vs cloud " +
                                             std::to_string(points.rows()));
  Points out(points.rows(), 3);
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    if (mask[static_cast<std::size_t>(i)] == inside)
      out.row(n++) = points.row(i);
  out.conservativeResize(n, 3);
  return out;
}

double
masked_chamfer(const PointCloud& a, const PointCloud& b, const EditMask& mask_a, const EditMask& mask_b)
{
  const Points keep_a = select_rows(a.points, mask_a, false);
  const Points keep_b = select_rows(b.points, mask_b, false);
  if (keep_a.rows() == 0 || keep_b.rows() == 0)
    throw Error(ErrorKind::EmptyRegion, "no points outside the mask");
  return chamfer(keep_a, keep_b);
}

ConditionedCloud
apply_mask(const PointCloud& cloud, const EditMask& mask)
{
  if (mask.size() != cloud.size())
    throw Error(ErrorKind::LengthMismatch, "mask length " + std::to_string(mask.size()) + " vs cloud " +
                                             std::to_string(cloud.size()));
  ConditionedCloud out{ cloud.points, Points::Zero(cloud.points.rows(), 3) };
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      const auto r = static_cast<Eigen::Index>(i);
      out.coords.row(r).setZero();
      out.flags.row(r).setOnes();
    }
  }
  return out;
}

ConditionedCloud
full_condition(const PointCloud& cloud)
{
  return ConditionedCloud{ cloud.points, Points::Zero(cloud.points.rows(), 3) };
}

} // namespace ptedit

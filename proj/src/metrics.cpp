#include "ptedit/metrics.hpp"

#include "ptedit/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace ptedit {

double
quantile(std::vector<double> values, double p)
{
  if (values.empty())
    throw Error(ErrorKind::TooFewPoints, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

constexpr std::size_t kMinFitPoints = 8;
constexpr double kLo = 0.05;
constexpr double kHi = 0.95;

double
extent(const std::vector<double>& v)
{
  return quantile(v, kHi) - quantile(v, kLo);
}

// Length of a part whose points spread uniformly along an axis. Values at the
// exact minimum or maximum (two or more coincident) come from a flat end cap and
// pin that end; an end without a cap is extended by the expected gap of the
// uniform points, range / (n + 1 - open_ends). `top` pins the upper end when the
// part hangs from a known plane.
double
span(const std::vector<double>& v, std::optional<double> top = std::nullopt)
{
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double lo = *mn, hi = top ? *top : *mx;
  const double range = hi - lo;
  const double tol = 1e-9 * std::max(1.0, std::abs(range));
  std::size_t at_lo = 0, at_hi = 0;
  for (double x : v) {
    at_lo += x - lo <= tol;
    at_hi += hi - x <= tol;
  }
  const bool lo_open = at_lo < 2, hi_open = !top && at_hi < 2;
  const int open_ends = lo_open + hi_open;
  const std::size_t inner = v.size() - (lo_open ? 0 : at_lo) - (hi_open ? 0 : at_hi);
  if (open_ends == 0 || inner + 1 <= static_cast<std::size_t>(open_ends))
    return range;
  return range + open_ends * range / static_cast<double>(inner + 1 - static_cast<std::size_t>(open_ends));
}

// Lowest level at or above max(v) where two or more of `others` coincide, within
// half the range of v: the flat underside a hanging part is attached to.
std::optional<double>
underside(const std::vector<double>& v, std::vector<double> others)
{
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double range = *mx - *mn;
  const double tol = 1e-9 * std::max(1.0, std::abs(range));
  std::sort(others.begin(), others.end());
  for (std::size_t i = 0; i + 1 < others.size(); ++i) {
    if (others[i] < *mx - tol)
      continue;
    if (others[i] > *mx + 0.5 * range)
      break;
    if (others[i + 1] - others[i] <= tol)
      return others[i];
  }
  return std::nullopt;
}

std::vector<double>
column(const Points& p, int axis)
{
  std::vector<double> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    out[static_cast<std::size_t>(i)] = p(i, axis);
  return out;
}

// |v - midrange| for every value; symmetric parts fold onto one copy.
std::vector<double>
folded(const std::vector<double>& v)
{
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double mid = 0.5 * (*mn + *mx);
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v)
    out.push_back(std::abs(x - mid));
  return out;
}

// Distance to the vertical axis through the xz midrange; lateral points of a
// cylinder sit exactly on the radius, cap points inside it.
std::vector<double>
radial(const Points& p)
{
  const Eigen::RowVector3d c = 0.5 * (p.colwise().minCoeff() + p.colwise().maxCoeff());
  std::vector<double> r;
  r.reserve(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    r.push_back(std::hypot(p(i, 0) - c(0), p(i, 2) - c(2)));
  return r;
}

enum class Estimator { ThinY, ThinZ, SpanY, HangingY, FoldedXZ, SquareBar, Radius, Circle };

Estimator
estimator_for(Category category, std::string_view part, std::string_view attribute)
{
  const auto is = [&](std::string_view p, std::string_view a) { return part == p && attribute == a; };
  switch (category) {
    case Category::Chair:
      if (is("seat", "thickness"))
        return Estimator::ThinY;
      if (is("back", "thickness"))
        return Estimator::ThinZ;
      if (is("back", "height"))
        return Estimator::SpanY;
      if (is("leg", "length"))
        return Estimator::HangingY;
      if (is("arm", "thickness"))
        return Estimator::SquareBar;
      if (is("leg", "thickness"))
        return Estimator::FoldedXZ;
      break;
    case Category::Table:
      if (is("top", "thickness"))
        return Estimator::ThinY;
      if (is("leg", "length"))
        return Estimator::HangingY;
      if (is("leg", "thickness"))
        return Estimator::FoldedXZ;
      break;
    case Category::Lamp:
      if (is("base", "height"))
        return Estimator::ThinY;
      if (is("pole", "radius"))
        return Estimator::Circle; // uncapped: every point is on the lateral surface
      if (is("base", "radius") || is("shade", "radius"))
        return Estimator::Radius;
      if (is("shade", "height"))
        return Estimator::SpanY;
      break;
  }
  throw Error(ErrorKind::InvalidEdit,
              "no estimator for " + std::string(to_string(category)) + " " + std::string(part) + "." + std::string(attribute));
}

} // namespace

double
fit_attribute(const PointCloud& cloud, const EditMask& mask, Category category, std::string_view part,
              std::string_view attribute)
{
  const auto kind = estimator_for(category, part, attribute);
  if (mask.size() != cloud.size())
    throw Error(ErrorKind::LengthMismatch, "mask and cloud differ in length");
  const Points pts = select_rows(cloud.points, mask, true);
  if (static_cast<std::size_t>(pts.rows()) < kMinFitPoints)
    throw Error(ErrorKind::TooFewPoints, "attribute fit needs at least 8 masked points, got " + std::to_string(pts.rows()));

  switch (kind) {
    case Estimator::ThinY: return extent(column(pts, 1));
    case Estimator::ThinZ: return extent(column(pts, 2));
    case Estimator::SpanY: return span(column(pts, 1));
    case Estimator::HangingY: {
      const auto y = column(pts, 1);
      return span(y, underside(y, column(select_rows(cloud.points, mask, false), 1)));
    }
    case Estimator::FoldedXZ: return 0.5 * (extent(folded(column(pts, 0))) + extent(folded(column(pts, 2))));
    case Estimator::SquareBar: {
      // both ranges bound the side from below; one pair of opposite faces suffices
      const auto y = column(pts, 1), x = folded(column(pts, 0));
      const auto range = [](const std::vector<double>& v) {
        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        return *mx - *mn;
      };
      return std::max(range(y), range(x));
    }
    case Estimator::Radius: return quantile(radial(pts), kHi);
    case Estimator::Circle: {
      // algebraic fit x^2 + z^2 + a x + b z + c = 0 in the xz plane
      Eigen::MatrixXd a(pts.rows(), 3);
      Eigen::VectorXd rhs(pts.rows());
      for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        a.row(i) << pts(i, 0), pts(i, 2), 1.0;
        rhs(i) = -(pts(i, 0) * pts(i, 0) + pts(i, 2) * pts(i, 2));
      }
      const Eigen::Vector3d f = a.colPivHouseholderQr().solve(rhs);
      return std::sqrt(std::max(0.0, 0.25 * (f(0) * f(0) + f(1) * f(1)) - f(2)));
    }
  }
  return 0.0;
}

double
masked_dispersion(const Points& cloud, const EditMask& mask)
{
  if (mask.size() != static_cast<std::size_t>(cloud.rows()))
    throw Error(ErrorKind::LengthMismatch, "mask and cloud differ in length");
  const Points inside = select_rows(cloud, mask, true);
  const Points outside = select_rows(cloud, mask, false);
  if (inside.rows() == 0 || outside.rows() < 2)
    throw Error(ErrorKind::EmptyRegion, "dispersion needs masked points and two unmasked points");
  double spacing = 0.0;
  for (Eigen::Index i = 0; i < outside.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < outside.rows(); ++j)
      if (j != i)
        best = std::min(best, (outside.row(i) - outside.row(j)).squaredNorm());
    spacing += best;
  }
  spacing /= static_cast<double>(outside.rows());
  if (spacing <= 0.0)
    return std::numeric_limits<double>::infinity();
  return directed_chamfer(inside, outside) / spacing;
}

bool
adherence(const ShapeParams& source_params, double source_scale, const Points& source, const Points& output,
          const EditMask& mask, const EditDescriptor& descriptor)
{
  validate(descriptor);
  if (descriptor.direction == Direction::Remove)
    return masked_dispersion(output, mask) < kCollapseThreshold;
  const auto estimate = [&](const Points& cloud) {
    return fit_attribute(PointCloud(cloud), mask, descriptor.category, descriptor.part, descriptor.attribute) /
           source_scale;
  };
  const double truth = source_params.get(descriptor.part, descriptor.attribute);
  const double before = estimate(source);
  const double after = estimate(output);
  if (descriptor.direction == Direction::Increase)
    return after >= (1.0 + kAdherenceMargin) * std::max(truth, before);
  return after <= (1.0 - kAdherenceMargin) * std::min(truth, before);
}

double
class_distortion(const PointClassifier& clf, const Points& input, const Points& output, Category category)
{
  const auto c = static_cast<std::size_t>(category);
  if (c >= PointClassifier::kClasses)
    throw Error(ErrorKind::UnknownCategory, "category outside the classifier's classes");
  return std::abs(clf.probabilities(input)[c] - clf.probabilities(output)[c]);
}

Eigen::MatrixXd
sqrtm_psd(const Eigen::MatrixXd& a)
{
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

double
frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& sigma_a, const Eigen::VectorXd& mu_b,
                 const Eigen::MatrixXd& sigma_b)
{
  if (mu_a.size() != mu_b.size() || sigma_a.rows() != mu_a.size() || sigma_b.rows() != mu_b.size())
    throw Error(ErrorKind::ShapeMismatch, "Gaussian fits differ in dimension");
  const Eigen::MatrixXd root_a = sqrtm_psd(sigma_a);
  const Eigen::MatrixXd inner = root_a * sigma_b * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + sigma_a.trace() + sigma_b.trace() - 2.0 * tr_cross;
  return std::max(d, 0.0);
}

namespace {

void
gaussian_fit(const Eigen::MatrixXd& f, Eigen::VectorXd& mu, Eigen::MatrixXd& sigma)
{
  mu = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - mu.transpose();
  const double denom = f.rows() > 1 ? static_cast<double>(f.rows() - 1) : 1.0;
  sigma = centered.transpose() * centered / denom;
  sigma.diagonal().array() += kFpdRegularization;
}

} // namespace

double
fpd_from_features(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool strict)
{
  if (a.cols() != b.cols())
    throw Error(ErrorKind::ShapeMismatch, "feature sets differ in dimension");
  if (a.rows() == 0 || b.rows() == 0 || (strict && (a.rows() <= a.cols() || b.rows() <= b.cols())))
    throw Error(ErrorKind::TooFewSamples, "FPD needs more samples than feature dimensions");
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd s_a, s_b;
  gaussian_fit(a, mu_a, s_a);
  gaussian_fit(b, mu_b, s_b);
  return frechet_distance(mu_a, s_a, mu_b, s_b);
}

double
fpd(const PointClassifier& clf, const std::vector<Points>& set_a, const std::vector<Points>& set_b, bool strict)
{
  const auto feats = [&](const std::vector<Points>& set) {
    Eigen::MatrixXd f(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(PointClassifier::kHidden));
    for (std::size_t i = 0; i < set.size(); ++i)
      f.row(static_cast<Eigen::Index>(i)) = clf.features(set[i]);
    return f;
  };
  return fpd_from_features(feats(set_a), feats(set_b), strict);
}

double
directional_similarity(const Eigen::VectorXd& e_in, const Eigen::VectorXd& e_out, const Eigen::VectorXd& e_general,
                       const Eigen::VectorXd& e_edit)
{
  const auto n = e_in.size();
  if (e_out.size() != n || e_general.size() != n || e_edit.size() != n)
    throw Error(ErrorKind::ShapeMismatch, "embeddings differ in dimension");
  const Eigen::VectorXd di = e_out - e_in;
  const Eigen::VectorXd dt = e_edit - e_general;
  if (di.norm() < 1e-12 || dt.norm() < 1e-12)
    throw Error(ErrorKind::ZeroDelta, "embedding difference has zero length");
  const double cos = std::clamp(di.dot(dt) / (di.norm() * dt.norm()), -1.0, 1.0);
  return 1.0 - cos;
}

} // namespace ptedit

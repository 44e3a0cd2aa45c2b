#pragma once

#include "ptedit/classifier.hpp"
#include "ptedit/geometry.hpp"
#include "ptedit/schema.hpp"
#include "ptedit/synthgen.hpp"

#include <Eigen/Core>

#include <string_view>
#include <vector>

namespace ptedit {

/// Type-7 (linear interpolation) sample quantile; `values` need not be sorted.
double quantile(std::vector<double> values, double p);

/// Estimate of one attribute from the masked points of `cloud`, in the cloud's
/// units:
///
///   thickness of seat, back, table top; base height   5-95% range along the thin axis
///   leg thickness     5-95% range of |x - c_x| and |z - c_z| (c = midrange), averaged
///   back height, shade height
///                     span along y: the range, with each end that has no flat cap
///                     (two or more coincident extreme values) extended by the
///                     expected gap of uniformly spread points
///   leg length        same span, with the upper end pinned to the underside of the
///                     seat or top when unmasked points show that plane
///   arm thickness     larger of the y range and the range of |x - c_x|
///   pole radius       algebraic least-squares circle fit in the xz plane
///   base/shade radius 95th percentile of distance to the vertical axis through the
///                     xz midrange
///
/// Throws TooFewPoints when fewer than 8 points are masked and InvalidEdit for an
/// unknown attribute.
double fit_attribute(const PointCloud& cloud, const EditMask& mask, Category category, std::string_view part,
                     std::string_view attribute);

/// Mean squared distance from masked points to their nearest unmasked point,
/// divided by the mean squared nearest-neighbour spacing of the unmasked points.
/// About 1 when the masked points lie on the remaining surface.
double masked_dispersion(const Points& cloud, const EditMask& mask);

inline constexpr double kAdherenceMargin = 0.05;
inline constexpr double kCollapseThreshold = 2.0;

/// Whether `output` realizes the edit. For attribute edits the estimate on
/// `output` (converted to generator units with source_scale) must exceed, by 5%
/// in the requested direction, both the source's true value and the estimate on
/// the `source` cloud; the second baseline keeps estimator noise on sparse parts
/// from crediting an unchanged output. Remove edits need masked_dispersion below
/// kCollapseThreshold.
bool adherence(const ShapeParams& source_params, double source_scale, const Points& source, const Points& output,
               const EditMask& mask, const EditDescriptor& descriptor);

/// |p(category | input) - p(category | output)|.
double class_distortion(const PointClassifier& clf, const Points& input, const Points& output, Category category);

/// Symmetric PSD square root via eigen-decomposition; negative eigenvalues clamp to 0.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a);

inline constexpr double kFpdRegularization = 1e-6;

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), covariances used as given.
double frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& sigma_a, const Eigen::VectorXd& mu_b,
                        const Eigen::MatrixXd& sigma_b);

/// Fréchet distance between Gaussian fits (unbiased covariance + 1e-6 I) of two
/// feature sets, one row per sample. Strict mode throws TooFewSamples unless both
/// sets have more rows than columns.
double fpd_from_features(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool strict = false);
double fpd(const PointClassifier& clf, const std::vector<Points>& set_a, const std::vector<Points>& set_b,
           bool strict = false);

/// 1 - cos(e_out - e_in, e_edit - e_general). Throws ZeroDelta when either
/// difference has norm below 1e-12 and ShapeMismatch on differing dimensions.
double directional_similarity(const Eigen::VectorXd& e_in, const Eigen::VectorXd& e_out,
                              const Eigen::VectorXd& e_general, const Eigen::VectorXd& e_edit);

} // namespace ptedit

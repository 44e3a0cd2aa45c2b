#pragma once

#include "ptedit/geometry.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ptedit::tools {

enum class View { Front, Side, Top, Iso };
enum class ColorBy { Part, Mask, None };

std::optional<View> parse_view(std::string_view name);
std::optional<ColorBy> parse_color_by(std::string_view name);

inline constexpr int kCanvas = 512;

/// Screen coordinates (x right, y down) of every point, fitted into the canvas
/// with a uniform scale so the aspect ratio of the projection is kept.
std::vector<std::pair<double, double>> project(const Points& points, View view);

/// Orthographic scatter plot; points are drawn back to front as 2px circles.
/// `mask` may be null; ColorBy::Part without labels falls back to one color.
std::string render_cloud(const PointCloud& cloud, const EditMask* mask, View view, ColorBy color_by);

struct Series {
  std::string name;
  std::vector<double> y; // NaN marks a missing value
};

/// Line chart of one or more series over categorical x positions.
std::string render_lines(const std::string& title, const std::vector<std::string>& x_labels,
                         const std::vector<Series>& series);

} // namespace ptedit::tools

#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace ptedit::tools {

namespace {

// qualitative palette, indexed by part label
constexpr const char* kPartColors[] = { "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                        "#9467bd", "#8c564b", "#e377c2", "#7f7f7f" };
constexpr const char* kPlain = "#404040";
constexpr const char* kMasked = "#d62728";
constexpr const char* kUnmasked = "#b0b0b0";
constexpr double kMargin = 24.0;

std::string
fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// (horizontal, vertical, depth); depth grows towards the viewer
Eigen::RowVector3d
view_coords(const Eigen::RowVector3d& p, View view)
{
  switch (view) {
    case View::Front: return { p.x(), p.y(), p.z() };
    case View::Side: return { -p.z(), p.y(), p.x() };
    case View::Top: return { p.x(), -p.z(), p.y() };
    case View::Iso: {
      // camera along (1, 1, 1)
      const double s2 = std::sqrt(2.0), s6 = std::sqrt(6.0), s3 = std::sqrt(3.0);
      const double h = (p.x() - p.z()) / s2;
      const double v = (2.0 * p.y() - p.x() - p.z()) / s6;
      return { h, v, (p.x() + p.y() + p.z()) / s3 };
    }
  }
  return p;
}

std::string
header()
{
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kCanvas) + "\" height=\"" +
         std::to_string(kCanvas) + "\" viewBox=\"0 0 " + std::to_string(kCanvas) + " " + std::to_string(kCanvas) +
         "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string
escape(const std::string& s)
{
  std::string out;
  for (char c : s) {
    if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '&')
      out += "&amp;";
    else
      out += c;
  }
  return out;
}

} // namespace

std::optional<View>
parse_view(std::string_view name)
{
  if (name == "front")
    return View::Front;
  if (name == "side")
    return View::Side;
  if (name == "top")
    return View::Top;
  if (name == "iso")
    return View::Iso;
  return std::nullopt;
}

std::optional<ColorBy>
parse_color_by(std::string_view name)
{
  if (name == "part")
    return ColorBy::Part;
  if (name == "mask")
    return ColorBy::Mask;
  if (name == "none")
    return ColorBy::None;
  return std::nullopt;
}

std::vector<std::pair<double, double>>
project(const Points& points, View view)
{
  std::vector<std::pair<double, double>> out;
  if (points.rows() == 0)
    return out;
  double h_lo = INFINITY, h_hi = -INFINITY, v_lo = INFINITY, v_hi = -INFINITY;
  std::vector<Eigen::RowVector3d> q;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    q.push_back(view_coords(points.row(i), view));
    h_lo = std::min(h_lo, q.back()(0));
    h_hi = std::max(h_hi, q.back()(0));
    v_lo = std::min(v_lo, q.back()(1));
    v_hi = std::max(v_hi, q.back()(1));
  }
  const double extent = std::max({ h_hi - h_lo, v_hi - v_lo, 1e-12 });
  const double scale = (kCanvas - 2.0 * kMargin) / extent;
  const double h_mid = 0.5 * (h_lo + h_hi), v_mid = 0.5 * (v_lo + v_hi);
  for (const auto& p : q)
    out.emplace_back(kCanvas / 2.0 + (p(0) - h_mid) * scale, kCanvas / 2.0 - (p(1) - v_mid) * scale);
  return out;
}

std::string
render_cloud(const PointCloud& cloud, const EditMask* mask, View view, ColorBy color_by)
{
  const auto screen = project(cloud.points, view);
  std::vector<std::size_t> order(screen.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::vector<double> depth(screen.size());
  for (std::size_t i = 0; i < screen.size(); ++i)
    depth[i] = view_coords(cloud.points.row(static_cast<Eigen::Index>(i)), view)(2);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });

  std::string svg = header();
  for (std::size_t i : order) {
    const char* color = kPlain;
    if (color_by == ColorBy::Part && cloud.has_labels())
      color = kPartColors[cloud.labels[i] % std::size(kPartColors)];
    else if (color_by == ColorBy::Mask && mask != nullptr)
      color = (*mask)[i] ? kMasked : kUnmasked;
    svg += "<circle cx=\"" + fmt(screen[i].first) + "\" cy=\"" + fmt(screen[i].second) + "\" r=\"1\" fill=\"" +
           color + "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string
render_lines(const std::string& title, const std::vector<std::string>& x_labels, const std::vector<Series>& series)
{
  const double left = 64, right = kCanvas - 24, top = 40, bottom = kCanvas - 64;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (double y : s.y)
      if (std::isfinite(y)) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const std::size_t n = x_labels.size();
  auto sx = [&](std::size_t i) { return n < 2 ? 0.5 * (left + right) : left + (right - left) * double(i) / double(n - 1); };
  auto sy = [&](double y) { return bottom - (bottom - top) * (y - lo) / (hi - lo); };

  std::string svg = header();
  svg += "<text x=\"" + fmt(kCanvas / 2.0) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" + escape(title) + "</text>\n";
  svg += "<path d=\"M" + fmt(left) + " " + fmt(top) + " V" + fmt(bottom) + " H" + fmt(right) +
         "\" stroke=\"black\" fill=\"none\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = lo + (hi - lo) * k / 4.0;
    char label[32];
    std::snprintf(label, sizeof label, "%.4g", y);
    svg += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(sy(y) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + label + "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i)
    svg += "<text x=\"" + fmt(sx(i)) + "\" y=\"" + fmt(bottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + escape(x_labels[i]) +
           "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPartColors[s % std::size(kPartColors)];
    std::string d;
    for (std::size_t i = 0; i < std::min(n, series[s].y.size()); ++i) {
      const double y = series[s].y[i];
      if (!std::isfinite(y))
        continue;
      d += (d.empty() ? "M" : " L") + fmt(sx(i)) + " " + fmt(sy(y));
      svg += "<circle cx=\"" + fmt(sx(i)) + "\" cy=\"" + fmt(sy(y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    if (!d.empty())
      svg += "<path d=\"" + d + "\" stroke=\"" + color + "\" stroke-width=\"2\" fill=\"none\"/>\n";
    svg += "<text x=\"" + fmt(right) + "\" y=\"" + fmt(top + 12 + 14.0 * double(s)) + "\" fill=\"" + color +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + escape(series[s].name) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

} // namespace ptedit::tools

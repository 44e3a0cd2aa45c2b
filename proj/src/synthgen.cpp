#include "ptedit/synthgen.hpp"

#include "ptedit/error.hpp"
#include "ptedit/pcb.hpp"
#include "ptedit/prompts.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <variant>

namespace ptedit {

namespace {

using Vec3 = Eigen::Vector3d;

// Surface primitives; cylinders are aligned with +y.
struct Box {
  Vec3 lo, hi;
};

struct Cylinder {
  Vec3 bottom_center;
  double radius = 0.0;
  double height = 0.0;
  bool bottom_cap = true;
  bool top_cap = true;
};

using Primitive = std::variant<Box, Cylinder>;

double
box_face_area(const Box& b, int face)
{
  const Vec3 e = b.hi - b.lo;
  switch (face / 2) {
    case 0: return e.y() * e.z(); // x faces
    case 1: return e.x() * e.z(); // y faces
    default: return e.x() * e.y(); // z faces
  }
}

double
area(const Primitive& p)
{
  if (const auto* b = std::get_if<Box>(&p)) {
    double a = 0.0;
    for (int f = 0; f < 6; ++f)
      a += box_face_area(*b, f);
    return a;
  }
  const auto& c = std::get<Cylinder>(p);
  double a = 2.0 * std::numbers::pi * c.radius * c.height;
  const double cap = std::numbers::pi * c.radius * c.radius;
  if (c.bottom_cap)
    a += cap;
  if (c.top_cap)
    a += cap;
  return a;
}

bool
degenerate(const Primitive& p)
{
  if (const auto* b = std::get_if<Box>(&p))
    return !((b->hi - b->lo).array() > 0.0).all();
  const auto& c = std::get<Cylinder>(p);
  return !(c.radius > 0.0 && c.height > 0.0);
}

template <typename Rng>
Vec3
sample_on(const Primitive& p, Rng& rng)
{
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (const auto* b = std::get_if<Box>(&p)) {
    double pick = u01(rng) * area(p);
    int face = 0;
    for (; face < 5; ++face) {
      const double a = box_face_area(*b, face);
      if (pick < a)
        break;
      pick -= a;
    }
    Vec3 q(b->lo.x() + u01(rng) * (b->hi.x() - b->lo.x()), b->lo.y() + u01(rng) * (b->hi.y() - b->lo.y()),
           b->lo.z() + u01(rng) * (b->hi.z() - b->lo.z()));
    const int axis = face / 2;
    q[axis] = (face % 2 == 0) ? b->lo[axis] : b->hi[axis];
    return q;
  }
  const auto& c = std::get<Cylinder>(p);
  const double lateral = 2.0 * std::numbers::pi * c.radius * c.height;
  const double cap = std::numbers::pi * c.radius * c.radius;
  double pick = u01(rng) * area(p);
  const double theta = 2.0 * std::numbers::pi * u01(rng);
  const double second = u01(rng);
  if (pick < lateral)
    return c.bottom_center + Vec3(c.radius * std::cos(theta), second * c.height, c.radius * std::sin(theta));
  pick -= lateral;
  const double r = c.radius * std::sqrt(second);
  const bool bottom = c.bottom_cap && (!c.top_cap || pick < cap);
  return c.bottom_center + Vec3(r * std::cos(theta), bottom ? 0.0 : c.height, r * std::sin(theta));
}

Box
centered_box(double cx, double cz, double half_x, double half_z, double y0, double y1)
{
  return Box{ Vec3(cx - half_x, y0, cz - half_z), Vec3(cx + half_x, y1, cz + half_z) };
}

// Fixed anchor offsets; they do not depend on any editable attribute so that
// an edit moves nothing outside the edited part.
constexpr double kChairLegInset = 0.06;
constexpr double kChairArmInset = 0.03;
constexpr double kChairArmHeight = 0.25;
constexpr double kTableLegInset = 0.08;
constexpr double kTableBarHeight = -0.15;
constexpr double kTableBarThickness = 0.03;

constexpr double kMinEditedScale = 0.25;
constexpr double kMaxEditedScale = 2.25;

std::vector<std::vector<Primitive>>
build_parts(const ShapeParams& p)
{
  const auto& s = schema(p.category);
  std::vector<std::vector<Primitive>> parts(s.parts.size());

  switch (p.category) {
    case Category::Chair: {
      // Seat bottom at y = 0; the back stands behind the seat, legs hang below.
      const double w = p.get("seat", "width"), d = p.get("seat", "depth"), st = p.get("seat", "thickness");
      parts[0].push_back(Box{ Vec3(-w / 2, 0.0, -d / 2), Vec3(w / 2, st, d / 2) });
      const double bh = p.get("back", "height"), bt = p.get("back", "thickness");
      parts[1].push_back(Box{ Vec3(-w / 2, 0.0, -d / 2 - bt), Vec3(w / 2, bh, -d / 2) });
      const double len = p.get("leg", "length"), lt = p.get("leg", "thickness");
      for (double sx : { -1.0, 1.0 })
        for (double sz : { -1.0, 1.0 })
          parts[2].push_back(centered_box(sx * (w / 2 - kChairLegInset), sz * (d / 2 - kChairLegInset), lt / 2, lt / 2,
                                          -len, 0.0));
      if (p.has_part("arm")) {
        const double at = p.get("arm", "thickness");
        for (double sx : { -1.0, 1.0 }) {
          const double ax = sx * (w / 2 - kChairArmInset);
          parts[3].push_back(Box{ Vec3(ax - at / 2, kChairArmHeight - at / 2, -d / 2),
                                  Vec3(ax + at / 2, kChairArmHeight + at / 2, d / 2) });
        }
      }
      break;
    }
    case Category::Table: {
      const double w = p.get("top", "width"), d = p.get("top", "depth"), tt = p.get("top", "thickness");
      parts[0].push_back(Box{ Vec3(-w / 2, 0.0, -d / 2), Vec3(w / 2, tt, d / 2) });
      const double len = p.get("leg", "length"), lt = p.get("leg", "thickness");
      const double ax = w / 2 - kTableLegInset, az = d / 2 - kTableLegInset;
      for (double sx : { -1.0, 1.0 })
        for (double sz : { -1.0, 1.0 })
          parts[1].push_back(centered_box(sx * ax, sz * az, lt / 2, lt / 2, -len, 0.0));
      if (p.has_part("support")) {
        const double h = kTableBarThickness / 2;
        for (double sz : { -1.0, 1.0 })
          parts[2].push_back(Box{ Vec3(-ax, kTableBarHeight - h, sz * az - h), Vec3(ax, kTableBarHeight + h, sz * az + h) });
      }
      break;
    }
    case Category::Lamp: {
      // Base top at y = 0; pole rises from it and carries the shade.
      const double br = p.get("base", "radius"), bh = p.get("base", "height");
      parts[0].push_back(Cylinder{ Vec3(0.0, -bh, 0.0), br, bh, true, true });
      const double pl = p.get("pole", "length"), pr = p.get("pole", "radius");
      parts[1].push_back(Cylinder{ Vec3(0.0, 0.0, 0.0), pr, pl, false, false });
      const double sr = p.get("shade", "radius"), sh = p.get("shade", "height");
      parts[2].push_back(Cylinder{ Vec3(0.0, pl, 0.0), sr, sh, false, true });
      break;
    }
  }
  return parts;
}

std::vector<double>
areas_of(const std::vector<std::vector<Primitive>>& parts)
{
  std::vector<double> out;
  for (const auto& prims : parts) {
    double a = 0.0;
    for (const auto& prim : prims)
      a += area(prim);
    out.push_back(a);
  }
  return out;
}

template <typename Rng>
Vec3
sample_on_part(const std::vector<Primitive>& prims, double total_area, Rng& rng)
{
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double pick = u01(rng) * total_area;
  for (std::size_t i = 0; i + 1 < prims.size(); ++i) {
    const double a = area(prims[i]);
    if (pick < a)
      return sample_on(prims[i], rng);
    pick -= a;
  }
  return sample_on(prims.back(), rng);
}

struct RawShape {
  Points points;
  std::vector<PartLabel> labels;
};

// Points of each part come from their own generator stream; the final index
// order is a seeded permutation that depends only on `seed` and the counts.
RawShape
sample_raw(const std::vector<std::vector<Primitive>>& parts, const std::vector<std::size_t>& counts, std::uint64_t seed)
{
  const auto areas = areas_of(parts);
  const std::size_t k = std::accumulate(counts.begin(), counts.end(), std::size_t{ 0 });
  RawShape ordered{ Points(k, 3), std::vector<PartLabel>(k) };
  std::size_t row = 0;
  for (std::size_t label = 0; label < parts.size(); ++label) {
    for (const auto& prim : parts[label])
      if (degenerate(prim))
        throw Error(ErrorKind::InvalidParams, "part " + std::to_string(label) + " has zero extent");
    if (counts[label] == 0)
      continue;
    std::mt19937_64 rng(mix_seed(seed, 0x9a27 + label));
    for (std::size_t i = 0; i < counts[label]; ++i, ++row) {
      ordered.points.row(static_cast<Eigen::Index>(row)) = sample_on_part(parts[label], areas[label], rng).transpose();
      ordered.labels[row] = static_cast<PartLabel>(label);
    }
  }

  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{ 0 });
  std::mt19937_64 shuffle_rng(mix_seed(seed, 0x5eed));
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);

  RawShape out{ Points(k, 3), std::vector<PartLabel>(k) };
  for (std::size_t i = 0; i < k; ++i) {
    out.points.row(static_cast<Eigen::Index>(i)) = ordered.points.row(static_cast<Eigen::Index>(perm[i]));
    out.labels[i] = ordered.labels[perm[i]];
  }
  return out;
}

std::string
attribute_key(std::string_view part, std::string_view attribute)
{
  return std::string(part) + "." + std::string(attribute);
}

} // namespace

std::uint64_t
mix_seed(std::uint64_t a, std::uint64_t b)
{
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double
ShapeParams::get(std::string_view part, std::string_view attribute) const
{
  const auto it = attributes.find(attribute_key(part, attribute));
  if (it == attributes.end())
    throw Error(ErrorKind::InvalidParams, "missing attribute " + attribute_key(part, attribute));
  return it->second;
}

void
ShapeParams::set(std::string_view part, std::string_view attribute, double value)
{
  attributes[attribute_key(part, attribute)] = value;
}

bool
ShapeParams::has_part(std::string_view part) const
{
  const auto it = present.find(std::string(part));
  return it == present.end() ? schema(category).part_label(part).has_value() : it->second;
}

ShapeParams
sample_params(Category category, std::uint64_t seed)
{
  const auto& s = schema(category);
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(category) + 101));
  std::uniform_real_distribution<double> scale(0.5, 1.5);
  ShapeParams p;
  p.category = category;
  for (const auto& a : s.attributes)
    p.set(a.part, a.name, a.nominal * scale(rng));
  for (const auto& part : s.parts)
    if (part.optional)
      p.present[part.name] = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  return p;
}

std::vector<double>
part_areas(const ShapeParams& params)
{
  return areas_of(build_parts(params));
}

std::vector<std::size_t>
allocate_points(const std::vector<double>& areas, std::size_t k)
{
  const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
  if (!(total > 0.0))
    throw Error(ErrorKind::InvalidParams, "shape has zero surface area");
  std::vector<std::size_t> counts(areas.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    const double exact = static_cast<double>(k) * areas[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  // Largest remainder first; ties broken by lower label.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < k; ++r, ++assigned)
    ++counts[remainders[r % remainders.size()].second];
  return counts;
}

SynthesizedShape
synthesize_with_frame(const ShapeParams& params, std::size_t k, std::uint64_t seed)
{
  if (k < 64)
    throw Error(ErrorKind::InvalidParams, "need at least 64 points");
  const auto parts = build_parts(params);
  const auto raw = sample_raw(parts, allocate_points(areas_of(parts), k), seed);
  SynthesizedShape out;
  out.frame = normalization_frame(raw.points);
  out.cloud = PointCloud(out.frame.apply(raw.points), raw.labels);
  return out;
}

PointCloud
synthesize(const ShapeParams& params, std::size_t k, std::uint64_t seed)
{
  return synthesize_with_frame(params, k, seed).cloud;
}

std::string_view
to_string(Split split)
{
  return split == Split::Train ? "train" : "test";
}

ShapeParams
apply_edit(const ShapeParams& params, const EditDescriptor& d)
{
  if (d.category != params.category)
    throw Error(ErrorKind::InvalidEdit, "descriptor category does not match shape");
  validate(d);
  if (!params.has_part(d.part))
    throw Error(ErrorKind::InvalidEdit, "shape has no '" + d.part + "' to edit");
  ShapeParams edited = params;
  if (d.direction == Direction::Remove) {
    edited.present[d.part] = false;
    return edited;
  }
  const double nominal = schema(params.category).find_attribute(d.part, d.attribute)->nominal;
  const double value = params.get(d.part, d.attribute) * d.factor;
  if (value < kMinEditedScale * nominal * (1.0 - 1e-12) || value > kMaxEditedScale * nominal * (1.0 + 1e-12))
    throw Error(ErrorKind::InvalidEdit, "edited " + d.part + "." + d.attribute + " leaves [0.25, 2.25] x nominal");
  edited.set(d.part, d.attribute, value);
  return edited;
}

EditTriplet
make_edit_pair(const ShapeParams& params, const EditDescriptor& d, std::size_t k, std::uint64_t seed,
               std::size_t prompt_variant)
{
  if (k < 64)
    throw Error(ErrorKind::InvalidParams, "need at least 64 points");
  const ShapeParams edited = apply_edit(params, d);
  const PartLabel label = *schema(params.category).part_label(d.part);

  const auto src_parts = build_parts(params);
  const auto counts = allocate_points(areas_of(src_parts), k);
  const RawShape raw_src = sample_raw(src_parts, counts, seed);

  RawShape raw_tgt;
  if (d.direction == Direction::Remove) {
    // Removed-part indices are re-drawn on the remaining surface.
    raw_tgt = raw_src;
    const auto tgt_parts = build_parts(edited);
    const auto areas = areas_of(tgt_parts);
    const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
    std::mt19937_64 rng(mix_seed(seed, 0x7e3 + label));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i < k; ++i) {
      if (raw_src.labels[i] != label)
        continue;
      double pick = u01(rng) * total;
      std::size_t part = areas.size();
      for (std::size_t j = 0; j < areas.size(); ++j) {
        if (areas[j] == 0.0)
          continue;
        part = j;
        if (pick < areas[j])
          break;
        pick -= areas[j];
      }
      raw_tgt.points.row(static_cast<Eigen::Index>(i)) = sample_on_part(tgt_parts[part], areas[part], rng).transpose();
      raw_tgt.labels[i] = static_cast<PartLabel>(part);
    }
  } else {
    raw_tgt = sample_raw(build_parts(edited), counts, seed);
  }

  const auto frame = normalization_frame(raw_src.points);
  EditTriplet t;
  t.source = PointCloud(frame.apply(raw_src.points), raw_src.labels);
  t.target = PointCloud(frame.apply(raw_tgt.points), raw_tgt.labels);
  t.mask = EditMask::from_labels(t.source.labels, label);
  t.prompt = render_prompt(d, prompt_variant);
  t.descriptor = d;
  t.source_params = params;
  t.source_scale = frame.scale;
  return t;
}

EditDescriptor
random_edit(const ShapeParams& params, std::uint64_t seed)
{
  const auto& s = schema(params.category);
  std::vector<EditDescriptor> options;
  for (const auto& a : s.attributes) {
    if (!a.editable || !params.has_part(a.part))
      continue;
    for (auto dir : { Direction::Increase, Direction::Decrease })
      options.push_back(EditDescriptor{ params.category, a.part, a.name, dir, 1.0 });
  }
  for (const auto& part : s.parts)
    if (part.optional && params.has_part(part.name)) {
      options.push_back(EditDescriptor{ params.category, part.name, "present", Direction::Remove, 1.0 });
      options.push_back(options.back()); // same weight as one attribute's two directions
    }

  std::mt19937_64 rng(mix_seed(seed, 0xed17));
  auto d = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
  const int which = std::uniform_int_distribution<int>(0, 1)(rng);
  if (d.direction == Direction::Increase) {
    // 2.0 only while the result stays within the edited range
    const double nominal = s.find_attribute(d.part, d.attribute)->nominal;
    const bool can_double = params.get(d.part, d.attribute) * 2.0 <= kMaxEditedScale * nominal;
    d.factor = which == 1 && can_double ? 2.0 : 1.5;
  } else if (d.direction == Direction::Decrease) {
    d.factor = which == 0 ? 0.5 : 0.67;
  }
  return d;
}

namespace {

nlohmann::ordered_json
params_json(const ShapeParams& p)
{
  nlohmann::ordered_json j;
  for (const auto& [k, v] : p.attributes)
    j["attributes"][k] = v;
  j["present"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.present)
    j["present"][k] = v;
  return j;
}

ShapeParams
params_from_json(Category category, const nlohmann::json& j)
{
  ShapeParams p;
  p.category = category;
  for (const auto& [k, v] : j.at("attributes").items())
    p.attributes[k] = v.get<double>();
  for (const auto& [k, v] : j.at("present").items())
    p.present[k] = v.get<bool>();
  return p;
}

std::string
triplet_id(std::size_t i)
{
  std::ostringstream s;
  s << "t" << std::setw(5) << std::setfill('0') << i;
  return s.str();
}

} // namespace

DatasetSummary
build_dataset(const DatasetConfig& config)
{
  if (config.categories.empty() || config.edits_per_shape == 0)
    throw Error(ErrorKind::InvalidParams, "need at least one category and one edit per shape");
  if (!(config.train_fraction >= 0.0 && config.train_fraction <= 1.0))
    throw Error(ErrorKind::InvalidParams, "train fraction must be in [0, 1]");

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir / "clouds", ec);
  if (ec)
    throw Error(ErrorKind::IoError, "cannot create " + (config.out_dir / "clouds").string() + ": " + ec.message());

  const std::size_t n_shapes = (config.n + config.edits_per_shape - 1) / config.edits_per_shape;
  const auto n_train_shapes =
    static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n_shapes)));
  std::vector<std::size_t> order(n_shapes);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::mt19937_64 split_rng(mix_seed(config.seed, 0x5b117));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<Split> shape_split(n_shapes, Split::Train);
  for (std::size_t r = n_train_shapes; r < n_shapes; ++r)
    shape_split[order[r]] = Split::Test;

  std::ofstream manifest(config.out_dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  if (!manifest)
    throw Error(ErrorKind::IoError, "cannot write manifest in " + config.out_dir.string());

  DatasetSummary summary;
  for (std::size_t i = 0; i < config.n; ++i) {
    const std::size_t shape = i / config.edits_per_shape;
    const Category category = config.categories[shape % config.categories.size()];
    const std::uint64_t shape_seed = mix_seed(config.seed, shape);
    const ShapeParams params = sample_params(category, shape_seed);
    const std::uint64_t edit_seed = mix_seed(shape_seed, i % config.edits_per_shape);
    const EditDescriptor d = random_edit(params, edit_seed);
    EditTriplet t = make_edit_pair(params, d, config.points, shape_seed, edit_seed % kNumTemplates);
    t.id = triplet_id(i);
    t.split = shape_split[shape];

    const std::string src_rel = "clouds/" + t.id + "_source.pcb";
    const std::string tgt_rel = "clouds/" + t.id + "_target.pcb";
    write_pcb_file(config.out_dir / src_rel, PcbRecord{ t.source, t.mask });
    write_pcb_file(config.out_dir / tgt_rel, PcbRecord{ t.target, t.mask });

    nlohmann::ordered_json rec;
    rec["id"] = t.id;
    rec["source"] = src_rel;
    rec["target"] = tgt_rel;
    rec["category"] = std::string(to_string(category));
    rec["shape_id"] = shape;
    rec["split"] = std::string(to_string(t.split));
    rec["params"] = params_json(params);
    rec["descriptor"] = { { "part", d.part },
                          { "attribute", d.attribute },
                          { "direction", std::string(to_string(d.direction)) },
                          { "factor", d.factor } };
    rec["prompt"] = t.prompt;
    rec["source_scale"] = t.source_scale;
    rec["mask_count"] = t.mask.count();
    manifest << rec.dump() << '\n';

    (t.split == Split::Train ? summary.train : summary.test) += 1;
    summary.per_category_split[std::string(to_string(category)) + "/" + std::string(to_string(t.split))] += 1;
  }
  if (!manifest)
    throw Error(ErrorKind::IoError, "failed writing manifest");
  return summary;
}

std::vector<EditTriplet>
load_dataset(const std::filesystem::path& dir)
{
  std::ifstream in(dir / "manifest.jsonl", std::ios::binary);
  if (!in)
    throw Error(ErrorKind::IoError, "cannot open " + (dir / "manifest.jsonl").string());
  std::vector<EditTriplet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::BadFormat, std::string("manifest record: ") + e.what());
    }
    try {
      EditTriplet t;
      t.id = rec.at("id").get<std::string>();
      const auto category = parse_category(rec.at("category").get<std::string>());
      if (!category)
        throw Error(ErrorKind::UnknownCategory, rec.at("category").get<std::string>());
      const auto& dj = rec.at("descriptor");
      const auto direction = parse_direction(dj.at("direction").get<std::string>());
      if (!direction)
        throw Error(ErrorKind::BadFormat, "bad direction in " + t.id);
      t.descriptor = EditDescriptor{ *category, dj.at("part").get<std::string>(), dj.at("attribute").get<std::string>(),
                                     *direction, dj.at("factor").get<double>() };
      t.source_params = params_from_json(*category, rec.at("params"));
      t.prompt = rec.at("prompt").get<std::string>();
      t.source_scale = rec.at("source_scale").get<double>();
      t.split = rec.at("split").get<std::string>() == "test" ? Split::Test : Split::Train;
      auto src = read_pcb_file(dir / rec.at("source").get<std::string>());
      auto tgt = read_pcb_file(dir / rec.at("target").get<std::string>());
      if (!src.mask)
        throw Error(ErrorKind::BadFormat, "source cloud of " + t.id + " has no mask");
      t.source = std::move(src.cloud);
      t.target = std::move(tgt.cloud);
      t.mask = std::move(*src.mask);
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::BadFormat, std::string("manifest record: ") + e.what());
    }
  }
  return out;
}

} // namespace ptedit

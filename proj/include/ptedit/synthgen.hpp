#pragma once

#include "ptedit/geometry.hpp"
#include "ptedit/schema.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ptedit {

/// Procedural shape description in generator units (roughly metres).
struct ShapeParams {
  Category category = Category::Chair;
  std::map<std::string, double> attributes; // key "part.attribute"
  std::map<std::string, bool> present;      // optional parts only

  double get(std::string_view part, std::string_view attribute) const;
  void set(std::string_view part, std::string_view attribute, double value);
  /// Mandatory parts are always present.
  bool has_part(std::string_view part) const;

  bool operator==(const ShapeParams&) const = default;
};

/// Deterministic draw of every attribute uniformly in [0.5, 1.5] * nominal;
/// optional parts present with probability 1/2.
ShapeParams sample_params(Category category, std::uint64_t seed);

/// Total surface area of each part in schema label order (0 for absent parts).
std::vector<double> part_areas(const ShapeParams& params);

/// Largest-remainder split of `k` points proportionally to `areas`.
std::vector<std::size_t> allocate_points(const std::vector<double>& areas, std::size_t k);

/// Labeled, normalized cloud of `k` points sampled uniformly by area over the part primitives.
/// Throws InvalidParams for K < 64 or a degenerate part.
PointCloud synthesize(const ShapeParams& params, std::size_t k, std::uint64_t seed);

/// Same as synthesize() but also returns the frame used to normalize.
struct SynthesizedShape {
  PointCloud cloud;
  NormalizationFrame frame;
};
SynthesizedShape synthesize_with_frame(const ShapeParams& params, std::size_t k, std::uint64_t seed);

enum class Split : std::uint8_t { Train, Test };
std::string_view to_string(Split split);

/// Source/target pair differing in exactly one attribute of one part.
struct EditTriplet {
  std::string id;
  PointCloud source;
  PointCloud target;
  EditMask mask; // source points labeled descriptor.part
  std::string prompt;
  EditDescriptor descriptor;
  ShapeParams source_params;
  double source_scale = 1.0; // generator units -> normalized units of both clouds
  Split split = Split::Train;
};

/// Edited copy of `params`; throws InvalidEdit for an invalid descriptor.
ShapeParams apply_edit(const ShapeParams& params, const EditDescriptor& descriptor);

/// Both clouds share per-part seeds, point counts, index order and the
/// source's normalization frame, so points outside the mask are bit-identical.
/// Remove edits place the removed part's points on the remaining surface.
EditTriplet make_edit_pair(const ShapeParams& params, const EditDescriptor& descriptor, std::size_t k,
                           std::uint64_t seed, std::size_t prompt_variant = 0);

/// Uniform draw over every valid edit of `params` (factors {0.5, 0.67} or {1.5, 2.0}).
EditDescriptor random_edit(const ShapeParams& params, std::uint64_t seed);

struct DatasetConfig {
  std::filesystem::path out_dir;
  std::vector<Category> categories = all_categories();
  std::size_t n = 100;
  std::size_t points = 256;
  double train_fraction = 0.9;
  std::size_t edits_per_shape = 1;
  std::uint64_t seed = 1;
};

struct DatasetSummary {
  std::size_t train = 0;
  std::size_t test = 0;
  std::map<std::string, std::size_t> per_category_split; // "chair/train" -> count
};

/// Writes clouds/<id>_{source,target}.pcb and manifest.jsonl. The split is drawn
/// per shape, so all triplets of one shape land in the same split.
DatasetSummary build_dataset(const DatasetConfig& config);

/// Reads manifest.jsonl and every referenced cloud.
std::vector<EditTriplet> load_dataset(const std::filesystem::path& dir);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

} // namespace ptedit

#pragma once

#include "ptedit/geometry.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ptedit {

enum class Category : std::uint8_t { Chair = 0, Table = 1, Lamp = 2 };
inline constexpr std::size_t kNumCategories = 3;

std::string_view to_string(Category category);
std::optional<Category> parse_category(std::string_view name);
std::vector<Category> all_categories();

struct PartSpec {
  std::string name;
  bool optional = false; // may be absent and may be removed by an edit
};

struct AttributeSpec {
  std::string part;
  std::string name;
  double nominal = 0.0; // generator units; sampled in [0.5, 1.5] * nominal
  bool editable = false; // changing it leaves every other part untouched
};

/// Parts (label = index into `parts`) and real-valued attributes of a category.
struct CategorySchema {
  Category category;
  std::vector<PartSpec> parts;
  std::vector<AttributeSpec> attributes;

  std::optional<PartLabel> part_label(std::string_view part) const;
  const AttributeSpec* find_attribute(std::string_view part, std::string_view name) const;
};

const CategorySchema& schema(Category category);

enum class Direction : std::uint8_t { Increase, Decrease, Remove };

std::string_view to_string(Direction direction);
std::optional<Direction> parse_direction(std::string_view name);

/// Ground truth behind an edit prompt. Remove edits use attribute "present".
struct EditDescriptor {
  Category category = Category::Chair;
  std::string part;
  std::string attribute;
  Direction direction = Direction::Increase;
  double factor = 1.0;

  bool operator==(const EditDescriptor&) const = default;
};

/// Throws InvalidEdit when the descriptor does not fit the category schema.
void validate(const EditDescriptor& descriptor);

} // namespace ptedit

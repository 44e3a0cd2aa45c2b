#include "ptedit/schema.hpp"

#include "ptedit/error.hpp"

#include <array>

namespace ptedit {

namespace {

CategorySchema
make_chair()
{
  return CategorySchema{
    Category::Chair,
    { { "seat", false }, { "back", false }, { "leg", false }, { "arm", true } },
    {
      { "seat", "width", 0.50, false },
      { "seat", "depth", 0.50, false },
      { "seat", "thickness", 0.06, true },
      { "back", "height", 0.50, true },
      { "back", "thickness", 0.05, true },
      { "leg", "length", 0.45, true },
      { "leg", "thickness", 0.05, true },
      { "arm", "thickness", 0.05, true },
    },
  };
}

CategorySchema
make_table()
{
  return CategorySchema{
    Category::Table,
    { { "top", false }, { "leg", false }, { "support", true } },
    {
      { "top", "width", 1.00, false },
      { "top", "depth", 0.60, false },
      { "top", "thickness", 0.05, true },
      { "leg", "length", 0.70, true },
      { "leg", "thickness", 0.06, true },
    },
  };
}

CategorySchema
make_lamp()
{
  return CategorySchema{
    Category::Lamp,
    { { "base", false }, { "pole", false }, { "shade", false } },
    {
      { "base", "radius", 0.15, true },
      { "base", "height", 0.04, true },
      { "pole", "length", 0.60, false },
      { "pole", "radius", 0.015, true },
      { "shade", "radius", 0.12, true },
      { "shade", "height", 0.15, true },
    },
  };
}

const std::array<CategorySchema, kNumCategories>&
schemas()
{
  static const std::array<CategorySchema, kNumCategories> all{ make_chair(), make_table(), make_lamp() };
  return all;
}

} // namespace

std::string_view
to_string(Category category)
{
  switch (category) {
    case Category::Chair: return "chair";
    case Category::Table: return "table";
    case Category::Lamp: return "lamp";
  }
  return "?";
}

std::optional<Category>
parse_category(std::string_view name)
{
  for (auto c : all_categories())
    if (to_string(c) == name)
      return c;
  return std::nullopt;
}

std::vector<Category>
all_categories()
{
  return { Category::Chair, Category::Table, Category::Lamp };
}

std::optional<PartLabel>
CategorySchema::part_label(std::string_view part) const
{
  for (std::size_t i = 0; i < parts.size(); ++i)
    if (parts[i].name == part)
      return static_cast<PartLabel>(i);
  return std::nullopt;
}

const AttributeSpec*
CategorySchema::find_attribute(std::string_view part, std::string_view name) const
{
  for (const auto& a : attributes)
    if (a.part == part && a.name == name)
      return &a;
  return nullptr;
}

const CategorySchema&
schema(Category category)
{
  const auto index = static_cast<std::size_t>(category);
  if (index >= kNumCategories)
    throw Error(ErrorKind::UnknownCategory, "category id " + std::to_string(index));
  return schemas()[index];
}

std::string_view
to_string(Direction direction)
{
  switch (direction) {
    case Direction::Increase: return "increase";
    case Direction::Decrease: return "decrease";
    case Direction::Remove: return "remove";
  }
  return "?";
}

std::optional<Direction>
parse_direction(std::string_view name)
{
  for (auto d : { Direction::Increase, Direction::Decrease, Direction::Remove })
    if (to_string(d) == name)
      return d;
  return std::nullopt;
}

void
validate(const EditDescriptor& d)
{
  const auto& s = schema(d.category);
  const auto label = s.part_label(d.part);
  if (!label)
    throw Error(ErrorKind::InvalidEdit, "no part '" + d.part + "' in " + std::string(to_string(d.category)));
  if (d.direction == Direction::Remove) {
    if (!s.parts[*label].optional)
      throw Error(ErrorKind::InvalidEdit, "part '" + d.part + "' is mandatory and cannot be removed");
    return;
  }
  const auto* attr = s.find_attribute(d.part, d.attribute);
  if (attr == nullptr)
    throw Error(ErrorKind::InvalidEdit, "no attribute '" + d.attribute + "' on part '" + d.part + "'");
  if (!attr->editable)
    throw Error(ErrorKind::InvalidEdit, "attribute '" + d.part + "." + d.attribute + "' is not locally editable");
  if (!(d.factor > 0.0))
    throw Error(ErrorKind::InvalidEdit, "edit factor must be positive");
  if ((d.direction == Direction::Increase) != (d.factor > 1.0))
    throw Error(ErrorKind::InvalidEdit, "edit factor disagrees with direction");
}

} // namespace ptedit

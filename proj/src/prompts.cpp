#include "ptedit/prompts.hpp"

#include "ptedit/error.hpp"
#include "ptedit/resources.hpp"

#include <cctype>
#include <sstream>

namespace ptedit {

namespace {

std::vector<std::string_view>
content_lines(std::string_view text)
{
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    auto line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
      line.remove_suffix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())))
      line.remove_prefix(1);
    if (line.empty() || line.front() == '#')
      continue;
    lines.push_back(line);
  }
  return lines;
}

struct PartWording {
  const char* word;
  bool plural;
};

PartWording
part_wording(Category category, std::string_view part)
{
  if (part == "leg")
    return { "legs", true };
  if (part == "arm")
    return { "arms", true };
  if (category == Category::Table && part == "support")
    return { "support bar", false };
  static const char* const singular[] = { "seat", "back", "top", "base", "pole", "shade" };
  for (const char* w : singular)
    if (part == w)
      return { w, false };
  throw Error(ErrorKind::InvalidEdit, "no wording for part '" + std::string(part) + "'");
}

std::string
comparative(const EditDescriptor& d)
{
  const bool up = d.direction == Direction::Increase;
  const auto& a = d.attribute;
  if (a == "thickness" || (a == "radius" && d.part == "pole"))
    return up ? "thicker" : "thinner";
  if (a == "length")
    return up ? "longer" : "shorter";
  if (a == "height")
    return up ? "taller" : "shorter";
  if (a == "width" || a == "radius")
    return up ? "wider" : "narrower";
  if (a == "depth")
    return up ? "deeper" : "shallower";
  throw Error(ErrorKind::InvalidEdit, "no comparative for attribute '" + a + "'");
}

} // namespace

Vocabulary
Vocabulary::parse(std::string_view text)
{
  Vocabulary v;
  for (auto line : content_lines(text)) {
    std::string w(line);
    if (v.ids_.count(w))
      throw Error(ErrorKind::BadFormat, "duplicate vocabulary word '" + w + "'");
    v.ids_.emplace(w, static_cast<TokenId>(v.words_.size()));
    v.words_.push_back(std::move(w));
  }
  if (v.words_.empty() || v.words_.front() != "<empty>")
    throw Error(ErrorKind::BadFormat, "vocabulary must start with the <empty> sentinel");
  return v;
}

const Vocabulary&
Vocabulary::builtin()
{
  static const Vocabulary v = parse(resources::kVocabularyText);
  return v;
}

std::optional<TokenId>
Vocabulary::id(std::string_view word) const
{
  const auto it = ids_.find(std::string(word));
  if (it == ids_.end() || it->second == 0)
    return std::nullopt;
  return it->second;
}

PartKeywordMap
PartKeywordMap::parse(std::string_view text)
{
  PartKeywordMap map;
  for (auto line : content_lines(text)) {
    std::istringstream in{ std::string(line) };
    std::string category_name;
    Entry entry;
    in >> category_name >> entry.part;
    const auto category = parse_category(category_name);
    if (!category)
      throw Error(ErrorKind::UnknownCategory, "keyword map category '" + category_name + "'");
    for (std::string kw; in >> kw;)
      entry.keywords.push_back(kw);
    if (entry.keywords.empty())
      throw Error(ErrorKind::BadFormat, "part '" + entry.part + "' has no keywords");
    map.table_[static_cast<std::size_t>(*category)].push_back(std::move(entry));
  }
  return map;
}

const PartKeywordMap&
PartKeywordMap::builtin()
{
  static const PartKeywordMap m = parse(resources::kPartKeywordsText);
  return m;
}

const std::vector<PartKeywordMap::Entry>&
PartKeywordMap::entries(Category category) const
{
  return table_.at(static_cast<std::size_t>(category));
}

std::vector<std::string>
split_words(std::string_view text)
{
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty())
    words.push_back(std::move(current));
  return words;
}

TokenIds
tokenize(std::string_view text, TokenizeMode mode, const Vocabulary& vocab)
{
  TokenIds ids{};
  std::size_t n = 0;
  for (const auto& w : split_words(text)) {
    const auto id = vocab.id(w);
    if (!id) {
      if (mode == TokenizeMode::Strict)
        throw Error(ErrorKind::UnknownToken, "'" + w + "' is not in the vocabulary");
      continue;
    }
    if (n == kPromptLength) {
      if (mode == TokenizeMode::Strict)
        throw Error(ErrorKind::UnknownToken, "prompt longer than " + std::to_string(kPromptLength) + " words");
      break;
    }
    ids[n++] = *id;
  }
  return ids;
}

std::string
render_prompt(const EditDescriptor& d, std::size_t variant)
{
  validate(d);
  const auto wording = part_wording(d.category, d.part);
  const std::string part = wording.word;
  variant %= kNumTemplates;

  if (d.direction == Direction::Remove) {
    switch (variant) {
      case 0: return "no " + part;
      case 1: return "the target has no " + part;
      default: return "it has no " + part;
    }
  }

  const std::string cmp = comparative(d);
  const std::string article = wording.plural ? "" : "a ";
  switch (variant) {
    case 0: return "the target has " + article + cmp + " " + part;
    case 1: return part + (wording.plural ? " are " : " is ") + cmp;
    default: return "it has " + article + cmp + " " + part;
  }
}

std::optional<std::string>
extract_part(std::string_view prompt, Category category, const PartKeywordMap& map)
{
  const auto words = split_words(prompt);
  for (const auto& entry : map.entries(category))
    for (const auto& kw : entry.keywords)
      for (const auto& w : words)
        if (w.find(kw) != std::string::npos)
          return entry.part;
  return std::nullopt;
}

std::string
extract_part_forced(std::string_view prompt, Category category, const PartKeywordMap& map)
{
  if (auto part = extract_part(prompt, category, map))
    return *part;
  return map.entries(category).front().part;
}

} // namespace ptedit

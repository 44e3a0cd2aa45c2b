#pragma once

#include "ptedit/schema.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ptedit {

inline constexpr std::size_t kPromptLength = 8;
using TokenId = std::uint16_t;
using TokenIds = std::array<TokenId, kPromptLength>;

/// Token ids of the empty prompt; id 0 is the empty-prompt sentinel.
inline constexpr TokenIds kNullPrompt{};

/// Closed word list loaded from resources/vocabulary.txt.
class Vocabulary {
public:
  static const Vocabulary& builtin();
  static Vocabulary parse(std::string_view text);

  std::size_t size() const { return words_.size(); }
  const std::string& word(TokenId id) const { return words_.at(id); }
  std::optional<TokenId> id(std::string_view word) const;

private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Per-category ordered (part, keywords) table from resources/part_keywords.txt.
class PartKeywordMap {
public:
  struct Entry {
    std::string part;
    std::vector<std::string> keywords;
  };

  static const PartKeywordMap& builtin();
  static PartKeywordMap parse(std::string_view text);

  const std::vector<Entry>& entries(Category category) const;

private:
  std::array<std::vector<Entry>, kNumCategories> table_;
};

/// Lowercase, replace punctuation by spaces, split on whitespace.
std::vector<std::string> split_words(std::string_view text);

enum class TokenizeMode { Strict, Lenient };

/// Fixed-length ids padded with 0. Strict mode throws UnknownToken on
/// out-of-vocabulary words or more than kPromptLength words; lenient mode
/// drops unknown words and truncates.
TokenIds tokenize(std::string_view text, TokenizeMode mode = TokenizeMode::Strict,
                  const Vocabulary& vocab = Vocabulary::builtin());

inline constexpr std::size_t kNumTemplates = 3;

/// Render the edit as text using template `variant` (taken modulo kNumTemplates).
std::string render_prompt(const EditDescriptor& descriptor, std::size_t variant = 0);

/// First part (in keyword-map order) having a keyword contained in a prompt
/// word; nullopt means Unknown.
std::optional<std::string> extract_part(std::string_view prompt, Category category,
                                        const PartKeywordMap& map = PartKeywordMap::builtin());

/// Evaluation-mode extraction: never Unknown, falls back to the first part in map order.
std::string extract_part_forced(std::string_view prompt, Category category,
                                const PartKeywordMap& map = PartKeywordMap::builtin());

} // namespace ptedit

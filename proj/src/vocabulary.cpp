#include "mmvr/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace mmvr {
namespace {

constexpr std::array<std::string_view, 3> kShapeSingular = {"circle", "square", "triangle"};
constexpr std::array<std::string_view, 3> kShapePlural = {"circles", "squares", "triangles"};
constexpr std::array<std::string_view, 4> kColors = {"red", "green", "blue", "yellow"};
constexpr std::array<std::string_view, 2> kSizes = {"small", "large"};

}  // namespace

std::string_view shape_word(ShapeClass s, bool plural) {
  const auto i = static_cast<std::size_t>(s);
  return plural ? kShapePlural[i] : kShapeSingular[i];
}

std::string_view color_word(Color c) { return kColors[static_cast<std::size_t>(c)]; }
std::string_view size_word(SizeClass s) { return kSizes[static_cast<std::size_t>(s)]; }

std::optional<ShapeClass> parse_shape_word(std::string_view w) {
  for (std::size_t i = 0; i < kShapeSingular.size(); ++i) {
    if (w == kShapeSingular[i] || w == kShapePlural[i]) return static_cast<ShapeClass>(i);
  }
  return std::nullopt;
}

std::optional<Color> parse_color_word(std::string_view w) {
  for (std::size_t i = 0; i < kColors.size(); ++i) {
    if (w == kColors[i]) return static_cast<Color>(i);
  }
  return std::nullopt;
}

std::optional<SizeClass> parse_size_word(std::string_view w) {
  if (w == "small" || w == "little") return SizeClass::kSmall;
  if (w == "large" || w == "big") return SizeClass::kLarge;
  return std::nullopt;
}

std::string Caption::text() const {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

UnknownWordError::UnknownWordError(std::string word)
    : Error("unknown word '" + word + "' (not in the caption vocabulary)"), word_(std::move(word)) {}

Vocabulary::Vocabulary()
    : words_{"<pad>",  "<bos>",   "<eos>",   "a",       "an",      "the",       "one",
             "two",    "three",   "is",      "are",     "of",      "and",       "there",
             "picture", "image",  "photo",   "red",     "green",   "blue",      "yellow",
             "circle", "circles", "square",  "squares", "triangle", "triangles", "small",
             "little", "large",   "big"} {}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v;
  return v;
}

std::optional<int> Vocabulary::find(std::string_view word) const {
  auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) return std::nullopt;
  return static_cast<int>(it - words_.begin());
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw Error("vocabulary: token id " + std::to_string(id) + " out of range");
  }
  return words_[static_cast<std::size_t>(id)];
}

Caption Vocabulary::encode(std::string_view text) const {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream in(lowered);
  Caption c;
  for (std::string w; in >> w;) {
    const auto id = find(w);
    if (!id || *id <= kEos) throw UnknownWordError(w);
    c.tokens.push_back(w);
    c.ids.push_back(*id);
  }
  if (c.ids.size() > kMaxContentWords) {
    throw Error("caption has " + std::to_string(c.ids.size()) + " words; at most " +
                std::to_string(kMaxContentWords) + " allowed");
  }
  return c;
}

Caption Vocabulary::from_ids(std::span<const int> ids) const {
  Caption c;
  for (int id : ids) {
    c.tokens.push_back(word(id));
    c.ids.push_back(id);
  }
  return c;
}

}  // namespace mmvr

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmvr/tensor.hpp"

namespace mmvr {

enum class ShapeClass : int { kCircle = 0, kSquare = 1, kTriangle = 2 };
enum class Color : int { kRed = 0, kGreen = 1, kBlue = 2, kYellow = 3 };
enum class SizeClass : int { kSmall = 0, kLarge = 1 };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 4;
inline constexpr int kNumSizes = 2;

std::string_view shape_word(ShapeClass s, bool plural = false);
std::string_view color_word(Color c);
std::string_view size_word(SizeClass s);
std::optional<ShapeClass> parse_shape_word(std::string_view w);
std::optional<Color> parse_color_word(std::string_view w);
std::optional<SizeClass> parse_size_word(std::string_view w);

/// Word sequence over the closed vocabulary. Holds content words only;
/// BOS/EOS are implicit and added by the captioner.
struct Caption {
  std::vector<std::string> tokens;
  std::vector<int> ids;

  std::string text() const;
  std::size_t size() const { return ids.size(); }
  bool operator==(const Caption& o) const { return ids == o.ids; }
};

class UnknownWordError : public Error {
 public:
  explicit UnknownWordError(std::string word);
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

/// Fixed, versioned caption vocabulary.
class Vocabulary {
 public:
  static constexpr int kVersion = 1;
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  /// Content words plus BOS/EOS must fit in this many decoder positions.
  static constexpr std::size_t kMaxLength = 16;
  static constexpr std::size_t kMaxContentWords = kMaxLength - 2;

  static const Vocabulary& standard();

  std::size_t size() const { return words_.size(); }
  std::optional<int> find(std::string_view word) const;
  const std::string& word(int id) const;

  /// Lower-cases and splits on whitespace; throws UnknownWordError naming the
  /// first word outside the vocabulary.
  Caption encode(std::string_view text) const;
  Caption from_ids(std::span<const int> ids) const;

 private:
  Vocabulary();
  std::vector<std::string> words_;
};

}  // namespace mmvr

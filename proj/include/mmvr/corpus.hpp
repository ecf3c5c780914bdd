#pragma once

// Synthetic shapes-and-captions corpus: scene sampling, rasterization, the
// caption grammar (generation, parsing, paraphrasing) and dataset manifests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmvr/rng.hpp"
#include "mmvr/tensor.hpp"
#include "mmvr/vocabulary.hpp"

namespace mmvr {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageSize = kImageSide * kImageSide * kImageChannels;
inline constexpr std::size_t kGridSide = 4;
inline constexpr std::size_t kGridCells = kGridSide * kGridSide;
inline constexpr std::size_t kCellPixels = kImageSide / kGridSide;
inline constexpr std::size_t kMaxObjects = 3;

/// Side length in pixels of an object's footprint.
double object_side(SizeClass size);

struct SceneObject {
  ShapeClass shape = ShapeClass::kCircle;
  Color color = Color::kRed;
  int cell = 0;  // row-major index into the 4x4 placement grid
  SizeClass size = SizeClass::kSmall;

  bool operator==(const SceneObject&) const = default;
};

/// Normalized (x, y, w, h) box of an object, x/y being the top-left corner.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;
};
Box object_box(const SceneObject& obj);

struct SceneSpec {
  std::vector<SceneObject> objects;

  /// Throws Error unless 1..3 objects occupy distinct valid cells.
  void validate() const;
  bool operator==(const SceneSpec&) const = default;
};

SceneSpec sample_scene(Rng& rng);

/// Rasterizes to a [32,32,3] tensor (row-major HWC) with values in [0,1].
Tensor render(const SceneSpec& scene);

// ---------------------------------------------------------------- grammar

/// One noun phrase of a caption: "two blue squares", "a large red circle".
struct ObjectGroup {
  int count = 1;
  Color color = Color::kRed;
  ShapeClass shape = ShapeClass::kCircle;
  std::optional<SizeClass> size;

  auto operator<=>(const ObjectGroup&) const = default;
};

/// What a caption asserts about a scene, in canonical (merged, sorted) form.
struct CaptionMeaning {
  std::vector<ObjectGroup> groups;

  void canonicalize();
  bool operator==(const CaptionMeaning&) const = default;
  std::string describe() const;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Parses a caption under the grammar:
///   S      := "the" [SIZE] SHAPE "is" COLOR | [PREFIX] NP ("and" NP)*
///   PREFIX := ("a"|"an") ("picture"|"image"|"photo") "of" | "there" ("is"|"are")
///   NP     := ("a"|"one") [SIZE] COLOR SHAPE | ("two"|"three") [SIZE] COLOR SHAPES
/// Throws ParseError naming the offending position.
CaptionMeaning parse_caption(const Caption& caption);

/// Meaning a scene supports when described without sizes.
CaptionMeaning scene_meaning(const SceneSpec& scene);

/// Template ids accepted by caption_of.
enum CaptionTemplate : int {
  kTemplateColorShape = 0,    // "a red circle"          (one object)
  kTemplateShapeIsColor = 1,  // "the circle is red"     (one object)
  kTemplateCount = 2,         // "two blue squares"      (all objects alike)
  kTemplateSized = 3,         // "a large red circle"    (one object)
  kTemplateList = 4,          // "a red circle and two blue squares"
  kTemplatePicture = 5,       // "a picture of a red circle and ..."
  kTemplateThereIs = 6,       // "there is a red circle and ..."
  kNumTemplates = 7,
};

bool template_compatible(const SceneSpec& scene, int template_id);
/// Throws Error when the template cannot describe the scene.
Caption caption_of(const SceneSpec& scene, int template_id);

/// Every surface sentence of the grammar that expresses `meaning`
/// (synonyms, determiners, prefixes, phrase order), sorted and deduplicated.
std::vector<Caption> realizations(const CaptionMeaning& meaning);

/// k distinct captions with the meaning of `caption`; the first one is
/// `caption` itself. Throws ParseError if it does not parse and Error if the
/// grammar has fewer than k realizations.
std::vector<Caption> paraphrase(const Caption& caption, int k, std::uint64_t seed);

// ---------------------------------------------------------------- dataset

struct DatasetEntry {
  std::string image;  // path relative to the dataset directory
  std::vector<std::string> captions;
  SceneSpec scene;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> entries;
};

inline constexpr const char* kManifestFile = "manifest.json";

/// Pure function of (count, seed): scenes, image paths and captions.
DatasetManifest synthesize_manifest(std::size_t count, std::uint64_t seed);

/// Writes images/NNNNN.ppm and manifest.json under `output_dir`.
DatasetManifest generate_dataset(std::size_t count, std::uint64_t seed,
                                 const std::filesystem::path& output_dir);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
DatasetManifest load_manifest(const std::filesystem::path& file);

/// Manifest plus decoded images, ready for training.
struct Dataset {
  DatasetManifest manifest;
  std::vector<Tensor> images;

  std::size_t size() const { return images.size(); }
};

/// Renders every entry in memory (no files involved).
Dataset materialize(DatasetManifest manifest);
/// Loads manifest.json and every referenced image; checks each image against
/// its rendered scene.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mmvr

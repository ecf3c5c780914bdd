#include "mmvr/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmvr/pixmap.hpp"

namespace mmvr {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 4> kCountWords = {"", "one", "two", "three"};

std::optional<int> parse_count_word(std::string_view w) {
  if (w == "a" || w == "one") return 1;
  if (w == "two") return 2;
  if (w == "three") return 3;
  return std::nullopt;
}

void append_words(std::vector<std::string>& out, std::initializer_list<std::string_view> words) {
  for (auto w : words) out.emplace_back(w);
}

Caption to_caption(const std::vector<std::string>& words) {
  const auto& vocab = Vocabulary::standard();
  Caption c;
  for (const auto& w : words) {
    const auto id = vocab.find(w);
    if (!id) throw UnknownWordError(w);
    c.tokens.push_back(w);
    c.ids.push_back(*id);
  }
  return c;
}

// Noun phrase with explicit choices for the determiner and the size synonym.
void append_phrase(std::vector<std::string>& out, const ObjectGroup& g, bool use_one, bool size_synonym) {
  if (g.count == 1) {
    out.emplace_back(use_one ? "one" : "a");
  } else {
    out.emplace_back(kCountWords[static_cast<std::size_t>(g.count)]);
  }
  if (g.size) {
    if (*g.size == SizeClass::kSmall) {
      out.emplace_back(size_synonym ? "little" : "small");
    } else {
      out.emplace_back(size_synonym ? "big" : "large");
    }
  }
  out.emplace_back(color_word(g.color));
  out.emplace_back(shape_word(g.shape, g.count > 1));
}

std::vector<ObjectGroup> groups_in_scene_order(const SceneSpec& scene) {
  std::vector<ObjectGroup> groups;
  for (const auto& o : scene.objects) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const ObjectGroup& g) {
      return g.color == o.color && g.shape == o.shape;
    });
    if (it == groups.end()) {
      groups.push_back({1, o.color, o.shape, std::nullopt});
    } else {
      ++it->count;
    }
  }
  return groups;
}

std::vector<std::string> list_words(const std::vector<ObjectGroup>& groups) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i) words.emplace_back("and");
    append_phrase(words, groups[i], false, false);
  }
  return words;
}

std::optional<std::vector<std::string>> template_words(const SceneSpec& scene, int template_id) {
  scene.validate();
  const bool single = scene.objects.size() == 1;
  const auto& first = scene.objects.front();
  const auto groups = groups_in_scene_order(scene);
  std::vector<std::string> words;
  switch (template_id) {
    case kTemplateColorShape:
      if (!single) return std::nullopt;
      append_words(words, {"a", color_word(first.color), shape_word(first.shape)});
      break;
    case kTemplateShapeIsColor:
      if (!single) return std::nullopt;
      append_words(words, {"the", shape_word(first.shape), "is", color_word(first.color)});
      break;
    case kTemplateCount: {
      if (groups.size() != 1) return std::nullopt;
      const auto& g = groups.front();
      append_words(words, {kCountWords[static_cast<std::size_t>(g.count)], color_word(g.color),
                           shape_word(g.shape, g.count > 1)});
      break;
    }
    case kTemplateSized:
      if (!single) return std::nullopt;
      append_words(words, {"a", size_word(first.size), color_word(first.color), shape_word(first.shape)});
      break;
    case kTemplateList:
      words = list_words(groups);
      break;
    case kTemplatePicture:
      append_words(words, {"a", "picture", "of"});
      for (auto& w : list_words(groups)) words.push_back(std::move(w));
      break;
    case kTemplateThereIs:
      append_words(words, {"there", groups.front().count == 1 ? "is" : "are"});
      for (auto& w : list_words(groups)) words.push_back(std::move(w));
      break;
    default:
      throw Error("caption_of: template id " + std::to_string(template_id) + " out of range [0," +
                  std::to_string(kNumTemplates) + ")");
  }
  if (words.size() > Vocabulary::kMaxContentWords) return std::nullopt;
  return words;
}

class Parser {
 public:
  explicit Parser(const Caption& c) : c_(c) {}

  CaptionMeaning run() {
    if (c_.tokens.empty()) fail("empty caption");
    CaptionMeaning m;
    if (peek() == "the") {
      ++pos_;
      ObjectGroup g;
      g.size = parse_size_word(peek());
      if (g.size) ++pos_;
      g.shape = expect_shape(false);
      expect("is");
      g.color = expect_color();
      m.groups.push_back(g);
    } else {
      skip_prefix();
      m.groups.push_back(phrase());
      while (pos_ < c_.tokens.size()) {
        expect("and");
        m.groups.push_back(phrase());
      }
    }
    if (pos_ != c_.tokens.size()) fail("unexpected trailing word");
    m.canonicalize();
    return m;
  }

 private:
  std::string_view peek(std::size_t ahead = 0) const {
    return pos_ + ahead < c_.tokens.size() ? std::string_view(c_.tokens[pos_ + ahead]) : std::string_view();
  }

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream os;
    os << "cannot parse caption '" << c_.text() << "': " << what << " at word " << pos_ + 1;
    if (pos_ < c_.tokens.size()) os << " ('" << c_.tokens[pos_] << "')";
    throw ParseError(os.str());
  }

  void expect(std::string_view w) {
    if (peek() != w) fail("expected '" + std::string(w) + "'");
    ++pos_;
  }

  Color expect_color() {
    const auto c = parse_color_word(peek());
    if (!c) fail("expected a color");
    ++pos_;
    return *c;
  }

  ShapeClass expect_shape(bool plural) {
    const auto s = parse_shape_word(peek());
    if (!s || shape_word(*s, plural) != peek()) fail(plural ? "expected a plural shape" : "expected a shape");
    ++pos_;
    return *s;
  }

  void skip_prefix() {
    const auto a = peek(), b = peek(1), c = peek(2);
    const bool noun = b == "picture" || b == "photo" || b == "image";
    if ((a == "a" || a == "an") && noun && c == "of") {
      if ((a == "an") != (b == "image")) fail("article does not agree with '" + std::string(b) + "'");
      pos_ += 3;
    } else if (a == "there" && (b == "is" || b == "are")) {
      pos_ += 2;
    }
  }

  ObjectGroup phrase() {
    ObjectGroup g;
    const auto count = parse_count_word(peek());
    if (!count) fail("expected a determiner or count");
    g.count = *count;
    ++pos_;
    g.size = parse_size_word(peek());
    if (g.size) ++pos_;
    g.color = expect_color();
    g.shape = expect_shape(g.count > 1);
    return g;
  }

  const Caption& c_;
  std::size_t pos_ = 0;
};

}  // namespace

double object_side(SizeClass size) { return size == SizeClass::kSmall ? 4.0 : 7.0; }

Box object_box(const SceneObject& obj) {
  const double side = object_side(obj.size);
  const double inset = (static_cast<double>(kCellPixels) - side) / 2.0;
  const auto row = static_cast<double>(obj.cell / static_cast<int>(kGridSide));
  const auto col = static_cast<double>(obj.cell % static_cast<int>(kGridSide));
  const double px = static_cast<double>(kCellPixels);
  const double extent = static_cast<double>(kImageSide);
  return {(col * px + inset) / extent, (row * px + inset) / extent, side / extent, side / extent};
}

void SceneSpec::validate() const {
  if (objects.empty() || objects.size() > kMaxObjects) {
    throw Error("scene must hold 1.." + std::to_string(kMaxObjects) + " objects, got " +
                std::to_string(objects.size()));
  }
  std::set<int> cells;
  for (const auto& o : objects) {
    if (o.cell < 0 || o.cell >= static_cast<int>(kGridCells)) {
      throw Error("scene object cell " + std::to_string(o.cell) + " outside the 4x4 grid");
    }
    if (!cells.insert(o.cell).second) throw Error("two scene objects share cell " + std::to_string(o.cell));
  }
}

SceneSpec sample_scene(Rng& rng) {
  std::uniform_int_distribution<int> n_objects(1, static_cast<int>(kMaxObjects));
  std::uniform_int_distribution<int> shape(0, kNumShapes - 1);
  std::uniform_int_distribution<int> color(0, kNumColors - 1);
  std::uniform_int_distribution<int> size(0, kNumSizes - 1);
  std::bernoulli_distribution alike(0.25);

  std::array<int, kGridCells> cells{};
  std::iota(cells.begin(), cells.end(), 0);
  std::shuffle(cells.begin(), cells.end(), rng);

  SceneSpec scene;
  const int n = n_objects(rng);
  const bool same = n > 1 && alike(rng);
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.shape = static_cast<ShapeClass>(shape(rng));
    o.color = static_cast<Color>(color(rng));
    o.size = static_cast<SizeClass>(size(rng));
    o.cell = cells[static_cast<std::size_t>(i)];
    if (same && i > 0) {
      o.shape = scene.objects.front().shape;
      o.color = scene.objects.front().color;
    }
    scene.objects.push_back(o);
  }
  return scene;
}

Tensor render(const SceneSpec& scene) {
  scene.validate();
  static constexpr std::array<std::array<double, 3>, 4> kRgb = {{
      {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 0.0}}};
  Tensor img = Tensor::zeros({kImageSide, kImageSide, kImageChannels});
  for (const auto& o : scene.objects) {
    const Box b = object_box(o);
    const double side = object_side(o.size);
    const double x0 = b.x * kImageSide, y0 = b.y * kImageSide;
    const double cx = x0 + side / 2.0, cy = y0 + side / 2.0;
    const auto& rgb = kRgb[static_cast<std::size_t>(o.color)];
    for (std::size_t py = 0; py < kImageSide; ++py) {
      for (std::size_t px = 0; px < kImageSide; ++px) {
        const double x = static_cast<double>(px) + 0.5, y = static_cast<double>(py) + 0.5;
        if (x < x0 || x >= x0 + side || y < y0 || y >= y0 + side) continue;
        bool inside = false;
        switch (o.shape) {
          case ShapeClass::kSquare:
            inside = true;
            break;
          case ShapeClass::kCircle:
            inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) < side * side / 4.0;
            break;
          case ShapeClass::kTriangle:
            // apex at the top centre, base along the bottom edge
            inside = std::abs(x - cx) <= (y - y0) / 2.0;
            break;
        }
        if (!inside) continue;
        for (std::size_t ch = 0; ch < kImageChannels; ++ch) {
          img.data[(py * kImageSide + px) * kImageChannels + ch] = rgb[ch];
        }
      }
    }
  }
  return img;
}

void CaptionMeaning::canonicalize() {
  std::map<std::tuple<int, int, int>, int> merged;  // (shape, color, size+1) -> count
  for (const auto& g : groups) {
    const int size = g.size ? static_cast<int>(*g.size) + 1 : 0;
    merged[{static_cast<int>(g.shape), static_cast<int>(g.color), size}] += g.count;
  }
  groups.clear();
  for (const auto& [key, count] : merged) {
    const auto [shape, color, size] = key;
    ObjectGroup g{count, static_cast<Color>(color), static_cast<ShapeClass>(shape), std::nullopt};
    if (size) g.size = static_cast<SizeClass>(size - 1);
    groups.push_back(g);
  }
}

std::string CaptionMeaning::describe() const {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i) words.emplace_back("+");
    words.push_back(std::to_string(groups[i].count));
    if (groups[i].size) words.emplace_back(size_word(*groups[i].size));
    words.emplace_back(color_word(groups[i].color));
    words.emplace_back(shape_word(groups[i].shape));
  }
  std::string s;
  for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
  return s;
}

CaptionMeaning parse_caption(const Caption& caption) { return Parser(caption).run(); }

CaptionMeaning scene_meaning(const SceneSpec& scene) {
  CaptionMeaning m{groups_in_scene_order(scene)};
  m.canonicalize();
  return m;
}

bool template_compatible(const SceneSpec& scene, int template_id) {
  return template_words(scene, template_id).has_value();
}

Caption caption_of(const SceneSpec& scene, int template_id) {
  auto words = template_words(scene, template_id);
  if (!words) {
    throw Error("caption_of: template " + std::to_string(template_id) + " cannot describe a scene with " +
                std::to_string(scene.objects.size()) + " object(s)");
  }
  return to_caption(*words);
}

std::vector<Caption> realizations(const CaptionMeaning& meaning) {
  if (meaning.groups.empty()) throw Error("realizations: empty meaning");
  std::set<std::vector<std::string>> sentences;
  const std::size_t n = meaning.groups.size();

  // one bit per group for the determiner, one per group for the size synonym
  const unsigned choices = 1u << (2 * n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  do {
    for (unsigned bits = 0; bits < choices; ++bits) {
      std::vector<std::string> list;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& g = meaning.groups[order[i]];
        const bool use_one = (bits >> (2 * i)) & 1u;
        const bool synonym = (bits >> (2 * i + 1)) & 1u;
        if (g.count != 1 && use_one) continue;
        if (!g.size && synonym) continue;
        if (i) list.emplace_back("and");
        append_phrase(list, g, use_one, synonym);
      }
      // skipped redundant choices produce a shorter list; keep only full ones
      std::size_t expected = n - 1;
      for (const auto& g : meaning.groups) expected += 3 + (g.size ? 1 : 0);
      if (list.size() != expected) continue;

      const bool first_single = meaning.groups[order[0]].count == 1;
      const std::vector<std::vector<std::string>> prefixes = {
          {}, {"a", "picture", "of"}, {"an", "image", "of"}, {"a", "photo", "of"},
          {"there", first_single ? "is" : "are"}};
      for (const auto& prefix : prefixes) {
        std::vector<std::string> s = prefix;
        s.insert(s.end(), list.begin(), list.end());
        sentences.insert(std::move(s));
      }
    }
  } while (std::next_permutation(order.begin(), order.end()));

  if (n == 1 && meaning.groups[0].count == 1) {
    const auto& g = meaning.groups[0];
    for (int synonym = 0; synonym < (g.size ? 2 : 1); ++synonym) {
      std::vector<std::string> s{"the"};
      if (g.size) {
        const bool small = *g.size == SizeClass::kSmall;
        s.emplace_back(synonym ? (small ? "little" : "big") : (small ? "small" : "large"));
      }
      append_words(s, {shape_word(g.shape), "is", color_word(g.color)});
      sentences.insert(std::move(s));
    }
  }

  std::vector<Caption> out;
  for (const auto& s : sentences) {
    if (s.size() <= Vocabulary::kMaxContentWords) out.push_back(to_caption(s));
  }
  return out;
}

std::vector<Caption> paraphrase(const Caption& caption, int k, std::uint64_t seed) {
  if (k < 1) throw Error("paraphrase: k must be >= 1, got " + std::to_string(k));
  const CaptionMeaning meaning = parse_caption(caption);
  std::vector<Caption> pool = realizations(meaning);
  std::erase(pool, caption);
  if (pool.size() < static_cast<std::size_t>(k - 1)) {
    throw Error("paraphrase: only " + std::to_string(pool.size() + 1) + " distinct realizations of '" +
                caption.text() + "', asked for " + std::to_string(k));
  }
  Rng rng = make_stream(seed, 0x70617261ULL);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<Caption> out{caption};
  out.insert(out.end(), pool.begin(), pool.begin() + (k - 1));
  return out;
}

// ---------------------------------------------------------------- dataset

namespace {

json scene_to_json(const SceneSpec& s) {
  json objects = json::array();
  for (const auto& o : s.objects) {
    objects.push_back({{"shape", std::string(shape_word(o.shape))},
                       {"color", std::string(color_word(o.color))},
                       {"cell", o.cell},
                       {"size", std::string(size_word(o.size))}});
  }
  return {{"objects", objects}};
}

SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    const auto shape = parse_shape_word(o.at("shape").get<std::string>());
    const auto color = parse_color_word(o.at("color").get<std::string>());
    const auto size = parse_size_word(o.at("size").get<std::string>());
    if (!shape || !color || !size) throw Error("manifest: invalid scene object " + o.dump());
    obj.shape = *shape;
    obj.color = *color;
    obj.size = *size;
    obj.cell = o.at("cell").get<int>();
    s.objects.push_back(obj);
  }
  s.validate();
  return s;
}

std::string image_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%05zu.ppm", index);
  return buf;
}

}  // namespace

DatasetManifest synthesize_manifest(std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error("dataset: count must be >= 1");
  DatasetManifest m;
  m.seed = seed;
  m.entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = make_stream(seed, i);
    DatasetEntry e;
    e.scene = sample_scene(rng);
    e.image = image_name(i);
    std::vector<int> usable;
    for (int t = 0; t < kNumTemplates; ++t) {
      if (template_compatible(e.scene, t)) usable.push_back(t);
    }
    std::shuffle(usable.begin(), usable.end(), rng);
    for (std::size_t k = 0; k < std::min<std::size_t>(2, usable.size()); ++k) {
      e.captions.push_back(caption_of(e.scene, usable[k]).text());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest generate_dataset(std::size_t count, std::uint64_t seed, const std::filesystem::path& output_dir) {
  DatasetManifest m = synthesize_manifest(count, seed);
  std::error_code ec;
  std::filesystem::create_directories(output_dir / "images", ec);
  if (ec) throw Error("dataset: cannot create '" + (output_dir / "images").string() + "': " + ec.message());
  for (const auto& e : m.entries) write_ppm(output_dir / e.image, render(e.scene));
  save_manifest(m, output_dir / kManifestFile);
  return m;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"image", e.image}, {"captions", e.captions}, {"scene", scene_to_json(e.scene)}});
  }
  json j = {{"version", manifest.version}, {"seed", manifest.seed}, {"entries", entries}};
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("manifest: invalid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != DatasetManifest::kVersion) {
      throw Error("manifest: unsupported version " + std::to_string(m.version));
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("entries")) {
      DatasetEntry entry;
      entry.image = e.at("image").get<std::string>();
      entry.captions = e.at("captions").get<std::vector<std::string>>();
      entry.scene = scene_from_json(e.at("scene"));
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + file.string() + "'");
  out << manifest_to_json(manifest);
  if (!out) throw Error("write failed for '" + file.string() + "'");
}

DatasetManifest load_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read '" + file.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

Dataset materialize(DatasetManifest manifest) {
  Dataset d;
  d.images.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) d.images.push_back(render(e.scene));
  d.manifest = std::move(manifest);
  return d;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = load_manifest(dir / kManifestFile);
  for (const auto& e : d.manifest.entries) {
    Tensor img = read_ppm(dir / e.image);
    if (encode_ppm(img) != encode_ppm(render(e.scene))) {
      throw Error("dataset: image '" + e.image + "' does not match its scene");
    }
    d.images.push_back(std::move(img));
  }
  return d;
}

}  // namespace mmvr

#pragma once

// Manifest and pair-file (JSON lines) serialization.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe3d/dataset.hpp"
#include "probe3d/error.hpp"

namespace probe3d {

using Json = nlohmann::json;

struct Manifest {
  std::vector<ImageRecord> images;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

namespace detail {

// Walks a JSON document while tracking the JSON pointer of the current node
// so schema errors point at the offending field.
class JsonCursor {
 public:
  JsonCursor(const Json& node, std::string pointer) : node_(node), pointer_(std::move(pointer)) {}

  const Json& node() const { return node_; }
  const std::string& pointer() const { return pointer_; }

  [[noreturn]] void fail(const std::string& why) const {
    throw ValidationError("manifest " + (pointer_.empty() ? std::string("/") : pointer_) + ": " +
                          why);
  }

  bool has(const char* key) const { return node_.is_object() && node_.contains(key); }

  JsonCursor at(const std::string& key) const {
    if (!node_.is_object()) fail("expected an object");
    auto it = node_.find(key);
    if (it == node_.end()) JsonCursor(node_, pointer_ + "/" + key).fail("missing field");
    return JsonCursor(*it, pointer_ + "/" + key);
  }

  JsonCursor at(std::size_t i) const {
    return JsonCursor(node_.at(i), pointer_ + "/" + std::to_string(i));
  }

  void expect_object() const {
    if (!node_.is_object()) fail("expected an object");
  }
  void expect_array() const {
    if (!node_.is_array()) fail("expected an array");
  }

  std::string str() const {
    if (!node_.is_string()) fail("expected a string");
    return node_.get<std::string>();
  }
  double number() const {
    if (!node_.is_number()) fail("expected a number");
    return node_.get<double>();
  }
  std::int64_t integer() const {
    if (!node_.is_number_integer()) fail("expected an integer");
    return node_.get<std::int64_t>();
  }
  std::uint64_t unsigned_integer() const {
    const auto v = integer();
    if (v < 0) fail("expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

 private:
  const Json& node_;
  std::string pointer_;
};

inline std::vector<RegionEdge> parse_edges(const JsonCursor& c) {
  c.expect_array();
  std::vector<RegionEdge> edges;
  for (std::size_t i = 0; i < c.node().size(); ++i) {
    const auto e = c.at(i);
    e.expect_array();
    if (e.node().size() != 2) e.fail("edge must be a [first, second] pair");
    edges.emplace_back(e.at(std::size_t{0}).str(), e.at(std::size_t{1}).str());
  }
  return edges;
}

inline void check_region_ref(const JsonCursor& c, const std::set<std::string>& ids,
                             const std::string& id) {
  if (!ids.contains(id)) c.fail("unknown region id '" + id + "'");
}

inline ImageRecord parse_image(const JsonCursor& c) {
  c.expect_object();
  ImageRecord rec;
  rec.image_id = c.at("image_id").str();
  rec.width = static_cast<std::uint32_t>(c.at("width").unsigned_integer());
  rec.height = static_cast<std::uint32_t>(c.at("height").unsigned_integer());
  if (rec.width == 0) c.at("width").fail("must be positive");
  if (rec.height == 0) c.at("height").fail("must be positive");
  if (c.has("depth_map") && !c.at("depth_map").node().is_null())
    rec.depth_map = c.at("depth_map").str();

  const auto regions = c.at("regions");
  regions.expect_array();
  std::set<std::string> ids;
  for (std::size_t i = 0; i < regions.node().size(); ++i) {
    const auto r = regions.at(i);
    r.expect_object();
    Region region;
    region.region_id = r.at("region_id").str();
    if (!ids.insert(region.region_id).second) r.at("region_id").fail("duplicate region id");
    const auto rle = r.at("rle");
    rle.expect_array();
    std::vector<std::uint64_t> counts;
    for (std::size_t k = 0; k < rle.node().size(); ++k)
      counts.push_back(rle.at(k).unsigned_integer());
    region.mask = RleMask(rec.width, rec.height, std::move(counts));
    if (region.mask.total() != std::uint64_t(rec.width) * rec.height)
      rle.fail("RLE counts sum to " + std::to_string(region.mask.total()) + ", expected " +
               std::to_string(std::uint64_t(rec.width) * rec.height));
    region.pixel_count = r.at("pixel_count").unsigned_integer();
    if (region.pixel_count != region.mask.foreground_count())
      r.at("pixel_count").fail("pixel_count " + std::to_string(region.pixel_count) +
                               " but mask has " +
                               std::to_string(region.mask.foreground_count()) +
                               " foreground pixels");
    rec.regions.push_back(std::move(region));
  }

  auto& ann = rec.annotations;
  if (c.has("annotations")) {
    const auto a = c.at("annotations");
    a.expect_object();
    if (a.has("planes")) {
      const auto planes = a.at("planes");
      planes.expect_object();
      for (const auto& [id, _] : planes.node().items()) {
        const auto p = planes.at(id);
        check_region_ref(p, ids, id);
        PlaneAnnotation plane;
        plane.plane_id = static_cast<int>(p.at("plane_id").integer());
        const auto n = p.at("normal");
        n.expect_array();
        if (n.node().size() != 3) n.fail("normal must have 3 components");
        for (std::size_t k = 0; k < 3; ++k) plane.normal[k] = n.at(k).number();
        const double norm = std::sqrt(plane.normal[0] * plane.normal[0] +
                                      plane.normal[1] * plane.normal[1] +
                                      plane.normal[2] * plane.normal[2]);
        if (std::abs(norm - 1.0) > 1e-6)
          n.fail("normal has norm " + std::to_string(norm) + ", expected 1");
        ann.planes.emplace(id, plane);
      }
    }
    if (a.has("materials")) {
      const auto m = a.at("materials");
      m.expect_object();
      for (const auto& [id, _] : m.node().items()) {
        const auto v = m.at(id);
        check_region_ref(v, ids, id);
        const auto cat = v.integer();
        if (cat < 1 || cat > kMaterialCategories) v.fail("material category must be in [1, 46]");
        ann.materials.emplace(id, static_cast<int>(cat));
      }
    }
    if (a.has("support")) {
      const auto s = a.at("support");
      ann.support = parse_edges(s);
      for (std::size_t i = 0; i < ann.support.size(); ++i) {
        check_region_ref(s.at(i), ids, ann.support[i].first);
        check_region_ref(s.at(i), ids, ann.support[i].second);
      }
    }
    if (a.has("shadows")) {
      const auto s = a.at("shadows");
      ann.shadows = parse_edges(s);
      for (std::size_t i = 0; i < ann.shadows.size(); ++i) {
        check_region_ref(s.at(i), ids, ann.shadows[i].first);
        check_region_ref(s.at(i), ids, ann.shadows[i].second);
      }
    }
    if (a.has("instances")) {
      const auto m = a.at("instances");
      m.expect_object();
      for (const auto& [id, _] : m.node().items()) {
        check_region_ref(m.at(id), ids, id);
        ann.instances.emplace(id, static_cast<int>(m.at(id).integer()));
      }
    }
    if (a.has("depths")) {
      const auto m = a.at("depths");
      m.expect_object();
      for (const auto& [id, _] : m.node().items()) {
        check_region_ref(m.at(id), ids, id);
        const double d = m.at(id).number();
        if (!(d > 0.0)) m.at(id).fail("depth must be positive");
        ann.depths.emplace(id, d);
      }
    }
  }
  return rec;
}

inline Json edges_to_json(const std::vector<RegionEdge>& edges) {
  Json out = Json::array();
  for (const auto& [a, b] : edges) out.push_back(Json::array({a, b}));
  return out;
}

}  // namespace detail

inline Manifest parse_manifest(const Json& doc) {
  detail::JsonCursor root(doc, "");
  root.expect_object();
  const auto images = root.at("images");
  images.expect_array();
  Manifest m;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < images.node().size(); ++i) {
    m.images.push_back(detail::parse_image(images.at(i)));
    if (!seen.insert(m.images.back().image_id).second)
      images.at(i).at("image_id").fail("duplicate image id");
  }
  return m;
}

inline Json manifest_to_json(const Manifest& m) {
  Json images = Json::array();
  for (const auto& rec : m.images) {
    Json regions = Json::array();
    for (const auto& r : rec.regions)
      regions.push_back(
          {{"region_id", r.region_id}, {"rle", r.mask.counts()}, {"pixel_count", r.pixel_count}});
    Json ann = Json::object();
    const auto& a = rec.annotations;
    if (!a.planes.empty()) {
      Json planes = Json::object();
      for (const auto& [id, p] : a.planes)
        planes[id] = {{"plane_id", p.plane_id}, {"normal", p.normal}};
      ann["planes"] = planes;
    }
    if (!a.materials.empty()) ann["materials"] = a.materials;
    if (!a.support.empty()) ann["support"] = detail::edges_to_json(a.support);
    if (!a.shadows.empty()) ann["shadows"] = detail::edges_to_json(a.shadows);
    if (!a.instances.empty()) ann["instances"] = a.instances;
    if (!a.depths.empty()) ann["depths"] = a.depths;
    images.push_back({{"image_id", rec.image_id},
                      {"width", rec.width},
                      {"height", rec.height},
                      {"depth_map", rec.depth_map ? Json(*rec.depth_map) : Json(nullptr)},
                      {"regions", regions},
                      {"annotations", ann}});
  }
  return Json{{"images", images}};
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Depth maps referenced by the manifest are averaged per region immediately,
// so loaded records are self-contained.
inline Manifest load_manifest(const std::filesystem::path& path, bool resolve_depth_maps = true) {
  Manifest m;
  try {
    m = parse_manifest(read_json_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (resolve_depth_maps)
    for (auto& rec : m.images) resolve_depths(rec, path.parent_path());
  return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  write_text_file(path, manifest_to_json(m).dump(1) + "\n");
}

inline Json pair_to_json(const PairExample& p) {
  return {{"property", std::string(to_string(p.property))},
          {"image_id", p.image_id},
          {"region_a", p.region_a},
          {"region_b", p.region_b},
          {"label", p.label ? 1 : 0}};
}

inline PairExample pair_from_json(const Json& j, const std::string& where) {
  detail::JsonCursor c(j, where);
  c.expect_object();
  PairExample p;
  try {
    p.property = parse_property(c.at("property").str());
  } catch (const UsageError& e) {
    c.at("property").fail(e.what());
  }
  p.image_id = c.at("image_id").str();
  p.region_a = c.at("region_a").str();
  p.region_b = c.at("region_b").str();
  const auto label = c.at("label").integer();
  if (label != 0 && label != 1) c.at("label").fail("label must be 0 or 1");
  p.label = label == 1;
  if (p.region_a == p.region_b) c.at("region_b").fail("region_a and region_b must differ");
  return p;
}

inline void write_pairs(const std::filesystem::path& path, const std::vector<PairExample>& pairs) {
  std::string text;
  for (const auto& p : pairs) text += pair_to_json(p).dump() + "\n";
  write_text_file(path, text);
}

inline std::vector<PairExample> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PairExample> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), e.byte);
    }
    try {
      pairs.push_back(pair_from_json(j, ""));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

// Checks pairs against the manifest: every referenced image and region exists.
inline void validate_pairs(const std::vector<PairExample>& pairs, const Manifest& manifest) {
  std::map<std::string, const ImageRecord*> by_id;
  for (const auto& rec : manifest.images) by_id[rec.image_id] = &rec;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    auto it = by_id.find(p.image_id);
    if (it == by_id.end())
      throw ValidationError("pair " + std::to_string(i) + ": unknown image '" + p.image_id + "'");
    for (const auto* id : {&p.region_a, &p.region_b})
      if (!it->second->find_region(*id))
        throw ValidationError("pair " + std::to_string(i) + ": image '" + p.image_id +
                              "' has no region '" + *id + "'");
  }
}

}  // namespace probe3d

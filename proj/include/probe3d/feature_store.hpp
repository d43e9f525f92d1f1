#pragma once

// Feature index written by the extractors, and the on-disk cache of pooled
// region vectors (one [num_regions, C] PBT1 tensor plus a JSON sidecar per
// image and feature key).

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "probe3d/dataset.hpp"
#include "probe3d/dataset_io.hpp"
#include "probe3d/error.hpp"
#include "probe3d/pooling.hpp"
#include "probe3d/tensor_store.hpp"

namespace probe3d {

struct FeatureEntry {
  std::string image_id;
  int timestep = 0;
  LayerId layer;
  std::string file;  // relative to the index directory
  std::uint64_t channels = 0;
  std::uint64_t h = 0;
  std::uint64_t w = 0;
  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

class FeatureIndex {
 public:
  FeatureIndex() = default;
  FeatureIndex(std::string model_id, std::filesystem::path root)
      : model_id_(std::move(model_id)), root_(std::move(root)) {}

  static FeatureIndex load(const std::filesystem::path& dir) {
    const auto doc = read_json_file(dir / "index.json");
    FeatureIndex index;
    index.root_ = dir;
    try {
      index.model_id_ = doc.at("model_id").get<std::string>();
      for (const auto& e : doc.at("entries")) {
        FeatureEntry entry;
        entry.image_id = e.at("image_id").get<std::string>();
        entry.timestep = e.at("timestep").get<int>();
        entry.layer = LayerId::parse(e.at("layer").get<std::string>());
        entry.file = e.at("file").get<std::string>();
        entry.channels = e.at("channels").get<std::uint64_t>();
        entry.h = e.at("h").get<std::uint64_t>();
        entry.w = e.at("w").get<std::uint64_t>();
        index.add(std::move(entry));
      }
    } catch (const Json::exception& e) {
      throw ValidationError((dir / "index.json").string() + ": " + e.what());
    } catch (const UsageError& e) {
      throw ValidationError((dir / "index.json").string() + ": " + e.what());
    }
    return index;
  }

  void save() const {
    Json entries = Json::array();
    for (const auto& e : entries_)
      entries.push_back({{"image_id", e.image_id},
                         {"timestep", e.timestep},
                         {"layer", e.layer.str()},
                         {"file", e.file},
                         {"channels", e.channels},
                         {"h", e.h},
                         {"w", e.w}});
    write_text_file(root_ / "index.json",
                    Json{{"model_id", model_id_}, {"entries", entries}}.dump(1) + "\n");
  }

  void add(FeatureEntry entry) {
    lookup_[{entry.image_id, entry.timestep, entry.layer}] = entries_.size();
    entries_.push_back(std::move(entry));
  }

  const std::string& model_id() const { return model_id_; }
  const std::filesystem::path& root() const { return root_; }
  const std::vector<FeatureEntry>& entries() const { return entries_; }

  const FeatureEntry& find(const std::string& image_id, int timestep, LayerId layer) const {
    auto it = lookup_.find({image_id, timestep, layer});
    if (it == lookup_.end())
      throw MissingFeatureError("no feature tensor for model " + model_id_ + ", timestep " +
                                std::to_string(timestep) + ", layer " + layer.str() +
                                ", image " + image_id);
    return entries_[it->second];
  }

  Tensor read(const std::string& image_id, int timestep, LayerId layer) const {
    const auto& entry = find(image_id, timestep, layer);
    const auto path = root_ / entry.file;
    if (!std::filesystem::exists(path))
      throw MissingFeatureError("feature file " + path.string() + " missing for model " +
                                model_id_ + ", timestep " + std::to_string(timestep) +
                                ", layer " + layer.str() + ", image " + image_id);
    auto t = read_tensor(path);
    if (t.rank() != 3 || t.dim(0) != entry.channels || t.dim(1) != entry.h || t.dim(2) != entry.w)
      throw ValidationError("feature file " + path.string() + " shape disagrees with index");
    return t;
  }

 private:
  std::string model_id_;
  std::filesystem::path root_;
  std::vector<FeatureEntry> entries_;
  std::map<std::tuple<std::string, int, LayerId>, std::size_t> lookup_;
};

// All pooled region vectors of one image at one key.
struct RegionFeatureTable {
  std::vector<std::string> region_ids;
  std::size_t channels = 0;
  std::vector<float> data;  // [region_ids.size(), channels], row-major

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data).subspan(i * channels, channels);
  }

  std::span<const float> row(const std::string& region_id) const {
    for (std::size_t i = 0; i < region_ids.size(); ++i)
      if (region_ids[i] == region_id) return row(i);
    throw DataError("no pooled feature for region '" + region_id + "'");
  }
};

inline RegionFeatureTable pool_image(const Tensor& fm, const ImageRecord& record) {
  RegionFeatureTable table;
  table.channels = fm.dim(0);
  const auto vectors = pool_regions(fm, record.height, record.width, record.regions);
  for (std::size_t i = 0; i < record.regions.size(); ++i) {
    table.region_ids.push_back(record.regions[i].region_id);
    table.data.insert(table.data.end(), vectors[i].begin(), vectors[i].end());
  }
  return table;
}

class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path tensor_path(const std::string& image_id, const FeatureKey& key) const {
    return dir_for(key) / (sanitize(image_id) + ".pbt");
  }

  std::optional<RegionFeatureTable> load(const std::string& image_id,
                                         const FeatureKey& key) const {
    const auto tensor_file = tensor_path(image_id, key);
    auto sidecar = tensor_file;
    sidecar.replace_extension(".json");
    if (!std::filesystem::exists(tensor_file) || !std::filesystem::exists(sidecar))
      return std::nullopt;
    const auto t = read_tensor(tensor_file);
    const auto doc = read_json_file(sidecar);
    RegionFeatureTable table;
    table.channels = t.dim(1);
    table.region_ids.resize(t.dim(0));
    for (const auto& [id, row] : doc.at("rows").items()) {
      const auto r = row.get<std::size_t>();
      if (r >= table.region_ids.size())
        throw ValidationError(sidecar.string() + ": row out of range for region " + id);
      table.region_ids[r] = id;
    }
    const auto values = t.values<float>();
    table.data.assign(values.begin(), values.end());
    return table;
  }

  // Written via temp file + rename; racing writers of the same key produce
  // the same bytes, so the last rename wins harmlessly.
  void store(const std::string& image_id, const FeatureKey& key,
             const RegionFeatureTable& table) const {
    const auto dir = dir_for(key);
    std::filesystem::create_directories(dir);
    const auto tensor_file = tensor_path(image_id, key);
    auto sidecar = tensor_file;
    sidecar.replace_extension(".json");

    Json rows = Json::object();
    for (std::size_t i = 0; i < table.region_ids.size(); ++i) rows[table.region_ids[i]] = i;
    const auto suffix = temp_suffix();
    const auto tmp_tensor = tensor_file.string() + suffix;
    const auto tmp_sidecar = sidecar.string() + suffix;
    write_tensor(tmp_tensor, Tensor({table.region_ids.size(), table.channels}, table.data));
    write_text_file(tmp_sidecar, Json{{"rows", rows}}.dump() + "\n");
    std::filesystem::rename(tmp_sidecar, sidecar);
    std::filesystem::rename(tmp_tensor, tensor_file);
  }

 private:
  std::filesystem::path dir_for(const FeatureKey& key) const {
    return root_ / sanitize(key.model_id) / ("t" + std::to_string(key.timestep)) / key.layer.str();
  }

  static std::string sanitize(std::string s) {
    for (char& c : s)
      if (c == '/' || c == '\\' || c == ':') c = '_';
    return s;
  }

  static std::string temp_suffix() {
    static std::atomic<std::uint64_t> counter{0};
    return ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) +
           "_" + std::to_string(counter++);
  }

  std::filesystem::path root_;
};

/// Pooled vectors for one image at one key, from the cache when present;
/// otherwise pooled from the feature store and (if a cache is given) stored.
inline RegionFeatureTable ensure_pooled(const FeatureIndex& index, const FeatureCache* cache,
                                        const ImageRecord& record, int timestep, LayerId layer) {
  const FeatureKey key{index.model_id(), timestep, layer};
  if (cache) {
    if (auto hit = cache->load(record.image_id, key)) {
      if (hit->region_ids.size() == record.regions.size()) return std::move(*hit);
    }
  }
  auto table = pool_image(index.read(record.image_id, timestep, layer), record);
  if (cache) cache->store(record.image_id, key, table);
  return table;
}

}  // namespace probe3d

// probe3d command-line driver.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "probe3d/probe3d.hpp"

namespace fs = std::filesystem;
using namespace probe3d;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("not an integer: '" + s + "'");
  }
}

// "20,40,60" or "start:stop:step" (inclusive).
std::vector<int> parse_timesteps(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    if (item.find(':') != std::string::npos) {
      std::vector<std::string> parts;
      std::string p;
      std::istringstream in(item);
      while (std::getline(in, p, ':')) parts.push_back(p);
      if (parts.size() != 3) throw UsageError("timestep range must be start:stop:step");
      const int a = parse_int(parts[0]), b = parse_int(parts[1]), step = parse_int(parts[2]);
      if (step <= 0) throw UsageError("timestep step must be positive");
      for (int t = a; t <= b; t += step) out.push_back(t);
    } else {
      out.push_back(parse_int(item));
    }
  }
  if (out.empty()) throw UsageError("empty timestep list");
  return out;
}

// "E1,D3,T12" or "unet" for E1-E4,D1-D4.
std::vector<LayerId> parse_layers(const std::string& text) {
  std::vector<LayerId> out;
  for (const auto& item : split_list(text)) {
    if (item == "unet") {
      const auto& all = unet_layers();
      out.insert(out.end(), all.begin(), all.end());
    } else {
      out.push_back(LayerId::parse(item));
    }
  }
  if (out.empty()) throw UsageError("empty layer list");
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    try {
      out.push_back(parse_number(item));
    } catch (const ValidationError&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  return out;
}

// Flag values, optionally seeded from a JSON config file. A flag given on the
// command line always replaces the config value.
struct Options {
  std::string config;
  std::string property = "same_plane";
  std::string features;
  std::vector<std::string> manifests;
  std::string pairs;
  std::string train_pairs, val_pairs, test_pairs;
  std::string cache;
  std::string out;
  std::string scores;
  std::uint64_t seed = 0;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::string timesteps;
  std::string layers;
  std::string coarse_c;
  std::string fine_c;
  std::string normalization = "regions";
  double svm_tolerance = 1e-3;
  std::size_t max_candidates = 400;
  std::size_t min_pixels = kMinRegionPixels;
};

template <typename T>
void take(const Json& cfg, const char* key, T& dst, const CLI::App& app, const char* flag) {
  if (!cfg.contains(key) || app.count(flag) > 0) return;
  try {
    dst = cfg.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

// Config lists may be JSON arrays; normalise them to the flag syntax.
std::string list_value(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (!v.is_array()) throw UsageError("config list must be a string or an array");
  std::string out;
  for (const auto& item : v) {
    if (!out.empty()) out += ',';
    out += item.is_string() ? item.get<std::string>() : item.dump();
  }
  return out;
}

void apply_config(Options& o, const CLI::App& app) {
  if (o.config.empty()) return;
  const Json cfg = read_json_file(o.config);
  if (!cfg.is_object()) throw UsageError("config file must hold a JSON object");
  take(cfg, "property", o.property, app, "--property");
  take(cfg, "features", o.features, app, "--features");
  if (cfg.contains("manifest") && app.count("--manifest") == 0) {
    const auto& m = cfg.at("manifest");
    o.manifests = m.is_array() ? m.get<std::vector<std::string>>()
                               : std::vector<std::string>{m.get<std::string>()};
  }
  take(cfg, "pairs", o.pairs, app, "--pairs");
  take(cfg, "train_pairs", o.train_pairs, app, "--train-pairs");
  take(cfg, "val_pairs", o.val_pairs, app, "--val-pairs");
  take(cfg, "test_pairs", o.test_pairs, app, "--test-pairs");
  take(cfg, "cache", o.cache, app, "--cache");
  take(cfg, "out", o.out, app, "--out");
  take(cfg, "seed", o.seed, app, "--seed");
  take(cfg, "workers", o.workers, app, "--workers");
  take(cfg, "normalization", o.normalization, app, "--normalization");
  take(cfg, "svm_tolerance", o.svm_tolerance, app, "--svm-tolerance");
  take(cfg, "max_candidates", o.max_candidates, app, "--max-candidates");
  take(cfg, "min_pixels", o.min_pixels, app, "--min-pixels");
  if (cfg.contains("timesteps") && app.count("--timesteps") == 0)
    o.timesteps = list_value(cfg.at("timesteps"));
  if (cfg.contains("layers") && app.count("--layers") == 0) o.layers = list_value(cfg.at("layers"));
  if (cfg.contains("coarse_c") && app.count("--coarse-c") == 0)
    o.coarse_c = list_value(cfg.at("coarse_c"));
  if (cfg.contains("fine_c") && app.count("--fine-c") == 0) o.fine_c = list_value(cfg.at("fine_c"));
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

std::map<std::string, ImageRecord> load_images(const std::vector<std::string>& manifests,
                                               std::size_t min_pixels) {
  if (manifests.empty()) throw UsageError("--manifest is required");
  std::map<std::string, ImageRecord> images;
  for (const auto& path : manifests) {
    auto m = load_manifest(path);
    for (auto& rec : m.images) {
      rec.regions = filter_regions(std::move(rec.regions), min_pixels);
      const auto id = rec.image_id;
      if (!images.emplace(id, std::move(rec)).second)
        throw ValidationError("image '" + id + "' appears in more than one manifest");
    }
  }
  return images;
}

int cmd_synth(const Options& o) {
  require(o.out, "--out");
  SynthConfig cfg;
  if (!o.config.empty()) {
    const Json j = read_json_file(o.config);
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      try {
        if (s.contains("model_id")) cfg.model_id = s.at("model_id").get<std::string>();
        if (s.contains("train_images")) cfg.train_images = s.at("train_images").get<std::size_t>();
        if (s.contains("val_images")) cfg.val_images = s.at("val_images").get<std::size_t>();
        if (s.contains("test_images")) cfg.test_images = s.at("test_images").get<std::size_t>();
        if (s.contains("regions_per_image"))
          cfg.regions_per_image = s.at("regions_per_image").get<std::size_t>();
        if (s.contains("channels")) cfg.channels = s.at("channels").get<std::size_t>();
        if (s.contains("signal_channels"))
          cfg.signal_channels = s.at("signal_channels").get<std::size_t>();
        if (s.contains("noise_sigma")) cfg.noise_sigma = s.at("noise_sigma").get<double>();
        if (s.contains("margin")) cfg.margin = s.at("margin").get<double>();
        if (s.contains("planted_timestep"))
          cfg.planted_timestep = s.at("planted_timestep").get<int>();
        if (s.contains("planted_layer"))
          cfg.planted_layer = LayerId::parse(s.at("planted_layer").get<std::string>());
      } catch (const Json::exception& e) {
        throw UsageError(std::string("bad synth config: ") + e.what());
      }
    }
  }
  cfg.property = parse_property(o.property);
  if (!o.timesteps.empty()) cfg.timesteps = parse_timesteps(o.timesteps);
  if (!o.layers.empty()) cfg.layers = parse_layers(o.layers);
  cfg.seed = o.seed;
  const auto layout = generate(cfg, o.out);
  std::cout << "synth: wrote " << cfg.num_images() << " images, "
            << cfg.timesteps.size() * cfg.layers.size() << " feature keys to "
            << layout.root.string() << "; planted at t=" << cfg.planted_timestep << " "
            << cfg.planted_layer.str() << "\n";
  return 0;
}

int cmd_build_pairs(const Options& o) {
  require(o.out, "--out");
  if (o.manifests.size() != 1) throw UsageError("build-pairs takes exactly one --manifest");
  const auto property = parse_property(o.property);
  auto m = load_manifest(o.manifests.front());
  for (auto& rec : m.images) rec.regions = filter_regions(std::move(rec.regions), o.min_pixels);
  PairOptions opts;
  opts.max_candidates = o.max_candidates;
  const auto pairs = build_pairs(property, m.images, o.seed, opts);
  write_pairs(o.out, pairs);
  std::size_t pos = 0;
  for (const auto& p : pairs) pos += p.label;
  std::cout << "build-pairs: " << pairs.size() << " pairs (" << pos << " positive) -> " << o.out
            << "\n";
  return 0;
}

GridConfig grid_config(const Options& o, const FeatureIndex& index) {
  GridConfig cfg;
  cfg.model_id = index.model_id();
  // Without explicit axes, probe every timestep and layer the store holds.
  if (!o.timesteps.empty()) {
    cfg.timesteps = parse_timesteps(o.timesteps);
  } else {
    std::set<int> ts;
    for (const auto& e : index.entries()) ts.insert(e.timestep);
    cfg.timesteps.assign(ts.begin(), ts.end());
  }
  if (!o.layers.empty()) {
    cfg.layers = parse_layers(o.layers);
  } else {
    std::set<LayerId> ls;
    for (const auto& e : index.entries()) ls.insert(e.layer);
    cfg.layers.assign(ls.begin(), ls.end());
  }
  if (!o.coarse_c.empty()) cfg.coarse_c = parse_doubles(o.coarse_c);
  if (!o.fine_c.empty()) cfg.fine_c = parse_doubles(o.fine_c);
  cfg.normalization = parse_normalization(o.normalization);
  cfg.svm_tolerance = o.svm_tolerance;
  cfg.seed = o.seed;
  cfg.workers = std::max(1u, o.workers);
  return cfg;
}

int cmd_pool(const Options& o) {
  require(o.features, "--features");
  require(o.cache, "--cache");
  const auto index = FeatureIndex::load(o.features);
  const auto images = load_images(o.manifests, o.min_pixels);
  const auto cfg = grid_config(o, index);
  const FeatureCache cache(o.cache);
  std::size_t n = 0;
  for (int t : cfg.timesteps)
    for (const auto& layer : cfg.layers)
      for (const auto& [id, rec] : images) {
        ensure_pooled(index, &cache, rec, t, layer);
        ++n;
      }
  std::cout << "pool: " << n << " (image, key) tables in " << o.cache << "\n";
  return 0;
}

int cmd_grid(const Options& o) {
  require(o.features, "--features");
  require(o.out, "--out");
  const auto property = parse_property(o.property);
  const auto index = FeatureIndex::load(o.features);
  ProbeInputs inputs;
  inputs.index = &index;
  inputs.images = load_images(o.manifests, o.min_pixels);
  std::optional<FeatureCache> cache;
  if (!o.cache.empty()) {
    cache.emplace(o.cache);
    inputs.cache = &*cache;
  }

  auto split_path = [&](const std::string& explicit_path, const char* name) {
    if (!explicit_path.empty()) return fs::path(explicit_path);
    if (o.pairs.empty())
      throw UsageError(std::string("--pairs DIR or --") + name + "-pairs FILE is required");
    return fs::path(o.pairs) / (std::string(name) + ".jsonl");
  };
  Splits splits;
  splits.train = read_pairs(split_path(o.train_pairs, "train"));
  splits.val = read_pairs(split_path(o.val_pairs, "val"));
  splits.test = read_pairs(split_path(o.test_pairs, "test"));

  const auto cfg = grid_config(o, index);
  const auto result = run_grid(cfg, property, splits, inputs);
  emit_report(result, o.out);
  std::cout << "grid: " << to_string(property) << " best t=" << result.best.timestep << " "
            << result.best.layer.str() << " C=" << format_number(result.best.c)
            << " val_auc=" << format_number(result.best.val_auc)
            << " test_auc=" << format_number(result.test_auc) << " (" << result.cells.size()
            << " cells) -> " << o.out << "\n";
  return 0;
}

int cmd_auc(const Options& o) {
  require(o.scores, "--scores");
  std::ifstream in(o.scores);
  if (!in) throw IoError("cannot open " + o.scores);
  ScoredSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2)
      throw ValidationError(o.scores + ":" + std::to_string(lineno) + ": expected score,label");
    if (lineno == 1 && f[0] == "score") continue;
    double score, label;
    try {
      score = parse_number(f[0]);
      label = parse_number(f[1]);
    } catch (const ValidationError& e) {
      throw ValidationError(o.scores + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (label != 0.0 && label != 1.0)
      throw ValidationError(o.scores + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    set.scores.push_back(score);
    set.labels.push_back(label == 1.0);
  }
  auto text = format_number(roc_auc(set));
  if (text.find_first_of(".e") == std::string::npos) text += ".0";
  std::cout << text << "\n";
  return 0;
}

int cmd_validate(const Options& o) {
  if (o.manifests.empty() && o.pairs.empty())
    throw UsageError("validate needs --manifest and/or --pairs");
  Manifest all;
  for (const auto& path : o.manifests) {
    auto m = load_manifest(path);
    std::cout << "validate: " << path << ": " << m.images.size() << " images ok\n";
    for (auto& rec : m.images) all.images.push_back(std::move(rec));
  }
  if (!o.pairs.empty()) {
    const auto pairs = read_pairs(o.pairs);
    if (!o.manifests.empty()) validate_pairs(pairs, all);
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_image;
    for (const auto& p : pairs) (p.label ? per_image[p.image_id].first : per_image[p.image_id].second)++;
    for (const auto& [id, counts] : per_image)
      if (counts.first != counts.second)
        throw ValidationError(o.pairs + ": image '" + id + "' is unbalanced (" +
                              std::to_string(counts.first) + " positive, " +
                              std::to_string(counts.second) + " negative)");
    std::cout << "validate: " << o.pairs << ": " << pairs.size() << " pairs ok\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear probing of frozen vision features for 3D scene properties"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file; flags override its values");
    sub->add_option("--seed", o.seed, "seed for all randomness");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic store with a planted signal");
  common(synth);
  synth->add_option("--out", o.out, "output directory");
  synth->add_option("--property", o.property, "property to plant");
  synth->add_option("--timesteps", o.timesteps, "timestep axis, e.g. 120,240,360 or 20:1000:20");
  synth->add_option("--layers", o.layers, "layer axis, e.g. E1,D3 or unet");

  auto* pairs = app.add_subcommand("build-pairs", "label and balance region pairs");
  common(pairs);
  pairs->add_option("--property", o.property, "property")->required();
  pairs->add_option("--manifest", o.manifests, "manifest JSON");
  pairs->add_option("--out", o.out, "output pairs file (JSON lines)");
  pairs->add_option("--max-candidates", o.max_candidates, "candidate cap per image");
  pairs->add_option("--min-pixels", o.min_pixels, "drop regions below this size");

  auto* pool = app.add_subcommand("pool", "precompute the pooled region-feature cache");
  common(pool);
  pool->add_option("--features", o.features, "feature store directory (holds index.json)");
  pool->add_option("--manifest", o.manifests, "manifest JSON (repeatable)");
  pool->add_option("--cache", o.cache, "cache directory");
  pool->add_option("--timesteps", o.timesteps, "timestep axis");
  pool->add_option("--layers", o.layers, "layer axis");
  pool->add_option("--min-pixels", o.min_pixels, "drop regions below this size");

  auto* grid = app.add_subcommand("grid", "grid search, test evaluation and report");
  common(grid);
  grid->add_option("--property", o.property, "property");
  grid->add_option("--features", o.features, "feature store directory (holds index.json)");
  grid->add_option("--manifest", o.manifests, "manifest JSON (repeatable)");
  grid->add_option("--pairs", o.pairs, "directory with train.jsonl, val.jsonl, test.jsonl");
  grid->add_option("--train-pairs", o.train_pairs, "train pairs file");
  grid->add_option("--val-pairs", o.val_pairs, "val pairs file");
  grid->add_option("--test-pairs", o.test_pairs, "test pairs file");
  grid->add_option("--cache", o.cache, "pooled-feature cache directory");
  grid->add_option("--out", o.out, "report directory");
  grid->add_option("--workers", o.workers, "parallel grid workers");
  grid->add_option("--timesteps", o.timesteps, "timestep axis (default: all in the store)");
  grid->add_option("--layers", o.layers, "layer axis (default: all in the store)");
  grid->add_option("--coarse-c", o.coarse_c, "coarse C values");
  grid->add_option("--fine-c", o.fine_c, "fine C values");
  grid->add_option("--normalization", o.normalization, "regions | difference | none");
  grid->add_option("--svm-tolerance", o.svm_tolerance, "SMO stopping tolerance");
  grid->add_option("--min-pixels", o.min_pixels, "drop regions below this size");

  auto* auc = app.add_subcommand("auc", "ROC AUC of a score,label CSV");
  common(auc);
  auc->add_option("--scores", o.scores, "CSV of score,label rows");

  auto* validate = app.add_subcommand("validate", "schema-check manifests and pair files");
  common(validate);
  validate->add_option("--manifest", o.manifests, "manifest JSON (repeatable)");
  validate->add_option("--pairs", o.pairs, "pairs file (JSON lines)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    auto* sub = app.get_subcommands().front();
    apply_config(o, *sub);
    if (sub == synth) return cmd_synth(o);
    if (sub == pairs) return cmd_build_pairs(o);
    if (sub == pool) return cmd_pool(o);
    if (sub == grid) return cmd_grid(o);
    if (sub == auc) return cmd_auc(o);
    if (sub == validate) return cmd_validate(o);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}

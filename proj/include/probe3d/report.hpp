#pragma once

// Report artifacts for a grid run:
//   grid_result.json        full GridResult (no timing)
//   cells.csv               property,timestep,layer,C,train_auc,val_auc
//   auc_curve_<prop>.svg    best-over-C val AUC vs timestep, one polyline per layer
//   summary.csv             property,best_model_auc (test AUC at the selected cell)
//   best_model.json         SVM at the selected cell
//   timing.json             wall-clock metadata, kept apart so the rest is reproducible

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "probe3d/dataset_io.hpp"
#include "probe3d/error.hpp"
#include "probe3d/search.hpp"

namespace probe3d {

// Shortest decimal that round-trips; independent of the C locale.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf.data(), end);
}

inline std::string format_fixed(double v, int digits) {
  std::array<char, 64> buf{};
  const auto [end, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf.data(), end);
}

inline double parse_number(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("not a number: '" + s + "'");
  return v;
}

inline Json cell_to_json(const GridCell& c) {
  return {{"timestep", c.timestep},
          {"layer", c.layer.str()},
          {"C", c.c},
          {"train_auc", c.train_auc},
          {"val_auc", c.val_auc}};
}

inline GridCell cell_from_json(const Json& j) {
  GridCell c;
  c.timestep = j.at("timestep").get<int>();
  c.layer = LayerId::parse(j.at("layer").get<std::string>());
  c.c = j.at("C").get<double>();
  c.train_auc = j.at("train_auc").get<double>();
  c.val_auc = j.at("val_auc").get<double>();
  return c;
}

inline Json grid_result_to_json(const GridResult& r) {
  Json cells = Json::array();
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
  Json j{{"property", std::string(to_string(r.property))},
         {"model_id", r.model_id},
         {"cells", cells},
         {"best", cell_to_json(r.best)},
         {"test_auc", r.test_auc}};
  return j;
}

inline GridResult grid_result_from_json(const Json& j) {
  GridResult r;
  try {
    r.property = parse_property(j.at("property").get<std::string>());
    r.model_id = j.at("model_id").get<std::string>();
    for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
    r.best = cell_from_json(j.at("best"));
    r.test_auc = j.at("test_auc").get<double>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("bad grid result JSON: ") + e.what());
  } catch (const UsageError& e) {
    throw ValidationError(std::string("bad grid result JSON: ") + e.what());
  }
  return r;
}

inline std::string cells_csv(const GridResult& r) {
  std::string out = "property,timestep,layer,C,train_auc,val_auc\n";
  for (const auto& c : r.cells) {
    out += std::string(to_string(r.property)) + "," + std::to_string(c.timestep) + "," +
           c.layer.str() + "," + format_number(c.c) + "," + format_number(c.train_auc) + "," +
           format_number(c.val_auc) + "\n";
  }
  return out;
}

inline std::string summary_csv(const std::vector<GridResult>& results) {
  std::string out = "property,best_model_auc\n";
  for (const auto& r : results)
    out += std::string(to_string(r.property)) + "," + format_number(r.test_auc) + "\n";
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::vector<std::pair<Property, double>> parse_summary_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "property,best_model_auc")
    throw ValidationError("summary CSV has an unexpected header");
  std::vector<std::pair<Property, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw ValidationError("summary CSV row needs 2 fields: " + line);
    rows.emplace_back(parse_property(f[0]), parse_number(f[1]));
  }
  return rows;
}

inline std::vector<GridCell> parse_cells_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "property,timestep,layer,C,train_auc,val_auc")
    throw ValidationError("cells CSV has an unexpected header");
  std::vector<GridCell> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw ValidationError("cells CSV row needs 6 fields: " + line);
    GridCell c;
    c.timestep = static_cast<int>(parse_number(f[1]));
    c.layer = LayerId::parse(f[2]);
    c.c = parse_number(f[3]);
    c.train_auc = parse_number(f[4]);
    c.val_auc = parse_number(f[5]);
    cells.push_back(c);
  }
  return cells;
}

/// SVG line chart: for every layer, the best val AUC over C at each timestep.
inline std::string auc_curve_svg(const GridResult& r) {
  std::map<LayerId, std::map<int, double>> curves;
  int t_min = INT32_MAX, t_max = INT32_MIN;
  double auc_min = 1.0;
  for (const auto& c : r.cells) {
    auto& slot = curves[c.layer];
    auto it = slot.find(c.timestep);
    if (it == slot.end()) slot.emplace(c.timestep, c.val_auc);
    else it->second = std::max(it->second, c.val_auc);
    t_min = std::min(t_min, c.timestep);
    t_max = std::max(t_max, c.timestep);
    auc_min = std::min(auc_min, c.val_auc);
  }
  const double y_lo = std::min(0.5, std::floor(auc_min * 10.0) / 10.0);
  const double y_hi = 1.0;
  const double left = 70, right = 130, top = 40, bottom = 60;
  const double width = 720, height = 420;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](int t) {
    if (t_max == t_min) return left + pw / 2.0;
    return left + pw * (t - t_min) / double(t_max - t_min);
  };
  auto py = [&](double auc) { return top + ph * (1.0 - (auc - y_lo) / (y_hi - y_lo)); };

  static constexpr std::array<const char*, 10> palette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_fixed(width, 0) +
         "\" height=\"" + format_fixed(height, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + format_fixed(width / 2, 1) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         std::string(to_string(r.property)) + " (" + r.model_id + "): val AUC by layer</text>\n";
  // Axes.
  svg += "<line x1=\"" + format_fixed(left, 1) + "\" y1=\"" + format_fixed(top + ph, 1) +
         "\" x2=\"" + format_fixed(left + pw, 1) + "\" y2=\"" + format_fixed(top + ph, 1) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_fixed(left, 1) + "\" y1=\"" + format_fixed(top, 1) + "\" x2=\"" +
         format_fixed(left, 1) + "\" y2=\"" + format_fixed(top + ph, 1) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double auc = y_lo + (y_hi - y_lo) * k / 5.0;
    svg += "<text x=\"" + format_fixed(left - 6, 1) + "\" y=\"" + format_fixed(py(auc) + 4, 1) +
           "\" text-anchor=\"end\">" + format_fixed(auc, 2) + "</text>\n";
  }
  std::vector<int> ticks;
  for (const auto& [layer, pts] : curves)
    for (const auto& [t, _] : pts) ticks.push_back(t);
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  const std::size_t stride = std::max<std::size_t>(1, ticks.size() / 10);
  for (std::size_t k = 0; k < ticks.size(); k += stride)
    svg += "<text x=\"" + format_fixed(px(ticks[k]), 1) + "\" y=\"" +
           format_fixed(top + ph + 18, 1) + "\" text-anchor=\"middle\">" +
           std::to_string(ticks[k]) + "</text>\n";
  svg += "<text x=\"" + format_fixed(left + pw / 2, 1) + "\" y=\"" + format_fixed(height - 18, 1) +
         "\" text-anchor=\"middle\">timestep</text>\n";
  svg += "<text x=\"18\" y=\"" + format_fixed(top + ph / 2, 1) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " + format_fixed(top + ph / 2, 1) +
         ")\">val AUC</text>\n";

  std::size_t k = 0;
  for (const auto& [layer, pts] : curves) {
    const char* color = palette[k % palette.size()];
    std::string points;
    for (const auto& [t, auc] : pts) {
      if (!points.empty()) points += ' ';
      points += format_fixed(px(t), 2) + "," + format_fixed(py(auc), 2);
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    const double ly = top + 10 + 18.0 * k;
    svg += "<line x1=\"" + format_fixed(left + pw + 15, 1) + "\" y1=\"" + format_fixed(ly, 1) +
           "\" x2=\"" + format_fixed(left + pw + 40, 1) + "\" y2=\"" + format_fixed(ly, 1) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + format_fixed(left + pw + 46, 1) + "\" y=\"" + format_fixed(ly + 4, 1) +
           "\">" + layer.str() + "</text>\n";
    ++k;
  }
  svg += "</svg>\n";
  return svg;
}

inline void emit_report(const GridResult& r, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_text_file(out_dir / "grid_result.json", grid_result_to_json(r).dump(1) + "\n");
  write_text_file(out_dir / "cells.csv", cells_csv(r));
  write_text_file(out_dir / ("auc_curve_" + std::string(to_string(r.property)) + ".svg"),
                  auc_curve_svg(r));
  write_text_file(out_dir / "summary.csv", summary_csv({r}));
  if (r.best_model)
    write_text_file(out_dir / "best_model.json", svm::to_json(*r.best_model).dump(1) + "\n");
  write_text_file(out_dir / "timing.json",
                  Json{{"seconds", r.timing.seconds}, {"workers", r.timing.workers}}.dump(1) +
                      "\n");
}

}  // namespace probe3d

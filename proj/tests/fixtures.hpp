#pragma once

// Published reference numbers used as round-trip fixtures for the report
// writers: the selected Stable Diffusion cell for same_plane, and the best
// test AUC per property.

#include <utility>
#include <vector>

#include "probe3d/probe3d.hpp"

namespace fixtures {

inline probe3d::GridResult same_plane_selection() {
  probe3d::GridResult r;
  r.property = probe3d::Property::same_plane;
  r.model_id = "stable-diffusion";
  const auto d3 = probe3d::LayerId::parse("D3");
  r.cells = {{300, d3, 0.4, 0.981, 0.968},
             {360, probe3d::LayerId::parse("D2"), 1.0, 0.979, 0.955},
             {360, d3, 0.4, 0.985, 0.973}};
  r.best = r.cells.back();
  r.test_auc = 0.963;
  return r;
}

inline std::vector<std::pair<probe3d::Property, double>> best_test_auc() {
  using probe3d::Property;
  return {{Property::same_plane, 0.963}, {Property::perpendicular_plane, 0.860},
          {Property::material, 0.836},   {Property::support, 0.921},
          {Property::shadow, 0.954},     {Property::occlusion, 0.848},
          {Property::depth, 0.996}};
}

}  // namespace fixtures

#pragma once

#include <vector>

#include "retinagan/experiments.hpp"

namespace fixtures {

/// 6 patients of 280x280 phantom scans: 20 train / 4 test patches.
inline const retinagan::PreparedData& smoke_data() {
  static const retinagan::PreparedData data = retinagan::prepare_phantom_data(retinagan::smoke_data_recipe(0));
  return data;
}

/// n_patients scans of 448x448, 25 patches each, split by patient.
inline retinagan::PreparedData phantom_patches(int n_patients, std::uint64_t seed = 0) {
  retinagan::DataRecipe r;
  r.n_patients = n_patients;
  r.phantom.height = 448;
  r.phantom.width = 448;
  r.phantom.seed = seed;
  r.seed = seed;
  return retinagan::prepare_phantom_data(r);
}

inline std::vector<retinagan::PatchPair> all_pairs(const retinagan::PreparedData& d) {
  std::vector<retinagan::PatchPair> out = d.train;
  out.insert(out.end(), d.test.begin(), d.test.end());
  return out;
}

}  // namespace fixtures

#pragma once

#include <string>
#include <vector>

#include "vseg/phantom.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct DatasetEntry {
  std::string id;
  std::string image;            // NIfTI paths relative to the manifest dir
  std::string label_clean;
  std::string label_corrupted;
  std::string split;            // train | val | test
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  PhantomConfig config;
  std::vector<DatasetEntry> entries;
  std::string root;  // directory holding the manifest, set on load

  std::vector<DatasetEntry> in_split(const std::string& split) const {
    std::vector<DatasetEntry> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(e);
    return out;
  }
  std::string resolve(const std::string& rel) const {
    return root.empty() ? rel : root + "/" + rel;
  }
};

// Generates n phantoms, assigns the seeded 6:2:3 split, writes NIfTI
// triplets plus dataset.json into out_dir.
DatasetManifest make_dataset(int n_volumes, const PhantomConfig& cfg,
                             std::uint64_t seed, const std::string& out_dir);

DatasetManifest load_dataset(const std::string& manifest_path);

}  // namespace vseg

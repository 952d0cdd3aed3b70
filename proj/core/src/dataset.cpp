#include "vseg/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vseg/nifti.hpp"

namespace vseg {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json config_to_json(const PhantomConfig& cfg) {
  return ordered_json{{"dims", {cfg.dims[0], cfg.dims[1], cfg.dims[2]}},
                      {"vessels_min", cfg.vessels_min},
                      {"vessels_max", cfg.vessels_max},
                      {"radius_min", cfg.radius_min},
                      {"radius_max", cfg.radius_max},
                      {"radius_bias", cfg.radius_bias},
                      {"waypoints", cfg.waypoints},
                      {"vessel_intensity", cfg.vessel_intensity},
                      {"background_intensity", cfg.background_intensity},
                      {"noise_sigma", cfg.noise_sigma},
                      {"psf_sigma", cfg.psf_sigma},
                      {"gap_probability", cfg.gap_probability},
                      {"gap_fraction_min", cfg.gap_fraction_min},
                      {"gap_fraction_max", cfg.gap_fraction_max}};
}

PhantomConfig config_from_json(const ordered_json& j) {
  PhantomConfig cfg;
  const auto& d = j.at("dims");
  cfg.dims = {d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>(),
              d.at(2).get<std::int64_t>()};
  cfg.vessels_min = j.at("vessels_min").get<int>();
  cfg.vessels_max = j.at("vessels_max").get<int>();
  cfg.radius_min = j.at("radius_min").get<double>();
  cfg.radius_max = j.at("radius_max").get<double>();
  cfg.radius_bias = j.at("radius_bias").get<double>();
  cfg.waypoints = j.at("waypoints").get<int>();
  cfg.vessel_intensity = j.at("vessel_intensity").get<double>();
  cfg.background_intensity = j.at("background_intensity").get<double>();
  cfg.noise_sigma = j.at("noise_sigma").get<double>();
  cfg.psf_sigma = j.at("psf_sigma").get<double>();
  cfg.gap_probability = j.at("gap_probability").get<double>();
  cfg.gap_fraction_min = j.at("gap_fraction_min").get<double>();
  cfg.gap_fraction_max = j.at("gap_fraction_max").get<double>();
  return cfg;
}

}  // namespace

DatasetManifest make_dataset(int n_volumes, const PhantomConfig& cfg,
                             std::uint64_t seed, const std::string& out_dir) {
  cfg.validate();
  if (n_volumes < 3) throw ValidationError("make_dataset: need >= 3 volumes for 6:2:3");
  fs::create_directories(out_dir);

  Rng phantom_rng = stream_rng(seed, "phantom");
  const DatasetSplit split = split_6_2_3(n_volumes, phantom_rng);
  auto split_of = [&](int id) -> std::string {
    for (int i : split.train)
      if (i == id) return "train";
    for (int i : split.val)
      if (i == id) return "val";
    return "test";
  };

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.config = cfg;
  manifest.root = out_dir;

  for (int i = 0; i < n_volumes; ++i) {
    const std::uint64_t vol_seed = phantom_rng.next_u64();
    const PhantomVolumes vols = generate(cfg, vol_seed);
    DatasetEntry entry;
    entry.id = "phantom" + std::to_string(i);
    entry.image = entry.id + "_img.nii";
    entry.label_clean = entry.id + "_label.nii";
    entry.label_corrupted = entry.id + "_label_corrupt.nii";
    entry.split = split_of(i);

    VolumeHeaderInfo img_info{NiftiDatatype::f32, "synthetic vessel phantom"};
    VolumeHeaderInfo mask_info{NiftiDatatype::u8, "vessel label"};
    write_nifti(vols.intensity, out_dir + "/" + entry.image, img_info);
    write_nifti(vols.label, out_dir + "/" + entry.label_clean, mask_info);
    write_nifti(vols.corrupted, out_dir + "/" + entry.label_corrupted, mask_info);
    manifest.entries.push_back(std::move(entry));
  }

  ordered_json j;
  j["seed"] = seed;
  j["config"] = config_to_json(cfg);
  j["volumes"] = ordered_json::array();
  for (const auto& e : manifest.entries)
    j["volumes"].push_back({{"id", e.id},
                            {"image", e.image},
                            {"label_clean", e.label_clean},
                            {"label_corrupted", e.label_corrupted},
                            {"split", e.split}});
  std::ofstream out(out_dir + "/dataset.json", std::ios::trunc);
  if (!out) throw RuntimeFailure("io-failure: cannot write dataset manifest");
  out << j.dump(2) << "\n";
  return manifest;
}

DatasetManifest load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open dataset manifest: " + manifest_path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError("malformed dataset manifest: " + std::string(e.what()));
  }
  DatasetManifest manifest;
  manifest.seed = j.at("seed").get<std::uint64_t>();
  manifest.config = config_from_json(j.at("config"));
  manifest.root = fs::path(manifest_path).parent_path().string();
  for (const auto& v : j.at("volumes")) {
    DatasetEntry e;
    e.id = v.at("id").get<std::string>();
    e.image = v.at("image").get<std::string>();
    e.label_clean = v.at("label_clean").get<std::string>();
    e.label_corrupted = v.at("label_corrupted").get<std::string>();
    e.split = v.at("split").get<std::string>();
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace vseg

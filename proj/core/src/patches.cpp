#include "vseg/patches.hpp"

namespace vseg {

PatchGrid extract_grid(const std::array<std::int64_t, 3>& dims, const PatchSpec& spec) {
  spec.validate();
  for (int a = 0; a < 3; ++a)
    if (dims[a] < spec.patch[a])
      throw ValidationError("volume-smaller-than-patch: dim " + std::to_string(dims[a]) +
                            " < patch " + std::to_string(spec.patch[a]));
  PatchGrid grid;
  grid.dims = dims;
  grid.spec = spec;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t D = dims[a], P = spec.patch[a], S = spec.stride[a];
    for (std::int64_t o = 0; o + P <= D; o += S) grid.origins[a].push_back(o);
    if (grid.origins[a].back() != D - P) grid.origins[a].push_back(D - P);
  }
  return grid;
}

std::vector<PatchDraw> sample_epoch(const std::vector<PatchGrid>& grids,
                                    std::int64_t count, Rng& rng) {
  if (count <= 0) throw ValidationError("sample_epoch: count must be > 0");
  if (grids.empty()) throw ValidationError("sample_epoch: empty training set");
  std::vector<std::int64_t> cumulative;
  cumulative.reserve(grids.size());
  std::int64_t total = 0;
  for (const auto& g : grids) {
    total += g.count();
    cumulative.push_back(total);
  }
  std::vector<PatchDraw> draws;
  draws.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t pick =
        static_cast<std::int64_t>(rng.next_index(static_cast<std::uint64_t>(total)));
    std::size_t vol = 0;
    while (cumulative[vol] <= pick) ++vol;
    const std::int64_t within = pick - (vol == 0 ? 0 : cumulative[vol - 1]);
    draws.push_back({static_cast<std::int32_t>(vol), grids[vol].window(within)});
  }
  return draws;
}

std::vector<float> crop_patch(const Volume3D& v, const PatchWindow& w,
                              const std::array<std::int64_t, 3>& patch) {
  std::vector<float> out(static_cast<std::size_t>(patch[0] * patch[1] * patch[2]));
  std::size_t o = 0;
  for (std::int64_t z = 0; z < patch[2]; ++z)
    for (std::int64_t y = 0; y < patch[1]; ++y) {
      const float* row = v.data.data() +
                         v.index(w.origin[0], w.origin[1] + y, w.origin[2] + z);
      for (std::int64_t x = 0; x < patch[0]; ++x, ++o) out[o] = row[x];
    }
  return out;
}

VolumeAccumulator::VolumeAccumulator(const std::array<std::int64_t, 3>& dims,
                                     const std::array<double, 3>& spacing)
    : dims_(dims), spacing_(spacing) {
  const auto n = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  sum_.assign(n, 0.0);
  count_.assign(n, 0);
}

void VolumeAccumulator::add_patch(const PatchWindow& w,
                                  const std::array<std::int64_t, 3>& patch,
                                  const float* values) {
  std::size_t i = 0;
  for (std::int64_t z = 0; z < patch[2]; ++z)
    for (std::int64_t y = 0; y < patch[1]; ++y) {
      const std::int64_t base =
          w.origin[0] + dims_[0] * ((w.origin[1] + y) + dims_[1] * (w.origin[2] + z));
      for (std::int64_t x = 0; x < patch[0]; ++x, ++i) {
        sum_[static_cast<std::size_t>(base + x)] += values[i];
        count_[static_cast<std::size_t>(base + x)] += 1;
      }
    }
}

Volume3D VolumeAccumulator::finish() const {
  Volume3D out = make_volume(dims_[0], dims_[1], dims_[2], VolumeKind::probability);
  out.spacing = spacing_;
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    if (count_[i] < 1)
      throw ValidationError("missing-window: voxel " + std::to_string(i) +
                            " covered by no prediction");
    out.data[i] = static_cast<float>(sum_[i] / count_[i]);
  }
  return out;
}

Volume3D reassemble(const PatchGrid& grid, const std::vector<std::vector<float>>& patches,
                    const std::array<double, 3>& spacing) {
  if (static_cast<std::int64_t>(patches.size()) != grid.count())
    throw ValidationError("missing-window: got " + std::to_string(patches.size()) +
                          " patches for " + std::to_string(grid.count()) + " windows");
  VolumeAccumulator acc(grid.dims, spacing);
  for (std::int64_t i = 0; i < grid.count(); ++i)
    acc.add_patch(grid.window(i), grid.spec.patch,
                  patches[static_cast<std::size_t>(i)].data());
  return acc.finish();
}

}  // namespace vseg

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/png_io.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct OverlapMetrics {
  double dice = 0.0;
  double iou = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

// Voxel-count overlap. Empty-vs-empty counts as perfect agreement
// (dice = iou = 1).
OverlapMetrics overlap_metrics(const Volume3D& pred, const Volume3D& ref);

struct EvalReport {
  std::string method;
  std::vector<std::string> volume_ids;
  std::vector<OverlapMetrics> per_volume;
  double dice_mean = 0.0, dice_std = 0.0;  // sample std-dev (n-1); 0 for n < 2
  double iou_mean = 0.0, iou_std = 0.0;
};

EvalReport evaluate(const std::string& method, const std::vector<std::string>& ids,
                    const std::vector<Volume3D>& preds, const std::vector<Volume3D>& refs);

// Aligned plain-text table, percentages with two decimals.
std::string render_table(const std::vector<EvalReport>& reports);

// Line-delimited records, one per volume plus one aggregate per method.
std::string render_records(const std::vector<EvalReport>& reports);

struct OverlayImage {
  std::int64_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
  std::int64_t green_pixels = 0;  // over-segmentation (pred only)
  std::int64_t red_pixels = 0;    // under-segmentation (ref only)
};

// MIP-level comparison image: green = pred only, red = ref only,
// white = both, otherwise the windowed grayscale base.
OverlayImage diff_overlay(const Volume3D& pred, const Volume3D& ref,
                          const Image2D& base, Axis axis, float window_lo,
                          float window_hi);

}  // namespace vseg

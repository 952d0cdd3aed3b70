#include "vseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace vseg {

OverlapMetrics overlap_metrics(const Volume3D& pred, const Volume3D& ref) {
  if (pred.dims != ref.dims)
    throw ValidationError("dims-mismatch in overlap_metrics");
  OverlapMetrics m;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0.0f;
    const bool r = ref.data[i] != 0.0f;
    m.tp += (p && r);
    m.fp += (p && !r);
    m.fn += (!p && r);
  }
  if (m.tp + m.fp + m.fn == 0) {
    m.dice = 1.0;
    m.iou = 1.0;
  } else {
    m.dice = 2.0 * m.tp / static_cast<double>(2 * m.tp + m.fp + m.fn);
    m.iou = m.tp / static_cast<double>(m.tp + m.fp + m.fn);
  }
  return m;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& stddev) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  stddev = 0.0;
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
}

}  // namespace

EvalReport evaluate(const std::string& method, const std::vector<std::string>& ids,
                    const std::vector<Volume3D>& preds, const std::vector<Volume3D>& refs) {
  if (preds.size() != refs.size() || (ids.size() != preds.size() && !ids.empty()))
    throw ValidationError("evaluate: list-length mismatch");
  if (preds.empty()) throw ValidationError("evaluate: no volumes");
  EvalReport report;
  report.method = method;
  std::vector<double> dices, ious;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    report.volume_ids.push_back(ids.empty() ? "vol" + std::to_string(i) : ids[i]);
    report.per_volume.push_back(overlap_metrics(preds[i], refs[i]));
    dices.push_back(report.per_volume.back().dice);
    ious.push_back(report.per_volume.back().iou);
  }
  mean_std(dices, report.dice_mean, report.dice_std);
  mean_std(ious, report.iou_mean, report.iou_std);
  return report;
}

std::string render_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char buf[128];
  out << "| Method                     | Dice Co-efficient | IOU              |\n";
  out << "|----------------------------|-------------------|------------------|\n";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "| %-26s | %6.2f +/- %-6.2f | %6.2f +/- %-5.2f |\n",
                  r.method.c_str(), 100.0 * r.dice_mean, 100.0 * r.dice_std,
                  100.0 * r.iou_mean, 100.0 * r.iou_std);
    out << buf;
  }
  return out.str();
}

std::string render_records(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char buf[256];
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.per_volume.size(); ++i) {
      const auto& m = r.per_volume[i];
      std::snprintf(buf, sizeof(buf),
                    "method=%s volume=%s dice=%.6f iou=%.6f tp=%lld fp=%lld fn=%lld\n",
                    r.method.c_str(), r.volume_ids[i].c_str(), m.dice, m.iou,
                    static_cast<long long>(m.tp), static_cast<long long>(m.fp),
                    static_cast<long long>(m.fn));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "method=%s aggregate dice_mean=%.6f dice_std=%.6f iou_mean=%.6f "
                  "iou_std=%.6f\n",
                  r.method.c_str(), r.dice_mean, r.dice_std, r.iou_mean, r.iou_std);
    out << buf;
  }
  return out.str();
}

OverlayImage diff_overlay(const Volume3D& pred, const Volume3D& ref,
                          const Image2D& base, Axis axis, float window_lo,
                          float window_hi) {
  if (pred.dims != ref.dims)
    throw ValidationError("dims-mismatch in diff_overlay");
  const Image2D pred_mip = mip(pred, axis);
  const Image2D ref_mip = mip(ref, axis);
  if (pred_mip.width != base.width || pred_mip.height != base.height)
    throw ValidationError("dims-mismatch: base MIP does not match mask MIP");

  OverlayImage out;
  out.width = base.width;
  out.height = base.height;
  out.rgb.resize(static_cast<std::size_t>(3 * base.width * base.height));
  for (std::int64_t i = 0; i < base.width * base.height; ++i) {
    const bool p = pred_mip.pixels[static_cast<std::size_t>(i)] != 0.0f;
    const bool r = ref_mip.pixels[static_cast<std::size_t>(i)] != 0.0f;
    std::uint8_t* px = out.rgb.data() + 3 * i;
    if (p && !r) {
      px[0] = 0; px[1] = 255; px[2] = 0;  // over-segmentation
      out.green_pixels += 1;
    } else if (!p && r) {
      px[0] = 255; px[1] = 0; px[2] = 0;  // under-segmentation
      out.red_pixels += 1;
    } else if (p && r) {
      px[0] = px[1] = px[2] = 255;
    } else {
      const std::uint8_t g =
          window_to_u8(base.pixels[static_cast<std::size_t>(i)], window_lo, window_hi);
      px[0] = px[1] = px[2] = g;
    }
  }
  return out;
}

}  // namespace vseg

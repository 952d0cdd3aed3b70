#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "vseg/adam.hpp"
#include "vseg/checkpoint.hpp"
#include "vseg/dataset.hpp"
#include "vseg/losses.hpp"
#include "vseg/metrics.hpp"
#include "vseg/nifti.hpp"
#include "vseg/patches.hpp"

namespace vseg {

struct TrainRunConfig {
  int epochs = 50;
  int batch_size = 4;  // desk-scale default; the reference setup used 20
  std::int64_t patches_per_epoch = 8000;
  std::uint64_t seed = 0;
  bool consistency = true;
  bool branch2_supervised = true;  // branch-2 term of the supervised loss
  MssWeights mss_weights;          // resized to m when left at defaults
  FocalTverskyParams focal_tversky;
  ConsistencyCriterion consistency_crit;
  DeformationParams deformation;
  PatchSpec patches;
  double adam_lr = 1e-4;
  int checkpoint_every = 1;  // epochs
  double threshold = 0.5;
  int threads = 1;
  std::string precision = "f32";           // f32 | f64
  std::string train_labels = "corrupted";  // corrupted | clean

  void validate() const {
    if (epochs < 1) throw ValidationError("invalid-config: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("invalid-config: batch size must be >= 1");
    if (patches_per_epoch < 1)
      throw ValidationError("invalid-config: patches-per-epoch must be >= 1");
    if (precision != "f32" && precision != "f64")
      throw ValidationError("invalid-config: precision must be f32 or f64");
    if (train_labels != "corrupted" && train_labels != "clean")
      throw ValidationError("invalid-config: labels must be corrupted or clean");
    patches.validate();
    deformation.validate();
    focal_tversky.validate();
    consistency_crit.validate();
    mss_weights.validate();
  }

  // Branch 2 exists whenever anything consumes it.
  bool uses_branch2() const { return consistency || branch2_supervised; }
};

struct TrainResult {
  std::string checkpoint_best;
  std::string checkpoint_last;
  std::string log_path;
  double best_val_dice = 0.0;
  int epochs_done = 0;
};

// Full-volume inference: sliding grid, per-patch forward (finest scale),
// mean-blended reassembly, then threshold (>= maps to foreground).
template <typename T>
std::pair<Volume3D, Volume3D> predict_volume(const NetworkConfig& netcfg,
                                             const Parameters<T>& params,
                                             const Volume3D& v, const PatchSpec& spec,
                                             double threshold = 0.5) {
  const PatchGrid grid = extract_grid(v.dims, spec);
  const auto& P = spec.patch;
  const std::int64_t patch_vox = P[0] * P[1] * P[2];
  VolumeAccumulator acc(v.dims, v.spacing);

  constexpr std::int64_t kPredictBatch = 4;
  for (std::int64_t w0 = 0; w0 < grid.count(); w0 += kPredictBatch) {
    const std::int64_t nb = std::min(kPredictBatch, grid.count() - w0);
    std::vector<T> batch(static_cast<std::size_t>(nb * patch_vox));
    for (std::int64_t b = 0; b < nb; ++b) {
      const auto patch = crop_patch(v, grid.window(w0 + b), P);
      for (std::int64_t i = 0; i < patch_vox; ++i)
        batch[static_cast<std::size_t>(b * patch_vox + i)] =
            static_cast<T>(patch[static_cast<std::size_t>(i)]);
    }
    Tape<T> tape;
    auto bound = bind_parameters(tape, params, /*requires_grad=*/false);
    auto x = tape.leaf({nb, 1, P[0], P[1], P[2]}, std::move(batch), false);
    const auto out = forward(netcfg, bound, x);
    const auto& prob = out.finest().values();
    std::vector<float> patch_prob(static_cast<std::size_t>(patch_vox));
    for (std::int64_t b = 0; b < nb; ++b) {
      for (std::int64_t i = 0; i < patch_vox; ++i)
        patch_prob[static_cast<std::size_t>(i)] =
            static_cast<float>(prob[static_cast<std::size_t>(b * patch_vox + i)]);
      acc.add_patch(grid.window(w0 + b), P, patch_prob.data());
    }
  }

  Volume3D prob_volume = acc.finish();
  Volume3D mask = make_volume(v.dims[0], v.dims[1], v.dims[2], VolumeKind::binary_mask);
  mask.spacing = v.spacing;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = prob_volume.data[i] >= static_cast<float>(threshold) ? 1.0f : 0.0f;
  return {std::move(prob_volume), std::move(mask)};
}

namespace detail {

struct LoadedVolume {
  Volume3D image;
  Volume3D label;
  std::string id;
};

inline std::vector<LoadedVolume> load_split(const DatasetManifest& data,
                                            const std::string& split,
                                            const std::string& label_kind) {
  std::vector<LoadedVolume> out;
  for (const auto& e : data.in_split(split)) {
    LoadedVolume lv;
    lv.id = e.id;
    lv.image = read_nifti(data.resolve(e.image), VolumeKind::intensity);
    lv.label = read_nifti(
        data.resolve(label_kind == "clean" ? e.label_clean : e.label_corrupted),
        VolumeKind::binary_mask);
    out.push_back(std::move(lv));
  }
  return out;
}

template <typename T>
std::vector<T> to_scalar(const std::vector<float>& v) {
  return std::vector<T>(v.begin(), v.end());
}

}  // namespace detail

template <typename T>
TrainResult train_impl(const DatasetManifest& data, const TrainRunConfig& cfg,
                       const NetworkConfig& netcfg, const std::string& out_dir,
                       const std::string& resume_path = "") {
  cfg.validate();
  netcfg.validate();
  set_compute_threads(cfg.threads);
  std::filesystem::create_directories(out_dir);

  MssWeights weights = cfg.mss_weights;
  if (static_cast<int>(weights.alphas.size()) != netcfg.supervision_scales)
    weights = MssWeights::defaults_for(netcfg.supervision_scales);

  auto train_set = detail::load_split(data, "train", cfg.train_labels);
  auto val_set = detail::load_split(data, "val", cfg.train_labels);
  if (train_set.empty()) throw ValidationError("train: no training volumes in dataset");

  std::vector<PatchGrid> grids;
  for (const auto& lv : train_set) grids.push_back(extract_grid(lv.image.dims, cfg.patches));

  Parameters<T> params;
  AdamState<T> adam;
  Rng rng_patches = stream_rng(cfg.seed, "patches");
  Rng rng_deform = stream_rng(cfg.seed, "deform");
  int start_epoch = 0;
  double best_val = -1.0;

  const std::string log_path = out_dir + "/metrics.jsonl";
  std::ofstream log;
  if (resume_path.empty()) {
    params = build<T>(netcfg, cfg.seed);
    adam.init_like(params);
    adam.lr = cfg.adam_lr;
    log.open(log_path, std::ios::trunc);
  } else {
    Checkpoint<T> ckpt = load_checkpoint<T>(resume_path);
    if (ckpt.net.depth != netcfg.depth || ckpt.net.base_channels != netcfg.base_channels ||
        ckpt.net.supervision_scales != netcfg.supervision_scales ||
        ckpt.net.in_channels != netcfg.in_channels ||
        ckpt.net.out_channels != netcfg.out_channels)
      throw ValidationError("resume: checkpoint network config does not match");
    params = std::move(ckpt.params);
    adam = std::move(ckpt.adam);
    start_epoch = static_cast<int>(ckpt.epochs_done);
    best_val = ckpt.best_val_dice;
    rng_patches.set_state(ckpt.rng_states.at("patches"));
    rng_deform.set_state(ckpt.rng_states.at("deform"));
    log.open(log_path, std::ios::app);
  }
  if (!log) throw RuntimeFailure("io-failure: cannot open metrics log: " + log_path);

  const auto& P = cfg.patches.patch;
  const std::int64_t patch_vox = P[0] * P[1] * P[2];
  const bool deterministic_log = cfg.threads == 1;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&]() {
    if (deterministic_log) return 0.0;  // bit-identical logs in --threads 1 mode
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto emit = [&](int epoch, std::optional<int> batch, std::optional<double> l_sup,
                  std::optional<double> l_cons, std::optional<double> total,
                  std::optional<double> val_dice, bool skipped = false) {
    nlohmann::ordered_json rec;
    rec["epoch"] = epoch;
    rec["batch"] = batch ? nlohmann::ordered_json(*batch) : nlohmann::ordered_json();
    rec["l_sup"] = l_sup ? nlohmann::ordered_json(*l_sup) : nlohmann::ordered_json();
    rec["l_cons"] = l_cons ? nlohmann::ordered_json(*l_cons) : nlohmann::ordered_json();
    rec["total"] = total ? nlohmann::ordered_json(*total) : nlohmann::ordered_json();
    rec["val_dice"] = val_dice ? nlohmann::ordered_json(*val_dice) : nlohmann::ordered_json();
    rec["wall_s"] = wall();
    if (skipped) rec["skipped"] = true;
    log << rec.dump() << "\n";
    log.flush();
  };

  TrainResult result;
  result.log_path = log_path;
  result.checkpoint_best = out_dir + "/best.ckpt";
  result.checkpoint_last = out_dir + "/last.ckpt";

  auto save = [&](const std::string& path, int epochs_done) {
    Checkpoint<T> ckpt;
    ckpt.net = netcfg;
    ckpt.params = params;
    ckpt.adam = adam;
    ckpt.epochs_done = epochs_done;
    ckpt.best_val_dice = best_val;
    ckpt.rng_states["patches"] = rng_patches.state();
    ckpt.rng_states["deform"] = rng_deform.state();
    save_checkpoint(ckpt, path);
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto draws = sample_epoch(grids, cfg.patches_per_epoch, rng_patches);
    int batch_index = 0;
    for (std::size_t d0 = 0; d0 < draws.size(); d0 += cfg.batch_size, ++batch_index) {
      const std::int64_t nb =
          std::min<std::int64_t>(cfg.batch_size, static_cast<std::int64_t>(draws.size() - d0));

      std::vector<T> x1(static_cast<std::size_t>(nb * patch_vox));
      std::vector<T> y1(static_cast<std::size_t>(nb * patch_vox));
      for (std::int64_t b = 0; b < nb; ++b) {
        const auto& draw = draws[d0 + static_cast<std::size_t>(b)];
        const auto& lv = train_set[static_cast<std::size_t>(draw.volume)];
        const auto xp = crop_patch(lv.image, draw.window, P);
        const auto yp = crop_patch(lv.label, draw.window, P);
        for (std::int64_t i = 0; i < patch_vox; ++i) {
          x1[static_cast<std::size_t>(b * patch_vox + i)] = static_cast<T>(xp[static_cast<std::size_t>(i)]);
          y1[static_cast<std::size_t>(b * patch_vox + i)] = static_cast<T>(yp[static_cast<std::size_t>(i)]);
        }
      }

      // One deformation field per batch, sampled at patch resolution and
      // shared by all patches of the batch (one t per Eq-3 expectation
      // sample).
      std::shared_ptr<const std::vector<std::int64_t>> gather;
      std::vector<T> x2, y2;
      if (cfg.uses_branch2()) {
        const auto field =
            sample_field(P[0], P[1], P[2], cfg.deformation, rng_deform.next_u64());
        gather = gather_indices(field);
        x2.resize(x1.size());
        y2.resize(y1.size());
        for (std::int64_t b = 0; b < nb; ++b) {
          apply_gather(*gather, x1.data() + b * patch_vox, x2.data() + b * patch_vox);
          apply_gather(*gather, y1.data() + b * patch_vox, y2.data() + b * patch_vox);
        }
      }

      Tape<T> tape;
      auto bound = bind_parameters(tape, params, true);
      auto x1_t = tape.leaf({nb, 1, P[0], P[1], P[2]}, std::move(x1), false);
      auto y1_t = tape.constant({nb, 1, P[0], P[1], P[2]}, std::move(y1));
      const auto out1 = forward(netcfg, bound, x1_t);
      const auto b1 = mss_loss(out1, y1_t, weights, cfg.focal_tversky);

      Tensor<T> sup = b1.total;
      std::optional<MultiScaleOutput<T>> out2;
      if (cfg.uses_branch2()) {
        auto x2_t = tape.leaf({nb, 1, P[0], P[1], P[2]}, std::move(x2), false);
        auto y2_t = tape.constant({nb, 1, P[0], P[1], P[2]}, std::move(y2));
        out2 = forward(netcfg, bound, x2_t);
        if (cfg.branch2_supervised) {
          const auto b2 = mss_loss(*out2, y2_t, weights, cfg.focal_tversky);
          sup = supervised_loss(b1, b2);
        }
      }

      Tensor<T> total = sup;
      double cons_value = 0.0;
      if (cfg.consistency) {
        const auto cons =
            consistency_loss(out1.finest(), out2->finest(), gather, cfg.consistency_crit);
        cons_value = static_cast<double>(cons.item());
        total = total_loss(sup, cons, cfg.consistency_crit);
      }

      tape.backward(total);
      std::vector<std::vector<T>> grads;
      grads.reserve(bound.leaves.size());
      for (const auto& leaf : bound.leaves)
        grads.push_back(tape.has_grad(leaf) ? tape.grad(leaf)
                                            : std::vector<T>(leaf.size(), T(0)));
      const bool applied = adam_step(params, grads, adam);
      emit(epoch, batch_index, static_cast<double>(sup.item()), cons_value,
           static_cast<double>(total.item()), std::nullopt, !applied);
    }

    // Validation: mean full-volume Dice at the configured threshold.
    std::optional<double> val_dice;
    if (!val_set.empty()) {
      double dice_sum = 0.0;
      for (const auto& lv : val_set) {
        const auto [prob, mask] =
            predict_volume(netcfg, params, lv.image, cfg.patches, cfg.threshold);
        dice_sum += overlap_metrics(mask, lv.label).dice;
      }
      val_dice = dice_sum / static_cast<double>(val_set.size());
      if (*val_dice > best_val) {
        best_val = *val_dice;
        save(result.checkpoint_best, epoch + 1);
      }
    }
    emit(epoch, std::nullopt, std::nullopt, std::nullopt, std::nullopt, val_dice);

    if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)
      save(result.checkpoint_last, epoch + 1);
    result.epochs_done = epoch + 1;
  }

  if (val_set.empty()) save(result.checkpoint_best, result.epochs_done);
  result.best_val_dice = best_val;
  return result;
}

inline TrainResult train(const DatasetManifest& data, const TrainRunConfig& cfg,
                         const NetworkConfig& netcfg, const std::string& out_dir,
                         const std::string& resume_path = "") {
  if (cfg.precision == "f64")
    return train_impl<double>(data, cfg, netcfg, out_dir, resume_path);
  return train_impl<float>(data, cfg, netcfg, out_dir, resume_path);
}

}  // namespace vseg

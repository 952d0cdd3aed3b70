#include "vseg/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "vseg/dataset.hpp"
#include "vseg/frangi.hpp"
#include "vseg/manifest.hpp"
#include "vseg/metrics.hpp"
#include "vseg/nifti.hpp"
#include "vseg/trainer.hpp"
#include "vseg/version.hpp"

namespace vseg::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string env_name(const std::string& flag) {
  std::string name = "VSEG_";
  for (char c : flag) name += c == '-' ? '_' : static_cast<char>(std::toupper(c));
  return name;
}

// Every option gets a VSEG_<FLAG> environment override and its default
// echoed in --help.
CLI::Option* wire(CLI::Option* opt, const std::string& flag) {
  return opt->envname(env_name(flag))->capture_default_str();
}

bool parse_on_off(const std::string& v, const std::string& flag) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ValidationError("--" + flag + " must be 'on' or 'off', got '" + v + "'");
}

std::vector<std::string> list_volumes(const std::string& dir) {
  std::vector<std::string> files;
  if (!fs::is_directory(dir)) {
    if (fs::exists(dir)) return {dir};  // single file
    throw ValidationError("no such file or directory: " + dir);
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string p = e.path().string();
    if (p.ends_with(".nii") || p.ends_with(".nii.gz")) files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no NIfTI volumes found in " + dir);
  return files;
}

struct PhantomOpts {
  int n = 11;
  std::uint64_t seed = 0;
  std::string out = "data";
  PhantomConfig cfg;
  std::vector<std::int64_t> dims{96, 96, 96};
};

struct TrainOpts {
  std::string data;
  std::string out = "run";
  std::string resume;
  std::string consistency = "on";
  std::string branch2 = "on";
  std::string norm = "none";
  std::vector<std::int64_t> patch{64, 64, 64};
  std::vector<std::int64_t> stride{32, 32, 16};
  std::vector<double> mss_weights;
  TrainRunConfig cfg;
  NetworkConfig net;
};

struct PredictOpts {
  std::string checkpoint;
  std::string input;
  std::string out = "prediction";
  double threshold = 0.5;
  std::vector<std::int64_t> patch{64, 64, 64};
  std::vector<std::int64_t> stride{32, 32, 16};
  int threads = 1;
};

struct EvaluateOpts {
  std::string pred;
  std::string ref;
  std::string out;
  std::string method = "model";
};

struct DeformOpts {
  std::uint64_t seed = 0;
  std::vector<std::int64_t> dims{64, 64, 8};
  std::string out = "field";
  DeformationParams params;
};

struct FrangiOpts {
  std::string input;
  std::string out = "frangi";
  VesselnessParams params;
  std::string axis = "z";
};

struct MipOpts {
  std::string input;
  std::string out = "mip.png";
  std::string axis = "z";
  std::vector<double> window;
};

struct App {
  CLI::App app{"Deformation-aware small-vessel segmentation workbench"};
  PhantomOpts phantom;
  TrainOpts train;
  PredictOpts predict;
  EvaluateOpts evaluate;
  DeformOpts deform;
  FrangiOpts frangi;
  MipOpts mip;
  CLI::App* sub_phantom = nullptr;
  CLI::App* sub_train = nullptr;
  CLI::App* sub_predict = nullptr;
  CLI::App* sub_evaluate = nullptr;
  CLI::App* sub_deform = nullptr;
  CLI::App* sub_frangi = nullptr;
  CLI::App* sub_mip = nullptr;
};

void build_app(App& a) {
  a.app.require_subcommand(0, 1);
  a.app.set_version_flag("--version", std::string(kVersion));
  a.app.set_config("--config", "", "key=value config file; flags take precedence");
  a.app.allow_config_extras(CLI::config_extras_mode::ignore_all);

  // phantom ------------------------------------------------------------
  auto* p = a.app.add_subcommand("phantom", "Generate a synthetic vessel dataset");
  a.sub_phantom = p;
  wire(p->add_option("--n", a.phantom.n, "number of volumes"), "n");
  wire(p->add_option("--seed", a.phantom.seed, "run seed"), "seed");
  wire(p->add_option("--out", a.phantom.out, "output directory"), "out");
  wire(p->add_option("--dims", a.phantom.dims, "volume dims (x y z)")->expected(3), "dims");
  wire(p->add_option("--vessels-min", a.phantom.cfg.vessels_min, "min vessels"), "vessels-min");
  wire(p->add_option("--vessels-max", a.phantom.cfg.vessels_max, "max vessels"), "vessels-max");
  wire(p->add_option("--radius-min", a.phantom.cfg.radius_min, "min tube radius (voxels)"),
       "radius-min");
  wire(p->add_option("--radius-max", a.phantom.cfg.radius_max, "max tube radius (voxels)"),
       "radius-max");
  wire(p->add_option("--noise-sigma", a.phantom.cfg.noise_sigma, "additive noise sigma"),
       "noise-sigma");
  wire(p->add_option("--psf-sigma", a.phantom.cfg.psf_sigma, "blur sigma (voxels)"),
       "psf-sigma");
  wire(p->add_option("--gap-prob", a.phantom.cfg.gap_probability,
                     "per-segment gap probability for the corrupted labels"),
       "gap-prob");

  // train ----------------------------------------------------------------
  auto* t = a.app.add_subcommand("train", "Train the segmentation network");
  a.sub_train = t;
  wire(t->add_option("--data", a.train.data, "dataset directory or manifest path")
           ->required(),
       "data");
  wire(t->add_option("--out", a.train.out, "run output directory"), "out");
  wire(t->add_option("--resume", a.train.resume, "checkpoint to resume from"), "resume");
  wire(t->add_option("--epochs", a.train.cfg.epochs, "training epochs"), "epochs");
  wire(t->add_option("--batch", a.train.cfg.batch_size, "patches per batch"), "batch");
  wire(t->add_option("--patches-per-epoch", a.train.cfg.patches_per_epoch,
                     "random patch draws per epoch"),
       "patches-per-epoch");
  wire(t->add_option("--seed", a.train.cfg.seed, "run seed"), "seed");
  wire(t->add_option("--consistency", a.train.consistency,
                     "elastic-consistency loss (on|off)")
           ->check(CLI::IsMember({"on", "off"})),
       "consistency");
  wire(t->add_option("--branch2-supervised", a.train.branch2,
                     "supervise the deformed branch (on|off)")
           ->check(CLI::IsMember({"on", "off"})),
       "branch2-supervised");
  wire(t->add_option("--mss", a.train.net.supervision_scales,
                     "supervision scales m (1 = plain U-Net)"),
       "mss");
  wire(t->add_option("--mss-weights", a.train.mss_weights,
                     "per-scale loss weights, finest first"),
       "mss-weights");
  wire(t->add_option("--depth", a.train.net.depth, "U-Net levels"), "depth");
  wire(t->add_option("--base-channels", a.train.net.base_channels,
                     "channels at the finest level"),
       "base-channels");
  wire(t->add_option("--norm", a.train.norm, "normalization (none|batch)")
           ->check(CLI::IsMember({"none", "batch"})),
       "norm");
  wire(t->add_option("--precision", a.train.cfg.precision, "f32|f64")
           ->check(CLI::IsMember({"f32", "f64"})),
       "precision");
  wire(t->add_option("--labels", a.train.cfg.train_labels,
                     "training label set (corrupted|clean)")
           ->check(CLI::IsMember({"corrupted", "clean"})),
       "labels");
  wire(t->add_option("--lr", a.train.cfg.adam_lr, "Adam learning rate"), "lr");
  wire(t->add_option("--lambda-cons", a.train.cfg.consistency_crit.lambda,
                     "consistency loss weight"),
       "lambda-cons");
  wire(t->add_option("--ft-alpha", a.train.cfg.focal_tversky.alpha,
                     "focal-Tversky FN weight"),
       "ft-alpha");
  wire(t->add_option("--ft-beta", a.train.cfg.focal_tversky.beta,
                     "focal-Tversky FP weight"),
       "ft-beta");
  wire(t->add_option("--ft-gamma", a.train.cfg.focal_tversky.gamma,
                     "focal-Tversky exponent"),
       "ft-gamma");
  wire(t->add_option("--patch", a.train.patch, "patch size (x y z)")->expected(3), "patch");
  wire(t->add_option("--stride", a.train.stride, "patch stride (x y z)")->expected(3),
       "stride");
  wire(t->add_option("--deform-scale-min", a.train.cfg.deformation.scale_min,
                     "displacement scale lower bound"),
       "deform-scale-min");
  wire(t->add_option("--deform-scale-max", a.train.cfg.deformation.scale_max,
                     "displacement scale upper bound"),
       "deform-scale-max");
  wire(t->add_option("--deform-kernel-size", a.train.cfg.deformation.kernel_size,
                     "smoothing kernel taps"),
       "deform-kernel-size");
  wire(t->add_option("--deform-kernel-sigma", a.train.cfg.deformation.kernel_sigma,
                     "smoothing kernel sigma (pixels)"),
       "deform-kernel-sigma");
  wire(t->add_option("--threshold", a.train.cfg.threshold, "foreground threshold"),
       "threshold");
  wire(t->add_option("--checkpoint-every", a.train.cfg.checkpoint_every,
                     "checkpoint cadence (epochs)"),
       "checkpoint-every");
  wire(t->add_option("--threads", a.train.cfg.threads, "worker threads (1 = deterministic)"),
       "threads");

  // predict --------------------------------------------------------------
  auto* pr = a.app.add_subcommand("predict", "Segment a volume with a checkpoint");
  a.sub_predict = pr;
  wire(pr->add_option("--checkpoint", a.predict.checkpoint, "checkpoint path")->required(),
       "checkpoint");
  wire(pr->add_option("--input", a.predict.input, "input NIfTI volume")->required(),
       "input");
  wire(pr->add_option("--out", a.predict.out, "output directory"), "out");
  wire(pr->add_option("--threshold", a.predict.threshold, "foreground threshold"),
       "threshold");
  wire(pr->add_option("--patch", a.predict.patch, "patch size (x y z)")->expected(3),
       "patch");
  wire(pr->add_option("--stride", a.predict.stride, "patch stride (x y z)")->expected(3),
       "stride");
  wire(pr->add_option("--threads", a.predict.threads, "worker threads"), "threads");

  // evaluate ---------------------------------------------------------------
  auto* ev = a.app.add_subcommand("evaluate", "Dice/IoU report for predicted masks");
  a.sub_evaluate = ev;
  wire(ev->add_option("--pred", a.evaluate.pred, "predicted mask file or directory")
           ->required(),
       "pred");
  wire(ev->add_option("--ref", a.evaluate.ref, "reference mask file or directory")
           ->required(),
       "ref");
  wire(ev->add_option("--out", a.evaluate.out, "report directory (default: stdout only)"),
       "out");
  wire(ev->add_option("--method", a.evaluate.method, "method label for the report"),
       "method");

  // deform -----------------------------------------------------------------
  auto* de = a.app.add_subcommand("deform", "Sample a deformation field and dump it");
  a.sub_deform = de;
  wire(de->add_option("--seed", a.deform.seed, "field seed"), "seed");
  wire(de->add_option("--dims", a.deform.dims, "field dims (x y z)")->expected(3), "dims");
  wire(de->add_option("--out", a.deform.out, "output path prefix"), "out");
  wire(de->add_option("--scale-min", a.deform.params.scale_min, "scale lower bound"),
       "scale-min");
  wire(de->add_option("--scale-max", a.deform.params.scale_max, "scale upper bound"),
       "scale-max");
  wire(de->add_option("--kernel-size", a.deform.params.kernel_size, "smoothing taps"),
       "kernel-size");
  wire(de->add_option("--kernel-sigma", a.deform.params.kernel_sigma,
                      "smoothing sigma (pixels)"),
       "kernel-sigma");

  // frangi -------------------------------------------------------------------
  auto* fr = a.app.add_subcommand("frangi", "Multiscale Hessian vesselness baseline");
  a.sub_frangi = fr;
  wire(fr->add_option("--input", a.frangi.input, "input NIfTI volume")->required(),
       "input");
  wire(fr->add_option("--out", a.frangi.out, "output directory"), "out");
  wire(fr->add_option("--scales", a.frangi.params.scales, "Gaussian scales (voxels)"),
       "scales");
  wire(fr->add_option("--alpha", a.frangi.params.alpha, "plate/line sensitivity"), "alpha");
  wire(fr->add_option("--beta", a.frangi.params.beta, "blob sensitivity"), "beta");
  wire(fr->add_option("--c", a.frangi.params.c,
                      "structure sensitivity (<= 0: half max Hessian norm)"),
       "c");
  wire(fr->add_option("--threshold", a.frangi.params.mask_threshold,
                      "mask threshold (<= 0: half of max response)"),
       "threshold");
  wire(fr->add_option("--axis", a.frangi.axis, "MIP axis (x|y|z)")
           ->check(CLI::IsMember({"x", "y", "z"})),
       "axis");

  // mip ------------------------------------------------------------------------
  auto* mi = a.app.add_subcommand("mip", "Maximum-intensity projection to PNG");
  a.sub_mip = mi;
  wire(mi->add_option("--input", a.mip.input, "input NIfTI volume")->required(), "input");
  wire(mi->add_option("--out", a.mip.out, "output PNG path"), "out");
  wire(mi->add_option("--axis", a.mip.axis, "projection axis (x|y|z)")
           ->check(CLI::IsMember({"x", "y", "z"})),
       "axis");
  wire(mi->add_option("--window", a.mip.window, "intensity window (lo hi)")->expected(2),
       "window");
}

void finish_manifest(RunManifest& m, const std::string& path) {
  m.finished_at = iso8601_utc_now();
  m.version = kVersion;
  write_run_manifest(m, path);
}

int run_phantom(const PhantomOpts& o) {
  PhantomConfig cfg = o.cfg;
  cfg.dims = {o.dims[0], o.dims[1], o.dims[2]};
  RunManifest m;
  m.command = "phantom";
  m.seed = o.seed;
  m.started_at = iso8601_utc_now();
  m.resolved_config = {{"n", o.n},
                       {"seed", o.seed},
                       {"out", o.out},
                       {"dims", o.dims},
                       {"vessels_min", cfg.vessels_min},
                       {"vessels_max", cfg.vessels_max},
                       {"radius_min", cfg.radius_min},
                       {"radius_max", cfg.radius_max},
                       {"noise_sigma", cfg.noise_sigma},
                       {"psf_sigma", cfg.psf_sigma},
                       {"gap_probability", cfg.gap_probability}};
  const auto manifest = make_dataset(o.n, cfg, o.seed, o.out);
  m.artifacts.push_back(o.out + "/dataset.json");
  for (const auto& e : manifest.entries) {
    m.artifacts.push_back(o.out + "/" + e.image);
    m.artifacts.push_back(o.out + "/" + e.label_clean);
    m.artifacts.push_back(o.out + "/" + e.label_corrupted);
  }
  finish_manifest(m, o.out + "/manifest.json");
  std::cout << "wrote " << manifest.entries.size() << " phantom volumes to " << o.out
            << "\n";
  return 0;
}

int run_train(TrainOpts& o) {
  o.cfg.consistency = parse_on_off(o.consistency, "consistency");
  o.cfg.branch2_supervised = parse_on_off(o.branch2, "branch2-supervised");
  o.net.normalization =
      o.norm == "batch" ? NetworkConfig::Norm::batch : NetworkConfig::Norm::none;
  o.cfg.patches.patch = {o.patch[0], o.patch[1], o.patch[2]};
  o.cfg.patches.stride = {o.stride[0], o.stride[1], o.stride[2]};
  o.cfg.mss_weights = o.mss_weights.empty()
                          ? MssWeights::defaults_for(o.net.supervision_scales)
                          : MssWeights{o.mss_weights};
  const std::string manifest_path =
      o.data.ends_with(".json") ? o.data : o.data + "/dataset.json";
  const auto data = load_dataset(manifest_path);

  RunManifest m;
  m.command = "train";
  m.seed = o.cfg.seed;
  m.started_at = iso8601_utc_now();
  m.resolved_config = {{"data", o.data},
                       {"out", o.out},
                       {"resume", o.resume},
                       {"epochs", o.cfg.epochs},
                       {"batch", o.cfg.batch_size},
                       {"patches_per_epoch", o.cfg.patches_per_epoch},
                       {"seed", o.cfg.seed},
                       {"consistency", o.cfg.consistency},
                       {"branch2_supervised", o.cfg.branch2_supervised},
                       {"mss", o.net.supervision_scales},
                       {"mss_weights", o.cfg.mss_weights.alphas},
                       {"depth", o.net.depth},
                       {"base_channels", o.net.base_channels},
                       {"norm", o.norm},
                       {"precision", o.cfg.precision},
                       {"labels", o.cfg.train_labels},
                       {"lr", o.cfg.adam_lr},
                       {"lambda_cons", o.cfg.consistency_crit.lambda},
                       {"ft_alpha", o.cfg.focal_tversky.alpha},
                       {"ft_beta", o.cfg.focal_tversky.beta},
                       {"ft_gamma", o.cfg.focal_tversky.gamma},
                       {"patch", o.patch},
                       {"stride", o.stride},
                       {"deform_scale_min", o.cfg.deformation.scale_min},
                       {"deform_scale_max", o.cfg.deformation.scale_max},
                       {"deform_kernel_size", o.cfg.deformation.kernel_size},
                       {"deform_kernel_sigma", o.cfg.deformation.kernel_sigma},
                       {"threshold", o.cfg.threshold},
                       {"threads", o.cfg.threads}};

  const auto result = train(data, o.cfg, o.net, o.out, o.resume);
  m.artifacts = {result.checkpoint_best, result.checkpoint_last, result.log_path};
  finish_manifest(m, o.out + "/manifest.json");
  std::cout << "trained " << result.epochs_done << " epochs, best val dice "
            << result.best_val_dice << "\n";
  return 0;
}

template <typename T>
std::pair<Volume3D, Volume3D> predict_with_checkpoint(const PredictOpts& o,
                                                      const Volume3D& input,
                                                      const PatchSpec& spec) {
  const auto ckpt = load_checkpoint<T>(o.checkpoint);
  return predict_volume(ckpt.net, ckpt.params, input, spec, o.threshold);
}

int run_predict(const PredictOpts& o) {
  set_compute_threads(o.threads);
  PatchSpec spec;
  spec.patch = {o.patch[0], o.patch[1], o.patch[2]};
  spec.stride = {o.stride[0], o.stride[1], o.stride[2]};
  const Volume3D input = read_nifti(o.input, VolumeKind::intensity);

  RunManifest m;
  m.command = "predict";
  m.started_at = iso8601_utc_now();
  m.resolved_config = {{"checkpoint", o.checkpoint}, {"input", o.input},
                       {"out", o.out},               {"threshold", o.threshold},
                       {"patch", o.patch},           {"stride", o.stride},
                       {"threads", o.threads}};

  const auto [prob, mask] = checkpoint_dtype(o.checkpoint) == 0
                                ? predict_with_checkpoint<float>(o, input, spec)
                                : predict_with_checkpoint<double>(o, input, spec);

  fs::create_directories(o.out);
  write_nifti(prob, o.out + "/probability.nii", {NiftiDatatype::f32, "vessel probability"});
  write_nifti(mask, o.out + "/mask.nii", {NiftiDatatype::u8, "vessel mask"});

  const Image2D base = mip(input, Axis::z);
  float lo = base.pixels[0], hi = base.pixels[0];
  for (float v : base.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(lo < hi)) hi = lo + 1.0f;
  Volume3D empty_ref = make_volume(mask.dims[0], mask.dims[1], mask.dims[2],
                                   VolumeKind::binary_mask);
  const auto overlay = diff_overlay(mask, empty_ref, base, Axis::z, lo, hi);
  write_rgb_png(overlay.rgb, overlay.width, overlay.height, o.out + "/overlay.png");

  m.artifacts = {o.out + "/probability.nii", o.out + "/mask.nii", o.out + "/overlay.png"};
  finish_manifest(m, o.out + "/manifest.json");
  std::cout << "prediction written to " << o.out << "\n";
  return 0;
}

int run_evaluate(const EvaluateOpts& o) {
  const auto pred_files = list_volumes(o.pred);
  const auto ref_files = list_volumes(o.ref);
  if (pred_files.size() != ref_files.size())
    throw ValidationError("evaluate: " + std::to_string(pred_files.size()) +
                          " predictions vs " + std::to_string(ref_files.size()) +
                          " references");
  std::vector<Volume3D> preds, refs;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < pred_files.size(); ++i) {
    preds.push_back(read_nifti(pred_files[i], VolumeKind::binary_mask));
    refs.push_back(read_nifti(ref_files[i], VolumeKind::binary_mask));
    ids.push_back(fs::path(pred_files[i]).stem().string());
  }
  const auto report = evaluate(o.method, ids, preds, refs);
  const std::string table = render_table({report});
  std::cout << table;

  RunManifest m;
  m.command = "evaluate";
  m.started_at = iso8601_utc_now();
  m.resolved_config = {{"pred", o.pred}, {"ref", o.ref}, {"method", o.method},
                       {"out", o.out}};
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream t(o.out + "/report.txt", std::ios::trunc);
    t << table;
    std::ofstream r(o.out + "/report.records", std::ios::trunc);
    r << render_records({report});
    m.artifacts = {o.out + "/report.txt", o.out + "/report.records"};
    finish_manifest(m, o.out + "/manifest.json");
  }
  return 0;
}

int run_deform(const DeformOpts& o) {
  const auto field =
      sample_field(o.dims[0], o.dims[1], o.dims[2], o.params, o.seed);
  Volume3D dx = make_volume(o.dims[0], o.dims[1], o.dims[2], VolumeKind::intensity);
  Volume3D dy = dx;
  for (std::size_t i = 0; i < field.dx.size(); ++i) {
    dx.data[i] = static_cast<float>(field.dx[i]);
    dy.data[i] = static_cast<float>(field.dy[i]);
  }
  const fs::path prefix(o.out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  write_raw_with_sidecar(dx, o.out + "_dx.raw");
  write_raw_with_sidecar(dy, o.out + "_dy.raw");

  RunManifest m;
  m.command = "deform";
  m.seed = o.seed;
  m.started_at = iso8601_utc_now();
  m.resolved_config = {{"seed", o.seed},
                       {"dims", o.dims},
                       {"out", o.out},
                       {"scale_min", o.params.scale_min},
                       {"scale_max", o.params.scale_max},
                       {"kernel_size", o.params.kernel_size},
                       {"kernel_sigma", o.params.kernel_sigma}};
  m.artifacts = {o.out + "_dx.raw", o.out + "_dx.raw.meta", o.out + "_dy.raw",
                 o.out + "_dy.raw.meta"};
  finish_manifest(m, o.out + "_manifest.json");
  std::cout << "deformation field written to " << o.out << "_d{x,y}.raw\n";
  return 0;
}

int run_frangi(const FrangiOpts& o) {
  const Volume3D input = read_nifti(o.input, VolumeKind::intensity);
  const auto result = frangi_multiscale(input, o.params);
  fs::create_directories(o.out);
  write_nifti(result.response, o.out + "/vesselness.nii",
              {NiftiDatatype::f32, "frangi vesselness"});
  write_nifti(result.mask, o.out + "/mask.nii", {NiftiDatatype::u8, "frangi mask"});
  const auto img = mip(result.response, axis_from_string(o.axis));
  float hi = 0.0f;
  for (float v : img.pixels) hi = std::max(hi, v);
  write_mip_png(img, o.out + "/mip.png", 0.0f, hi > 0.0f ? hi : 1.0f);

  RunManifest m;
  m.command = "frangi";
  m.started_at = iso8601_utc_now();
  m.resolved_config = {{"input", o.input},
                       {"out", o.out},
                       {"scales", o.params.scales},
                       {"alpha", o.params.alpha},
                       {"beta", o.params.beta},
                       {"c", o.params.c},
                       {"threshold", o.params.mask_threshold},
                       {"threshold_used", result.threshold_used},
                       {"axis", o.axis}};
  m.artifacts = {o.out + "/vesselness.nii", o.out + "/mask.nii", o.out + "/mip.png"};
  finish_manifest(m, o.out + "/manifest.json");
  std::cout << "frangi outputs written to " << o.out << " (threshold "
            << result.threshold_used << ")\n";
  return 0;
}

int run_mip(const MipOpts& o) {
  const Volume3D input = read_nifti(o.input);
  const auto img = mip(input, axis_from_string(o.axis));
  float lo, hi;
  if (o.window.size() == 2) {
    lo = static_cast<float>(o.window[0]);
    hi = static_cast<float>(o.window[1]);
  } else {
    lo = hi = img.pixels[0];
    for (float v : img.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(lo < hi)) hi = lo + 1.0f;
  }
  const fs::path out_path(o.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_mip_png(img, o.out, lo, hi);

  RunManifest m;
  m.command = "mip";
  m.started_at = iso8601_utc_now();
  m.resolved_config = {{"input", o.input},
                       {"out", o.out},
                       {"axis", o.axis},
                       {"window", std::vector<double>{lo, hi}}};
  m.artifacts = {o.out};
  finish_manifest(m, o.out + ".manifest.json");
  std::cout << "MIP written to " << o.out << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  App a;
  build_app(a);
  try {
    a.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = a.app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (a.sub_phantom->parsed()) return run_phantom(a.phantom);
    if (a.sub_train->parsed()) return run_train(a.train);
    if (a.sub_predict->parsed()) return run_predict(a.predict);
    if (a.sub_evaluate->parsed()) return run_evaluate(a.evaluate);
    if (a.sub_deform->parsed()) return run_deform(a.deform);
    if (a.sub_frangi->parsed()) return run_frangi(a.frangi);
    if (a.sub_mip->parsed()) return run_mip(a.mip);
    std::cout << a.app.help();
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}

std::string help(const std::string& subcommand) {
  App a;
  build_app(a);
  if (subcommand.empty()) return a.app.help();
  return a.app.get_subcommand(subcommand)->help();
}

}  // namespace vseg::cli

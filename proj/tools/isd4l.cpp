#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "isd4l/dataset.hpp"
#include "isd4l/errors.hpp"
#include "isd4l/evaluation.hpp"
#include "isd4l/model.hpp"
#include "isd4l/png_io.hpp"
#include "isd4l/predictor.hpp"
#include "isd4l/sampler.hpp"

namespace {

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct CommonOpts {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string profile;  // "" or "desk"
};

struct SynthOpts {
  std::string out;
  isd4l::SynthConfig config;
};

struct SampleOpts {
  std::string manifest;
  std::string out;
  int rho = 200;
  int min_symptom_pixels = 1;
};

struct TrainOpts {
  std::string patchset;
  std::string out;
  isd4l::TrainConfig config;
  std::string loss = "focal";
};

struct PredictOpts {
  std::string model;
  std::string image;
  std::string out = ".";
  int window = 0;
  double threshold = 0.8;
  bool edge_cover = false;
};

struct LooOpts {
  std::string manifest;
  std::string out;
  isd4l::LooConfig config;
  std::string loss = "focal";
};

void add_common(CLI::App* cmd, CommonOpts& common) {
  cmd->add_option("--seed", common.seed, "Master seed; every random decision derives from it")
      ->capture_default_str();
  cmd->add_option("--threads", common.threads, "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();
  cmd->add_option("--profile", common.profile,
                  "Preset: 'desk' shrinks rho/input/epochs/window for CPU-scale runs")
      ->check(CLI::IsMember({"desk"}));
}

void add_train_flags(CLI::App* cmd, isd4l::TrainConfig& config, std::string& loss) {
  cmd->add_option("--input-size", config.input_size, "Model input side in pixels")
      ->capture_default_str();
  cmd->add_option("--epochs", config.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", config.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", config.learning_rate, "Adam learning rate")
      ->capture_default_str();
  cmd->add_option("--loss", loss, "Loss function")
      ->check(CLI::IsMember({"focal", "cross_entropy"}))
      ->capture_default_str();
  cmd->add_option("--alpha", config.loss_params.alpha, "Focal positive-class weight")
      ->capture_default_str();
  cmd->add_option("--gamma", config.loss_params.gamma, "Focal focusing exponent")
      ->capture_default_str();
  cmd->add_option("--conv-channels", config.conv_channels,
                  "Conv block widths, outermost first")
      ->capture_default_str();
  cmd->add_option("--dense-units", config.dense_units, "Hidden dense width")
      ->capture_default_str();
}

// Desk profile: values small enough for minutes-scale CPU runs while keeping
// the pipeline shape (1000x1500 images, rho=40, 64 px input, 15 epochs,
// 200 px windows). Explicit flags always win.
void apply_desk_train(const CLI::App* cmd, isd4l::TrainConfig& config) {
  if (cmd->count("--input-size") == 0) config.input_size = 64;
  if (cmd->count("--epochs") == 0) config.epochs = 15;
}

int run_synth(const SynthOpts& opts, const CommonOpts& common) {
  StageTimer timer;
  isd4l::SynthConfig config = opts.config;
  config.seed = common.seed;
  std::vector<isd4l::SynthImageStats> stats;
  const auto dataset = isd4l::generate_synthetic(config, opts.out, &stats);
  std::int64_t blob_pixels = 0;
  for (const auto& st : stats) blob_pixels += st.blob_pixels_composited;
  std::cerr << "[synth] " << dataset.images.size() << " images ("
            << dataset.diseased_count() << " diseased, " << blob_pixels
            << " lesion pixels) in " << timer.seconds() << "s\n";
  std::cout << (std::filesystem::path(opts.out) / "manifest.json").string() << "\n";
  return 0;
}

int run_sample(const SampleOpts& opts, const CommonOpts& common) {
  StageTimer load_timer;
  const auto dataset = isd4l::load_dataset(opts.manifest);
  std::cerr << "[sample] loaded " << dataset.images.size() << " images in "
            << load_timer.seconds() << "s\n";

  StageTimer timer;
  isd4l::SamplerOptions sampler_options;
  sampler_options.min_symptom_pixels = opts.min_symptom_pixels;
  const auto patchset = isd4l::generate_patchset(dataset, opts.rho, common.seed,
                                                 common.threads, sampler_options);
  const auto positives = patchset.positive_count();
  std::cerr << "[sample] " << patchset.patches.size() << " patches (rho=" << opts.rho
            << "), " << positives << " late_blight / "
            << patchset.patches.size() - positives << " healthy, in "
            << timer.seconds() << "s\n";

  StageTimer save_timer;
  isd4l::save_patchset(patchset, opts.out);
  std::cerr << "[sample] archive written in " << save_timer.seconds() << "s\n";
  std::cout << patchset.content_digest() << "\n";
  return 0;
}

int run_train(const TrainOpts& opts, const CommonOpts& common) {
  StageTimer load_timer;
  const auto patchset = isd4l::load_patchset(opts.patchset);
  std::cerr << "[train] loaded " << patchset.patches.size() << " patches in "
            << load_timer.seconds() << "s\n";

  isd4l::TrainConfig config = opts.config;
  config.seed = common.seed;
  config.loss = isd4l::loss_kind_from_string(opts.loss);

  StageTimer timer;
  const auto model = isd4l::train(patchset, config, &std::cerr);
  std::cerr << "[train] " << config.epochs << " epochs in " << timer.seconds() << "s\n";
  isd4l::save_model(model, opts.out);
  std::cout << model.weight_digest() << "\n";
  return 0;
}

int run_predict(const PredictOpts& opts, const CommonOpts& common) {
  const auto model = isd4l::load_model(opts.model);
  const auto image = isd4l::read_png(opts.image);
  const int t = opts.window > 0 ? opts.window : isd4l::default_window_side(image.height);

  StageTimer timer;
  const auto prediction = isd4l::predict_image(model, image, t, opts.threshold,
                                               common.threads, opts.edge_cover);
  std::cerr << "[predict] " << prediction.grid.windows.size() << " windows (t=" << t
            << ", stride=" << prediction.grid.stride << ") in " << timer.seconds()
            << "s\n";

  std::filesystem::create_directories(opts.out);
  const std::filesystem::path out_dir(opts.out);
  isd4l::write_heatmap_pgm(out_dir / "heatmap.pgm", prediction);
  isd4l::write_window_csv(out_dir / "windows.csv", prediction);

  nlohmann::json j;
  j["verdict"] = isd4l::to_string(prediction.verdict);
  j["max_prob"] = prediction.max_prob;
  j["threshold"] = prediction.threshold;
  j["window"] = t;
  j["grid_rows"] = prediction.grid.rows;
  j["grid_cols"] = prediction.grid.cols;
  auto& positives = j["positives"] = nlohmann::json::array();
  for (const auto& w : prediction.positives) {
    nlohmann::json entry;
    entry["row"] = w.grid_row;
    entry["col"] = w.grid_col;
    entry["top"] = w.top;
    entry["left"] = w.left;
    entry["t"] = prediction.grid.t;
    entry["prob"] = w.prob;
    positives.push_back(entry);
  }
  {
    std::ofstream out(out_dir / "prediction.json", std::ios::binary | std::ios::trunc);
    if (!out)
      throw isd4l::IoError("predictor",
                           "cannot write " + (out_dir / "prediction.json").string());
    out << j.dump(2) << "\n";
  }

  std::cout << isd4l::to_string(prediction.verdict) << " max_prob=" << prediction.max_prob
            << " threshold=" << prediction.threshold << "\n";
  return 0;
}

int run_loo(const LooOpts& opts, const CommonOpts& common) {
  StageTimer load_timer;
  const auto dataset = isd4l::load_dataset(opts.manifest);
  std::cerr << "[loo] loaded " << dataset.images.size() << " images ("
            << dataset.diseased_count() << " diseased) in " << load_timer.seconds()
            << "s\n";

  isd4l::LooConfig config = opts.config;
  config.seed = common.seed;
  config.threads = common.threads;
  config.train.seed = common.seed;
  config.train.loss = isd4l::loss_kind_from_string(opts.loss);

  StageTimer timer;
  const auto report = isd4l::run_loo(dataset, config, &std::cerr);
  std::cerr << "[loo] " << report.folds.size() << " folds in " << timer.seconds()
            << "s\n";

  std::filesystem::create_directories(opts.out);
  const std::filesystem::path out_dir(opts.out);
  isd4l::write_loo_report_json(out_dir / "loo_report.json", report);
  isd4l::write_loo_report_text(out_dir / "loo_report.txt", report);

  isd4l::write_loo_report_text(std::cout, report);
  std::cout << "\nreport digest: " << isd4l::report_digest(report) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "isd4l: patch-based late-blight detection on high-resolution field images\n"
      "(rotated-patch augmentation, focal-loss CNN, sliding-window prediction)"};
  app.require_subcommand(1);

  CommonOpts common;

  auto* synth_cmd = app.add_subcommand(
      "synth", "Generate the deterministic synthetic dataset with ground-truth masks");
  SynthOpts synth;
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--images", synth.config.image_count, "Total images")
      ->capture_default_str();
  synth_cmd->add_option("--diseased", synth.config.diseased_count, "Diseased images")
      ->capture_default_str();
  synth_cmd->add_option("--rows", synth.config.rows, "Image height (n)")
      ->capture_default_str();
  synth_cmd->add_option("--cols", synth.config.cols, "Image width (m)")
      ->capture_default_str();
  synth_cmd->add_option("--min-blobs", synth.config.min_blobs, "Min lesions per diseased image")
      ->capture_default_str();
  synth_cmd->add_option("--max-blobs", synth.config.max_blobs, "Max lesions per diseased image")
      ->capture_default_str();
  synth_cmd
      ->add_option("--min-blob-radius", synth.config.min_blob_radius,
                   "Min lesion radius, pixels")
      ->capture_default_str();
  synth_cmd
      ->add_option("--max-blob-radius", synth.config.max_blob_radius,
                   "Max lesion radius, pixels")
      ->capture_default_str();
  synth_cmd
      ->add_option("--texture-scale", synth.config.texture_scale,
                   "Noise wavelength multiplier")
      ->capture_default_str();
  add_common(synth_cmd, common);

  auto* sample_cmd = app.add_subcommand(
      "sample", "Draw random rotated patches from every image and archive them");
  SampleOpts sample;
  sample_cmd->add_option("--manifest", sample.manifest, "Dataset manifest.json")
      ->required();
  sample_cmd->add_option("--out", sample.out, "Patch-set output directory")->required();
  sample_cmd->add_option("--rho", sample.rho, "Patches per image")->capture_default_str();
  sample_cmd
      ->add_option("--min-symptom-pixels", sample.min_symptom_pixels,
                   "Symptom pixels required for a late_blight patch label")
      ->capture_default_str();
  add_common(sample_cmd, common);

  auto* train_cmd =
      app.add_subcommand("train", "Train the patch classifier on a patch-set archive");
  TrainOpts train;
  train_cmd->add_option("--patchset", train.patchset, "Patch-set directory")->required();
  train_cmd->add_option("--out", train.out, "Weight file to write (.isd4l)")->required();
  add_train_flags(train_cmd, train.config, train.loss);
  add_common(train_cmd, common);

  auto* predict_cmd = app.add_subcommand(
      "predict", "Classify a whole image with the sliding-window max rule");
  PredictOpts predict;
  predict_cmd->add_option("--model", predict.model, "Weight file")->required();
  predict_cmd->add_option("--image", predict.image, "Image PNG")->required();
  predict_cmd->add_option("--out", predict.out, "Output directory for heatmap/CSV/JSON")
      ->capture_default_str();
  predict_cmd
      ->add_option("--window", predict.window, "Window side t (0 = n/5 when valid)")
      ->capture_default_str();
  predict_cmd->add_option("--threshold", predict.threshold, "Max-rule threshold")
      ->capture_default_str();
  predict_cmd->add_flag("--edge-cover", predict.edge_cover,
                        "Append flush right/bottom windows so edges are covered");
  add_common(predict_cmd, common);

  auto* loo_cmd = app.add_subcommand(
      "loo", "Leave-one-out validation: per-fold patch accuracy plus image confusion");
  LooOpts loo;
  loo_cmd->add_option("--manifest", loo.manifest, "Dataset manifest.json")->required();
  loo_cmd->add_option("--out", loo.out, "Report output directory")->required();
  loo_cmd->add_option("--rho", loo.config.rho, "Patches per image")->capture_default_str();
  loo_cmd->add_option("--window", loo.config.window, "Window side t (0 = n/5)")
      ->capture_default_str();
  loo_cmd->add_option("--threshold", loo.config.threshold, "Max-rule threshold")
      ->capture_default_str();
  loo_cmd
      ->add_option("--min-symptom-pixels", loo.config.min_symptom_pixels,
                   "Symptom pixels required for a late_blight patch label")
      ->capture_default_str();
  add_train_flags(loo_cmd, loo.config.train, loo.loss);
  add_common(loo_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help exits clean, usage errors exit 2
  }

  try {
    if (synth_cmd->parsed()) {
      return run_synth(synth, common);
    }
    if (sample_cmd->parsed()) {
      if (common.profile == "desk" && sample_cmd->count("--rho") == 0) sample.rho = 40;
      return run_sample(sample, common);
    }
    if (train_cmd->parsed()) {
      if (common.profile == "desk") apply_desk_train(train_cmd, train.config);
      return run_train(train, common);
    }
    if (predict_cmd->parsed()) {
      if (common.profile == "desk" && predict_cmd->count("--window") == 0)
        predict.window = 200;
      return run_predict(predict, common);
    }
    if (loo_cmd->parsed()) {
      if (common.profile == "desk") {
        if (loo_cmd->count("--rho") == 0) loo.config.rho = 40;
        if (loo_cmd->count("--window") == 0) loo.config.window = 200;
        apply_desk_train(loo_cmd, loo.config.train);
      }
      return run_loo(loo, common);
    }
  } catch (const isd4l::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

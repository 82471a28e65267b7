#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "isd4l/dataset.hpp"
#include "isd4l/model.hpp"
#include "isd4l/sampler.hpp"

namespace isd4l {

struct PatchPrediction {
  int index = 0;  // position within the held-out image's rho patches
  double prob = 0.0;
  ImageLabel predicted = ImageLabel::healthy;
  ImageLabel truth = ImageLabel::healthy;
};

struct FoldResult {
  std::string held_out_id;
  double patch_accuracy = 0.0;
  ImageLabel image_truth = ImageLabel::healthy;
  ImageLabel image_verdict = ImageLabel::healthy;
  double max_prob = 0.0;
  std::vector<PatchPrediction> patch_records;
  std::string weight_digest;
  double final_epoch_loss = 0.0;
};

struct Confusion {
  int tp = 0, fn = 0, tn = 0, fp = 0;

  int total() const { return tp + fn + tn + fp; }
  double accuracy() const {
    return total() > 0 ? static_cast<double>(tp + tn) / total() : 0.0;
  }
};

struct LooConfig {
  TrainConfig train;          // per-fold seeds are derived from `seed` below
  int rho = 200;
  int window = 0;             // 0 -> n/5
  double threshold = 0.8;
  int min_symptom_pixels = 1;
  std::uint64_t seed = 0;
  int threads = 0;            // folds run in parallel; each fold is sequential
};

struct LooReport {
  std::vector<FoldResult> folds;  // ordered by held-out image id
  double mean_patch_accuracy = 0.0;
  Confusion confusion;
  int rho = 0;
  int window = 0;
  double threshold = 0.8;
  std::uint64_t seed = 0;
  std::string dataset_digest;
  std::string patchset_digest;
  TrainConfig train_config;
};

// Fraction of patches whose thresholded probability (p >= cut) matches the
// label. Throws LengthMismatch on unequal list lengths.
double patch_accuracy(const std::vector<double>& probs,
                      const std::vector<ImageLabel>& labels, double cut = 0.5);

Confusion confusion_counts(const std::vector<ImageLabel>& verdicts,
                           const std::vector<ImageLabel>& truths);

// Leave-one-out over the dataset: rho patches per image are sampled once up
// front; each fold trains on every other image's patches and evaluates both
// patch-level accuracy and the whole-image sliding-window verdict on the
// held-out image. Deterministic in (dataset digest, config, seed); folds may
// run concurrently without changing any result.
LooReport run_loo(const Dataset& dataset, const LooConfig& config,
                  std::ostream* log = nullptr);

std::string loo_report_to_json(const LooReport& report);
void write_loo_report_json(const std::filesystem::path& path, const LooReport& report);
void write_loo_report_text(std::ostream& out, const LooReport& report);
void write_loo_report_text(const std::filesystem::path& path, const LooReport& report);

// sha256 of the canonical JSON rendering.
std::string report_digest(const LooReport& report);

}  // namespace isd4l

#include "isd4l/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "isd4l/errors.hpp"
#include "isd4l/predictor.hpp"
#include "isd4l/sha256.hpp"

namespace isd4l {

double patch_accuracy(const std::vector<double>& probs,
                      const std::vector<ImageLabel>& labels, double cut) {
  if (probs.size() != labels.size())
    throw LengthMismatch("got " + std::to_string(probs.size()) + " probabilities for " +
                         std::to_string(labels.size()) + " labels");
  if (probs.empty()) throw LengthMismatch("cannot score an empty prediction list");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const ImageLabel predicted =
        probs[i] >= cut ? ImageLabel::late_blight : ImageLabel::healthy;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

Confusion confusion_counts(const std::vector<ImageLabel>& verdicts,
                           const std::vector<ImageLabel>& truths) {
  if (verdicts.size() != truths.size())
    throw LengthMismatch("got " + std::to_string(verdicts.size()) + " verdicts for " +
                         std::to_string(truths.size()) + " truths");
  Confusion c;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const bool truth_pos = truths[i] == ImageLabel::late_blight;
    const bool verdict_pos = verdicts[i] == ImageLabel::late_blight;
    if (truth_pos)
      verdict_pos ? ++c.tp : ++c.fn;
    else
      verdict_pos ? ++c.fp : ++c.tn;
  }
  return c;
}

namespace {

std::string patch_group_digest(const std::vector<const LabeledPatch*>& patches) {
  Sha256 h;
  for (const auto* p : patches) {
    h.update(p->spec.source_image_id);
    h.update(p->pixels.data);
  }
  return h.hex_digest();
}

FoldResult run_fold(const Dataset& dataset, const PatchSet& patchset,
                    const LooConfig& config, std::size_t fold, int window) {
  const FieldImage& held_out = dataset.images[fold];

  std::vector<const LabeledPatch*> train_set;
  std::vector<const LabeledPatch*> eval_set;
  train_set.reserve(patchset.patches.size());
  for (const auto& patch : patchset.patches) {
    if (patch.spec.source_image_id == held_out.id)
      eval_set.push_back(&patch);
    else
      train_set.push_back(&patch);
  }

  TrainConfig fold_config = config.train;
  fold_config.seed = derive_stream_seed(config.seed, StreamDomain::fold_training,
                                        static_cast<std::uint64_t>(fold));
  ModelState model =
      train_patches(train_set, fold_config, patch_group_digest(train_set), nullptr);

  FoldResult result;
  result.held_out_id = held_out.id;
  result.image_truth = held_out.label;
  result.weight_digest = model.weight_digest();
  result.final_epoch_loss = model.meta.epoch_losses.back();

  std::vector<double> probs;
  std::vector<ImageLabel> labels;
  probs.reserve(eval_set.size());
  labels.reserve(eval_set.size());
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const double p = predict_proba(model, eval_set[i]->pixels);
    probs.push_back(p);
    labels.push_back(eval_set[i]->label);
    result.patch_records.push_back(
        {static_cast<int>(i), p,
         p >= 0.5 ? ImageLabel::late_blight : ImageLabel::healthy,
         eval_set[i]->label});
  }
  result.patch_accuracy = patch_accuracy(probs, labels);

  // whole-image verdict; windows evaluated sequentially inside the fold so
  // fold-level parallelism stays deterministic
  const ImagePrediction pred =
      predict_image(model, held_out, window, config.threshold, 1);
  result.image_verdict = pred.verdict;
  result.max_prob = pred.max_prob;
  return result;
}

}  // namespace

LooReport run_loo(const Dataset& dataset, const LooConfig& config, std::ostream* log) {
  if (dataset.images.size() < 2)
    throw Error("evaluation", "leave-one-out needs at least 2 images");
  if (dataset.diseased_count() == 0 || dataset.healthy_count() == 0)
    throw Error("evaluation", "leave-one-out needs both classes present");
  if (config.rho < 1) throw std::invalid_argument("evaluation: rho must be >= 1");

  const int n = dataset.images[0].rows();
  for (const auto& image : dataset.images)
    if (image.rows() != n)
      throw Error("evaluation",
                  "images must share a height to share a window side (got " +
                      std::to_string(image.rows()) + " and " + std::to_string(n) + ")");
  const int window = config.window > 0 ? config.window : default_window_side(n);

  if (log) (*log) << "[loo] sampling " << config.rho << " patches per image\n";
  SamplerOptions sampler_options;
  sampler_options.min_symptom_pixels = config.min_symptom_pixels;
  const PatchSet patchset = generate_patchset(dataset, config.rho, config.seed,
                                              config.threads, sampler_options);

  LooReport report;
  report.rho = config.rho;
  report.window = window;
  report.threshold = config.threshold;
  report.seed = config.seed;
  report.dataset_digest = dataset.manifest_digest;
  report.patchset_digest = patchset.content_digest();
  report.train_config = config.train;

  const std::size_t fold_count = dataset.images.size();
  report.folds.resize(fold_count);
  std::vector<std::exception_ptr> failures(fold_count);

  auto run_one = [&](std::size_t f) {
    try {
      report.folds[f] = run_fold(dataset, patchset, config, f, window);
      if (log) {
        const auto& r = report.folds[f];
        (*log) << "[loo] fold " << r.held_out_id << " patch_acc " << r.patch_accuracy
               << " verdict " << to_string(r.image_verdict) << " (truth "
               << to_string(r.image_truth) << ", max_prob " << r.max_prob << ")\n";
      }
    } catch (const Error& e) {
      failures[f] = std::make_exception_ptr(Error(
          e.module(), "fold '" + dataset.images[f].id + "': " + e.message()));
    } catch (const std::exception& e) {
      failures[f] = std::make_exception_ptr(
          Error("evaluation", "fold '" + dataset.images[f].id + "': " + e.what()));
    }
  };

  int worker_count = config.threads > 0
                         ? config.threads
                         : static_cast<int>(std::thread::hardware_concurrency());
  worker_count = std::clamp<int>(worker_count, 1, static_cast<int>(fold_count));
  if (worker_count == 1) {
    for (std::size_t f = 0; f < fold_count; ++f) run_one(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < worker_count; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next.fetch_add(1); f < fold_count; f = next.fetch_add(1))
          run_one(f);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);

  double acc_sum = 0.0;
  std::vector<ImageLabel> verdicts, truths;
  for (const auto& fold : report.folds) {
    acc_sum += fold.patch_accuracy;
    verdicts.push_back(fold.image_verdict);
    truths.push_back(fold.image_truth);
  }
  report.mean_patch_accuracy = acc_sum / static_cast<double>(fold_count);
  report.confusion = confusion_counts(verdicts, truths);
  return report;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

std::string loo_report_to_json(const LooReport& report) {
  nlohmann::json j;
  j["rho"] = report.rho;
  j["window"] = report.window;
  j["threshold"] = report.threshold;
  j["seed"] = report.seed;
  j["dataset_digest"] = report.dataset_digest;
  j["patchset_digest"] = report.patchset_digest;
  j["mean_patch_accuracy"] = report.mean_patch_accuracy;
  j["image_accuracy"] = report.confusion.accuracy();
  j["confusion"] = {{"tp", report.confusion.tp},
                    {"fn", report.confusion.fn},
                    {"tn", report.confusion.tn},
                    {"fp", report.confusion.fp}};
  {
    nlohmann::json cfg;
    cfg["input_size"] = report.train_config.input_size;
    cfg["epochs"] = report.train_config.epochs;
    cfg["batch_size"] = report.train_config.batch_size;
    cfg["learning_rate"] = report.train_config.learning_rate;
    cfg["loss"] = to_string(report.train_config.loss);
    cfg["alpha"] = report.train_config.loss_params.alpha;
    cfg["gamma"] = report.train_config.loss_params.gamma;
    cfg["conv_channels"] = report.train_config.conv_channels;
    cfg["dense_units"] = report.train_config.dense_units;
    j["train_config"] = cfg;
  }
  auto& folds = j["folds"] = nlohmann::json::array();
  for (const auto& fold : report.folds) {
    nlohmann::json f;
    f["held_out"] = fold.held_out_id;
    f["patch_accuracy"] = fold.patch_accuracy;
    f["image_truth"] = to_string(fold.image_truth);
    f["image_verdict"] = to_string(fold.image_verdict);
    f["max_prob"] = fold.max_prob;
    f["weight_digest"] = fold.weight_digest;
    f["final_epoch_loss"] = fold.final_epoch_loss;
    auto& records = f["patches"] = nlohmann::json::array();
    for (const auto& rec : fold.patch_records) {
      records.push_back({{"index", rec.index},
                         {"prob", rec.prob},
                         {"predicted", to_string(rec.predicted)},
                         {"truth", to_string(rec.truth)}});
    }
    folds.push_back(f);
  }
  return j.dump(2) + "\n";
}

void write_loo_report_json(const std::filesystem::path& path, const LooReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("evaluation", "cannot write " + path.string());
  out << loo_report_to_json(report);
}

void write_loo_report_text(std::ostream& out, const LooReport& report) {
  char line[160];
  out << "Leave-one-out validation (rho=" << report.rho << ", window=" << report.window
      << ", threshold=" << report.threshold << ", seed=" << report.seed << ")\n\n";
  out << "fold  held-out   patch_acc  verdict      truth        max_prob\n";
  for (std::size_t i = 0; i < report.folds.size(); ++i) {
    const auto& fold = report.folds[i];
    std::snprintf(line, sizeof(line), "%4zu  %-9s  %.4f     %-11s  %-11s  %.4f\n",
                  i + 1, fold.held_out_id.c_str(), fold.patch_accuracy,
                  to_string(fold.image_verdict), to_string(fold.image_truth),
                  fold.max_prob);
    out << line;
  }
  std::snprintf(line, sizeof(line), "\nmean patch accuracy: %.4f\n",
                report.mean_patch_accuracy);
  out << line;

  const auto& c = report.confusion;
  out << "\nimage class   correct  incorrect\n";
  std::snprintf(line, sizeof(line), "late_blight   %-7d  %d\n", c.tp, c.fn);
  out << line;
  std::snprintf(line, sizeof(line), "healthy       %-7d  %d\n", c.tn, c.fp);
  out << line;
  std::snprintf(line, sizeof(line), "\nimage accuracy: %.4f (%d/%d)\n", c.accuracy(),
                c.tp + c.tn, c.total());
  out << line;
}

void write_loo_report_text(const std::filesystem::path& path, const LooReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("evaluation", "cannot write " + path.string());
  write_loo_report_text(out, report);
}

std::string report_digest(const LooReport& report) {
  return sha256_hex(loo_report_to_json(report));
}

}  // namespace isd4l

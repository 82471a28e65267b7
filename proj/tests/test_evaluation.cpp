#include "isd4l/evaluation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "isd4l/errors.hpp"
#include "isd4l/rng.hpp"
#include "isd4l/sha256.hpp"

using namespace isd4l;
namespace fs = std::filesystem;

TEST_CASE("patch_accuracy basics") {
  const std::vector<double> probs = {0.9, 0.1, 0.7, 0.2};
  const std::vector<ImageLabel> labels = {ImageLabel::late_blight, ImageLabel::healthy,
                                          ImageLabel::late_blight, ImageLabel::healthy};
  CHECK(patch_accuracy(probs, labels) == 1.0);

  // 124 of 126 correct reproduces the fold-level quantization 0.9841
  std::vector<double> many(126, 0.9);
  std::vector<ImageLabel> truth(126, ImageLabel::late_blight);
  truth[5] = ImageLabel::healthy;
  truth[77] = ImageLabel::healthy;
  const double acc = patch_accuracy(many, truth);
  CHECK(acc == doctest::Approx(124.0 / 126.0).epsilon(1e-12));
  CHECK(std::round(acc * 10000.0) / 10000.0 == doctest::Approx(0.9841));

  CHECK_THROWS_AS(patch_accuracy({0.5}, {}), LengthMismatch);
  CHECK_THROWS_AS(patch_accuracy({}, {}), LengthMismatch);
}

TEST_CASE("patch_accuracy of random predictions is near one half") {
  Xoshiro256pp rng(2);
  std::vector<double> probs(10000);
  std::vector<ImageLabel> labels(10000);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = rng.unit();
    labels[i] = rng.uniform_int(0, 1) == 1 ? ImageLabel::late_blight
                                           : ImageLabel::healthy;
  }
  CHECK(patch_accuracy(probs, labels) == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("confusion_counts reproduces the headline table") {
  std::vector<ImageLabel> truths, verdicts;
  for (int i = 0; i < 9; ++i) {  // all diseased detected
    truths.push_back(ImageLabel::late_blight);
    verdicts.push_back(ImageLabel::late_blight);
  }
  for (int i = 0; i < 12; ++i) {  // healthy correct
    truths.push_back(ImageLabel::healthy);
    verdicts.push_back(ImageLabel::healthy);
  }
  truths.push_back(ImageLabel::healthy);  // one false positive
  verdicts.push_back(ImageLabel::late_blight);

  const Confusion c = confusion_counts(verdicts, truths);
  CHECK(c.tp == 9);
  CHECK(c.fn == 0);
  CHECK(c.tn == 12);
  CHECK(c.fp == 1);
  CHECK(c.accuracy() == doctest::Approx(21.0 / 22.0).epsilon(1e-12));
  CHECK(std::round(c.accuracy() * 10000.0) / 10000.0 == doctest::Approx(0.9545));
}

TEST_CASE("confusion_counts edge cases") {
  const std::vector<ImageLabel> four = {ImageLabel::late_blight, ImageLabel::healthy,
                                        ImageLabel::late_blight, ImageLabel::healthy};
  CHECK(confusion_counts(four, four).accuracy() == 1.0);

  std::vector<ImageLabel> inverted;
  for (ImageLabel v : four)
    inverted.push_back(v == ImageLabel::healthy ? ImageLabel::late_blight
                                                : ImageLabel::healthy);
  const Confusion c = confusion_counts(inverted, four);
  CHECK(c.tp == 0);
  CHECK(c.tn == 0);
  CHECK(c.fp == 2);
  CHECK(c.fn == 2);

  CHECK_THROWS_AS(confusion_counts({ImageLabel::healthy}, {}), LengthMismatch);
}

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "isd4l_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Dataset mini_dataset(const std::string& dir_name, int images, int diseased,
                     std::uint64_t seed) {
  SynthConfig cfg;
  cfg.image_count = images;
  cfg.diseased_count = diseased;
  cfg.rows = 200;
  cfg.cols = 300;
  cfg.min_blobs = 2;
  cfg.max_blobs = 3;
  cfg.min_blob_radius = 8;
  cfg.max_blob_radius = 14;
  cfg.seed = seed;
  return generate_synthetic(cfg, fresh_dir(dir_name));
}

LooConfig mini_loo_config(std::uint64_t seed) {
  LooConfig config;
  config.rho = 4;
  config.threshold = 0.8;
  config.seed = seed;
  config.train.input_size = 16;
  config.train.epochs = 2;
  config.train.batch_size = 4;
  config.train.conv_channels = {4, 8};
  config.train.dense_units = 8;
  return config;
}

}  // namespace

TEST_CASE("run_loo covers every image exactly once and is internally consistent") {
  const Dataset ds = mini_dataset("loo_mini", 4, 2, 51);
  const LooConfig config = mini_loo_config(3);
  const LooReport report = run_loo(ds, config);

  REQUIRE(report.folds.size() == 4);
  CHECK(report.window == 40);  // 200 / 5

  std::set<std::string> held_out;
  for (const auto& fold : report.folds) held_out.insert(fold.held_out_id);
  CHECK(held_out.size() == 4);
  for (const auto& image : ds.images) CHECK(held_out.count(image.id) == 1);
  for (std::size_t i = 1; i < report.folds.size(); ++i)
    CHECK(report.folds[i - 1].held_out_id < report.folds[i].held_out_id);

  // accuracies recomputable from the shipped per-patch records
  double acc_sum = 0.0;
  for (const auto& fold : report.folds) {
    REQUIRE(fold.patch_records.size() == 4);  // rho records per fold
    int correct = 0;
    for (const auto& rec : fold.patch_records) {
      CHECK(rec.predicted == (rec.prob >= 0.5 ? ImageLabel::late_blight
                                              : ImageLabel::healthy));
      if (rec.predicted == rec.truth) ++correct;
    }
    CHECK(fold.patch_accuracy == doctest::Approx(correct / 4.0).epsilon(1e-12));
    acc_sum += fold.patch_accuracy;
  }
  CHECK(report.mean_patch_accuracy == doctest::Approx(acc_sum / 4.0).epsilon(1e-12));

  // confusion recomputable from fold verdicts
  std::vector<ImageLabel> verdicts, truths;
  for (const auto& fold : report.folds) {
    verdicts.push_back(fold.image_verdict);
    truths.push_back(fold.image_truth);
  }
  const Confusion c = confusion_counts(verdicts, truths);
  CHECK(c.tp == report.confusion.tp);
  CHECK(c.fn == report.confusion.fn);
  CHECK(c.tn == report.confusion.tn);
  CHECK(c.fp == report.confusion.fp);
  CHECK(c.tp + c.fn == ds.diseased_count());
  CHECK(c.tn + c.fp == ds.healthy_count());
}

TEST_CASE("run_loo is deterministic and thread-count invariant") {
  const Dataset ds = mini_dataset("loo_det", 3, 1, 77);
  LooConfig config = mini_loo_config(9);

  config.threads = 1;
  const std::string d1 = report_digest(run_loo(ds, config));
  config.threads = 2;
  const std::string d2 = report_digest(run_loo(ds, config));
  CHECK(d1 == d2);

  config.seed = 10;
  const std::string d3 = report_digest(run_loo(ds, config));
  CHECK(d1 != d3);
}

TEST_CASE("run_loo minimal two-image dataset") {
  const Dataset ds = mini_dataset("loo_two", 2, 1, 13);
  LooConfig config = mini_loo_config(5);
  config.rho = 1;  // each fold trains on a single patch
  const LooReport report = run_loo(ds, config);
  REQUIRE(report.folds.size() == 2);
  for (const auto& fold : report.folds) CHECK(fold.patch_records.size() == 1);
}

TEST_CASE("run_loo validates its preconditions") {
  const Dataset one = mini_dataset("loo_one", 1, 1, 15);
  CHECK_THROWS_AS(run_loo(one, mini_loo_config(1)), Error);
  const Dataset single_class = mini_dataset("loo_single_class", 3, 0, 19);
  CHECK_THROWS_AS(run_loo(single_class, mini_loo_config(1)), Error);
}

TEST_CASE("loo report writers and digest") {
  const Dataset ds = mini_dataset("loo_report", 2, 1, 23);
  LooConfig config = mini_loo_config(7);
  config.rho = 2;
  const LooReport report = run_loo(ds, config);

  const auto dir = fresh_dir("loo_report_out");
  write_loo_report_json(dir / "loo_report.json", report);
  write_loo_report_text(dir / "loo_report.txt", report);

  std::ifstream jf(dir / "loo_report.json");
  REQUIRE(jf.good());
  nlohmann::json parsed;
  jf >> parsed;
  CHECK(parsed.at("folds").size() == 2);
  CHECK(parsed.at("confusion").at("tp").get<int>() == report.confusion.tp);
  CHECK(parsed.at("patchset_digest").get<std::string>() == report.patchset_digest);

  CHECK(report_digest(report) == sha256_hex(loo_report_to_json(report)));

  std::ifstream tf(dir / "loo_report.txt");
  std::stringstream text;
  text << tf.rdbuf();
  CHECK(text.str().find("mean patch accuracy") != std::string::npos);
  CHECK(text.str().find("late_blight") != std::string::npos);
}

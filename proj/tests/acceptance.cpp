// Acceptance suite: runs every contract criterion end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "isd4l/dataset.hpp"
#include "isd4l/errors.hpp"
#include "isd4l/evaluation.hpp"
#include "isd4l/geometry.hpp"
#include "isd4l/model.hpp"
#include "isd4l/predictor.hpp"
#include "isd4l/rng.hpp"
#include "isd4l/sampler.hpp"
#include "isd4l/sha256.hpp"

#include "raster_oracle.hpp"

using namespace isd4l;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

int g_failures = 0;

void run_criterion(const std::string& label, const std::function<void(Outcome&)>& body) {
  Outcome outcome;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(outcome);
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.note(std::string("exception: ") + e.what());
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!outcome.pass) ++g_failures;
  std::printf("%s  %s  [%.1fs]%s%s\n", outcome.pass ? "PASS" : "FAIL", label.c_str(),
              seconds, outcome.detail.empty() ? "" : "  -- ", outcome.detail.c_str());
  std::fflush(stdout);
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "isd4l_acceptance";
  fs::create_directories(dir);
  return dir;
}

// --------------------------------------------------------------------------
// 1. window-count reproduction
// --------------------------------------------------------------------------

void criterion_windows(Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  const WindowGrid grid = enumerate_windows(4000, 6000, 800);
  out.require(grid.windows.size() == 117,
              "expected 117 windows, got " + std::to_string(grid.windows.size()));
  std::set<std::pair<int, int>> coords(grid.windows.begin(), grid.windows.end());
  bool exact = coords.size() == 117;
  for (int i = 0; i <= 8 && exact; ++i)
    for (int j = 0; j <= 12 && exact; ++j) exact = coords.count({400 * i, 400 * j}) == 1;
  out.require(exact, "coordinates differ from {(400i, 400j)}");
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.require(seconds < 1.0, "enumeration took too long");
}

// --------------------------------------------------------------------------
// 2. focal-loss identities
// --------------------------------------------------------------------------

void criterion_focal_identities(Outcome& out) {
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double p = (i + 0.5) / 1000.0;
    for (int c : {0, 1}) {
      const double weight = c == 1 ? 0.5 : 0.5;
      const double diff =
          std::abs(focal_loss(p, c, {0.5, 0.0}) - weight * cross_entropy(p, c));
      worst = std::max(worst, diff);
    }
  }
  out.require(worst <= 1e-12,
              "gamma=0 reduction max deviation " + std::to_string(worst));

  const double spot = focal_loss(0.5, 1, {0.5, 2.0});
  out.require(std::abs(spot - 0.086643) <= 1e-6,
              "spot value " + std::to_string(spot) + " != 0.086643 +- 1e-6");
}

// --------------------------------------------------------------------------
// 3. gradient correctness
// --------------------------------------------------------------------------

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

void criterion_gradients(Outcome& out) {
  // analytic loss gradients vs central differences
  Xoshiro256pp rng(414);
  const double h = 1e-5;
  double worst_loss = 0.0;
  for (int i = 0; i < 150; ++i) {
    const double p = 0.02 + 0.96 * rng.unit();
    const int c = static_cast<int>(rng.uniform_int(0, 1));
    const double gammas[] = {0.5, 1.0, 2.0};
    const LossParams params{0.25 + 0.5 * rng.unit(), gammas[rng.uniform_int(0, 2)]};
    for (LossKind kind : {LossKind::focal, LossKind::cross_entropy}) {
      const double analytic = loss_grad(kind, p, c, params);
      const double fd =
          (loss_value(kind, p + h, c, params) - loss_value(kind, p - h, c, params)) /
          (2 * h);
      worst_loss = std::max(worst_loss, rel_err(analytic, fd));
    }
  }
  out.require(worst_loss < 1e-4,
              "loss-gradient max relative error " + std::to_string(worst_loss));

  // full-network weight gradients on the 8x8 micro net, double precision
  NetworkArch arch;
  arch.input_size = 8;
  arch.conv_channels = {4, 8};
  arch.dense_units = 8;

  double worst_net = 0.0;
  for (int config_index = 0; config_index < 100; ++config_index) {
    Network<double> net(arch);
    Xoshiro256pp crng(1000 + config_index);
    net.init_he_uniform(crng);
    auto ws = net.make_workspace();
    std::vector<double> input(3 * 8 * 8);
    for (auto& v : input) v = crng.unit();
    const int label = static_cast<int>(crng.uniform_int(0, 1));
    const LossKind kind =
        config_index % 2 == 0 ? LossKind::focal : LossKind::cross_entropy;
    const LossParams params{0.5, 2.0};

    auto loss_at = [&]() {
      const double p = sigmoid(net.forward(input, ws));
      return loss_value(kind, p, label, params);
    };
    std::vector<double> grad(net.weight_count(), 0.0);
    const double p = sigmoid(net.forward(input, ws));
    net.backward(input, ws, loss_grad(kind, p, label, params) * p * (1.0 - p), grad);

    auto& weights = net.weights();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double keep = weights[i];
      weights[i] = keep + h;
      const double up = loss_at();
      weights[i] = keep - h;
      const double down = loss_at();
      weights[i] = keep;
      worst_net = std::max(worst_net, rel_err(grad[i], (up - down) / (2 * h)));
    }
  }
  out.require(worst_net < 1e-4,
              "network-gradient max relative error " + std::to_string(worst_net));
  out.note("loss max rel " + std::to_string(worst_loss) + ", net max rel " +
           std::to_string(worst_net));
}

// --------------------------------------------------------------------------
// 4. geometry oracle
// --------------------------------------------------------------------------

void criterion_geometry_oracle(Outcome& out) {
  const std::vector<std::pair<int, int>> sizes = {{50, 50},   {80, 50},  {113, 80},
                                                  {160, 120}, {197, 130}, {200, 200}};
  double worst = 0.0;
  for (const auto& [w, h] : sizes) {
    for (int k = 0; k < 32; ++k) {
      const double theta = -M_PI + k * (M_PI / 16.0);
      const auto cmp = isd4l_test::compare_inscribed(w, h, theta);
      out.require(cmp.feasible, "closed form infeasible at w=" + std::to_string(w) +
                                    " h=" + std::to_string(h) +
                                    " theta=" + std::to_string(theta));
      out.require(cmp.area_in_bounds, "area out of bounds at w=" + std::to_string(w) +
                                          " h=" + std::to_string(h) +
                                          " theta=" + std::to_string(theta));
      worst = std::max(worst, cmp.side_deviation);
    }
    out.require(max_inscribed_rect(w, h, 0.0) == InscribedRect{w, h},
                "theta=0 not exact");
    out.require(max_inscribed_rect(w, h, M_PI / 2) == InscribedRect{h, w},
                "theta=pi/2 not exact");
  }
  out.require(worst <= 1.0,
              "max per-side deviation " + std::to_string(worst) + " px");
  out.note("max per-side deviation " + std::to_string(worst) + " px over 192 cases");
}

// --------------------------------------------------------------------------
// 5. sampler faithfulness
// --------------------------------------------------------------------------

void criterion_sampler(Outcome& out) {
  const int rows = 4000, cols = 6000;
  const int draws = 100000;
  XoshiroSource rng(777);

  std::vector<int> theta_bins(32, 0);
  double theta_sum = 0.0;
  int t_out_of_range = 0, oob_corners = 0;

  for (int i = 0; i < draws; ++i) {
    const PatchSpec spec = draw_patch_spec(rng, rows, cols);
    if (spec.t < 600 || spec.t > 1000) ++t_out_of_range;
    theta_sum += spec.theta;
    int bin = static_cast<int>((spec.theta + M_PI) / (2.0 * M_PI) * 32.0);
    bin = std::clamp(bin, 0, 31);
    ++theta_bins[bin];

    // independent corner containment: affine map + convex source rectangle
    const auto rect = max_inscribed_rect(cols, rows, spec.theta);
    const double cs = std::cos(spec.theta), sn = std::sin(spec.theta);
    for (const auto& [rx, ry] :
         {std::pair<double, double>{spec.x, spec.y},
          {spec.x + double(spec.t), spec.y},
          {spec.x, spec.y + double(spec.t)},
          {spec.x + double(spec.t), spec.y + double(spec.t)}}) {
      const double dx = rx - rect.width / 2.0, dy = ry - rect.height / 2.0;
      const double sx = cols / 2.0 + cs * dx + sn * dy;
      const double sy = rows / 2.0 - sn * dx + cs * dy;
      if (sx < -1e-6 || sx > cols + 1e-6 || sy < -1e-6 || sy > rows + 1e-6)
        ++oob_corners;
    }
  }

  out.require(t_out_of_range == 0,
              std::to_string(t_out_of_range) + " draws violated t in [600, 1000]");
  out.require(oob_corners == 0,
              std::to_string(oob_corners) + " corners landed outside the source");

  const double mean_theta = theta_sum / draws;
  out.require(std::abs(mean_theta) < 0.02,
              "theta mean " + std::to_string(mean_theta) + " not ~0");

  // chi-square against uniform, 31 dof; 61.098 is the p = 0.001 critical value
  const double expected = draws / 32.0;
  double chi2 = 0.0;
  for (int count : theta_bins) {
    const double d = count - expected;
    chi2 += d * d / expected;
  }
  out.require(chi2 < 61.098, "theta chi-square " + std::to_string(chi2) +
                                 " >= 61.098 (p <= 0.001)");
  out.note("theta chi2 " + std::to_string(chi2) + ", mean " +
           std::to_string(mean_theta));
}

// --------------------------------------------------------------------------
// 6. threshold rule
// --------------------------------------------------------------------------

void criterion_threshold(Outcome& out) {
  WindowGrid grid = enumerate_windows(1000, 1500, 200);
  std::vector<double> probs(grid.windows.size(), 0.3);
  probs[57] = 0.79;
  const ImagePrediction below = aggregate_windows(grid, probs, 0.8);
  out.require(below.verdict == ImageLabel::healthy, "max 0.79 must stay healthy");
  out.require(below.positives.empty(), "no window may be positive at 0.79");

  probs[57] = 0.80;
  const ImagePrediction at = aggregate_windows(grid, probs, 0.8);
  out.require(at.verdict == ImageLabel::late_blight,
              "max 0.80 must be late_blight (inclusive threshold)");
  out.require(at.positives.size() == 1 && at.positives[0].prob == 0.80,
              "exactly the 0.80 window must be positive");
}

// --------------------------------------------------------------------------
// 7 + 8. end-to-end synthetic LOO, determinism, thread invariance
// --------------------------------------------------------------------------

struct LooArtifacts {
  LooReport report;
  double seconds = 0.0;
};

LooArtifacts run_acceptance_loo(const Dataset& ds, int threads) {
  LooConfig config;
  config.rho = 40;
  config.window = 200;
  config.threshold = 0.8;
  config.seed = 7;
  config.threads = threads;
  config.train.input_size = 64;
  config.train.epochs = 15;
  config.train.batch_size = 32;
  config.train.learning_rate = 1e-3;
  config.train.loss = LossKind::focal;
  config.train.loss_params = {0.5, 2.0};
  config.train.conv_channels = {8, 16, 32, 64};
  config.train.dense_units = 32;

  const auto start = std::chrono::steady_clock::now();
  LooArtifacts artifacts;
  artifacts.report = run_loo(ds, config, &std::cerr);
  artifacts.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return artifacts;
}

Dataset acceptance_dataset() {
  const auto dir = work_dir() / "synth22";
  SynthConfig cfg;  // defaults: 22 images, 9 diseased, 1000x1500
  cfg.seed = 7;
  return generate_synthetic(cfg, dir);
}

void criteria_loo(Outcome& out7, Outcome& out8) {
  const Dataset ds = acceptance_dataset();

  const LooArtifacts a = run_acceptance_loo(ds, 0);
  const auto& c = a.report.confusion;
  out7.require(c.tp == 9 && c.fn == 0,
               "diseased row TP=" + std::to_string(c.tp) + " FN=" + std::to_string(c.fn));
  out7.require(c.fp <= 2, "FP=" + std::to_string(c.fp) + " exceeds 2");
  out7.require(a.report.mean_patch_accuracy >= 0.90,
               "mean patch accuracy " + std::to_string(a.report.mean_patch_accuracy));
  out7.require(a.seconds <= 1200.0,
               "runtime " + std::to_string(a.seconds) + "s exceeds 20 min");
  {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "TP=%d FN=%d TN=%d FP=%d, patch acc %.4f, %.0fs",
                  c.tp, c.fn, c.tn, c.fp, a.report.mean_patch_accuracy, a.seconds);
    out7.note(buf);
  }

  // repeat with the same seed: byte-identical digests
  const LooArtifacts b = run_acceptance_loo(ds, 0);
  out8.require(a.report.patchset_digest == b.report.patchset_digest,
               "patch-set digests differ across identical runs");
  bool weights_equal = a.report.folds.size() == b.report.folds.size();
  for (std::size_t i = 0; weights_equal && i < a.report.folds.size(); ++i)
    weights_equal = a.report.folds[i].weight_digest == b.report.folds[i].weight_digest;
  out8.require(weights_equal, "per-fold weight digests differ across identical runs");
  out8.require(report_digest(a.report) == report_digest(b.report),
               "report digests differ across identical runs");

  // change only the thread count
  const LooArtifacts c1 = run_acceptance_loo(ds, 1);
  out8.require(a.report.patchset_digest == c1.report.patchset_digest,
               "patch-set digest changed with --threads");
  bool verdicts_equal = a.report.folds.size() == c1.report.folds.size();
  for (std::size_t i = 0; verdicts_equal && i < a.report.folds.size(); ++i)
    verdicts_equal = a.report.folds[i].image_verdict == c1.report.folds[i].image_verdict;
  out8.require(verdicts_equal, "verdicts changed with --threads");
  out8.require(report_digest(a.report) == report_digest(c1.report),
               "report digest changed with --threads");

  // persist the run-A report for inspection
  write_loo_report_json(work_dir() / "loo_report.json", a.report);
  write_loo_report_text(work_dir() / "loo_report.txt", a.report);
}

// --------------------------------------------------------------------------
// 9. round-trips
// --------------------------------------------------------------------------

void criterion_round_trips(Outcome& out) {
  const auto dir = work_dir() / "roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);

  SynthConfig cfg;
  cfg.image_count = 4;
  cfg.diseased_count = 2;
  cfg.rows = 200;
  cfg.cols = 300;
  cfg.min_blob_radius = 8;
  cfg.max_blob_radius = 14;
  cfg.seed = 3;
  const Dataset ds = generate_synthetic(cfg, dir / "data");
  const PatchSet ps = generate_patchset(ds, 6, 5);

  save_patchset(ps, dir / "patches");
  const PatchSet ps_back = load_patchset(dir / "patches");
  out.require(ps_back.content_digest() == ps.content_digest(),
              "patch-set content digest changed across save/load");
  bool pixels_equal = ps_back.patches.size() == ps.patches.size();
  for (std::size_t i = 0; pixels_equal && i < ps.patches.size(); ++i)
    pixels_equal = ps_back.patches[i].pixels == ps.patches[i].pixels;
  out.require(pixels_equal, "patch pixels changed across save/load");

  save_patchset(ps_back, dir / "patches_resaved");
  for (const auto& entry : fs::directory_iterator(dir / "patches")) {
    const auto other = dir / "patches_resaved" / entry.path().filename();
    std::ifstream in_a(entry.path(), std::ios::binary), in_b(other, std::ios::binary);
    const std::vector<char> bytes_a((std::istreambuf_iterator<char>(in_a)),
                                    std::istreambuf_iterator<char>());
    const std::vector<char> bytes_b((std::istreambuf_iterator<char>(in_b)),
                                    std::istreambuf_iterator<char>());
    if (bytes_a != bytes_b) {
      out.require(false, "re-saved archive differs: " + entry.path().filename().string());
      break;
    }
  }

  TrainConfig tc;
  tc.input_size = 32;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.seed = 11;
  tc.conv_channels = {4, 8};
  tc.dense_units = 8;
  const ModelState model = train(ps, tc);
  save_model(model, dir / "m.isd4l");
  const ModelState back = load_model(dir / "m.isd4l");
  out.require(back.weights == model.weights, "weights changed across save/load");
  out.require(back.weight_digest() == model.weight_digest(), "weight digest changed");

  bool predictions_equal = true;
  for (int i = 0; i < 5; ++i) {
    const auto& patch = ps.patches[static_cast<std::size_t>(i) % ps.patches.size()];
    if (predict_proba(back, patch.pixels) != predict_proba(model, patch.pixels)) {
      predictions_equal = false;
      break;
    }
  }
  out.require(predictions_equal, "loaded model predicts differently");
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run_criterion("1. window-count reproduction (4000x6000, t=800 -> 117)",
                criterion_windows);
  run_criterion("2. focal-loss identities (gamma=0 reduction, spot value)",
                criterion_focal_identities);
  run_criterion("3. gradient correctness (losses + micro-net vs finite differences)",
                criterion_gradients);
  run_criterion("4. geometry oracle (closed form vs rasterized brute force)",
                criterion_geometry_oracle);
  run_criterion("5. sampler faithfulness (t range, theta chi-square, containment)",
                criterion_sampler);
  run_criterion("6. threshold rule (0.79 -> healthy, 0.80 -> late_blight)",
                criterion_threshold);

  // long-running pair: one dataset, three LOO runs
  {
    Outcome out7, out8;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria_loo(out7, out8);
    } catch (const std::exception& e) {
      out7.pass = false;
      out7.note(std::string("exception: ") + e.what());
      out8.pass = false;
      out8.note("skipped after criterion-7 exception");
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out7.pass) ++g_failures;
    std::printf("%s  7. end-to-end synthetic LOO (22 images, desk profile)  [%.1fs]%s%s\n",
                out7.pass ? "PASS" : "FAIL", seconds, out7.detail.empty() ? "" : "  -- ",
                out7.detail.c_str());
    if (!out8.pass) ++g_failures;
    std::printf("%s  8. determinism and thread invariance  [%.1fs]%s%s\n",
                out8.pass ? "PASS" : "FAIL", seconds, out8.detail.empty() ? "" : "  -- ",
                out8.detail.c_str());
    std::fflush(stdout);
  }

  run_criterion("9. round-trips (patch-set archive, weight file)", criterion_round_trips);

  if (g_failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d criterion(s) failed\n", g_failures);
  return 1;
}

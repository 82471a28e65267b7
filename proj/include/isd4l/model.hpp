#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "isd4l/cnn.hpp"
#include "isd4l/raster.hpp"
#include "isd4l/sampler.hpp"

namespace isd4l {

// Probabilities are clamped to [eps, 1-eps] before any log.
inline constexpr double kProbEpsilon = 1e-7;

struct LossParams {
  double alpha = 0.5;  // weight of the positive-class term, in (0, 1]
  double gamma = 2.0;  // focusing exponent, >= 0
};

enum class LossKind { focal, cross_entropy };
const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

double sigmoid(double z);

// Standard (nonnegative) binary cross-entropy: -c log p - (1-c) log(1-p).
double cross_entropy(double p, int c);
double cross_entropy_grad(double p, int c);  // dLoss/dp

// Focal loss: -a c log(p) (1-p)^g - (1-a) (1-c) log(1-p) p^g.
// At g = 0 this reduces exactly to the alpha-weighted cross-entropy.
double focal_loss(double p, int c, const LossParams& params = {});
double focal_loss_grad(double p, int c, const LossParams& params = {});

double loss_value(LossKind kind, double p, int c, const LossParams& params);
double loss_grad(LossKind kind, double p, int c, const LossParams& params);

struct TrainConfig {
  int input_size = 380;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::focal;
  LossParams loss_params;
  std::vector<int> conv_channels = {8, 16, 32, 64};
  int dense_units = 32;

  NetworkArch arch() const { return {input_size, conv_channels, dense_units}; }
};

struct TrainMeta {
  TrainConfig config;
  std::vector<double> epoch_losses;  // mean loss per epoch
  std::string data_digest;           // content digest of the training patches
};

struct ModelState {
  NetworkArch arch;
  std::vector<float> weights;  // Network<float> layout
  TrainMeta meta;

  std::string weight_digest() const;  // sha256 over little-endian float bytes
};

// Mini-batch Adam on the configured loss. Deterministic for a given config:
// fixed He-uniform init, fixed Fisher-Yates shuffles, sequential batch
// accumulation. Patches are resized to the input size (bilinear) and scaled
// to [0, 1]. Throws EmptyPatchSet / NonFiniteLoss; logs a warning to `log`
// when only one class is present.
ModelState train(const PatchSet& patchset, const TrainConfig& config,
                 std::ostream* log = nullptr);

// Same contract, over a view (used by the fold harness to train on patch
// subsets without copying rasters).
ModelState train_patches(std::span<const LabeledPatch* const> patches,
                         const TrainConfig& config, const std::string& data_digest,
                         std::ostream* log = nullptr);

// Sigmoid probability of the positive class. Non-input-sized patches are
// resized internally with the same bilinear policy as training.
double predict_proba(const ModelState& model, const Raster& patch);
std::vector<double> predict_proba_batch(const ModelState& model,
                                        const std::vector<Raster>& patches);

// Weight file: magic "ISD4L", little-endian u32 format version, u64-length-
// prefixed JSON descriptor (architecture + training metadata), then the
// weight tensors as little-endian 32-bit floats in layout order.
void save_model(const ModelState& model, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);

// RGB raster -> CHW float tensor in [0, 1], resized to side s when needed.
void raster_to_input(const Raster& patch, int s, std::vector<float>& out);

}  // namespace isd4l

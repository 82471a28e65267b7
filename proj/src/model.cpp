#include "isd4l/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "isd4l/geometry.hpp"
#include "isd4l/sha256.hpp"

namespace isd4l {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

double clamp_p(double p) {
  return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

void check_label(int c) {
  if (c != 0 && c != 1) throw std::invalid_argument("model: class label must be 0 or 1");
}

void check_params(const LossParams& params) {
  if (!(params.alpha > 0.0) || params.alpha > 1.0)
    throw std::invalid_argument("model: alpha must lie in (0, 1]");
  if (!(params.gamma >= 0.0))
    throw std::invalid_argument("model: gamma must be >= 0");
}

}  // namespace

const char* to_string(LossKind kind) {
  return kind == LossKind::focal ? "focal" : "cross_entropy";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "focal") return LossKind::focal;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  throw std::invalid_argument("model: unknown loss '" + s + "'");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double cross_entropy(double p, int c) {
  check_label(c);
  p = clamp_p(p);
  return c == 1 ? -std::log(p) : -std::log1p(-p);
}

double cross_entropy_grad(double p, int c) {
  check_label(c);
  p = clamp_p(p);
  return c == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

double focal_loss(double p, int c, const LossParams& params) {
  check_label(c);
  check_params(params);
  p = clamp_p(p);
  if (c == 1) return -params.alpha * std::log(p) * std::pow(1.0 - p, params.gamma);
  return -(1.0 - params.alpha) * std::log1p(-p) * std::pow(p, params.gamma);
}

double focal_loss_grad(double p, int c, const LossParams& params) {
  check_label(c);
  check_params(params);
  p = clamp_p(p);
  const double g = params.gamma;
  if (c == 1) {
    if (g == 0.0) return -params.alpha / p;
    return -params.alpha *
           (std::pow(1.0 - p, g) / p - g * std::pow(1.0 - p, g - 1.0) * std::log(p));
  }
  if (g == 0.0) return (1.0 - params.alpha) / (1.0 - p);
  return (1.0 - params.alpha) *
         (std::pow(p, g) / (1.0 - p) - g * std::pow(p, g - 1.0) * std::log1p(-p));
}

double loss_value(LossKind kind, double p, int c, const LossParams& params) {
  return kind == LossKind::focal ? focal_loss(p, c, params) : cross_entropy(p, c);
}

double loss_grad(LossKind kind, double p, int c, const LossParams& params) {
  return kind == LossKind::focal ? focal_loss_grad(p, c, params)
                                 : cross_entropy_grad(p, c);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

void raster_to_input(const Raster& patch, int s, std::vector<float>& out) {
  if (patch.channels != 3)
    throw ArchitectureMismatch("expected an RGB patch, got " +
                               std::to_string(patch.channels) + " channel(s)");
  const Raster* src = &patch;
  Raster resized;
  if (patch.width != s || patch.height != s) {
    resized = resize(patch, s, Interp::bilinear);
    src = &resized;
  }
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  out.resize(3 * plane);
  constexpr float kInv255 = 1.0f / 255.0f;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const std::size_t px = static_cast<std::size_t>(y) * s + x;
      out[px] = src->at(x, y, 0) * kInv255;
      out[plane + px] = src->at(x, y, 1) * kInv255;
      out[2 * plane + px] = src->at(x, y, 2) * kInv255;
    }
  }
}

std::string ModelState::weight_digest() const {
  Sha256 h;
  for (float w : weights) {
    const auto bits = std::bit_cast<std::uint32_t>(w);
    const std::uint8_t bytes[4] = {std::uint8_t(bits), std::uint8_t(bits >> 8),
                                   std::uint8_t(bits >> 16), std::uint8_t(bits >> 24)};
    h.update(bytes, 4);
  }
  return h.hex_digest();
}

ModelState train_patches(std::span<const LabeledPatch* const> patches,
                         const TrainConfig& config, const std::string& data_digest,
                         std::ostream* log) {
  if (patches.empty()) throw EmptyPatchSet("cannot train on an empty patch set");
  if (config.epochs < 1 || config.batch_size < 1)
    throw std::invalid_argument("model: epochs and batch size must be >= 1");
  if (!(config.learning_rate > 0.0))
    throw std::invalid_argument("model: learning rate must be positive");
  check_params(config.loss_params);

  const NetworkArch arch = config.arch();
  arch.validate();

  const std::size_t n = patches.size();
  std::size_t positives = 0;
  for (const auto* p : patches)
    if (p->label == ImageLabel::late_blight) ++positives;
  if (log && (positives == 0 || positives == n))
    (*log) << "[train] warning: all " << n << " patches share one class ("
           << (positives == 0 ? "healthy" : "late_blight") << ")\n";

  // Resize once up front, keep 8-bit; per-sample float conversion is cheap.
  const int s = config.input_size;
  std::vector<Raster> cache;
  cache.reserve(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    cache.push_back(patches[i]->pixels.width == s && patches[i]->pixels.height == s
                        ? patches[i]->pixels
                        : resize(patches[i]->pixels, s, Interp::bilinear));
    labels[i] = static_cast<int>(patches[i]->label);
  }

  auto rng = Xoshiro256pp::stream(config.seed, StreamDomain::training, 0);
  Network<float> net(arch);
  net.init_he_uniform(rng);
  auto ws = net.make_workspace();

  const std::size_t wn = net.weight_count();
  std::vector<float> grad(wn), adam_m(wn, 0.0f), adam_v(wn, 0.0f);
  std::vector<float> input;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> epoch_losses;
  epoch_losses.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const auto batch_n = static_cast<float>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0f);

      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        raster_to_input(cache[idx], s, input);
        const float logit = net.forward(input, ws);
        const double p = sigmoid(logit);
        loss_sum += loss_value(config.loss, p, labels[idx], config.loss_params);
        const double dlogit =
            loss_grad(config.loss, p, labels[idx], config.loss_params) * p * (1.0 - p);
        net.backward(input, ws, static_cast<float>(dlogit), grad);
      }

      ++step;
      const auto bc1 = static_cast<float>(1.0 - std::pow(kBeta1, step));
      const auto bc2 = static_cast<float>(1.0 - std::pow(kBeta2, step));
      const float lr = static_cast<float>(config.learning_rate);
      float* w = net.weights().data();
      for (std::size_t i = 0; i < wn; ++i) {
        const float g = grad[i] / batch_n;
        adam_m[i] = static_cast<float>(kBeta1) * adam_m[i] +
                    static_cast<float>(1.0 - kBeta1) * g;
        adam_v[i] = static_cast<float>(kBeta2) * adam_v[i] +
                    static_cast<float>(1.0 - kBeta2) * g * g;
        const float mhat = adam_m[i] / bc1;
        const float vhat = adam_v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + static_cast<float>(kAdamEps));
      }
    }

    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw NonFiniteLoss("epoch " + std::to_string(epoch + 1) + " mean loss is " +
                          std::to_string(epoch_loss) + " (lr " +
                          std::to_string(config.learning_rate) + ", " +
                          std::to_string(n) + " patches)");
    epoch_losses.push_back(epoch_loss);
    if (log)
      (*log) << "[train] epoch " << (epoch + 1) << "/" << config.epochs << " loss "
             << epoch_loss << "\n";
  }

  ModelState state;
  state.arch = arch;
  state.weights = net.weights();
  state.meta.config = config;
  state.meta.epoch_losses = std::move(epoch_losses);
  state.meta.data_digest = data_digest;
  return state;
}

ModelState train(const PatchSet& patchset, const TrainConfig& config,
                 std::ostream* log) {
  if (patchset.patches.empty()) throw EmptyPatchSet("patch set has no patches");
  std::vector<const LabeledPatch*> ptrs;
  ptrs.reserve(patchset.patches.size());
  for (const auto& p : patchset.patches) ptrs.push_back(&p);
  return train_patches(ptrs, config, patchset.content_digest(), log);
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

double predict_proba(const ModelState& model, const Raster& patch) {
  Network<float> net(model.arch);
  if (net.weight_count() != model.weights.size())
    throw ArchitectureMismatch("weight vector does not match architecture");
  net.weights() = model.weights;
  auto ws = net.make_workspace();
  std::vector<float> input;
  raster_to_input(patch, model.arch.input_size, input);
  return sigmoid(net.forward(input, ws));
}

std::vector<double> predict_proba_batch(const ModelState& model,
                                        const std::vector<Raster>& patches) {
  Network<float> net(model.arch);
  if (net.weight_count() != model.weights.size())
    throw ArchitectureMismatch("weight vector does not match architecture");
  net.weights() = model.weights;
  auto ws = net.make_workspace();
  std::vector<float> input;
  std::vector<double> out;
  out.reserve(patches.size());
  for (const auto& patch : patches) {
    raster_to_input(patch, model.arch.input_size, input);
    out.push_back(sigmoid(net.forward(input, ws)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'I', 'S', 'D', '4', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

void write_le32(std::ofstream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8),
                             std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_le64(std::ofstream& out, std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_le32(std::ifstream& in) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

std::uint64_t read_le64(std::ifstream& in) {
  std::uint8_t b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["input_size"] = c.input_size;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["seed"] = c.seed;
  j["loss"] = to_string(c.loss);
  j["alpha"] = c.loss_params.alpha;
  j["gamma"] = c.loss_params.gamma;
  j["conv_channels"] = c.conv_channels;
  j["dense_units"] = c.dense_units;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss = loss_kind_from_string(j.at("loss").get<std::string>());
  c.loss_params.alpha = j.at("alpha").get<double>();
  c.loss_params.gamma = j.at("gamma").get<double>();
  c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  c.dense_units = j.at("dense_units").get<int>();
  return c;
}

}  // namespace

void save_model(const ModelState& model, const std::filesystem::path& path) {
  nlohmann::json desc;
  desc["architecture"] = {{"input_size", model.arch.input_size},
                          {"conv_channels", model.arch.conv_channels},
                          {"dense_units", model.arch.dense_units}};
  desc["training"] = {{"config", config_to_json(model.meta.config)},
                      {"epoch_losses", model.meta.epoch_losses},
                      {"data_digest", model.meta.data_digest}};
  const std::string text = desc.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("model", "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le32(out, kFormatVersion);
  write_le64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (float w : model.weights) write_le32(out, std::bit_cast<std::uint32_t>(w));
  if (!out) throw IoError("model", "short write to " + path.string());
}

ModelState load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("model", "cannot open " + path.string());

  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("model", path.string() + " is not an ISD4L weight file");
  if (read_le32(in) != kFormatVersion)
    throw IoError("model", "unsupported weight-file version");

  const std::uint64_t desc_len = read_le64(in);
  std::string text(desc_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(desc_len));
  if (!in) throw IoError("model", "truncated descriptor in " + path.string());

  ModelState model;
  try {
    const auto desc = nlohmann::json::parse(text);
    const auto& arch = desc.at("architecture");
    model.arch.input_size = arch.at("input_size").get<int>();
    model.arch.conv_channels = arch.at("conv_channels").get<std::vector<int>>();
    model.arch.dense_units = arch.at("dense_units").get<int>();
    const auto& training = desc.at("training");
    model.meta.config = config_from_json(training.at("config"));
    model.meta.epoch_losses = training.at("epoch_losses").get<std::vector<double>>();
    model.meta.data_digest = training.at("data_digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("model", std::string("malformed weight-file descriptor: ") + e.what());
  }
  model.arch.validate();

  const std::size_t count = model.arch.weight_count();
  model.weights.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    model.weights[i] = std::bit_cast<float>(read_le32(in));
  if (!in) throw IoError("model", "truncated weights in " + path.string());

  char extra;
  if (in.read(&extra, 1))
    throw IoError("model", "trailing bytes in " + path.string());
  return model;
}

}  // namespace isd4l

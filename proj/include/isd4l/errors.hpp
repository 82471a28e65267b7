#pragma once

#include <stdexcept>
#include <string>

namespace isd4l {

// Base class for all pipeline errors. Messages carry the originating module
// so a CLI failure prints "module: what went wrong".
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string message)
      : std::runtime_error(module + ": " + message),
        module_(std::move(module)),
        message_(std::move(message)) {}

  const std::string& module() const noexcept { return module_; }
  // Message without the module prefix, for rewrapping with extra context.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string module_;
  std::string message_;
};

// geometry
class SquareOutOfBounds : public Error {
 public:
  explicit SquareOutOfBounds(const std::string& m) : Error("geometry", m) {}
};

// sampler
class PatchCannotFit : public Error {
 public:
  explicit PatchCannotFit(const std::string& m) : Error("sampler", m) {}
};
class InvalidMaskValue : public Error {
 public:
  explicit InvalidMaskValue(const std::string& m) : Error("sampler", m) {}
};
class MaskDimensionMismatch : public Error {
 public:
  explicit MaskDimensionMismatch(const std::string& m) : Error("sampler", m) {}
  MaskDimensionMismatch(const std::string& module, const std::string& m) : Error(module, m) {}
};

// dataset
class ManifestParseError : public Error {
 public:
  explicit ManifestParseError(const std::string& m) : Error("dataset", m) {}
};
class MissingFile : public Error {
 public:
  explicit MissingFile(const std::string& m) : Error("dataset", m) {}
};
class LabelMaskInconsistency : public Error {
 public:
  explicit LabelMaskInconsistency(const std::string& m) : Error("dataset", m) {}
};
class EmptyDataset : public Error {
 public:
  explicit EmptyDataset(const std::string& m) : Error("dataset", m) {}
};

// model
class EmptyPatchSet : public Error {
 public:
  explicit EmptyPatchSet(const std::string& m) : Error("model", m) {}
};
class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& m) : Error("model", m) {}
};
class ArchitectureMismatch : public Error {
 public:
  explicit ArchitectureMismatch(const std::string& m) : Error("model", m) {}
};

// predictor
class IndivisiblePatchSize : public Error {
 public:
  explicit IndivisiblePatchSize(const std::string& m) : Error("predictor", m) {}
};
class PatchTooLarge : public Error {
 public:
  explicit PatchTooLarge(const std::string& m) : Error("predictor", m) {}
};

// evaluation
class LengthMismatch : public Error {
 public:
  explicit LengthMismatch(const std::string& m) : Error("evaluation", m) {}
};

// shared I/O failures (file missing at save/load, malformed containers)
class IoError : public Error {
 public:
  IoError(const std::string& module, const std::string& m) : Error(module, m) {}
};

}  // namespace isd4l

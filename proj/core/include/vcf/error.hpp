#pragma once

#include <stdexcept>
#include <string>

namespace vcf {

/// File-system or format failure (missing file, size mismatch, bad header).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage could not produce its output. `stage()` is one of
/// "body_mask", "cord", "sagittal", "column", "patches".
class SegmentationError : public std::runtime_error {
 public:
  SegmentationError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Model-side failure: bad checkpoint, shape mismatch, empty sequence.
class InferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vcf

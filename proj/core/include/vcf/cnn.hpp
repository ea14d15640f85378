#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vcf/nn/checkpoint.hpp"
#include "vcf/nn/layers.hpp"
#include "vcf/probability_io.hpp"
#include "vcf/segmentation.hpp"

namespace vcf::cls {

inline constexpr int kPatchSize = 32;

struct CnnConfig {
  int epochs = 15;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  /// Each training patch gets a fresh rotation drawn from U[-r, r] per epoch.
  double max_rotation_degrees = 18.0;
};

/// Patch classifier on 32x32x1 input:
///   conv32-relu-pool, conv64-relu-conv64-relu-pool, conv128-relu-conv128-relu-pool,
///   dense512-relu-dropout, dense2, softmax
/// Convolutions are 3x3 "same"; pools are 3x3 stride 2, so the flattened
/// feature map is 128 x 4 x 4 = 2048.
template <typename T>
class PatchCnn {
 public:
  explicit PatchCnn(double dropout_rate = 0.5, std::uint64_t dropout_seed = 0);

  /// He-normal weights, zero biases.
  void initialize(std::uint64_t seed);

  /// x: [N, 1, 32, 32] -> logits [N, 2]
  nn::Tensor<T> logits(const nn::Tensor<T>& x, nn::Mode mode) { return net_.forward(x, mode); }
  nn::Tensor<T> backward(const nn::Tensor<T>& dlogits) { return net_.backward(dlogits); }

  nn::Sequential<T>& network() { return net_; }
  std::vector<nn::Param<T>*> params() { return net_.params(); }
  nn::Dropout<T>& dropout() { return *dropout_; }

  nn::Checkpoint to_checkpoint(const CnnConfig& config, int epoch);
  /// Throws InferenceError when the checkpoint does not describe this architecture.
  static PatchCnn from_checkpoint(const nn::Checkpoint& ck);

 private:
  nn::Sequential<T> net_;
  nn::Dropout<T>* dropout_ = nullptr;
};

using CnnModel = PatchCnn<float>;

struct PatchSample {
  std::vector<float> pixels;  ///< 32 x 32
  int label = 0;
  std::string study_id;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct CnnTrainResult {
  CnnModel model;
  std::vector<EpochStats> history;
};

/// Minimises mean cross-entropy with SGD + momentum. Every epoch reshuffles the
/// training set with a seeded permutation. Throws std::invalid_argument when the
/// training data holds a single class.
CnnTrainResult train_cnn(const std::vector<PatchSample>& train, const std::vector<PatchSample>& val,
                         const CnnConfig& config,
                         const std::function<void(const EpochStats&)>& on_epoch = {});

/// Probability of the fracture class for each patch (eval mode, batched).
std::vector<double> predict_patches(CnnModel& model, const std::vector<std::span<const float>>& patches);
double predict_patch(CnnModel& model, std::span<const float> patch);

/// Both class probabilities for each patch, [N, 2].
nn::Tensor<float> predict_distribution(CnnModel& model, const std::vector<std::span<const float>>& patches);

double patch_accuracy(CnnModel& model, const std::vector<PatchSample>& samples);

/// Per-patch probabilities in sequence order. Throws InferenceError when empty.
ProbabilityVector score_sequence(CnnModel& model, const seg::PatchSequence& patches);

std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace vcf::cls

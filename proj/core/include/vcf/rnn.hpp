#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vcf/cnn.hpp"
#include "vcf/nn/checkpoint.hpp"
#include "vcf/nn/layers.hpp"
#include "vcf/nn/lstm.hpp"
#include "vcf/probability_io.hpp"

namespace vcf::cls {

struct RnnConfig {
  int hidden = 128;
  int epochs = 30;
  double learning_rate = 0.005;
  double momentum = 0.9;
  int batch_size = 1;
  /// Global gradient-norm clip per batch; 0 disables.
  double clip_norm = 0.0;
  std::uint64_t seed = 0;
};

/// One probability per timestep into an LSTM; the final hidden state feeds a
/// dense layer with two outputs and a softmax.
template <typename T>
class SequenceRnn {
 public:
  explicit SequenceRnn(std::size_t hidden = 128);

  /// LeCun-uniform input weights, Glorot-uniform recurrent and head weights,
  /// zero biases except the forget gate (1).
  void initialize(std::uint64_t seed);

  /// logits [1, 2] for one sequence; throws std::invalid_argument if empty.
  nn::Tensor<T> logits(std::span<const T> sequence);
  /// Backpropagates dL/dlogits through the last forward call.
  void backward(const nn::Tensor<T>& dlogits);

  std::vector<nn::Param<T>*> params();
  void zero_grad();
  nn::Lstm<T>& lstm() { return lstm_; }
  std::size_t hidden() const { return lstm_.hidden_size(); }

  nn::Checkpoint to_checkpoint(const RnnConfig& config, int epoch);
  static SequenceRnn from_checkpoint(const nn::Checkpoint& ck);

 private:
  nn::Lstm<T> lstm_;
  nn::Dense<T> head_;
};

using RnnModel = SequenceRnn<float>;

struct RnnTrainResult {
  RnnModel model;
  std::vector<EpochStats> history;
};

/// Cross-entropy on study labels, BPTT over each full sequence, SGD + momentum
/// on the batch-mean loss. Every vector needs a label; throws
/// std::invalid_argument with fewer than two studies of either class.
RnnTrainResult train_rnn(const std::vector<ProbabilityVector>& train, const std::vector<ProbabilityVector>& val,
                         const RnnConfig& config, const std::function<void(const EpochStats&)>& on_epoch = {});

/// Probability of the fracture class; throws InferenceError for an empty vector.
double predict_study(RnnModel& model, std::span<const double> values);

/// Fraction of labelled vectors whose thresholded prediction matches.
double study_accuracy(RnnModel& model, const std::vector<ProbabilityVector>& vectors);

}  // namespace vcf::cls

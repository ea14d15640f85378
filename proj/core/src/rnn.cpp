#include "vcf/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vcf/error.hpp"
#include "vcf/nn/optim.hpp"
#include "vcf/rng.hpp"

namespace vcf::cls {

using nn::Tensor;

template <typename T>
SequenceRnn<T>::SequenceRnn(std::size_t hidden) : lstm_("lstm", 1, hidden), head_("head", hidden, 2) {}

template <typename T>
void SequenceRnn<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t h = hidden();
  // The input is a single probability; Glorot over (1, h) would cap these
  // weights near 0.2 and leave the cells almost blind to it. LeCun-uniform
  // (limit sqrt(3 / fan_in)) lets one value swing the gates.
  const double limit = std::sqrt(3.0 / static_cast<double>(lstm_.input_size()));
  for (auto& w : lstm_.w_input().value.values()) w = static_cast<T>(rng.uniform(-limit, limit));
  nn::glorot_uniform(lstm_.w_hidden().value, h, h, rng);
  auto& b = lstm_.bias().value;
  b.fill(T(0));
  for (std::size_t j = h; j < 2 * h; ++j) b[j] = T(1);
  auto head = head_.params();
  nn::glorot_uniform(head[0]->value, h, 2, rng);
  head[1]->value.fill(T(0));
  zero_grad();
}

template <typename T>
Tensor<T> SequenceRnn<T>::logits(std::span<const T> sequence) {
  if (sequence.empty()) throw std::invalid_argument("sequence must not be empty");
  auto h = lstm_.forward(sequence);
  return head_.forward(Tensor<T>({1, hidden()}, std::move(h)), nn::Mode::Eval);
}

template <typename T>
void SequenceRnn<T>::backward(const Tensor<T>& dlogits) {
  const auto dh = head_.backward(dlogits);
  lstm_.backward(std::span<const T>(dh.values()));
}

template <typename T>
std::vector<nn::Param<T>*> SequenceRnn<T>::params() {
  auto out = lstm_.params();
  for (auto* p : head_.params()) out.push_back(p);
  return out;
}

template <typename T>
void SequenceRnn<T>::zero_grad() {
  for (auto* p : params()) p->grad.fill(T(0));
}

template <typename T>
nn::Checkpoint SequenceRnn<T>::to_checkpoint(const RnnConfig& config, int epoch) {
  nn::Checkpoint ck;
  ck.kind = "sequence_rnn";
  ck.seed = config.seed;
  ck.epoch = epoch;
  ck.config = {{"hidden", static_cast<double>(hidden())},
               {"epochs", config.epochs},
               {"learning_rate", config.learning_rate},
               {"momentum", config.momentum},
               {"batch_size", config.batch_size},
               {"clip_norm", config.clip_norm}};
  nn::CheckpointLayer lstm_layer{{"lstm", {{"input_size", 1}, {"hidden", static_cast<double>(hidden())}}}, {}};
  for (auto* p : lstm_.params()) {
    lstm_layer.params.push_back(p->name);
    ck.tensors.push_back({p->name, p->value.template cast<float>()});
  }
  ck.layers.push_back(std::move(lstm_layer));
  nn::CheckpointLayer head_layer{head_.info(), {}};
  for (auto* p : head_.params()) {
    head_layer.params.push_back(p->name);
    ck.tensors.push_back({p->name, p->value.template cast<float>()});
  }
  ck.layers.push_back(std::move(head_layer));
  ck.layers.push_back({{"softmax", {}}, {}});
  return ck;
}

template <typename T>
SequenceRnn<T> SequenceRnn<T>::from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.kind != "sequence_rnn") throw InferenceError("checkpoint kind '" + ck.kind + "' is not a sequence RNN");
  const double hidden = ck.config_value("hidden", 128);
  if (!(hidden >= 1 && hidden <= 4096)) throw InferenceError("sequence RNN checkpoint has a bad hidden size");
  SequenceRnn model(static_cast<std::size_t>(hidden));
  for (auto* p : model.params()) {
    const auto& t = ck.tensor(p->name);
    if (t.shape() != p->value.shape())
      throw InferenceError("tensor '" + p->name + "' has shape " + nn::shape_string(t.shape()) + ", expected " +
                           nn::shape_string(p->value.shape()));
    p->value = t.template cast<T>();
  }
  return model;
}

template class SequenceRnn<float>;
template class SequenceRnn<double>;

double predict_study(RnnModel& model, std::span<const double> values) {
  if (values.empty()) throw InferenceError("cannot classify an empty probability vector");
  const std::vector<float> seq(values.begin(), values.end());
  const auto probs = nn::softmax(model.logits(seq));
  if (!probs.all_finite()) throw InferenceError("non-finite RNN output");
  return std::clamp(static_cast<double>(probs[1]), 0.0, 1.0);
}

double study_accuracy(RnnModel& model, const std::vector<ProbabilityVector>& vectors) {
  std::size_t total = 0, correct = 0;
  for (const auto& v : vectors) {
    if (!v.label) continue;
    ++total;
    correct += ((predict_study(model, v.values) >= 0.5 ? 1 : 0) == *v.label);
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

RnnTrainResult train_rnn(const std::vector<ProbabilityVector>& train, const std::vector<ProbabilityVector>& val,
                         const RnnConfig& config, const std::function<void(const EpochStats&)>& on_epoch) {
  if (config.hidden < 1 || config.epochs < 0 || config.batch_size < 1 || config.clip_norm < 0.0)
    throw std::invalid_argument("invalid RNN training configuration");
  std::size_t pos = 0, neg = 0;
  for (const auto& v : train) {
    v.validate();
    if (!v.label) throw std::invalid_argument("training vector '" + v.study_id + "' has no label");
    (*v.label ? pos : neg) += 1;
  }
  if (pos < 2 || neg < 2) throw std::invalid_argument("RNN training needs at least two studies of each class");

  RnnTrainResult result{RnnModel(static_cast<std::size_t>(config.hidden)), {}};
  RnnModel& model = result.model;
  model.initialize(mix_seed(config.seed, 0));
  nn::Sgd<float> opt(config.learning_rate, config.momentum);
  Rng order_rng(mix_seed(config.seed, 1));
  const auto params = model.params();

  std::vector<std::vector<float>> seqs;
  seqs.reserve(train.size());
  for (const auto& v : train) seqs.emplace_back(v.values.begin(), v.values.end());

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t n = std::min(batch, order.size() - b);
      model.zero_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = order[b + i];
        const int label = *train[k].label;
        const auto probs = nn::softmax(model.logits(seqs[k]));
        loss_sum += nn::cross_entropy(probs, std::span<const int>(&label, 1));
        auto grad = nn::softmax_cross_entropy_backward(probs, std::span<const int>(&label, 1));
        for (auto& g : grad.values()) g /= static_cast<float>(n);
        model.backward(grad);
      }
      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto* p : params)
          for (float g : p->grad.values()) sq += static_cast<double>(g) * g;
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) {
          const auto s = static_cast<float>(config.clip_norm / norm);
          for (auto* p : params)
            for (float& g : p->grad.values()) g *= s;
        }
      }
      for (auto* p : params)
        if (!p->grad.all_finite()) throw InferenceError("non-finite RNN gradient at epoch " + std::to_string(epoch));
      opt.step(params);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    stats.val_accuracy = study_accuracy(model, val);
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace vcf::cls

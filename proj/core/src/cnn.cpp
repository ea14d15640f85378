#include "vcf/cnn.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "vcf/augment.hpp"
#include "vcf/error.hpp"
#include "vcf/nn/optim.hpp"
#include "vcf/rng.hpp"

namespace vcf::cls {

using nn::Mode;
using nn::Tensor;

template <typename T>
PatchCnn<T>::PatchCnn(double dropout_rate, std::uint64_t dropout_seed) {
  net_.template add<nn::Conv2d<T>>("conv1", 1, 32);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::MaxPool3<T>>();
  net_.template add<nn::Conv2d<T>>("conv2", 32, 64);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::Conv2d<T>>("conv3", 64, 64);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::MaxPool3<T>>();
  net_.template add<nn::Conv2d<T>>("conv4", 64, 128);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::Conv2d<T>>("conv5", 128, 128);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::MaxPool3<T>>();
  net_.template add<nn::Flatten<T>>();
  net_.template add<nn::Dense<T>>("fc1", 128 * 4 * 4, 512);
  net_.template add<nn::Relu<T>>();
  dropout_ = &net_.template add<nn::Dropout<T>>(dropout_rate, dropout_seed);
  net_.template add<nn::Dense<T>>("fc2", 512, 2);
}

template <typename T>
void PatchCnn<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (nn::Param<T>* p : net_.params()) {
    if (p->value.rank() == 1) {
      p->value.fill(T(0));
    } else {
      const std::size_t fan_in = p->value.size() / p->value.dim(0);
      nn::he_normal(p->value, fan_in, rng);
    }
    p->grad.fill(T(0));
  }
}

namespace {

std::vector<std::pair<std::string, double>> config_pairs(const CnnConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"dropout_rate", c.dropout_rate},
          {"max_rotation_degrees", c.max_rotation_degrees}};
}

}  // namespace

template <typename T>
nn::Checkpoint PatchCnn<T>::to_checkpoint(const CnnConfig& config, int epoch) {
  nn::Checkpoint ck;
  ck.kind = "patch_cnn";
  ck.seed = config.seed;
  ck.epoch = epoch;
  ck.config = config_pairs(config);
  for (const auto& layer : net_.layers()) {
    nn::CheckpointLayer cl{layer->info(), {}};
    for (nn::Param<T>* p : layer->params()) {
      cl.params.push_back(p->name);
      ck.tensors.push_back({p->name, p->value.template cast<float>()});
    }
    ck.layers.push_back(std::move(cl));
  }
  return ck;
}

template <typename T>
PatchCnn<T> PatchCnn<T>::from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.kind != "patch_cnn") throw InferenceError("checkpoint kind '" + ck.kind + "' is not a patch CNN");
  PatchCnn model(ck.config_value("dropout_rate", 0.5), 0);
  const auto& layers = model.net_.layers();
  if (ck.layers.size() != layers.size()) throw InferenceError("patch CNN checkpoint has the wrong layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (ck.layers[i].info.type != layers[i]->info().type)
      throw InferenceError("patch CNN checkpoint layer " + std::to_string(i) + " is '" + ck.layers[i].info.type +
                           "', expected '" + layers[i]->info().type + "'");
    for (nn::Param<T>* p : layers[i]->params()) {
      const auto& t = ck.tensor(p->name);
      if (t.shape() != p->value.shape())
        throw InferenceError("tensor '" + p->name + "' has shape " + nn::shape_string(t.shape()) + ", expected " +
                             nn::shape_string(p->value.shape()));
      p->value = t.template cast<T>();
    }
  }
  return model;
}

template class PatchCnn<float>;
template class PatchCnn<double>;

namespace {

constexpr std::size_t kPixels = static_cast<std::size_t>(kPatchSize) * kPatchSize;

Tensor<float> stack(const std::vector<std::span<const float>>& patches, std::size_t begin, std::size_t end) {
  Tensor<float> x({end - begin, 1, kPatchSize, kPatchSize});
  for (std::size_t i = begin; i < end; ++i) {
    if (patches[i].size() != kPixels)
      throw InferenceError("patch has " + std::to_string(patches[i].size()) + " pixels, expected " +
                           std::to_string(kPixels));
    std::copy(patches[i].begin(), patches[i].end(), x.data() + (i - begin) * kPixels);
  }
  return x;
}

}  // namespace

Tensor<float> predict_distribution(CnnModel& model, const std::vector<std::span<const float>>& patches) {
  constexpr std::size_t kChunk = 128;
  if (patches.empty()) throw InferenceError("no patches to predict");
  Tensor<float> out({patches.size(), 2});
  for (std::size_t b = 0; b < patches.size(); b += kChunk) {
    const std::size_t e = std::min(patches.size(), b + kChunk);
    const auto probs = nn::softmax(model.logits(stack(patches, b, e), Mode::Eval));
    if (!probs.all_finite()) throw InferenceError("non-finite CNN output");
    std::copy(probs.values().begin(), probs.values().end(), out.data() + 2 * b);
  }
  return out;
}

std::vector<double> predict_patches(CnnModel& model, const std::vector<std::span<const float>>& patches) {
  if (patches.empty()) return {};
  const auto probs = predict_distribution(model, patches);
  std::vector<double> out(patches.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(static_cast<double>(probs[2 * i + 1]), 0.0, 1.0);
  return out;
}

double predict_patch(CnnModel& model, std::span<const float> patch) { return predict_patches(model, {patch})[0]; }

double patch_accuracy(CnnModel& model, const std::vector<PatchSample>& samples) {
  if (samples.empty()) return 0.0;
  std::vector<std::span<const float>> views;
  views.reserve(samples.size());
  for (const auto& s : samples) views.emplace_back(s.pixels);
  const auto p = predict_patches(model, views);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += ((p[i] >= 0.5 ? 1 : 0) == samples[i].label);
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

ProbabilityVector score_sequence(CnnModel& model, const seg::PatchSequence& seq) {
  if (seq.patches.empty()) throw InferenceError("cannot score an empty patch sequence for '" + seq.study_id + "'");
  std::vector<std::span<const float>> views;
  views.reserve(seq.patches.size());
  for (const auto& p : seq.patches) views.emplace_back(p.pixels);
  ProbabilityVector v;
  v.study_id = seq.study_id;
  v.values = predict_patches(model, views);
  return v;
}

CnnTrainResult train_cnn(const std::vector<PatchSample>& train, const std::vector<PatchSample>& val,
                         const CnnConfig& config, const std::function<void(const EpochStats&)>& on_epoch) {
  if (config.epochs < 0 || config.batch_size < 1) throw std::invalid_argument("epochs >= 0 and batch_size >= 1 required");
  if (config.max_rotation_degrees < 0.0 || config.max_rotation_degrees > 18.0)
    throw std::invalid_argument("rotation bound must lie in [0, 18] degrees");
  bool has_pos = false, has_neg = false;
  for (const auto& s : train) {
    if (s.pixels.size() != kPixels) throw std::invalid_argument("training patch is not 32x32");
    if (s.label == 1) has_pos = true;
    else if (s.label == 0) has_neg = true;
    else throw std::invalid_argument("training patch label must be 0 or 1");
  }
  if (!has_pos || !has_neg) throw std::invalid_argument("training data must contain both classes");

  CnnTrainResult result{CnnModel(config.dropout_rate, mix_seed(config.seed, 3)), {}};
  CnnModel& model = result.model;
  model.initialize(mix_seed(config.seed, 0));
  nn::Sgd<float> opt(config.learning_rate, config.momentum);
  Rng order_rng(mix_seed(config.seed, 1));
  Rng aug_rng(mix_seed(config.seed, 2));
  const auto params = model.params();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t n = std::min(batch, order.size() - b);
      Tensor<float> x({n, 1, kPatchSize, kPatchSize});
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = train[order[b + i]];
        const double angle = aug_rng.uniform(-config.max_rotation_degrees, config.max_rotation_degrees);
        const auto rotated = augment_patch(s.pixels, kPatchSize, angle, 0.0f);
        std::copy(rotated.begin(), rotated.end(), x.data() + i * kPixels);
        labels[i] = s.label;
      }
      model.network().zero_grad();
      const auto probs = nn::softmax(model.logits(x, Mode::Train));
      const double loss = nn::cross_entropy(probs, std::span<const int>(labels));
      if (!std::isfinite(loss)) throw InferenceError("training loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(n);
      model.backward(nn::softmax_cross_entropy_backward(probs, std::span<const int>(labels)));
      opt.step(params);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train.empty() ? 0.0 : loss_sum / static_cast<double>(train.size());
    stats.val_accuracy = patch_accuracy(model, val);
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,val_acc\n";
  for (const auto& h : history) out << h.epoch << ',' << h.train_loss << ',' << h.val_accuracy << '\n';
  return out.str();
}

}  // namespace vcf::cls

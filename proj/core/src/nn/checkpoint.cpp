#include "vcf/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "vcf/error.hpp"
#include "vcf/volume.hpp"

namespace vcf::nn {

namespace fs = std::filesystem;

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw InferenceError("checkpoint has no tensor '" + name + "'");
}

double Checkpoint::config_value(const std::string& key, double fallback) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  return fallback;
}

std::string checkpoint_descriptor(const Checkpoint& ck) {
  nlohmann::ordered_json j;
  j["version"] = ck.version;
  j["kind"] = ck.kind;
  j["seed"] = ck.seed;
  j["epoch"] = ck.epoch;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ck.config) config[k] = v;
  j["config"] = std::move(config);
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : ck.layers) {
    nlohmann::ordered_json jl;
    jl["type"] = layer.info.type;
    for (const auto& [k, v] : layer.info.attributes) jl[k] = v;
    auto& params = jl["params"] = nlohmann::ordered_json::array();
    for (const auto& name : layer.params) {
      nlohmann::ordered_json jp;
      jp["name"] = name;
      jp["shape"] = ck.tensor(name).shape();
      params.push_back(std::move(jp));
    }
    layers.push_back(std::move(jl));
  }
  return j.dump(2) + "\n";
}

std::string checkpoint_blob(const Checkpoint& ck) {
  std::string out;
  for (const auto& layer : ck.layers) {
    for (const auto& name : layer.params) {
      const auto& t = ck.tensor(name);
      for (float f : t.values()) {
        const auto u = std::bit_cast<std::uint32_t>(f);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
      }
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& descriptor, const std::string& blob) {
  Checkpoint ck;
  std::size_t offset = 0;
  try {
    const auto j = nlohmann::ordered_json::parse(descriptor);
    ck.version = j.at("version").get<int>();
    if (ck.version != 1) throw InferenceError("unsupported checkpoint version");
    ck.kind = j.at("kind").get<std::string>();
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.epoch = j.at("epoch").get<int>();
    for (const auto& [k, v] : j.at("config").items()) ck.config.emplace_back(k, v.get<double>());
    for (const auto& jl : j.at("layers")) {
      CheckpointLayer layer;
      layer.info.type = jl.at("type").get<std::string>();
      for (const auto& [k, v] : jl.items()) {
        if (k == "type" || k == "params") continue;
        layer.info.attributes.emplace_back(k, v.get<double>());
      }
      for (const auto& jp : jl.at("params")) {
        NamedTensor nt{jp.at("name").get<std::string>(), {}};
        const Shape shape = jp.at("shape").get<Shape>();
        const std::size_t count = shape_size(shape);
        if (offset + count * 4 > blob.size()) throw InferenceError("checkpoint blob is shorter than its descriptor");
        std::vector<float> data(count);
        for (std::size_t i = 0; i < count; ++i) {
          std::uint32_t u = 0;
          for (int b = 0; b < 4; ++b)
            u |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * i + b])) << (8 * b);
          data[i] = std::bit_cast<float>(u);
        }
        offset += count * 4;
        nt.tensor = Tensor<float>(shape, std::move(data));
        layer.params.push_back(nt.name);
        ck.tensors.push_back(std::move(nt));
      }
      ck.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InferenceError(std::string("malformed checkpoint descriptor: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InferenceError(std::string("malformed checkpoint: ") + e.what());
  }
  if (offset != blob.size()) throw InferenceError("checkpoint blob is longer than its descriptor");
  return ck;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create checkpoint directory " + dir.string());
  write_file_atomic(dir / "model.bin", checkpoint_blob(ck));
  write_file_atomic(dir / "model.json", checkpoint_descriptor(ck));
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "model.json") || !fs::exists(dir / "model.bin"))
    throw IoError("missing model.json/model.bin in " + dir.string());
  return parse_checkpoint(read_file(dir / "model.json"), read_file(dir / "model.bin"));
}

}  // namespace vcf::nn

#include "sigver/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sigver/errors.hpp"
#include "sigver/signature.hpp"

using nlohmann::json;

namespace sigver {

namespace {

constexpr char kCkptMagic[8] = {'S', 'G', 'V', 'C', 'K', 'P', 'T', '1'};

void append_tensor(json& manifest, std::string& payload, const std::string& name,
                   const nn::Tensor<float>& t) {
  json entry{{"name", name},
             {"shape", t.shape},
             {"dtype", "f32"},
             {"byte_offset", payload.size()}};
  manifest["tensors"].push_back(std::move(entry));
  const std::size_t bytes = t.data.size() * sizeof(float);
  const std::size_t off = payload.size();
  payload.resize(off + bytes);
  std::memcpy(payload.data() + off, t.data.data(), bytes);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const nn::SiameseModel<float>& model,
                     const std::vector<std::string>& training_subjects,
                     const nn::AdamOptimizer<float>* optimizer) {
  json manifest{{"format", "sigver-checkpoint-v1"},
                {"config", json::parse(model_config_to_json(model.config()))},
                {"training_subjects", training_subjects},
                {"tensors", json::array()}};
  std::string payload;
  const auto& params = model.params().all();
  for (const auto& p : params) {
    append_tensor(manifest, payload, p->name, p->value);
  }
  if (optimizer != nullptr && optimizer->has_state()) {
    manifest["adam_t"] = optimizer->step_count();
    for (std::size_t i = 0; i < params.size(); ++i) {
      append_tensor(manifest, payload, "adam.m." + params[i]->name,
                    optimizer->first_moment(i));
      append_tensor(manifest, payload, "adam.v." + params[i]->name,
                    optimizer->second_moment(i));
    }
  }
  const std::string text = manifest.dump();
  std::string file;
  file.reserve(16 + text.size() + payload.size());
  file.append(kCkptMagic, 8);
  const std::uint64_t len = text.size();
  file.append(reinterpret_cast<const char*>(&len), 8);
  file += text;
  file += payload;
  atomic_write_file(path, file);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string file((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (file.size() < 16 || std::memcmp(file.data(), kCkptMagic, 8) != 0) {
    throw ValidationError("not a checkpoint file: " + path.string());
  }
  std::uint64_t len = 0;
  std::memcpy(&len, file.data() + 8, 8);
  if (16 + len > file.size()) {
    throw ValidationError("truncated checkpoint manifest: " + path.string());
  }
  json manifest;
  try {
    manifest = json::parse(file.substr(16, len));
  } catch (const json::exception& e) {
    throw ValidationError("invalid checkpoint manifest: " +
                          std::string(e.what()));
  }
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(manifest.at("config").dump());
  ckpt.training_subjects =
      manifest.at("training_subjects").get<std::vector<std::string>>();
  if (manifest.contains("adam_t")) {
    ckpt.has_optimizer_state = true;
    ckpt.adam_step = manifest.at("adam_t").get<std::int64_t>();
  }
  const char* payload = file.data() + 16 + len;
  const std::size_t payload_size = file.size() - 16 - len;
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("byte_offset").get<std::size_t>();
    if (entry.at("dtype").get<std::string>() != "f32") {
      throw ValidationError("unsupported checkpoint dtype for " + name);
    }
    nn::Tensor<float> t = nn::Tensor<float>::zeros(shape);
    const std::size_t bytes = t.data.size() * sizeof(float);
    if (offset + bytes > payload_size) {
      throw ValidationError("checkpoint payload out of range for " + name);
    }
    std::memcpy(t.data.data(), payload + offset, bytes);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

nn::SiameseModel<float> model_from_checkpoint(const Checkpoint& checkpoint) {
  nn::SiameseModel<float> model(checkpoint.config);
  for (const auto& p : model.params().all()) {
    const auto it = checkpoint.tensors.find(p->name);
    if (it == checkpoint.tensors.end()) {
      throw ValidationError("checkpoint missing parameter: " + p->name);
    }
    if (it->second.shape != p->value.shape) {
      throw ValidationError("checkpoint shape mismatch for " + p->name);
    }
    p->value = it->second;
  }
  return model;
}

void restore_optimizer(const Checkpoint& checkpoint,
                       const nn::SiameseModel<float>& model,
                       nn::AdamOptimizer<float>& optimizer) {
  if (!checkpoint.has_optimizer_state) {
    throw ValidationError("checkpoint carries no optimizer state");
  }
  std::vector<nn::Tensor<float>> m, v;
  for (const auto& p : model.params().all()) {
    const auto mi = checkpoint.tensors.find("adam.m." + p->name);
    const auto vi = checkpoint.tensors.find("adam.v." + p->name);
    if (mi == checkpoint.tensors.end() || vi == checkpoint.tensors.end()) {
      throw ValidationError("checkpoint missing optimizer moments for " +
                            p->name);
    }
    m.push_back(mi->second);
    v.push_back(vi->second);
  }
  optimizer.restore_state(std::move(m), std::move(v), checkpoint.adam_step);
}

}  // namespace sigver

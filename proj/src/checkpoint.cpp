#include <cstring>

#include "cityfm/pretrain.hpp"
#include "cityfm/util.hpp"
#include "json.hpp"

namespace cityfm {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'C', 'F', 'M', 'C', 'K', 'P', 'T', '1'};

ordered_json model_config_json(const ModelConfig& c) {
  ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["embed_dim"] = c.embed_dim;
  j["grid_size"] = c.grid_size;
  j["area_norm"] = c.area_norm;
  return j;
}

ModelConfig model_config_from(const ordered_json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.grid_size = j.at("grid_size").get<int>();
  c.area_norm = j.at("area_norm").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     const TrainingConfig& train_config, const Vocabulary& vocab) {
  ordered_json header;
  header["model"] = model_config_json(model.config());
  header["train"] = ordered_json::parse(training_config_to_json(train_config));
  header["vocab"] = vocab.id_to_token;
  ordered_json tensors = ordered_json::array();
  for (const auto& e : model.params().entries()) {
    ordered_json t;
    t["name"] = e.name;
    t["shape"] = e.shape;
    t["offset"] = e.offset;
    t["size"] = e.size;
    tensors.push_back(std::move(t));
  }
  header["tensors"] = std::move(tensors);

  const std::string header_str = header.dump();
  const auto& values = model.params().flat_values();

  std::string out;
  out.reserve(8 + 4 + header_str.size() + values.size() * 8);
  out.append(kMagic, 8);
  const auto hlen = static_cast<std::uint32_t>(header_str.size());
  char lenbuf[4];
  std::memcpy(lenbuf, &hlen, 4);
  out.append(lenbuf, 4);
  out += header_str;
  // raw IEEE-754 doubles; this code targets little-endian hosts
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * 8);
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string raw = read_file(path);
  if (raw.size() < 12 || std::memcmp(raw.data(), kMagic, 8) != 0) {
    throw Error("checkpoint " + path + ": bad magic");
  }
  std::uint32_t hlen = 0;
  std::memcpy(&hlen, raw.data() + 8, 4);
  if (raw.size() < 12 + static_cast<std::size_t>(hlen)) {
    throw Error("checkpoint " + path + ": truncated header");
  }
  ordered_json header;
  try {
    header = ordered_json::parse(raw.substr(12, hlen));
  } catch (const std::exception& ex) {
    throw Error("checkpoint " + path + ": bad header: " + ex.what());
  }

  Checkpoint ckpt;
  ckpt.model_config = model_config_from(header.at("model"));
  ckpt.train_config = training_config_from_json(header.at("train").dump());
  for (const auto& t : header.at("vocab")) {
    ckpt.vocab.id_to_token.push_back(t.get<std::string>());
  }
  for (std::size_t i = 3; i < ckpt.vocab.id_to_token.size(); ++i) {
    ckpt.vocab.token_to_id[ckpt.vocab.id_to_token[i]] = static_cast<int>(i);
  }

  std::size_t total = 0;
  for (const auto& t : header.at("tensors")) total += t.at("size").get<std::size_t>();
  const std::size_t payload = raw.size() - 12 - hlen;
  if (payload != total * 8) {
    throw Error("checkpoint " + path + ": payload size mismatch");
  }
  ckpt.values.resize(total);
  std::memcpy(ckpt.values.data(), raw.data() + 12 + hlen, payload);

  // the directory must match what the model would register
  Model probe(ckpt.model_config);
  const auto& entries = probe.params().entries();
  const auto& dir = header.at("tensors");
  if (dir.size() != entries.size()) throw Error("checkpoint " + path + ": tensor count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (dir[i].at("name").get<std::string>() != entries[i].name ||
        dir[i].at("offset").get<std::size_t>() != entries[i].offset ||
        dir[i].at("size").get<std::size_t>() != entries[i].size) {
      throw Error("checkpoint " + path + ": tensor directory mismatch at " + entries[i].name);
    }
  }
  if (probe.params().size() != ckpt.values.size()) {
    throw Error("checkpoint " + path + ": parameter count mismatch");
  }
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.model_config);
  if (model.params().size() != ckpt.values.size()) {
    throw Error("checkpoint: parameter count mismatch");
  }
  model.params().flat_values() = ckpt.values;
  return model;
}

}  // namespace cityfm

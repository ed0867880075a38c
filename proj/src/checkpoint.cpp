#include "minibert/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "minibert/errors.hpp"

namespace minibert {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "minibert-model";
constexpr int kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
      static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32(std::istream& in, const fs::path& path) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw CheckpointError("truncated parameter file: " + path.string());
  }
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

template <typename V>
V required(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("model config: missing '") + key + "'");
  try {
    return j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("model config: '") + key + "' has the wrong type");
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},   {"hidden_dim", c.hidden_dim},
              {"num_layers", c.num_layers},   {"num_heads", c.num_heads},
              {"ff_dim", c.ff_dim},           {"max_seq_len", c.max_seq_len},
              {"num_classes", c.num_classes}, {"init_seed", c.init_seed},
              {"init_scale", c.init_scale}};
}

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  ModelConfig c;
  c.vocab_size = required<std::size_t>(j, "vocab_size");
  c.hidden_dim = required<std::size_t>(j, "hidden_dim");
  c.num_layers = required<std::size_t>(j, "num_layers");
  c.num_heads = required<std::size_t>(j, "num_heads");
  c.ff_dim = required<std::size_t>(j, "ff_dim");
  c.max_seq_len = required<std::size_t>(j, "max_seq_len");
  c.num_classes = required<std::size_t>(j, "num_classes");
  c.init_seed = required<std::uint64_t>(j, "init_seed");
  c.init_scale = required<double>(j, "init_scale");
  c.validate();
  return c;
}

void save_checkpoint(const fs::path& dir, const ClassifierModel& model,
                     const Vocabulary& vocab) {
  if (vocab.size() != model.config().vocab_size) {
    throw CheckpointError("vocabulary size " + std::to_string(vocab.size()) +
                          " does not match model vocab_size " +
                          std::to_string(model.config().vocab_size));
  }
  fs::create_directories(dir);
  json manifest{{"format", kFormat},
                {"version", kVersion},
                {"config", model_config_to_json(model.config())},
                {"parameters", json::array()}};

  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw CheckpointError("cannot write " + (dir / "params.bin").string());
  for (const auto& [name, tensor] : model.named_parameters()) {
    manifest["parameters"].push_back({{"name", name}, {"shape", tensor.shape()}});
    write_u32(bin, static_cast<std::uint32_t>(name.size()));
    bin.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(bin, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) write_u32(bin, static_cast<std::uint32_t>(d));
    for (float v : tensor.data()) write_u32(bin, std::bit_cast<std::uint32_t>(v));
  }
  if (!bin) throw CheckpointError("failed writing " + (dir / "params.bin").string());

  std::ofstream man(dir / "manifest.json");
  man << manifest.dump(2) << '\n';
  if (!man) throw CheckpointError("failed writing " + (dir / "manifest.json").string());
  vocab.save(dir / "vocab.txt");
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw CheckpointError("no checkpoint at " + dir.string() + " (missing manifest.json)");
  }
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("unreadable manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kVersion) {
    throw CheckpointError(manifest_path.string() + " is not a version " +
                          std::to_string(kVersion) + " " + kFormat + " manifest");
  }
  ModelConfig config;
  try {
    config = model_config_from_json(manifest.at("config"));
  } catch (const std::exception& e) {
    throw CheckpointError(manifest_path.string() + ": " + e.what());
  }

  // Start from an untouched init and overwrite every tensor.
  ClassifierModel model(config);
  auto params = model.named_parameters();
  const auto& listed = manifest.value("parameters", json::array());
  if (listed.size() != params.size()) {
    throw CheckpointError("manifest lists " + std::to_string(listed.size()) +
                          " parameters, config implies " + std::to_string(params.size()));
  }

  const auto bin_path = dir / "params.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw CheckpointError("cannot read " + bin_path.string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, tensor] = params[i];
    if (listed[i].value("name", "") != name ||
        listed[i].value("shape", Shape{}) != tensor.shape()) {
      throw CheckpointError("manifest entry " + std::to_string(i) +
                            " does not match expected parameter " + name + " " +
                            shape_to_string(tensor.shape()));
    }
    const std::uint32_t name_len = read_u32(bin, bin_path);
    if (name_len > 4096) throw CheckpointError("corrupt parameter name in " + bin_path.string());
    std::string stored(name_len, '\0');
    if (!bin.read(stored.data(), name_len)) {
      throw CheckpointError("truncated parameter file: " + bin_path.string());
    }
    Shape shape(read_u32(bin, bin_path));
    if (shape.size() > 8) throw CheckpointError("corrupt rank in " + bin_path.string());
    for (auto& d : shape) d = read_u32(bin, bin_path);
    if (stored != name || shape != tensor.shape()) {
      throw CheckpointError("parameter " + std::to_string(i) + " in " + bin_path.string() +
                            " is '" + stored + "' " + shape_to_string(shape) + ", expected '" +
                            name + "' " + shape_to_string(tensor.shape()));
    }
    for (auto& v : tensor.data()) v = std::bit_cast<float>(read_u32(bin, bin_path));
  }
  if (bin.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing data in " + bin_path.string());
  }

  Vocabulary vocab;
  try {
    vocab = Vocabulary::load(dir / "vocab.txt");
  } catch (const std::exception& e) {
    throw CheckpointError(e.what());
  }
  if (vocab.size() != config.vocab_size) {
    throw CheckpointError("vocab.txt has " + std::to_string(vocab.size()) +
                          " tokens, config expects " + std::to_string(config.vocab_size));
  }
  return {std::move(model), std::move(vocab)};
}

}  // namespace minibert

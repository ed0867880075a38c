#pragma once

// On-disk model format.
//
// A checkpoint is a directory:
//   manifest.json  {"format": "minibert-model", "version": 1,
//                   "config": {<ModelConfig fields>},
//                   "parameters": [{"name", "shape"}, ...]}
//   params.bin     for each parameter, in manifest order:
//                     u32 name_length, name bytes,
//                     u32 rank, u32 dims[rank],
//                     f32 values[prod(dims)]
//                  all integers and floats little-endian
//   vocab.txt      one token per line, line number = id
//
// Loading rejects any name, shape, or count that disagrees with the shapes
// implied by the manifest config.

#include <filesystem>

#include "json.hpp"
#include "minibert/model.hpp"
#include "minibert/tokenizer.hpp"

namespace minibert {

nlohmann::json model_config_to_json(const ModelConfig& config);
// Throws ConfigError on missing or ill-typed fields.
ModelConfig model_config_from_json(const nlohmann::json& json);

void save_checkpoint(const std::filesystem::path& dir, const ClassifierModel& model,
                     const Vocabulary& vocab);

struct LoadedCheckpoint {
  ClassifierModel model;
  Vocabulary vocab;
};

// Throws CheckpointError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace minibert

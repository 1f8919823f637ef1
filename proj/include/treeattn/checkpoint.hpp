#pragma once

#include <map>
#include <string>
#include <vector>

#include "treeattn/model.hpp"
#include "treeattn/tensor.hpp"

namespace treeattn {

// On-disk model formats.  The binary layout is an 8-byte magic, a little-
// endian u64 header length, a JSON header (config, vocabulary, and a tensor
// index of name/rows/cols/offset), then one flat little-endian float64
// payload.  The json format carries the same content with base64 payloads,
// for interchange; load() accepts either.
enum class CheckpointFormat { binary, json };

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocab_words;
  std::map<std::string, Tensor> tensors;  // embeddings ride along as embed.table
};

void save_checkpoint(const std::string& path, const Model& model,
                     CheckpointFormat format = CheckpointFormat::binary);

// Sniffs the format from the file head.  FormatError on anything malformed,
// IoError when the file cannot be read.
Checkpoint read_checkpoint(const std::string& path);

// Rebuilds the model a checkpoint describes.  The tensor set must match the
// parameter set implied by the config exactly (ConsistencyError otherwise).
Model model_from_checkpoint(const Checkpoint& cp);

}  // namespace treeattn

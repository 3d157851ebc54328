#pragma once

#include <filesystem>

#include "seqscope/corpus.hpp"
#include "seqscope/model.hpp"

namespace seqscope {

/// Trained parameters together with the vocabularies and tokenizer they
/// were trained with. On disk the parameters live in the model file and the
/// vocabularies in a JSON sidecar next to it (`<model>.vocab.json`).
struct ModelBundle {
  ModelParams params;
  Vocab source_vocab;
  Vocab target_vocab;
  TokenizerMode mode = TokenizerMode::char_level;
};

std::filesystem::path vocab_sidecar_path(const std::filesystem::path& model_path);

void save_bundle(const std::filesystem::path& model_path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& model_path);

}  // namespace seqscope

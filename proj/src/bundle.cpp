#include "seqscope/bundle.hpp"

#include <fstream>

#include "json.hpp"

namespace seqscope {

std::filesystem::path vocab_sidecar_path(const std::filesystem::path& model_path) {
  return std::filesystem::path(model_path.string() + ".vocab.json");
}

void save_bundle(const std::filesystem::path& model_path, const ModelBundle& bundle) {
  save_params(model_path, bundle.params);
  nlohmann::json j;
  j["format"] = "seqscope-vocab";
  j["version"] = 1;
  j["tokenizer"] = std::string(to_string(bundle.mode));
  j["source"] = bundle.source_vocab.tokens();
  j["target"] = bundle.target_vocab.tokens();
  const auto path = vocab_sidecar_path(model_path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
}

ModelBundle load_bundle(const std::filesystem::path& model_path) {
  ModelBundle b;
  b.params = load_params(model_path);
  const auto path = vocab_sidecar_path(model_path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format") != "seqscope-vocab" || j.at("version") != 1)
      throw FormatError("unsupported vocabulary file " + path.string());
    b.mode = parse_tokenizer_mode(j.at("tokenizer").get<std::string>());
    b.source_vocab = Vocab(j.at("source").get<std::vector<std::string>>());
    b.target_vocab = Vocab(j.at("target").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed vocabulary file " + path.string() + ": " + e.what());
  }
  if (b.source_vocab.size() != b.params.config.src_vocab_size ||
      b.target_vocab.size() != b.params.config.tgt_vocab_size)
    throw FormatError("vocabulary sizes in " + path.string() + " do not match the model");
  return b;
}

}  // namespace seqscope

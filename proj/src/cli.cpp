#include "seqscope/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "seqscope/bundle.hpp"
#include "seqscope/search.hpp"
#include "seqscope/server.hpp"
#include "seqscope/statestore.hpp"

namespace seqscope::cli {

namespace {

// key=value lines become --key=value flags placed right after the
// subcommand name, so anything given on the command line wins.
std::vector<std::string> config_flags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<std::string> flags;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ParseError(path + ":" + std::to_string(lineno) + ": expected key=value", 2);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    flags.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  return flags;
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> config;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config || rest.empty()) return rest;
  auto extra = config_flags(*config);
  rest.insert(rest.begin() + 1, extra.begin(), extra.end());
  return rest;
}

std::filesystem::path with_part(const std::filesystem::path& out, const std::string& part) {
  auto p = out;
  const auto ext = p.has_extension() ? p.extension().string() : std::string(".tsv");
  p.replace_extension();
  return p.string() + "." + part + ext;
}

HttpService* active_service = nullptr;

void handle_signal(int) {
  if (active_service) active_service->stop();
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inspect, train and serve a small attention-based sequence-to-sequence model", "seqscope"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.add_option("--config", "File of key=value lines supplying default flag values");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic date-conversion corpus as TSV");
  DatasetSpec gen_spec;
  std::string gen_out;
  std::vector<double> gen_split;
  gen->add_option("--size", gen_spec.size, "Number of pairs")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_spec.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output TSV path")->required();
  gen->add_option("--split", gen_split, "train,val,test fractions; writes <out>.train/.val/.test")
      ->delimiter(',')
      ->expected(3);

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a TSV corpus");
  std::string tr_data, tr_model, tr_loss, tr_tok = "char";
  ModelConfig mc;
  TrainConfig hc;
  std::uint64_t init_seed = 1;
  bool unidirectional = false;
  bool serial = false;
  tr->add_option("--data", tr_data, "Training TSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--model", tr_model, "Output model path")->required();
  tr->add_option("--loss-log", tr_loss, "Loss CSV path (default <model>.loss.csv)");
  tr->add_option("--tokenizer", tr_tok, "char or whitespace")->check(CLI::IsMember({"char", "whitespace"}))->capture_default_str();
  tr->add_option("--embed", mc.embed_dim, "Embedding size")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--hidden", mc.hidden_dim, "Hidden size")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--max-decode-len", mc.max_decode_len, "Decoding length cap")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--topk", mc.topk_record, "Predictions recorded per step")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_flag("--unidirectional", unidirectional, "Forward-only encoder");
  tr->add_option("--epochs", hc.epochs, "Epochs")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--batch", hc.batch_size, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--lr", hc.lr, "Adam learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  tr->add_option("--clip", hc.clip_norm, "Global gradient-norm clip")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--seed", hc.seed, "Shuffling seed")->capture_default_str();
  tr->add_option("--init-seed", init_seed, "Weight initialization seed")->capture_default_str();
  tr->add_flag("--serial", serial, "Use the serial reference kernels");

  // index
  auto* ix = app.add_subcommand("index", "Extract hidden states of a corpus into a state store");
  std::string ix_model, ix_data, ix_out;
  ExtractOptions xo;
  ix->add_option("--model", ix_model, "Model path")->required()->check(CLI::ExistingFile);
  ix->add_option("--data", ix_data, "Corpus TSV")->required()->check(CLI::ExistingFile);
  ix->add_option("--out", ix_out, "Output store path")->required();
  ix->add_option("--limit", xo.limit, "Maximum sentences stored")->check(CLI::PositiveNumber)->capture_default_str();
  ix->add_flag("--context", xo.include_context, "Also store context vectors");

  // translate
  auto* tl = app.add_subcommand("translate", "Decode source strings");
  std::string tl_model;
  std::vector<std::string> tl_text;
  BeamConfig beam;
  bool length_norm = false;
  tl->add_option("--model", tl_model, "Model path")->required()->check(CLI::ExistingFile);
  tl->add_option("text", tl_text, "Source strings (read from stdin when absent)");
  auto add_beam = [&](CLI::App* sub) {
    sub->add_option("--beam", beam.K, "Beam size")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--max-len", beam.max_len, "Maximum output length")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_flag("--length-normalize", length_norm, "Rank finished hypotheses by mean log-probability");
  };
  add_beam(tl);

  // eval
  auto* ev = app.add_subcommand("eval", "Exact-match accuracy on a TSV test set");
  std::string ev_model, ev_data;
  ev->add_option("--model", ev_model, "Model path")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Test TSV")->required()->check(CLI::ExistingFile);
  add_beam(ev);

  // serve
  auto* sv = app.add_subcommand("serve", "Start the HTTP service");
  std::string sv_model, sv_store, sv_host = "127.0.0.1", sv_static;
  int sv_port = 0;
  ServerConfig sc;
  sv->add_option("--model", sv_model, "Model path")->required()->check(CLI::ExistingFile);
  sv->add_option("--store", sv_store, "State store path")->check(CLI::ExistingFile);
  sv->add_option("--host", sv_host, "Bind address")->capture_default_str();
  sv->add_option("--port", sv_port, "Port (default $SEQSCOPE_PORT, else 8080)")->check(CLI::Range(1, 65535));
  sv->add_option("--static", sv_static, "Directory served at /")->check(CLI::ExistingDirectory);
  sv->add_option("--cache", sc.cache_capacity, "Translations kept in the trace cache")->check(CLI::PositiveNumber)->capture_default_str();
  add_beam(sv);

  try {
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  beam.length_normalize = length_norm;

  try {
    if (*gen) {
      auto pairs = generate_date_pairs(gen_spec);
      if (gen_split.empty()) {
        write_tsv(gen_out, pairs);
        out << "wrote " << pairs.size() << " pairs to " << gen_out << "\n";
      } else {
        gen_spec.split = {gen_split[0], gen_split[1], gen_split[2]};
        gen_spec.validate();
        auto parts = split_pairs(pairs, gen_spec.split);
        for (auto [name, part] : {std::pair{"train", &parts.train}, {"val", &parts.val}, {"test", &parts.test}}) {
          write_tsv(with_part(gen_out, name), *part);
          out << "wrote " << part->size() << " pairs to " << with_part(gen_out, name).string() << "\n";
        }
      }
    } else if (*tr) {
      DatasetSpec spec;
      spec.task = TaskKind::tsv;
      spec.tokenizer_mode = parse_tokenizer_mode(tr_tok);
      auto ds = load_tsv_corpus(tr_data, spec);
      if (ds.pairs.empty()) throw CorpusError(tr_data + " contains no pairs");
      mc.src_vocab_size = static_cast<std::uint32_t>(ds.source_vocab.size());
      mc.tgt_vocab_size = static_cast<std::uint32_t>(ds.target_vocab.size());
      mc.bidirectional_encoder = !unidirectional;
      hc.exec = serial ? Exec::serial : Exec::parallel;
      if (tr_loss.empty()) tr_loss = tr_model + ".loss.csv";
      std::ofstream log(tr_loss);
      if (!log) throw std::runtime_error("cannot open " + tr_loss + " for writing");
      log << "epoch,loss\n" << std::setprecision(17);
      auto result = train(init_params(mc, init_seed), ds.pairs, hc, [&](std::size_t epoch, double loss) {
        log << epoch << "," << loss << "\n" << std::flush;
        out << "epoch " << epoch << " loss " << loss << "\n" << std::flush;
      });
      save_bundle(tr_model, {std::move(result.params), ds.source_vocab, ds.target_vocab, ds.mode});
      out << "saved " << tr_model << "\n";
    } else if (*ix) {
      auto b = load_bundle(ix_model);
      auto raw = read_tsv(ix_data);
      auto pairs = make_pairs(raw, b.source_vocab, b.target_vocab, b.mode);
      auto store = extract_states(b.params, pairs, xo);
      save_store(ix_out, store);
      out << "stored " << store.size() << " states from " << store.sentences().size() << " sentences in "
          << ix_out << "\n";
    } else if (*tl) {
      auto b = load_bundle(tl_model);
      auto decode_one = [&](const std::string& text) {
        auto src = encode_text(text, b.source_vocab, Role::source, b.mode);
        if (src.empty()) throw CorpusError("empty source");
        auto r = beam_search(b.params, src, beam);
        out << decode_text(r.output.ids, b.target_vocab, b.mode) << "\t" << std::setprecision(6) << r.score << "\n";
      };
      if (tl_text.empty()) {
        for (std::string line; std::getline(std::cin, line);)
          if (!line.empty()) decode_one(line);
      } else {
        for (const auto& t : tl_text) decode_one(t);
      }
    } else if (*ev) {
      auto b = load_bundle(ev_model);
      auto raw = read_tsv(ev_data);
      if (raw.empty()) throw CorpusError(ev_data + " contains no pairs");
      std::size_t hits = 0;
      for (const auto& p : raw) {
        auto src = encode_text(p.source, b.source_vocab, Role::source, b.mode);
        if (src.empty()) continue;
        auto r = beam_search(b.params, src, beam);
        hits += decode_text(r.output.ids, b.target_vocab, b.mode) == p.target;
      }
      out << "exact_match=" << static_cast<double>(hits) / static_cast<double>(raw.size()) << "\n";
    } else if (*sv) {
      if (sv_port == 0) {
        const char* env = std::getenv("SEQSCOPE_PORT");
        sv_port = env ? std::atoi(env) : 8080;
        if (sv_port < 1 || sv_port > 65535) throw std::runtime_error("SEQSCOPE_PORT is not a valid port");
      }
      std::optional<StateStore> store;
      if (!sv_store.empty()) store = load_store(sv_store);
      sc.beam = beam;
      Workbench bench(load_bundle(sv_model), std::move(store), sc);
      HttpService service(bench, sv_static);
      active_service = &service;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      out << "listening on http://" << sv_host << ":" << sv_port << "\n" << std::flush;
      const bool ok = service.listen(sv_host, sv_port);
      active_service = nullptr;
      if (!ok) throw std::runtime_error("cannot listen on " + sv_host + ":" + std::to_string(sv_port));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace seqscope::cli

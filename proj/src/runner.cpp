#include "advseq/runner.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "advseq/checkpoint.hpp"
#include "advseq/deeplev.hpp"

namespace advseq {

namespace fs = std::filesystem;
using nlohmann::json;

std::string resolve_out_root(const std::string& cli_out) {
  if (!cli_out.empty()) return cli_out;
  if (const char* env = std::getenv("ADVSEQ_OUT_ROOT"); env && *env) return env;
  return "runs";
}

RunPaths run_paths(const IniConfig& cfg, const std::string& out_root) {
  return RunPaths{out_root + "/" + cfg.hash()};
}

namespace {

uint64_t fnv(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct DataSplits {
  RawDataset train, test;
  int n_classes = 0;
};

DataSplits resolve_data(const IniConfig& cfg) {
  DataSplits out;
  std::string kind = cfg.get("data", "kind", "synthetic");
  if (kind == "synthetic") {
    SyntheticConfig sc;
    sc.rule = synthetic_rule_from_name(cfg.get("data", "rule", "marker"));
    sc.n_classes = cfg.get_int("data", "n_classes", 2);
    sc.vocab_size = cfg.get_int("data", "vocab_size", 12);
    sc.len_min = cfg.get_int("data", "len_min", 6);
    sc.len_max = cfg.get_int("data", "len_max", 12);
    sc.marker = cfg.get_int("data", "marker", 3);
    sc.n_train = cfg.get_int("data", "n_train", 600);
    sc.n_test = cfg.get_int("data", "n_test", 300);
    sc.seed = cfg.get_u64("data", "seed", cfg.get_u64("run", "seed", 7));
    SyntheticDataset ds = generate_synthetic(sc);
    out.train = std::move(ds.train);
    out.test = std::move(ds.test);
    out.n_classes = std::max(out.train.n_classes, out.test.n_classes);
    return out;
  }
  if (kind == "file") {
    std::string train_path = cfg.get("data", "train_path", "");
    std::string test_path = cfg.get("data", "test_path", "");
    for (const std::string& p : {train_path, test_path})
      if (p.empty() || !fs::exists(p))
        throw std::runtime_error("dataset path missing or not found: " +
                                 (p.empty() ? "(unset)" : p));
    DatasetFormat fmt =
        dataset_format_from_name(cfg.get("data", "format", "synthetic_jsonl"));
    LoadOptions opts;
    opts.min_freq = cfg.get_int("data", "min_freq", 1);
    opts.max_seq_len = cfg.get_int("data", "max_seq_len", 20);
    out.train = load_raw(train_path, fmt, opts);
    out.test = load_raw(test_path, fmt, opts);
    out.n_classes = std::max(out.train.n_classes, out.test.n_classes);
    return out;
  }
  throw std::runtime_error("unknown data.kind: " + kind);
}

std::vector<LabeledExample> encode_raw(const RawDataset& raw, const Vocabulary& vocab) {
  std::vector<LabeledExample> out;
  out.reserve(raw.tokens.size());
  for (size_t i = 0; i < raw.tokens.size(); ++i)
    out.push_back({vocab.encode(raw.tokens[i]), raw.labels[i]});
  return out;
}

}  // namespace

json cmd_train(const IniConfig& cfg, const std::string& out_root, std::ostream& log) {
  const std::string hash = cfg.hash();
  RunPaths paths = run_paths(cfg, out_root);

  DataSplits data = resolve_data(cfg);  // fails fast on missing files

  fs::create_directories(paths.root);
  const uint64_t seed = cfg.get_u64("run", "seed", 7);

  Vocabulary vocab =
      Vocabulary::build(data.train.tokens, cfg.get_int("data", "min_freq", 1));
  vocab.save(paths.vocab());
  save_jsonl(paths.train_data(), data.train);
  save_jsonl(paths.test_data(), data.test);

  std::vector<LabeledExample> train = encode_raw(data.train, vocab);
  std::vector<LabeledExample> test = encode_raw(data.test, vocab);
  std::vector<TokenSequence> corpus;
  corpus.reserve(train.size());
  for (const auto& ex : train) corpus.push_back(ex.sequence);

  json metrics;

  log << "[train] seq2seq..." << std::endl;
  MaskerSet maskers =
      MaskerSet::parse(cfg.get("seq2seq", "maskers", "add,replace,delete,swap"));
  Seq2SeqConfig s2s;
  s2s.d_emb = cfg.get_int("seq2seq", "d_emb", 32);
  s2s.d_hidden = cfg.get_int("seq2seq", "d_hidden", 32);
  s2s.epochs = cfg.get_int("seq2seq", "epochs", 25);
  s2s.lr = cfg.get_double("seq2seq", "lr", 1e-3);
  s2s.corruption_rate = cfg.get_double("seq2seq", "corruption_rate", 0.15);
  Rng rng_s2s(Rng::mix(seed, fnv("seq2seq")));
  Seq2SeqTrainReport s2s_report;
  Seq2SeqModel seq2seq =
      train_seq2seq(corpus, maskers, vocab, s2s, rng_s2s, &s2s_report);
  seq2seq.save(paths.seq2seq());
  metrics["seq2seq_final_loss"] = s2s_report.loss_curve.back();
  metrics["seq2seq_heldout_token_accuracy"] = s2s_report.heldout_token_accuracy;
  metrics["seq2seq_heldout_identity_rate"] = s2s_report.heldout_identity_rate;
  log << "[train] seq2seq: loss " << s2s_report.loss_curve.back()
      << ", heldout token acc " << s2s_report.heldout_token_accuracy
      << ", identity rate " << s2s_report.heldout_identity_rate << std::endl;

  log << "[train] surrogate..." << std::endl;
  SurrogateConfig sur;
  sur.d_emb = cfg.get_int("surrogate", "d_emb", 32);
  sur.d_hidden = cfg.get_int("surrogate", "d_hidden", 32);
  sur.epochs = cfg.get_int("surrogate", "epochs", 10);
  sur.lr = cfg.get_double("surrogate", "lr", 1e-3);
  sur.head_epochs = cfg.get_int("surrogate", "head_epochs", 30);
  Rng rng_sur(Rng::mix(seed, fnv("surrogate")));
  SurrogateClassifier surrogate = train_surrogate(train, vocab, sur, &seq2seq, rng_sur);
  surrogate.save(paths.surrogate());
  metrics["surrogate_token_heldout_accuracy"] = surrogate.token_heldout_accuracy;
  metrics["surrogate_embedded_heldout_accuracy"] = surrogate.embedded_heldout_accuracy;
  log << "[train] surrogate: token acc " << surrogate.token_heldout_accuracy
      << ", embedded acc " << surrogate.embedded_heldout_accuracy << std::endl;

  log << "[train] deep levenshtein..." << std::endl;
  DeepLevConfig dl;
  dl.hidden = cfg.get_int("deeplev", "hidden", 64);
  dl.d_m = cfg.get_int("deeplev", "dim", 64);
  dl.epochs = cfg.get_int("deeplev", "epochs", 8);
  dl.lr = cfg.get_double("deeplev", "lr", 1e-3);
  Rng rng_dl(Rng::mix(seed, fnv("deeplev")));
  std::vector<PairExample> pairs =
      generate_pairs(corpus, cfg.get_int("deeplev", "pairs", 6000), maskers,
                     cfg.get_double("deeplev", "distant_fraction", 0.2), vocab, rng_dl);
  DeepLevModel deeplev = train_deep_lev(pairs, seq2seq, dl, rng_dl);
  deeplev.save(paths.deeplev());
  metrics["deeplev_heldout_mae"] = deeplev.heldout_mae;
  log << "[train] deep levenshtein: heldout mae " << deeplev.heldout_mae << std::endl;

  log << "[train] language model..." << std::endl;
  LmConfig lmc;
  lmc.d_emb = cfg.get_int("lm", "d_emb", 32);
  lmc.d_hidden = cfg.get_int("lm", "d_hidden", 32);
  lmc.epochs = cfg.get_int("lm", "epochs", 8);
  lmc.lr = cfg.get_double("lm", "lr", 1e-3);
  Rng rng_lm(Rng::mix(seed, fnv("lm")));
  LanguageModel lm = train_lm(corpus, vocab, lmc, rng_lm);
  lm.save(paths.lm());
  metrics["lm_heldout_log_perplexity"] = lm.heldout_log_perplexity;
  log << "[train] lm: heldout log-perplexity " << lm.heldout_log_perplexity
      << std::endl;

  log << "[train] target classifier..." << std::endl;
  TargetConfig tc;
  tc.epochs = cfg.get_int("target", "epochs", 8);
  tc.lr = cfg.get_double("target", "lr", 0.5);
  tc.seed = Rng::mix(seed, fnv("target"));
  TargetClassifier target = train_target(train, vocab, tc);
  {
    long ok = 0;
    for (const auto& ex : test)
      if (target.classify(ex.sequence).label == ex.label) ++ok;
    target.set_test_accuracy(double(ok) / double(test.size()));
  }
  target.save(paths.target());
  metrics["target_test_accuracy"] = target.test_accuracy();
  log << "[train] target: test accuracy " << target.test_accuracy() << std::endl;

  json manifest;
  manifest["config_hash"] = hash;
  manifest["artifacts"] = {{"seq2seq", "seq2seq.json"},
                           {"surrogate", "surrogate.json"},
                           {"deeplev", "deeplev.json"},
                           {"lm", "lm.json"},
                           {"target", "target.json"}};
  manifest["vocab"] = "vocab.txt";
  manifest["data"] = {{"train", "train.jsonl"},
                      {"test", "test.jsonl"},
                      {"n_classes", data.n_classes}};
  manifest["metrics"] = metrics;
  std::ofstream out(paths.manifest(), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest");
  out << manifest.dump(2) << '\n';
  return manifest;
}

LoadedBundle load_bundle(const RunPaths& paths) {
  if (!fs::exists(paths.manifest()))
    throw std::runtime_error("no manifest under " + paths.root +
                             " (run the train command first)");
  LoadedBundle b;
  b.vocab = Vocabulary::load(paths.vocab());
  b.seq2seq = Seq2SeqModel::load(paths.seq2seq(), b.vocab);
  b.surrogate = SurrogateClassifier::load(paths.surrogate(), b.vocab);
  b.deeplev = DeepLevModel::load(paths.deeplev(), b.vocab);
  b.lm = LanguageModel::load(paths.lm(), b.vocab);
  b.target = TargetClassifier::load(paths.target(), b.vocab);
  std::ifstream in(paths.manifest(), std::ios::binary);
  json manifest = json::parse(in);
  b.n_classes = manifest["data"]["n_classes"].get<int>();
  return b;
}

std::vector<LabeledExample> load_split(const RunPaths& paths, const Vocabulary& vocab,
                                       const std::string& split) {
  std::string path;
  if (split == "train")
    path = paths.train_data();
  else if (split == "test")
    path = paths.test_data();
  else
    throw std::runtime_error("unknown split: " + split);
  RawDataset raw = load_raw(path, DatasetFormat::SyntheticJsonl, {});
  return encode_raw(raw, vocab);
}

AttackConfig attack_config_from(const IniConfig& cfg) {
  AttackConfig a;
  a.n = cfg.get_int("attack", "n", 100);
  a.sigma = cfg.get_double("attack", "sigma", 0.0);
  a.sigma_wer = cfg.get_double("attack", "sigma_wer", 1.0);
  a.sigma_class = cfg.get_double("attack", "sigma_class", 0.5);
  a.lambda = cfg.get_double("attack", "lambda", 1.0);
  a.step_size = cfg.get_double("attack", "step_size", 0.1);
  a.beam = cfg.get_int("attack", "beam", 5);
  a.seed = cfg.get_u64("attack", "seed", cfg.get_u64("run", "seed", 7));
  std::string maskers = cfg.get("attack", "maskers", "");
  if (!maskers.empty()) a.masker = MaskerSet::parse(maskers);
  a.max_len_factor = cfg.get_int("attack", "max_len_factor", 2);
  return a;
}

std::vector<AttackResult> attack_dataset(const std::vector<LabeledExample>& examples,
                                         AttackMethod method,
                                         const AttackModels& models,
                                         const AttackConfig& cfg, int jobs) {
  std::vector<AttackResult> results(examples.size());
  std::atomic<size_t> next{0};
  const uint64_t stream = Rng::mix(cfg.seed, fnv(attack_method_name(method)));
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= examples.size()) break;
      Rng rng(Rng::mix(stream, i));
      results[i] = run_attack(examples[i].sequence, examples[i].label, method,
                              models, cfg, rng);
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

namespace {

json result_to_json(const AttackResult& r, const Vocabulary& vocab,
                    const std::string& method, const std::string& config_hash,
                    size_t index, bool with_trace) {
  json j;
  j["index"] = index;
  j["method"] = method;
  j["config_hash"] = config_hash;
  j["true_label"] = r.true_label;
  j["original"] = vocab.decode(r.original);
  j["adversarial"] = vocab.decode(r.adversarial);
  j["flipped"] = r.flipped;
  j["selected_step"] = r.selected_step;
  j["aborted_steps"] = r.aborted_steps;
  if (with_trace) {
    json trace = json::array();
    for (const TraceEntry& e : r.trace.entries) {
      json t;
      t["step"] = e.step;
      t["z_norm"] = e.z_norm;
      t["tokens"] = vocab.decode(e.decoded);
      t["score"] = e.score;
      t["label"] = e.label;
      t["wer"] = e.wer_to_orig;
      t["accepted"] = e.accepted;
      trace.push_back(std::move(t));
    }
    j["trace"] = std::move(trace);
  }
  return j;
}

}  // namespace

void write_results_jsonl(const std::string& path,
                         const std::vector<AttackResult>& results,
                         const Vocabulary& vocab, const std::string& method,
                         const std::string& config_hash, bool with_trace) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write results: " + path);
  for (size_t i = 0; i < results.size(); ++i)
    out << result_to_json(results[i], vocab, method, config_hash, i, with_trace)
        << '\n';
}

std::vector<AttackResult> read_results_jsonl(const std::string& path,
                                             const Vocabulary& vocab,
                                             const std::string& expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open results: " + path);
  std::vector<AttackResult> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (!expected_hash.empty() &&
          j.value("config_hash", "") != expected_hash)
        throw std::runtime_error("config hash mismatch (file written by a "
                                 "different configuration)");
      AttackResult r;
      r.true_label = j.at("true_label").get<int>();
      r.original = vocab.encode(j.at("original").get<std::vector<std::string>>());
      r.adversarial =
          vocab.encode(j.at("adversarial").get<std::vector<std::string>>());
      r.flipped = j.value("flipped", false);
      r.selected_step = j.value("selected_step", 0);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw std::runtime_error("no results in " + path);
  return out;
}

std::vector<AttackResult> cmd_attack(const IniConfig& cfg, const std::string& out_root,
                                     AttackMethod method, bool with_trace, int jobs,
                                     int limit, const std::string& split,
                                     std::ostream& log) {
  RunPaths paths = run_paths(cfg, out_root);
  LoadedBundle bundle = load_bundle(paths);
  std::vector<LabeledExample> examples = load_split(paths, bundle.vocab, split);
  if (limit > 0 && static_cast<int>(examples.size()) > limit) examples.resize(limit);

  AttackConfig acfg = attack_config_from(cfg);
  AttackModels models = bundle.attack_models();
  log << "[attack] " << attack_method_name(method) << " over " << examples.size()
      << " examples (n=" << acfg.n << ")" << std::endl;
  auto t0 = std::chrono::steady_clock::now();
  std::vector<AttackResult> results =
      attack_dataset(examples, method, models, acfg, jobs);
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_results_jsonl(paths.attack_results(attack_method_name(method)), results,
                      bundle.vocab, attack_method_name(method), cfg.hash(),
                      with_trace);
  long flips = 0;
  for (const auto& r : results) flips += r.flipped;
  log << "[attack] done in " << secs << "s; guidance flips " << flips << "/"
      << results.size() << std::endl;
  return results;
}

MetricsReport cmd_evaluate(const IniConfig& cfg, const std::string& out_root,
                           const std::string& method,
                           const std::string& results_override, std::ostream& log) {
  RunPaths paths = run_paths(cfg, out_root);
  LoadedBundle bundle = load_bundle(paths);
  std::string results_path =
      results_override.empty() ? paths.attack_results(method) : results_override;
  std::vector<AttackResult> results =
      read_results_jsonl(results_path, bundle.vocab, cfg.hash());

  MetricsReport rep = metric_suite(results, bundle.target, bundle.lm, method,
                                   cfg.hash());
  fs::create_directories(fs::path(paths.report_json(method)).parent_path());
  {
    std::ofstream out(paths.report_json(method), std::ios::binary);
    out << rep.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(paths.report_csv(method), std::ios::binary);
    out << rep.csv_header() << '\n' << rep.csv_row() << '\n';
  }
  {
    std::ofstream out(paths.scatter(method), std::ios::binary);
    out << scatter_csv(results, bundle.target);
  }
  log << "[evaluate] " << method << ": accuracy drop " << rep.accuracy_drop
      << ", normalized wer " << rep.normalized_wer << ", nad " << rep.nad
      << std::endl;
  return rep;
}

void cmd_sweep(const IniConfig& cfg, const std::string& out_root, std::ostream& log) {
  RunPaths paths = run_paths(cfg, out_root);
  LoadedBundle bundle = load_bundle(paths);
  std::vector<LabeledExample> examples =
      load_split(paths, bundle.vocab, cfg.get("sweep", "split", "test"));
  int limit = cfg.get_int("sweep", "limit", 60);
  if (limit > 0 && static_cast<int>(examples.size()) > limit) examples.resize(limit);

  const int budget = cfg.get_int("sweep", "budget", 8);
  if (budget < 1) throw std::runtime_error("sweep budget must be >= 1");
  AttackMethod method =
      attack_method_from_name(cfg.get("sweep", "method", "cascada"));
  AttackConfig base = attack_config_from(cfg);
  base.n = cfg.get_int("sweep", "n", 40);
  const uint64_t seed = Rng::mix(base.seed, fnv("sweep"));
  const int jobs = cfg.get_int("sweep", "jobs", 1);

  auto log_uniform = [](Rng& r, double lo, double hi) {
    return lo * std::exp(r.uniform() * std::log(hi / lo));
  };

  std::ostringstream rows;
  rows << "point,method,n,sigma,sigma_wer,sigma_class,lambda,step_size,beam,"
          "normalized_wer,accuracy_drop,nad,status\n";
  AttackModels models = bundle.attack_models();
  for (int p = 0; p < budget; ++p) {
    Rng prng(Rng::mix(seed, p));
    AttackConfig a = base;
    a.sigma = bundle.seq2seq.state_std() *
              log_uniform(prng, cfg.get_double("sweep", "sigma_scale_min", 0.02),
                          cfg.get_double("sweep", "sigma_scale_max", 0.6));
    a.sigma_wer = log_uniform(prng, cfg.get_double("sweep", "sigma_wer_min", 0.5),
                              cfg.get_double("sweep", "sigma_wer_max", 4.0));
    a.sigma_class =
        log_uniform(prng, cfg.get_double("sweep", "sigma_class_min", 0.25),
                    cfg.get_double("sweep", "sigma_class_max", 2.0));
    a.lambda = log_uniform(prng, cfg.get_double("sweep", "lambda_min", 0.1),
                           cfg.get_double("sweep", "lambda_max", 10.0));
    a.step_size = log_uniform(prng, cfg.get_double("sweep", "step_min", 0.02),
                              cfg.get_double("sweep", "step_max", 1.0));
    const int beams[] = {1, 3, 5};
    a.beam = beams[prng.uniform_int(3)];
    a.seed = Rng::mix(seed, 1000 + p);

    rows << p << ',' << attack_method_name(method) << ',' << a.n << ',' << a.sigma
         << ',' << a.sigma_wer << ',' << a.sigma_class << ',' << a.lambda << ','
         << a.step_size << ',' << a.beam << ',';
    try {
      std::vector<AttackResult> results =
          attack_dataset(examples, method, models, a, jobs);
      MetricsReport rep = metric_suite(results, bundle.target, bundle.lm,
                                       attack_method_name(method), cfg.hash());
      rows << rep.normalized_wer << ',' << rep.accuracy_drop << ',' << rep.nad
           << ",ok\n";
      log << "[sweep] point " << p << ": nwer " << rep.normalized_wer
          << ", accuracy drop " << rep.accuracy_drop << std::endl;
    } catch (const std::exception& e) {
      rows << ",,," << "error: " << e.what() << '\n';
      log << "[sweep] point " << p << " failed: " << e.what() << std::endl;
    }
  }
  std::ofstream out(paths.sweep_csv(), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write sweep csv");
  out << "# config_hash=" << cfg.hash() << '\n' << rows.str();
}

void cmd_show_examples(const IniConfig& cfg, const std::string& out_root,
                       const std::string& method, int limit, std::ostream& out) {
  RunPaths paths = run_paths(cfg, out_root);
  Vocabulary vocab = Vocabulary::load(paths.vocab());
  std::vector<AttackResult> results =
      read_results_jsonl(paths.attack_results(method), vocab, cfg.hash());
  auto join = [&](const TokenSequence& s) {
    std::string text;
    for (int id : s.ids) {
      if (!text.empty()) text += ' ';
      text += vocab.token(id);
    }
    return text;
  };
  int shown = 0;
  for (const AttackResult& r : results) {
    if (limit > 0 && shown >= limit) break;
    out << "original    : " << join(r.original) << '\n'
        << "adversarial : " << join(r.adversarial) << "   [wer "
        << wer(r.adversarial, r.original) << (r.flipped ? ", guidance flipped" : "")
        << "]\n\n";
    ++shown;
  }
}

}  // namespace advseq

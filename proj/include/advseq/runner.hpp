#pragma once

#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "advseq/attacks.hpp"
#include "advseq/config.hpp"
#include "advseq/data.hpp"
#include "advseq/evaluation.hpp"

namespace advseq {

// Output layout: <out_root>/<config_hash>/..., every artifact embedding the
// config hash so evaluate can refuse mismatched inputs.
struct RunPaths {
  std::string root;

  std::string manifest() const { return root + "/manifest.json"; }
  std::string vocab() const { return root + "/vocab.txt"; }
  std::string seq2seq() const { return root + "/seq2seq.json"; }
  std::string surrogate() const { return root + "/surrogate.json"; }
  std::string deeplev() const { return root + "/deeplev.json"; }
  std::string lm() const { return root + "/lm.json"; }
  std::string target() const { return root + "/target.json"; }
  std::string train_data() const { return root + "/train.jsonl"; }
  std::string test_data() const { return root + "/test.jsonl"; }
  std::string attack_results(const std::string& method) const {
    return root + "/attacks/" + method + ".jsonl";
  }
  std::string report_json(const std::string& method) const {
    return root + "/eval/" + method + ".report.json";
  }
  std::string report_csv(const std::string& method) const {
    return root + "/eval/" + method + ".report.csv";
  }
  std::string scatter(const std::string& method) const {
    return root + "/eval/" + method + ".scatter.csv";
  }
  std::string sweep_csv() const { return root + "/sweep.csv"; }
};

// --out flag > ADVSEQ_OUT_ROOT > ./runs
std::string resolve_out_root(const std::string& cli_out);
RunPaths run_paths(const IniConfig& cfg, const std::string& out_root);

// Trains seq2seq, surrogate, deep levenshtein, language model and target,
// persists checkpoints, data splits and the manifest. Returns the manifest.
nlohmann::json cmd_train(const IniConfig& cfg, const std::string& out_root,
                         std::ostream& log);

struct LoadedBundle {
  Vocabulary vocab;
  Seq2SeqModel seq2seq;
  SurrogateClassifier surrogate;
  DeepLevModel deeplev;
  LanguageModel lm;
  TargetClassifier target;
  int n_classes = 0;

  AttackModels attack_models() const {
    return {&seq2seq, &surrogate, &deeplev, nullptr};
  }
};

LoadedBundle load_bundle(const RunPaths& paths);
std::vector<LabeledExample> load_split(const RunPaths& paths, const Vocabulary& vocab,
                                       const std::string& split);

AttackConfig attack_config_from(const IniConfig& cfg);

// Fans examples across `jobs` workers; per-example random streams derive
// from (seed, method, example index), so results are identical at any job
// count and are stored in example order.
std::vector<AttackResult> attack_dataset(const std::vector<LabeledExample>& examples,
                                         AttackMethod method,
                                         const AttackModels& models,
                                         const AttackConfig& cfg, int jobs);

void write_results_jsonl(const std::string& path,
                         const std::vector<AttackResult>& results,
                         const Vocabulary& vocab, const std::string& method,
                         const std::string& config_hash, bool with_trace);
std::vector<AttackResult> read_results_jsonl(const std::string& path,
                                             const Vocabulary& vocab,
                                             const std::string& expected_hash);

std::vector<AttackResult> cmd_attack(const IniConfig& cfg, const std::string& out_root,
                                     AttackMethod method, bool with_trace, int jobs,
                                     int limit, const std::string& split,
                                     std::ostream& log);

MetricsReport cmd_evaluate(const IniConfig& cfg, const std::string& out_root,
                           const std::string& method,
                           const std::string& results_override, std::ostream& log);

void cmd_sweep(const IniConfig& cfg, const std::string& out_root, std::ostream& log);

void cmd_show_examples(const IniConfig& cfg, const std::string& out_root,
                       const std::string& method, int limit, std::ostream& out);

}  // namespace advseq

#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "advseq/attacks.hpp"
#include "advseq/classifiers.hpp"
#include "advseq/nn.hpp"
#include "advseq/rng.hpp"
#include "advseq/vocab.hpp"

namespace advseq {

struct MetricsReport {
  double roc_auc_drop = 0.0;
  double accuracy_drop = 0.0;
  double probability_drop = 0.0;
  double mean_wer = 0.0;
  double normalized_wer = 0.0;
  double log_perplexity = 0.0;
  double nad = 0.0;
  int n_examples = 0;
  std::string attack_id;
  std::string config_hash;

  nlohmann::json to_json() const;
  std::string csv_header() const;
  std::string csv_row() const;
};

struct LmConfig {
  int d_emb = 64;
  int d_hidden = 64;
  int epochs = 10;
  double lr = 1e-3;
  double clip_norm = 5.0;
};

// Uni-directional next-token model used as the independent fluency judge
// behind the log-perplexity column.
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(int vocab_size, const LmConfig& cfg, uint64_t vocab_hash, Rng& rng);

  // Mean negative log-likelihood per predicted token over [x..., EOS].
  double nll_per_token(const TokenSequence& x) const;

  std::vector<nn::Param*> params();
  uint64_t vocab_hash() const { return vocab_hash_; }
  double heldout_log_perplexity = 0.0;

  void save(const std::string& path) const;
  static LanguageModel load(const std::string& path, const Vocabulary& vocab);

 private:
  friend class LmTrainer;
  LmConfig cfg_;
  uint64_t vocab_hash_ = 0;
  nn::Param emb_;
  nn::GruParams gru_;
  nn::Dense out_;
};

LanguageModel train_lm(const std::vector<TokenSequence>& corpus,
                       const Vocabulary& vocab, const LmConfig& cfg, Rng& rng);

// Macro one-vs-rest ROC AUC with average-rank tie handling. probs is n x k;
// classes missing a positive or negative are skipped.
double macro_ovr_auc(const nn::Mat& probs, const std::vector<int>& labels);

// Normalised accuracy drop over Z = {i : target(x_i) = y_i}:
//   mean of 1{label changed} * (L - WER) / (L - 1), L = max(|x|, |x*|),
// with the factor clamped to [0, 1] and 0/0 resolved to 0.
// Throws "no correctly-classified examples" when Z is empty.
double nad(const std::vector<AttackResult>& results, const TargetClassifier& target);

// Core of the formula on plain arrays (randomized property tests use this).
double nad_core(const std::vector<int>& orig_labels, const std::vector<int>& adv_labels,
                const std::vector<int>& true_labels, const std::vector<int>& wers,
                const std::vector<int>& lens);

MetricsReport metric_suite(const std::vector<AttackResult>& results,
                           const TargetClassifier& target, const LanguageModel& lm,
                           const std::string& attack_id,
                           const std::string& config_hash);

// Per-example scatter rows (normalized WER vs correctness change) backing
// the WER-vs-drop plots.
std::string scatter_csv(const std::vector<AttackResult>& results,
                        const TargetClassifier& target);

}  // namespace advseq

#pragma once

#include <string>
#include <vector>

#include "advseq/classifiers.hpp"
#include "advseq/deeplev.hpp"
#include "advseq/editdist.hpp"
#include "advseq/rng.hpp"
#include "advseq/seq2seq.hpp"

namespace advseq {

enum class AttackMethod { RandomWalk, Mcmc, Cascada, HotFlip };
const char* attack_method_name(AttackMethod m);
AttackMethod attack_method_from_name(const std::string& name);

struct AttackConfig {
  int n = 100;              // candidate budget
  double sigma = 0.0;       // proposal std; <= 0 means 0.1 * encoder state std
  double sigma_wer = 1.0;   // MCMC edit-distance temperature
  double sigma_class = 0.5; // MCMC class-indicator temperature
  double lambda = 1.0;      // CASCADA surrogate-distance weight
  double step_size = 0.1;   // CASCADA learning rate
  int beam = 5;
  MaskerSet masker;         // empty -> the model's trained operation set
  uint64_t seed = 1;
  int max_len_factor = 2;

  void validate() const;
};

struct TraceEntry {
  int step = 0;         // 1-based
  double z_norm = 0.0;  // Frobenius norm of the candidate embedding
  TokenSequence decoded;
  double score = 0.0;   // guidance probability of the true class
  int label = 0;        // guidance argmax label
  int wer_to_orig = 0;
  bool accepted = true;  // MCMC acceptance; true elsewhere
};

struct CandidateTrace {
  std::vector<TraceEntry> entries;
};

struct AttackResult {
  TokenSequence original;
  int true_label = 0;
  TokenSequence adversarial;
  CandidateTrace trace;
  bool flipped = false;
  int selected_step = 0;   // 1-based index into the trace
  int aborted_steps = 0;   // CASCADA steps skipped on non-finite gradients
  double wall_seconds = 0; // excluded from persisted payloads
};

// The attacker's toolkit. The black-box target classifier is deliberately
// absent; set white_box to score candidates with a target model instead of
// the surrogate (ablation mode).
struct AttackModels {
  const Seq2SeqModel* seq2seq = nullptr;
  const SurrogateClassifier* surrogate = nullptr;
  const DeepLevModel* deeplev = nullptr;  // required by CASCADA only
  const TargetClassifier* white_box = nullptr;
};

// Two-branch selection: the minimum-WER candidate among label flips, else
// the minimum-score candidate; ties resolve to the earliest step. Returns a
// 0-based index into the trace.
int select_candidate(const CandidateTrace& trace, int true_label);

// z' = z0 + eps, eps ~ N(0, sigma^2 I).
EmbeddedState random_walk_step(const EmbeddedState& z0, double sigma, Rng& rng);

// Acceptance ratio exp(-w/sigma_wer - [same_class]/sigma_class).
double mcmc_alpha(int wer_to_orig, bool same_class, double sigma_wer,
                  double sigma_class);
// Accepts with probability min(1, alpha): draws u ~ U[0,1) and rejects when
// alpha < u.
bool mcmc_accept(double alpha, Rng& rng);

// First-order flip gains g(i, v) = grad_i . (emb_v - emb_{x_i}); zero for
// v = x_i by construction.
nn::Mat flip_gains(const nn::Mat& input_grads, const nn::Mat& emb,
                   const std::vector<int>& ids);

// Optional introspection for property tests: CASCADA iterates after each
// update, and the MCMC chain norm after each accept/revert decision.
struct AttackDebug {
  std::vector<nn::Mat>* cascada_iterates = nullptr;
  std::vector<double>* mcmc_chain_norms = nullptr;
};

AttackResult run_attack(const TokenSequence& x, int true_label, AttackMethod method,
                        const AttackModels& models, const AttackConfig& cfg,
                        Rng& rng, const AttackDebug& debug = {});

// Minimal-edit-script audit of x -> y for constrained-attack reports.
struct EditAudit {
  EditScript script;
  bool multiset_preserved = false;
  int len_delta = 0;  // |y| - |x|
};
EditAudit audit_edits(const TokenSequence& x, const TokenSequence& y);

}  // namespace advseq

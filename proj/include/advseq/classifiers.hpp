#pragma once

#include <string>
#include <vector>

#include "advseq/nn.hpp"
#include "advseq/rng.hpp"
#include "advseq/seq2seq.hpp"
#include "advseq/vocab.hpp"

namespace advseq {

struct Classification {
  nn::Vec probs;  // simplex over classes
  int label = 0;  // argmax, ties toward the smallest class id
};

// The black-box target: multinomial logistic regression over TF-IDF features
// (raw tf, smoothed idf, L2-normalized). Featurization is bag-of-tokens, so
// the target is invariant to token order by construction.
class TargetClassifier {
 public:
  TargetClassifier() = default;

  // Hand-constructible for oracle tests: feature id = token id, given idf
  // weights and linear weights W (k x F), b (k).
  TargetClassifier(std::vector<int> feature_of_token, nn::Vec idf, nn::Mat W,
                   nn::Vec b, uint64_t vocab_hash);

  Classification classify(const TokenSequence& x) const;

  int n_classes() const { return static_cast<int>(W_.rows()); }
  uint64_t vocab_hash() const { return vocab_hash_; }
  double test_accuracy() const { return test_accuracy_; }
  void set_test_accuracy(double a) { test_accuracy_ = a; }

  void save(const std::string& path) const;
  static TargetClassifier load(const std::string& path, const Vocabulary& vocab);

  // Sparse (feature, value) pairs of the L2-normalized tf-idf vector.
  std::vector<std::pair<int, double>> featurize(const TokenSequence& x) const;

 private:
  friend struct TargetTrainerAccess;

  std::vector<int> feature_of_token_;  // token id -> feature id or -1
  nn::Vec idf_;
  nn::Mat W_;
  nn::Vec b_;
  uint64_t vocab_hash_ = 0;
  double test_accuracy_ = 0.0;
};

struct TargetConfig {
  int epochs = 8;
  double lr = 0.5;
  uint64_t seed = 1;
};

// Fits TF-IDF on the training tokens, then multinomial logistic regression
// by epochs of example-wise gradient steps. Throws on single-class data.
TargetClassifier train_target(const std::vector<LabeledExample>& train,
                              const Vocabulary& vocab, const TargetConfig& cfg = {});

struct SurrogateConfig {
  int d_emb = 64;
  int d_hidden = 64;  // per direction
  int epochs = 10;
  double lr = 1e-3;
  double clip_norm = 5.0;
  int head_epochs = 30;  // embedded-head epochs (frozen encoder)
};

// The attacker's differentiable classifier: a one-layer bi-directional gated
// recurrent body over its own token embeddings with a fully-connected head
// on [mean-pool || max-pool] of the hidden states, plus a second
// fully-connected head consuming pooled EmbeddedState from the frozen
// seq2seq encoder. The token head backs HotFlip (input gradients); the
// embedded head scores candidates for the walk/MCMC/CASCADA attacks.
class SurrogateClassifier {
 public:
  SurrogateClassifier() = default;
  SurrogateClassifier(int vocab_size, int n_classes, int state_width,
                      const SurrogateConfig& cfg, uint64_t vocab_hash, Rng& rng);

  // Token path.
  Classification classify_tokens(const TokenSequence& x) const;
  // Cross-entropy of the true class plus gradients w.r.t. the input token
  // embeddings (one row per position); backs HotFlip.
  nn::Mat token_input_gradients(const TokenSequence& x, int true_class,
                                double* loss = nullptr) const;

  // Embedded path: fully-connected head on [mean || max] over rows of z.
  Classification classify_embedded(const EmbeddedState& z) const;
  // Taped probability of class `cls` at z (a leaf in `t`), for gradient
  // attacks. Throws on width mismatch.
  nn::Var embedded_prob(nn::Tape& t, nn::Var z, int cls) const;

  int n_classes() const { return k_; }
  int state_width() const { return state_width_; }
  uint64_t vocab_hash() const { return vocab_hash_; }
  const nn::Mat& token_embeddings() const { return emb_.value; }

  std::vector<nn::Param*> params();
  std::vector<nn::Param*> head_params();  // embedded head only

  void save(const std::string& path) const;
  static SurrogateClassifier load(const std::string& path, const Vocabulary& vocab);

  double token_heldout_accuracy = 0.0;
  double embedded_heldout_accuracy = 0.0;

 private:
  friend class SurrogateTrainer;

  int k_ = 0;
  int state_width_ = 0;
  SurrogateConfig cfg_;
  uint64_t vocab_hash_ = 0;

  nn::Param emb_;
  nn::GruParams fwd_, bwd_;
  nn::Dense tok_head_;  // k x 4*d_hidden
  nn::Dense emb_head_;  // k x 2*state_width
};

// Trains the token path on labeled sequences, then the embedded head on
// pooled encoder states with the encoder frozen. `encoder` may be null, in
// which case only the token path is trained.
SurrogateClassifier train_surrogate(const std::vector<LabeledExample>& train,
                                    const Vocabulary& vocab,
                                    const SurrogateConfig& cfg,
                                    const Seq2SeqModel* encoder, Rng& rng);

}  // namespace advseq

#pragma once

#include <string>
#include <vector>

#include "advseq/nn.hpp"
#include "advseq/rng.hpp"
#include "advseq/vocab.hpp"

namespace advseq {

// Per-token matrix of encoder hidden states z = E(x). Row t corresponds to
// the t-th framed input position ([BOS, x..., EOS]); width is fixed by the
// trained encoder (two directions concatenated).
struct EmbeddedState {
  nn::Mat m;

  int rows() const { return static_cast<int>(m.rows()); }
  int width() const { return static_cast<int>(m.cols()); }
  double norm() const { return m.norm(); }
};

// Applies ceil(rate * |x|) edit operations drawn uniformly from m at uniform
// random positions. Replace always changes the token; Delete never empties
// the sequence; AddToken/Replace draw uniform non-special tokens.
TokenSequence corrupt(const TokenSequence& x, const MaskerSet& m, double rate,
                      const Vocabulary& vocab, Rng& rng);

struct BeamHyp {
  TokenSequence tokens;
  double logp = 0.0;
  bool terminated = false;  // EOS-terminated vs max-length truncated
};

struct BeamResult {
  std::vector<BeamHyp> hyps;  // sorted by logp descending
  int beam_width = 0;
  const BeamHyp& top() const { return hyps.front(); }
};

struct Seq2SeqConfig {
  int d_emb = 64;
  int d_hidden = 128;  // per direction
  int epochs = 20;
  double lr = 1e-3;
  double corruption_rate = 0.15;
  double clip_norm = 5.0;
  double heldout_fraction = 0.1;
};

// Masked-reconstruction encoder/decoder. The encoder is a bi-directional
// gated recurrent network; the decoder a uni-directional one attending over
// the encoder state matrix. The masker set conditions the model through
// learned control tokens prepended to the encoder input; their state rows
// are dropped from EmbeddedState, so row count is input length + 2 framing
// and conditioning flows through the bi-directional recurrence.
class Seq2SeqModel {
 public:
  Seq2SeqModel() = default;
  Seq2SeqModel(int vocab_size, const Seq2SeqConfig& cfg, uint64_t vocab_hash,
               const MaskerSet& trained_ops, Rng& rng);

  EmbeddedState encode(const TokenSequence& x, const MaskerSet& m) const;
  BeamResult decode(const EmbeddedState& z, int beam, int max_len) const;

  // Teacher-forced log-probability of tokens under attention over z,
  // including the EOS step when terminated. Recomputes exactly what beam
  // search accumulates.
  double sequence_logprob(const EmbeddedState& z, const TokenSequence& tokens,
                          bool terminated) const;

  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;

  int d_emb() const { return cfg_.d_emb; }
  int d_hidden() const { return cfg_.d_hidden; }
  int state_width() const { return 2 * cfg_.d_hidden; }
  int vocab_size() const { return static_cast<int>(emb_.value.rows()); }
  uint64_t vocab_hash() const { return vocab_hash_; }
  const MaskerSet& trained_ops() const { return trained_ops_; }
  const Seq2SeqConfig& config() const { return cfg_; }

  // Mean per-dimension std of encoder states over the training corpus;
  // attack noise scales default from it.
  double state_std() const { return state_std_; }
  void set_state_std(double v) { state_std_ = v; }

  const std::vector<double>& train_curve() const { return train_curve_; }
  std::vector<double>& mutable_train_curve() { return train_curve_; }

  void save(const std::string& path) const;
  static Seq2SeqModel load(const std::string& path, const Vocabulary& vocab);

 private:
  friend class Seq2SeqTrainer;
  friend double reconstruction_token_accuracy(const Seq2SeqModel&,
                                              const std::vector<TokenSequence>&,
                                              const MaskerSet&);

  std::vector<int> frame_input(const TokenSequence& x, const MaskerSet& m,
                               std::vector<int>* kept) const;
  // One decoder step: consumes previous-token id and hidden state, returns
  // logits over the vocabulary and the new hidden state.
  nn::Vec decoder_step(const EmbeddedState& z, int prev_token, nn::Vec& h) const;
  nn::Vec decoder_h0(const EmbeddedState& z) const;

  Seq2SeqConfig cfg_;
  uint64_t vocab_hash_ = 0;
  MaskerSet trained_ops_;
  double state_std_ = 1.0;
  std::vector<double> train_curve_;

  nn::Param emb_;
  nn::GruParams enc_fwd_, enc_bwd_;
  nn::GruParams dec_;
  nn::Dense init_;
  nn::Param att_;
  nn::Dense read_;
  nn::Dense out_;
};

struct Seq2SeqTrainReport {
  std::vector<double> loss_curve;      // mean loss per epoch
  double heldout_token_accuracy = 0.0; // teacher-forced, clean inputs
  double heldout_identity_rate = 0.0;  // beam-5 exact reconstruction
};

// Training pairs are (corrupt(x, m) with control prefix, x); loss is
// token-level cross-entropy with teacher forcing. Aborts on non-finite loss.
Seq2SeqModel train_seq2seq(const std::vector<TokenSequence>& corpus,
                           const MaskerSet& m, const Vocabulary& vocab,
                           const Seq2SeqConfig& cfg, Rng& rng,
                           Seq2SeqTrainReport* report = nullptr);

// Evaluation helpers used by tests and training reports.
double reconstruction_token_accuracy(const Seq2SeqModel& model,
                                     const std::vector<TokenSequence>& seqs,
                                     const MaskerSet& m);
double identity_reconstruction_rate(const Seq2SeqModel& model,
                                    const std::vector<TokenSequence>& seqs,
                                    const MaskerSet& m, int beam);

}  // namespace advseq

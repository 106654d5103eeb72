#pragma once

#include <string>
#include <vector>

#include "advseq/editdist.hpp"
#include "advseq/nn.hpp"
#include "advseq/rng.hpp"
#include "advseq/seq2seq.hpp"

namespace advseq {

// Training pair for the differentiable WER surrogate; target is exactly
// wer_norm(x, y).
struct PairExample {
  TokenSequence x, y;
  double target = 0.0;
};

// (1 - distant_fraction) of the pairs are (x, corrupt(x, m)); the rest are
// random distinct corpus pairs. Every target is recomputed with wer_norm.
std::vector<PairExample> generate_pairs(const std::vector<TokenSequence>& corpus,
                                        int count, const MaskerSet& m,
                                        double distant_fraction,
                                        const Vocabulary& vocab, Rng& rng);

void save_pairs_jsonl(const std::string& path, const std::vector<PairExample>& pairs);
std::vector<PairExample> load_pairs_jsonl(const std::string& path);

struct DeepLevConfig {
  int hidden = 128;
  int d_m = 64;  // output width of M
  int epochs = 10;
  double lr = 1e-3;
  double clip_norm = 5.0;
};

// M maps pooled [mean || max] encoder states to a d_m vector; the surrogate
// distance is wer_deep(z, z') = (1 - cos(M(z), M(z'))) / 2, which scores 0
// for identical inputs to match the wer_norm training target. The factor
// printed in the reference formulation, (cos + 1) / 2, would assign distance
// 1 to identical sequences; the sign is flipped here deliberately.
class DeepLevModel {
 public:
  DeepLevModel() = default;
  DeepLevModel(int state_width, const DeepLevConfig& cfg, uint64_t vocab_hash,
               Rng& rng);

  nn::Vec embed(const EmbeddedState& z) const;        // M(z)
  nn::Vec embed_pooled(const nn::Vec& pooled) const;  // M on a pooled vector

  // Taped M(z) from a z leaf; used by gradient attacks.
  nn::Var embed_var(nn::Tape& t, nn::Var z) const;

  int state_width() const { return state_width_; }
  uint64_t vocab_hash() const { return vocab_hash_; }
  std::vector<nn::Param*> params();

  double heldout_mae = -1.0;
  // Pair indices the trainer held out (transient; lets callers recompute
  // heldout_mae independently).
  std::vector<size_t> heldout_indices;

  void save(const std::string& path) const;
  static DeepLevModel load(const std::string& path, const Vocabulary& vocab);

 private:
  friend class DeepLevTrainer;
  int state_width_ = 0;
  DeepLevConfig cfg_;
  uint64_t vocab_hash_ = 0;
  nn::Dense l1_, l2_;
};

// (1 - cos(M(z), M(z0))) / 2 in [0, 1]; throws "degenerate embedding" when
// either M output has zero norm.
double wer_deep(const DeepLevModel& model, const EmbeddedState& z,
                const EmbeddedState& z0);

// Taped version differentiable w.r.t. the z leaf; mz0 is the precomputed,
// fixed M(z0).
nn::Var wer_deep_var(nn::Tape& t, const DeepLevModel& model, nn::Var z,
                     const nn::Vec& mz0);

// Minimizes mean absolute error between wer_deep and the pair targets;
// encoder is frozen (pooled states are precomputed once per sequence).
DeepLevModel train_deep_lev(const std::vector<PairExample>& pairs,
                            const Seq2SeqModel& encoder, const DeepLevConfig& cfg,
                            Rng& rng);

// Independent evaluation pass; the trainer's reported heldout_mae must match
// this recomputation on the same pairs.
double deep_lev_mae(const DeepLevModel& model, const Seq2SeqModel& encoder,
                    const std::vector<PairExample>& pairs);

}  // namespace advseq

#include "advseq/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "advseq/checkpoint.hpp"

namespace advseq {

using nn::Mat;
using nn::Tape;
using nn::Var;
using nn::Vec;

TokenSequence corrupt(const TokenSequence& x, const MaskerSet& m, double rate,
                      const Vocabulary& vocab, Rng& rng) {
  if (x.empty()) throw std::runtime_error("corrupt: sequence must be non-empty");
  if (!(rate > 0.0) || rate > 1.0)
    throw std::runtime_error("corrupt: rate must be in (0, 1]");
  if (m.empty()) throw std::runtime_error("corrupt: masker set must be non-empty");
  const int n_regular = vocab.size() - Vocabulary::kFirstRegular;
  if (n_regular < 1) throw std::runtime_error("corrupt: vocabulary has no regular tokens");

  const int ops = static_cast<int>(std::ceil(rate * double(x.size())));
  const std::vector<EditOp> choices = m.ops();
  std::vector<int> ids = x.ids;

  auto draw_regular = [&]() {
    return Vocabulary::kFirstRegular + static_cast<int>(rng.uniform_int(n_regular));
  };

  for (int k = 0; k < ops; ++k) {
    EditOp op = choices[rng.uniform_int(choices.size())];
    switch (op) {
      case EditOp::AddToken: {
        size_t pos = rng.uniform_int(ids.size() + 1);
        ids.insert(ids.begin() + pos, draw_regular());
        break;
      }
      case EditOp::Replace: {
        size_t pos = rng.uniform_int(ids.size());
        int cur = ids[pos];
        if (cur >= Vocabulary::kFirstRegular) {
          if (n_regular < 2) break;  // nothing different to draw
          int r = static_cast<int>(rng.uniform_int(n_regular - 1));
          if (r >= cur - Vocabulary::kFirstRegular) ++r;
          ids[pos] = Vocabulary::kFirstRegular + r;
        } else {
          ids[pos] = draw_regular();
        }
        break;
      }
      case EditOp::Delete: {
        if (ids.size() > 1) ids.erase(ids.begin() + rng.uniform_int(ids.size()));
        break;
      }
      case EditOp::Swap: {
        if (ids.size() >= 2) {
          size_t i = rng.uniform_int(ids.size());
          size_t j = rng.uniform_int(ids.size() - 1);
          if (j >= i) ++j;
          std::swap(ids[i], ids[j]);
        }
        break;
      }
    }
  }
  return TokenSequence(std::move(ids));
}

Seq2SeqModel::Seq2SeqModel(int vocab_size, const Seq2SeqConfig& cfg,
                           uint64_t vocab_hash, const MaskerSet& trained_ops,
                           Rng& rng)
    : cfg_(cfg),
      vocab_hash_(vocab_hash),
      trained_ops_(trained_ops),
      emb_("emb", vocab_size, cfg.d_emb),
      enc_fwd_("enc_fwd", cfg.d_emb, cfg.d_hidden),
      enc_bwd_("enc_bwd", cfg.d_emb, cfg.d_hidden),
      dec_("dec", cfg.d_emb, 2 * cfg.d_hidden),
      init_("init", 2 * cfg.d_hidden, 2 * cfg.d_hidden),
      att_("att", 2 * cfg.d_hidden, 2 * cfg.d_hidden),
      read_("read", 2 * cfg.d_hidden, 4 * cfg.d_hidden),
      out_("out", vocab_size, 2 * cfg.d_hidden) {
  emb_.glorot(rng);
  enc_fwd_.init(rng);
  enc_bwd_.init(rng);
  dec_.init(rng);
  init_.init(rng);
  att_.glorot(rng);
  read_.init(rng);
  out_.init(rng);
}

std::vector<nn::Param*> Seq2SeqModel::params() {
  std::vector<nn::Param*> out;
  out.push_back(&emb_);
  enc_fwd_.collect(out);
  enc_bwd_.collect(out);
  dec_.collect(out);
  init_.collect(out);
  out.push_back(&att_);
  read_.collect(out);
  out_.collect(out);
  return out;
}

std::vector<const nn::Param*> Seq2SeqModel::params() const {
  auto mut = const_cast<Seq2SeqModel*>(this)->params();
  return {mut.begin(), mut.end()};
}

std::vector<int> Seq2SeqModel::frame_input(const TokenSequence& x,
                                           const MaskerSet& m,
                                           std::vector<int>* kept) const {
  std::vector<int> ids;
  ids.push_back(Vocabulary::kBos);
  for (EditOp op : m.ops()) ids.push_back(Vocabulary::control_id(op));
  const int body_start = static_cast<int>(ids.size());
  for (int id : x.ids)
    ids.push_back(id >= 0 && id < vocab_size() ? id : Vocabulary::kUnk);
  ids.push_back(Vocabulary::kEos);
  if (kept) {
    kept->clear();
    kept->push_back(0);
    for (int t = body_start; t < static_cast<int>(ids.size()); ++t) kept->push_back(t);
  }
  return ids;
}

EmbeddedState Seq2SeqModel::encode(const TokenSequence& x, const MaskerSet& m) const {
  std::vector<int> kept;
  std::vector<int> ids = frame_input(x, m, &kept);
  const int T = static_cast<int>(ids.size());
  const int h = cfg_.d_hidden;

  std::vector<Vec> hf(T), hb(T);
  Vec state = Vec::Zero(h);
  for (int t = 0; t < T; ++t) {
    state = enc_fwd_.step(emb_.value.row(ids[t]).transpose(), state);
    hf[t] = state;
  }
  state = Vec::Zero(h);
  for (int t = T - 1; t >= 0; --t) {
    state = enc_bwd_.step(emb_.value.row(ids[t]).transpose(), state);
    hb[t] = state;
  }

  EmbeddedState z;
  z.m.resize(static_cast<int>(kept.size()), 2 * h);
  for (size_t r = 0; r < kept.size(); ++r) {
    z.m.row(static_cast<int>(r)).head(h) = hf[kept[r]].transpose();
    z.m.row(static_cast<int>(r)).tail(h) = hb[kept[r]].transpose();
  }
  return z;
}

Vec Seq2SeqModel::decoder_h0(const EmbeddedState& z) const {
  const int h = cfg_.d_hidden;
  Vec seed(2 * h);
  seed.head(h) = z.m.row(z.rows() - 1).head(h).transpose();  // fwd state at EOS
  seed.tail(h) = z.m.row(0).tail(h).transpose();             // bwd state at BOS
  return (init_.W.value * seed + init_.b.value).array().tanh();
}

Vec Seq2SeqModel::decoder_step(const EmbeddedState& z, int prev_token,
                               Vec& hstate) const {
  hstate = dec_.step(emb_.value.row(prev_token).transpose(), hstate);
  Vec scores = z.m * (att_.value * hstate);
  Vec alpha = nn::softmax(scores);
  Vec ctx = z.m.transpose() * alpha;
  Vec cat(hstate.size() + ctx.size());
  cat << hstate, ctx;
  Vec o = (read_.W.value * cat + read_.b.value).array().tanh();
  return out_.W.value * o + out_.b.value;
}

namespace {

struct BeamItem {
  std::vector<int> tokens;
  double logp = 0.0;
  Vec h;
};

}  // namespace

BeamResult Seq2SeqModel::decode(const EmbeddedState& z, int beam, int max_len) const {
  if (beam < 1) throw std::runtime_error("decode: beam width must be >= 1");
  if (max_len < 1) max_len = 1;

  std::vector<bool> allowed(vocab_size(), true);
  allowed[Vocabulary::kPad] = false;
  allowed[Vocabulary::kBos] = false;
  for (EditOp op : kAllEditOps) allowed[Vocabulary::control_id(op)] = false;

  std::vector<BeamItem> alive;
  {
    BeamItem start;
    start.h = decoder_h0(z);
    alive.push_back(std::move(start));
  }
  std::vector<BeamHyp> pool;

  for (int step = 0; step < max_len && !alive.empty(); ++step) {
    struct Cand {
      double logp;
      size_t item;
      int token;
    };
    std::vector<Cand> cands;
    std::vector<Vec> new_h(alive.size());
    for (size_t i = 0; i < alive.size(); ++i) {
      Vec h = alive[i].h;
      int prev = alive[i].tokens.empty() ? Vocabulary::kBos : alive[i].tokens.back();
      Vec logits = decoder_step(z, prev, h);
      new_h[i] = h;
      double lse = nn::log_sum_exp(logits);
      for (int tok = 0; tok < logits.size(); ++tok) {
        if (!allowed[tok]) continue;
        if (step == 0 && tok == Vocabulary::kEos) continue;  // hypotheses stay non-empty
        cands.push_back({alive[i].logp + logits(tok) - lse, i, tok});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.item != b.item) return a.item < b.item;
      return a.token < b.token;
    });

    // Top `beam` expansions total; EOS picks complete a hypothesis and use
    // up their slot, so beam=1 reduces to greedy decoding.
    std::vector<BeamItem> next;
    int taken = 0;
    for (const Cand& c : cands) {
      if (taken >= beam) break;
      ++taken;
      if (c.token == Vocabulary::kEos) {
        BeamHyp hyp;
        hyp.tokens = TokenSequence(alive[c.item].tokens);
        hyp.logp = c.logp;
        hyp.terminated = true;
        pool.push_back(std::move(hyp));
        continue;
      }
      BeamItem it;
      it.tokens = alive[c.item].tokens;
      it.tokens.push_back(c.token);
      it.logp = c.logp;
      it.h = new_h[c.item];
      next.push_back(std::move(it));
    }
    alive = std::move(next);
  }
  for (const BeamItem& it : alive) {
    BeamHyp hyp;
    hyp.tokens = TokenSequence(it.tokens);
    hyp.logp = it.logp;
    hyp.terminated = false;
    pool.push_back(std::move(hyp));
  }

  std::stable_sort(pool.begin(), pool.end(),
                   [](const BeamHyp& a, const BeamHyp& b) { return a.logp > b.logp; });
  if (static_cast<int>(pool.size()) > beam) pool.resize(beam);

  BeamResult res;
  res.hyps = std::move(pool);
  res.beam_width = beam;
  if (res.hyps.empty()) {
    // Degenerate max_len with no EOS picked; emit an empty truncated hypothesis.
    res.hyps.push_back({TokenSequence{}, 0.0, false});
  }
  return res;
}

double Seq2SeqModel::sequence_logprob(const EmbeddedState& z,
                                      const TokenSequence& tokens,
                                      bool terminated) const {
  Vec h = decoder_h0(z);
  double total = 0.0;
  int prev = Vocabulary::kBos;
  for (size_t t = 0; t <= tokens.size(); ++t) {
    bool eos_step = t == tokens.size();
    if (eos_step && !terminated) break;
    Vec logits = decoder_step(z, prev, h);
    double lse = nn::log_sum_exp(logits);
    int target = eos_step ? Vocabulary::kEos : tokens.ids[t];
    total += logits(target) - lse;
    prev = target;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Training

class Seq2SeqTrainer {
 public:
  explicit Seq2SeqTrainer(Seq2SeqModel& model) : model_(model), plist_(model.params()) {}

  // Builds the taped loss for one (input, target) pair and returns mean
  // token cross-entropy. Input ids are already framed with controls.
  Var sample_loss(Tape& t, const std::vector<int>& input_ids,
                  const std::vector<int>& kept, const TokenSequence& target) {
    leafs_.clear();
    for (nn::Param* p : plist_) leafs_.push_back(t.leaf(p->value, true));
    int li = 0;
    Var emb = leafs_[li++];
    auto gru_vars = [&](nn::GruParams::Taped& g) {
      g.Wr = leafs_[li++]; g.Wz = leafs_[li++]; g.Wn = leafs_[li++];
      g.Ur = leafs_[li++]; g.Uz = leafs_[li++]; g.Un = leafs_[li++];
      g.br = leafs_[li++]; g.bz = leafs_[li++]; g.bn = leafs_[li++];
    };
    nn::GruParams::Taped fwd, bwd, dec;
    gru_vars(fwd);
    gru_vars(bwd);
    gru_vars(dec);
    nn::Dense::Taped init{leafs_[li], leafs_[li + 1]};
    li += 2;
    Var att = leafs_[li++];
    nn::Dense::Taped read{leafs_[li], leafs_[li + 1]};
    li += 2;
    nn::Dense::Taped out{leafs_[li], leafs_[li + 1]};
    li += 2;

    const int T = static_cast<int>(input_ids.size());
    const int h = model_.cfg_.d_hidden;
    Var embedded = t.embed_rows(emb, input_ids);
    Var zero_h = t.leaf(Mat::Zero(h, 1), false);

    std::vector<Var> hf(T), hb(T);
    Var state = zero_h;
    for (int s = 0; s < T; ++s) {
      state = nn::GruParams::step(t, fwd, t.row_col(embedded, s), state);
      hf[s] = state;
    }
    state = zero_h;
    for (int s = T - 1; s >= 0; --s) {
      state = nn::GruParams::step(t, bwd, t.row_col(embedded, s), state);
      hb[s] = state;
    }
    std::vector<Var> rows;
    rows.reserve(kept.size());
    for (int kidx : kept) rows.push_back(t.vcat(hf[kidx], hb[kidx]));
    Var Z = t.rows_stack(rows);

    Var dech = t.tanh(nn::Dense::apply(t, init, t.vcat(hf[T - 1], hb[0])));

    std::vector<int> dec_in;
    dec_in.push_back(Vocabulary::kBos);
    for (int id : target.ids) dec_in.push_back(id);
    std::vector<int> dec_out = target.ids;
    dec_out.push_back(Vocabulary::kEos);

    Var dec_emb = t.embed_rows(emb, dec_in);
    std::vector<Var> losses;
    for (size_t s = 0; s < dec_in.size(); ++s) {
      dech = nn::GruParams::step(t, dec, t.row_col(dec_emb, static_cast<int>(s)), dech);
      Var scores = t.matmul(Z, t.matmul(att, dech));
      Var alpha = t.softmax_col(scores);
      Var ctx = t.matmul_ta(Z, alpha);
      Var o = t.tanh(nn::Dense::apply(t, read, t.vcat(dech, ctx)));
      Var logits = nn::Dense::apply(t, out, o);
      losses.push_back(t.ce_logits(logits, dec_out[s]));
    }
    return t.affine(t.sum_elems(losses), 1.0 / double(losses.size()), 0.0);
  }

  double train_step(const std::vector<int>& input_ids, const std::vector<int>& kept,
                    const TokenSequence& target, nn::Adam& adam, double clip) {
    Tape t;
    Var loss = sample_loss(t, input_ids, kept, target);
    double lv = t.val(loss)(0, 0);
    if (!std::isfinite(lv))
      throw std::runtime_error("seq2seq training aborted: non-finite loss");
    t.backward(loss);
    std::vector<Mat> grads;
    grads.reserve(plist_.size());
    for (size_t i = 0; i < plist_.size(); ++i)
      grads.push_back(t.has_grad(leafs_[i]) ? t.grad(leafs_[i])
                                            : Mat::Zero(plist_[i]->value.rows(),
                                                        plist_[i]->value.cols()));
    nn::clip_global_norm(grads, clip);
    adam.step(plist_, grads);
    return lv;
  }

 private:
  Seq2SeqModel& model_;
  std::vector<nn::Param*> plist_;
  std::vector<Var> leafs_;
};

Seq2SeqModel train_seq2seq(const std::vector<TokenSequence>& corpus,
                           const MaskerSet& m, const Vocabulary& vocab,
                           const Seq2SeqConfig& cfg, Rng& rng,
                           Seq2SeqTrainReport* report) {
  if (corpus.empty()) throw std::runtime_error("train_seq2seq: empty corpus");
  if (m.empty()) throw std::runtime_error("train_seq2seq: empty masker set");

  Seq2SeqModel model(vocab.size(), cfg, vocab.hash(), m, rng);
  Seq2SeqTrainer trainer(model);
  nn::Adam adam(cfg.lr);

  // Deterministic held-out split for the report metrics.
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  size_t n_held = corpus.size() >= 20
                      ? static_cast<size_t>(cfg.heldout_fraction * double(corpus.size()))
                      : 0;
  std::vector<size_t> train_idx(order.begin(), order.end() - n_held);
  std::vector<size_t> held_idx(order.end() - n_held, order.end());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    double total = 0.0;
    for (size_t idx : train_idx) {
      const TokenSequence& x = corpus[idx];
      TokenSequence noisy = corrupt(x, m, cfg.corruption_rate, vocab, rng);
      std::vector<int> kept;
      std::vector<int> input_ids = model.frame_input(noisy, m, &kept);
      total += trainer.train_step(input_ids, kept, x, adam, cfg.clip_norm);
    }
    model.mutable_train_curve().push_back(total / double(train_idx.size()));
  }

  // Noise scale reference: mean per-dimension std of encoder states.
  {
    const size_t cap = std::min<size_t>(corpus.size(), 200);
    std::vector<double> mean, sq;
    long count = 0;
    for (size_t i = 0; i < cap; ++i) {
      EmbeddedState z = model.encode(corpus[i], m);
      if (mean.empty()) {
        mean.assign(z.width(), 0.0);
        sq.assign(z.width(), 0.0);
      }
      for (int r = 0; r < z.rows(); ++r)
        for (int c = 0; c < z.width(); ++c) {
          mean[c] += z.m(r, c);
          sq[c] += z.m(r, c) * z.m(r, c);
        }
      count += z.rows();
    }
    double avg_std = 0.0;
    for (size_t c = 0; c < mean.size(); ++c) {
      double mu = mean[c] / double(count);
      double var = std::max(0.0, sq[c] / double(count) - mu * mu);
      avg_std += std::sqrt(var);
    }
    model.set_state_std(mean.empty() ? 1.0 : avg_std / double(mean.size()));
  }

  if (report) {
    report->loss_curve = model.train_curve();
    std::vector<TokenSequence> held;
    for (size_t idx : held_idx) held.push_back(corpus[idx]);
    if (held.empty())
      for (size_t i = 0; i < std::min<size_t>(corpus.size(), 20); ++i)
        held.push_back(corpus[i]);
    report->heldout_token_accuracy = reconstruction_token_accuracy(model, held, m);
    report->heldout_identity_rate = identity_reconstruction_rate(model, held, m, 5);
  }
  return model;
}

double reconstruction_token_accuracy(const Seq2SeqModel& model,
                                     const std::vector<TokenSequence>& seqs,
                                     const MaskerSet& m) {
  long correct = 0, total = 0;
  for (const TokenSequence& x : seqs) {
    EmbeddedState z = model.encode(x, m);
    Vec h = model.decoder_h0(z);
    int prev = Vocabulary::kBos;
    std::vector<int> targets = x.ids;
    targets.push_back(Vocabulary::kEos);
    for (int tgt : targets) {
      Vec logits = model.decoder_step(z, prev, h);
      if (nn::argmax(logits) == tgt) ++correct;
      ++total;
      prev = tgt;
    }
  }
  return total == 0 ? 0.0 : double(correct) / double(total);
}

double identity_reconstruction_rate(const Seq2SeqModel& model,
                                    const std::vector<TokenSequence>& seqs,
                                    const MaskerSet& m, int beam) {
  long hits = 0;
  for (const TokenSequence& x : seqs) {
    EmbeddedState z = model.encode(x, m);
    BeamResult res = model.decode(z, beam, 2 * static_cast<int>(x.size()) + 2);
    if (res.top().tokens == x) ++hits;
  }
  return seqs.empty() ? 0.0 : double(hits) / double(seqs.size());
}

void Seq2SeqModel::save(const std::string& path) const {
  nlohmann::json hp;
  hp["d_emb"] = cfg_.d_emb;
  hp["d_hidden"] = cfg_.d_hidden;
  hp["corruption_rate"] = cfg_.corruption_rate;
  hp["maskers"] = trained_ops_.str();
  nlohmann::json extra;
  extra["state_std"] = state_std_;
  extra["train_curve"] = train_curve_;
  save_checkpoint(path, "seq2seq", vocab_hash_, hp, params(), extra);
}

Seq2SeqModel Seq2SeqModel::load(const std::string& path, const Vocabulary& vocab) {
  nlohmann::json doc = peek_checkpoint(path);
  Seq2SeqConfig cfg;
  cfg.d_emb = doc["hparams"]["d_emb"].get<int>();
  cfg.d_hidden = doc["hparams"]["d_hidden"].get<int>();
  cfg.corruption_rate = doc["hparams"]["corruption_rate"].get<double>();
  Rng dummy(1);
  Seq2SeqModel model(vocab.size(), cfg, vocab.hash(),
                     MaskerSet::parse(doc["hparams"]["maskers"].get<std::string>()),
                     dummy);
  load_checkpoint(path, "seq2seq", vocab.hash(), model.params());
  model.state_std_ = doc["extra"]["state_std"].get<double>();
  model.train_curve_ = doc["extra"]["train_curve"].get<std::vector<double>>();
  return model;
}

}  // namespace advseq

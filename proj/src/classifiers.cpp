#include "advseq/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "advseq/checkpoint.hpp"

namespace advseq {

using nn::Mat;
using nn::Tape;
using nn::Var;
using nn::Vec;

// ---------------------------------------------------------------------------
// Target classifier

struct TargetTrainerAccess {
  static TargetClassifier build(const std::vector<LabeledExample>& train,
                                const Vocabulary& vocab, const TargetConfig& cfg);
};

TargetClassifier::TargetClassifier(std::vector<int> feature_of_token, Vec idf,
                                   Mat W, Vec b, uint64_t vocab_hash)
    : feature_of_token_(std::move(feature_of_token)),
      idf_(std::move(idf)),
      W_(std::move(W)),
      b_(std::move(b)),
      vocab_hash_(vocab_hash) {}

std::vector<std::pair<int, double>> TargetClassifier::featurize(
    const TokenSequence& x) const {
  std::map<int, double> tf;
  for (int id : x.ids) {
    if (id < 0 || id >= static_cast<int>(feature_of_token_.size())) continue;
    int f = feature_of_token_[id];
    if (f >= 0) tf[f] += 1.0;
  }
  double sq = 0.0;
  std::vector<std::pair<int, double>> out;
  out.reserve(tf.size());
  for (auto& [f, count] : tf) {
    double v = count * idf_(f);
    out.emplace_back(f, v);
    sq += v * v;
  }
  if (sq > 0.0) {
    double inv = 1.0 / std::sqrt(sq);
    for (auto& [f, v] : out) v *= inv;
  }
  return out;
}

Classification TargetClassifier::classify(const TokenSequence& x) const {
  auto feats = featurize(x);
  Vec scores = b_;
  for (auto [f, v] : feats) scores += W_.col(f) * v;
  Classification c;
  c.probs = nn::softmax(scores);
  c.label = nn::argmax(c.probs);
  return c;
}

TargetClassifier TargetTrainerAccess::build(const std::vector<LabeledExample>& train,
                                            const Vocabulary& vocab,
                                            const TargetConfig& cfg) {
  if (train.empty()) throw std::runtime_error("train_target: empty training set");
  int k = 0;
  for (const auto& ex : train) k = std::max(k, ex.label + 1);
  {
    std::vector<bool> seen(k, false);
    for (const auto& ex : train) seen[ex.label] = true;
    int present = static_cast<int>(std::count(seen.begin(), seen.end(), true));
    if (present < 2)
      throw std::runtime_error("train_target: needs at least 2 classes present");
  }

  // Document frequencies over non-PAD/BOS/EOS/control tokens; UNK counts as
  // an ordinary term.
  std::vector<long> df(vocab.size(), 0);
  for (const auto& ex : train) {
    std::vector<bool> seen(vocab.size(), false);
    for (int id : ex.sequence.ids)
      if (!seen[id]) {
        seen[id] = true;
        ++df[id];
      }
  }
  TargetClassifier clf;
  clf.vocab_hash_ = vocab.hash();
  clf.feature_of_token_.assign(vocab.size(), -1);
  std::vector<double> idf;
  const double n_docs = static_cast<double>(train.size());
  for (int id = 0; id < vocab.size(); ++id) {
    bool special = vocab.is_special(id) && id != Vocabulary::kUnk;
    if (special || df[id] == 0) continue;
    clf.feature_of_token_[id] = static_cast<int>(idf.size());
    idf.push_back(std::log((1.0 + n_docs) / (1.0 + double(df[id]))) + 1.0);
  }
  clf.idf_ = Eigen::Map<Vec>(idf.data(), static_cast<long>(idf.size()));
  const int F = static_cast<int>(idf.size());
  clf.W_ = Mat::Zero(k, F);
  clf.b_ = Vec::Zero(k);

  std::vector<std::vector<std::pair<int, double>>> feats(train.size());
  for (size_t i = 0; i < train.size(); ++i) feats[i] = clf.featurize(train[i].sequence);

  Rng rng(Rng::mix(cfg.seed, 0x7467ull));
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double lr = cfg.lr / (1.0 + 0.5 * epoch);
    for (size_t i : order) {
      Vec scores = clf.b_;
      for (auto [f, v] : feats[i]) scores += clf.W_.col(f) * v;
      Vec p = nn::softmax(scores);
      p(train[i].label) -= 1.0;
      clf.b_ -= lr * p;
      for (auto [f, v] : feats[i]) clf.W_.col(f) -= lr * v * p;
    }
  }
  return clf;
}

TargetClassifier train_target(const std::vector<LabeledExample>& train,
                              const Vocabulary& vocab, const TargetConfig& cfg) {
  return TargetTrainerAccess::build(train, vocab, cfg);
}

void TargetClassifier::save(const std::string& path) const {
  nlohmann::json hp;
  hp["n_classes"] = n_classes();
  nlohmann::json extra;
  extra["feature_of_token"] = feature_of_token_;
  extra["test_accuracy"] = test_accuracy_;
  nn::Param W("W", W_.rows(), W_.cols());
  W.value = W_;
  nn::Param b("b", b_.size(), 1);
  b.value = b_;
  nn::Param idf("idf", idf_.size(), 1);
  idf.value = idf_;
  save_checkpoint(path, "target_tfidf", vocab_hash_, hp, {&W, &b, &idf}, extra);
}

TargetClassifier TargetClassifier::load(const std::string& path,
                                        const Vocabulary& vocab) {
  nn::Param W("W", 1, 1), b("b", 1, 1), idf("idf", 1, 1);
  nlohmann::json doc =
      load_checkpoint(path, "target_tfidf", vocab.hash(), {&W, &b, &idf});
  TargetClassifier clf;
  clf.feature_of_token_ = doc["extra"]["feature_of_token"].get<std::vector<int>>();
  clf.test_accuracy_ = doc["extra"]["test_accuracy"].get<double>();
  clf.W_ = W.value;
  clf.b_ = b.value.col(0);
  clf.idf_ = idf.value.col(0);
  clf.vocab_hash_ = vocab.hash();
  return clf;
}

// ---------------------------------------------------------------------------
// Surrogate classifier

SurrogateClassifier::SurrogateClassifier(int vocab_size, int n_classes,
                                         int state_width, const SurrogateConfig& cfg,
                                         uint64_t vocab_hash, Rng& rng)
    : k_(n_classes),
      state_width_(state_width),
      cfg_(cfg),
      vocab_hash_(vocab_hash),
      emb_("s.emb", vocab_size, cfg.d_emb),
      fwd_("s.fwd", cfg.d_emb, cfg.d_hidden),
      bwd_("s.bwd", cfg.d_emb, cfg.d_hidden),
      tok_head_("s.tok", n_classes, 4 * cfg.d_hidden),
      emb_head_("s.head", n_classes, 2 * state_width) {
  emb_.glorot(rng);
  fwd_.init(rng);
  bwd_.init(rng);
  tok_head_.init(rng);
  emb_head_.init(rng);
}

std::vector<nn::Param*> SurrogateClassifier::params() {
  std::vector<nn::Param*> out;
  out.push_back(&emb_);
  fwd_.collect(out);
  bwd_.collect(out);
  tok_head_.collect(out);
  emb_head_.collect(out);
  return out;
}

std::vector<nn::Param*> SurrogateClassifier::head_params() {
  std::vector<nn::Param*> out;
  emb_head_.collect(out);
  return out;
}

namespace {

// Bi-directional pass returning per-position states [fwd_t || bwd_t].
std::vector<Vec> bi_states(const nn::Param& emb, const nn::GruParams& fwd,
                           const nn::GruParams& bwd, const std::vector<int>& ids) {
  const int T = static_cast<int>(ids.size());
  const int h = fwd.hidden();
  std::vector<Vec> hf(T), hb(T);
  Vec state = Vec::Zero(h);
  for (int t = 0; t < T; ++t) {
    state = fwd.step(emb.value.row(ids[t]).transpose(), state);
    hf[t] = state;
  }
  state = Vec::Zero(h);
  for (int t = T - 1; t >= 0; --t) {
    state = bwd.step(emb.value.row(ids[t]).transpose(), state);
    hb[t] = state;
  }
  std::vector<Vec> out(T);
  for (int t = 0; t < T; ++t) {
    out[t].resize(2 * h);
    out[t] << hf[t], hb[t];
  }
  return out;
}

Vec pool_mean_max(const std::vector<Vec>& states) {
  const long d = states[0].size();
  Vec mean = Vec::Zero(d), mx = states[0];
  for (const Vec& s : states) {
    mean += s;
    mx = mx.cwiseMax(s);
  }
  mean /= double(states.size());
  Vec out(2 * d);
  out << mean, mx;
  return out;
}

}  // namespace

Classification SurrogateClassifier::classify_tokens(const TokenSequence& x) const {
  if (x.empty()) {
    // Degenerate decodes classify from bias alone.
    Classification c;
    c.probs = nn::softmax(tok_head_.b.value);
    c.label = nn::argmax(c.probs);
    return c;
  }
  auto states = bi_states(emb_, fwd_, bwd_, x.ids);
  Vec pooled = pool_mean_max(states);
  Classification c;
  c.probs = nn::softmax(tok_head_.apply(pooled));
  c.label = nn::argmax(c.probs);
  return c;
}

Mat SurrogateClassifier::token_input_gradients(const TokenSequence& x,
                                               int true_class, double* loss) const {
  if (x.empty()) throw std::runtime_error("token_input_gradients: empty sequence");
  Tape t;
  Var emb = t.leaf(emb_.value, false);
  Var inputs = t.embed_rows(emb, x.ids);
  // Re-leaf the looked-up rows so gradients land on the positions.
  Var inp = t.leaf(t.val(inputs), true);
  nn::GruParams::Taped fv = fwd_.vars(t), bv = bwd_.vars(t);
  const int T = static_cast<int>(x.size());
  std::vector<Var> hf(T), hb(T);
  Var zero_h = t.leaf(Mat::Zero(fwd_.hidden(), 1), false);
  Var state = zero_h;
  for (int s = 0; s < T; ++s) {
    state = nn::GruParams::step(t, fv, t.row_col(inp, s), state);
    hf[s] = state;
  }
  state = zero_h;
  for (int s = T - 1; s >= 0; --s) {
    state = nn::GruParams::step(t, bv, t.row_col(inp, s), state);
    hb[s] = state;
  }
  std::vector<Var> cat(T);
  for (int s = 0; s < T; ++s) cat[s] = t.vcat(hf[s], hb[s]);
  Var mean = t.affine(t.sum_elems(cat), 1.0 / double(T), 0.0);
  Var mx = t.max_elems(cat);
  Var pooled = t.vcat(mean, mx);
  nn::Dense::Taped head = tok_head_.vars(t);
  Var logits = nn::Dense::apply(t, head, pooled);
  Var ce = t.ce_logits(logits, true_class);
  if (loss) *loss = t.val(ce)(0, 0);
  t.backward(ce);
  return t.grad(inp);
}

Classification SurrogateClassifier::classify_embedded(const EmbeddedState& z) const {
  if (z.width() != state_width_)
    throw std::runtime_error("surrogate embedded head: state width mismatch");
  Vec mean = z.m.colwise().mean().transpose();
  Vec mx(z.width());
  for (int j = 0; j < z.width(); ++j) {
    double best = z.m(0, j);
    for (int i = 1; i < z.rows(); ++i) best = std::max(best, z.m(i, j));
    mx(j) = best;
  }
  Vec pooled(2 * z.width());
  pooled << mean, mx;
  Classification c;
  c.probs = nn::softmax(emb_head_.apply(pooled));
  c.label = nn::argmax(c.probs);
  return c;
}

Var SurrogateClassifier::embedded_prob(Tape& t, Var z, int cls) const {
  if (t.val(z).cols() != state_width_)
    throw std::runtime_error("surrogate embedded head: state width mismatch");
  Var pooled = t.vcat(t.mean_rows(z), t.max_rows(z));
  nn::Dense::Taped head = emb_head_.vars(t);
  Var logits = nn::Dense::apply(t, head, pooled);
  Var probs = t.softmax_col(logits);
  return t.pick(probs, cls);
}

// ---------------------------------------------------------------------------
// Surrogate training

class SurrogateTrainer {
 public:
  explicit SurrogateTrainer(SurrogateClassifier& s) : s_(s) {
    plist_.push_back(&s_.emb_);
    s_.fwd_.collect(plist_);
    s_.bwd_.collect(plist_);
    s_.tok_head_.collect(plist_);
  }

  double step(const TokenSequence& x, int label, nn::Adam& adam, double clip) {
    Tape t;
    leafs_.clear();
    for (nn::Param* p : plist_) leafs_.push_back(t.leaf(p->value, true));
    int li = 0;
    Var emb = leafs_[li++];
    nn::GruParams::Taped fv, bv;
    auto gru_vars = [&](nn::GruParams::Taped& g) {
      g.Wr = leafs_[li++]; g.Wz = leafs_[li++]; g.Wn = leafs_[li++];
      g.Ur = leafs_[li++]; g.Uz = leafs_[li++]; g.Un = leafs_[li++];
      g.br = leafs_[li++]; g.bz = leafs_[li++]; g.bn = leafs_[li++];
    };
    gru_vars(fv);
    gru_vars(bv);
    nn::Dense::Taped head{leafs_[li], leafs_[li + 1]};
    li += 2;

    const int T = static_cast<int>(x.size());
    Var inp = t.embed_rows(emb, x.ids);
    Var zero_h = t.leaf(Mat::Zero(s_.fwd_.hidden(), 1), false);
    std::vector<Var> hf(T), hb(T);
    Var state = zero_h;
    for (int s = 0; s < T; ++s) {
      state = nn::GruParams::step(t, fv, t.row_col(inp, s), state);
      hf[s] = state;
    }
    state = zero_h;
    for (int s = T - 1; s >= 0; --s) {
      state = nn::GruParams::step(t, bv, t.row_col(inp, s), state);
      hb[s] = state;
    }
    std::vector<Var> cat(T);
    for (int s = 0; s < T; ++s) cat[s] = t.vcat(hf[s], hb[s]);
    Var pooled = t.vcat(t.affine(t.sum_elems(cat), 1.0 / double(T), 0.0),
                        t.max_elems(cat));
    Var ce = t.ce_logits(nn::Dense::apply(t, head, pooled), label);
    double lv = t.val(ce)(0, 0);
    if (!std::isfinite(lv))
      throw std::runtime_error("surrogate training aborted: non-finite loss");
    t.backward(ce);
    std::vector<Mat> grads;
    for (size_t i = 0; i < plist_.size(); ++i)
      grads.push_back(t.has_grad(leafs_[i]) ? t.grad(leafs_[i])
                                            : Mat::Zero(plist_[i]->value.rows(),
                                                        plist_[i]->value.cols()));
    nn::clip_global_norm(grads, clip);
    adam.step(plist_, grads);
    return lv;
  }

 private:
  SurrogateClassifier& s_;
  std::vector<nn::Param*> plist_;
  std::vector<Var> leafs_;
};

SurrogateClassifier train_surrogate(const std::vector<LabeledExample>& train,
                                    const Vocabulary& vocab,
                                    const SurrogateConfig& cfg,
                                    const Seq2SeqModel* encoder, Rng& rng) {
  if (train.empty()) throw std::runtime_error("train_surrogate: empty training set");
  int k = 0;
  for (const auto& ex : train) k = std::max(k, ex.label + 1);
  if (k < 2) throw std::runtime_error("train_surrogate: needs at least 2 classes");

  int state_width = encoder ? encoder->state_width() : 2 * cfg.d_hidden;
  SurrogateClassifier s(vocab.size(), k, state_width, cfg, vocab.hash(), rng);

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  size_t n_held = train.size() >= 20 ? train.size() / 10 : 0;
  std::vector<size_t> tr(order.begin(), order.end() - n_held);
  std::vector<size_t> held(order.end() - n_held, order.end());

  {
    SurrogateTrainer trainer(s);
    nn::Adam adam(cfg.lr);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(tr);
      for (size_t i : tr)
        trainer.step(train[i].sequence, train[i].label, adam, cfg.clip_norm);
    }
  }
  {
    const auto& eval = held.empty() ? tr : held;
    long ok = 0;
    for (size_t i : eval)
      if (s.classify_tokens(train[i].sequence).label == train[i].label) ++ok;
    s.token_heldout_accuracy = double(ok) / double(eval.size());
  }

  if (encoder) {
    // Embedded head on pooled frozen-encoder states: a plain softmax
    // regression, trained full-batch-free with Adam over examples.
    const MaskerSet& m = encoder->trained_ops();
    std::vector<Vec> pooled(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
      EmbeddedState z = encoder->encode(train[i].sequence, m);
      Vec mean = z.m.colwise().mean().transpose();
      Vec mx = z.m.colwise().maxCoeff().transpose();
      pooled[i].resize(2 * z.width());
      pooled[i] << mean, mx;
    }
    std::vector<nn::Param*> hp = s.head_params();
    nn::Adam adam(5e-3);
    for (int epoch = 0; epoch < cfg.head_epochs; ++epoch) {
      rng.shuffle(tr);
      for (size_t i : tr) {
        Vec scores = hp[0]->value * pooled[i] + hp[1]->value.col(0);
        Vec p = nn::softmax(scores);
        p(train[i].label) -= 1.0;
        std::vector<Mat> grads{p * pooled[i].transpose(), p};
        adam.step(hp, grads);
      }
    }
    const auto& eval = held.empty() ? tr : held;
    long ok = 0;
    for (size_t i : eval) {
      EmbeddedState z = encoder->encode(train[i].sequence, m);
      if (s.classify_embedded(z).label == train[i].label) ++ok;
    }
    s.embedded_heldout_accuracy = double(ok) / double(eval.size());
  }
  return s;
}

void SurrogateClassifier::save(const std::string& path) const {
  nlohmann::json hp;
  hp["d_emb"] = cfg_.d_emb;
  hp["d_hidden"] = cfg_.d_hidden;
  hp["n_classes"] = k_;
  hp["state_width"] = state_width_;
  nlohmann::json extra;
  extra["token_heldout_accuracy"] = token_heldout_accuracy;
  extra["embedded_heldout_accuracy"] = embedded_heldout_accuracy;
  auto plist = const_cast<SurrogateClassifier*>(this)->params();
  std::vector<const nn::Param*> cp(plist.begin(), plist.end());
  save_checkpoint(path, "surrogate", vocab_hash_, hp, cp, extra);
}

SurrogateClassifier SurrogateClassifier::load(const std::string& path,
                                              const Vocabulary& vocab) {
  nlohmann::json doc = peek_checkpoint(path);
  SurrogateConfig cfg;
  cfg.d_emb = doc["hparams"]["d_emb"].get<int>();
  cfg.d_hidden = doc["hparams"]["d_hidden"].get<int>();
  Rng dummy(1);
  SurrogateClassifier s(vocab.size(), doc["hparams"]["n_classes"].get<int>(),
                        doc["hparams"]["state_width"].get<int>(), cfg, vocab.hash(),
                        dummy);
  load_checkpoint(path, "surrogate", vocab.hash(), s.params());
  s.token_heldout_accuracy = doc["extra"]["token_heldout_accuracy"].get<double>();
  s.embedded_heldout_accuracy = doc["extra"]["embedded_heldout_accuracy"].get<double>();
  return s;
}

}  // namespace advseq

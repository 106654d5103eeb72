#include "advseq/deeplev.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "advseq/checkpoint.hpp"

namespace advseq {

using nn::Mat;
using nn::Tape;
using nn::Var;
using nn::Vec;

std::vector<PairExample> generate_pairs(const std::vector<TokenSequence>& corpus,
                                        int count, const MaskerSet& m,
                                        double distant_fraction,
                                        const Vocabulary& vocab, Rng& rng) {
  if (corpus.size() < 2)
    throw std::runtime_error("generate_pairs: corpus needs at least 2 sequences");
  if (distant_fraction < 0.0 || distant_fraction > 1.0)
    throw std::runtime_error("generate_pairs: distant_fraction must be in [0, 1]");
  std::vector<PairExample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    PairExample p;
    if (rng.uniform() < distant_fraction) {
      size_t a = rng.uniform_int(corpus.size());
      size_t b = rng.uniform_int(corpus.size() - 1);
      if (b >= a) ++b;
      p.x = corpus[a];
      p.y = corpus[b];
    } else {
      const TokenSequence& x = corpus[rng.uniform_int(corpus.size())];
      // Corruption rate swept across (0, 0.5] so targets cover a range.
      double rate = 0.05 + 0.45 * rng.uniform();
      p.x = x;
      p.y = corrupt(x, m, rate, vocab, rng);
    }
    p.target = wer_norm(p.x, p.y);
    out.push_back(std::move(p));
  }
  return out;
}

void save_pairs_jsonl(const std::string& path, const std::vector<PairExample>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write pairs: " + path);
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["x"] = p.x.ids;
    j["y"] = p.y.ids;
    j["target"] = p.target;
    out << j.dump() << '\n';
  }
}

std::vector<PairExample> load_pairs_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open pairs: " + path);
  std::vector<PairExample> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      PairExample p;
      p.x = TokenSequence(j.at("x").get<std::vector<int>>());
      p.y = TokenSequence(j.at("y").get<std::vector<int>>());
      p.target = j.at("target").get<double>();
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

DeepLevModel::DeepLevModel(int state_width, const DeepLevConfig& cfg,
                           uint64_t vocab_hash, Rng& rng)
    : state_width_(state_width),
      cfg_(cfg),
      vocab_hash_(vocab_hash),
      l1_("m.l1", cfg.hidden, 2 * state_width),
      l2_("m.l2", cfg.d_m, cfg.hidden) {
  l1_.init(rng);
  l2_.init(rng);
}

std::vector<nn::Param*> DeepLevModel::params() {
  std::vector<nn::Param*> out;
  l1_.collect(out);
  l2_.collect(out);
  return out;
}

namespace {

Vec pool_state(const EmbeddedState& z) {
  Vec mean = z.m.colwise().mean().transpose();
  Vec mx = z.m.colwise().maxCoeff().transpose();
  Vec out(mean.size() + mx.size());
  out << mean, mx;
  return out;
}

double cosine(const Vec& a, const Vec& b) {
  double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) throw std::runtime_error("degenerate embedding");
  return a.dot(b) / (na * nb);
}

}  // namespace

Vec DeepLevModel::embed_pooled(const Vec& pooled) const {
  Vec h = (l1_.W.value * pooled + l1_.b.value).array().tanh();
  return l2_.W.value * h + l2_.b.value;
}

Vec DeepLevModel::embed(const EmbeddedState& z) const {
  if (z.width() != state_width_)
    throw std::runtime_error("deep levenshtein: state width mismatch");
  return embed_pooled(pool_state(z));
}

Var DeepLevModel::embed_var(Tape& t, Var z) const {
  if (t.val(z).cols() != state_width_)
    throw std::runtime_error("deep levenshtein: state width mismatch");
  Var pooled = t.vcat(t.mean_rows(z), t.max_rows(z));
  nn::Dense::Taped v1 = l1_.vars(t), v2 = l2_.vars(t);
  Var h = t.tanh(nn::Dense::apply(t, v1, pooled));
  return nn::Dense::apply(t, v2, h);
}

double wer_deep(const DeepLevModel& model, const EmbeddedState& z,
                const EmbeddedState& z0) {
  return 0.5 * (1.0 - cosine(model.embed(z), model.embed(z0)));
}

Var wer_deep_var(Tape& t, const DeepLevModel& model, Var z, const Vec& mz0) {
  Var mz = model.embed_var(t, z);
  Var other = t.leaf(mz0, false);
  Var num = t.dot(mz, other);
  Var na = t.sqrt_s(t.dot(mz, mz));
  Var nb = t.sqrt_s(t.dot(other, other));
  if (t.val(na)(0, 0) < 1e-12 || t.val(nb)(0, 0) < 1e-12)
    throw std::runtime_error("degenerate embedding");
  Var cos = t.div_ss(num, t.mul_ss(na, nb));
  return t.affine(cos, -0.5, 0.5);
}

// ---------------------------------------------------------------------------
// Training

class DeepLevTrainer {
 public:
  explicit DeepLevTrainer(DeepLevModel& m) : m_(m), plist_(m.params()) {}

  // |wer_deep(px, py) - target| on pooled vectors.
  double step(const Vec& px, const Vec& py, double target, nn::Adam& adam,
              double clip) {
    Tape t;
    leafs_.clear();
    for (nn::Param* p : plist_) leafs_.push_back(t.leaf(p->value, true));
    nn::Dense::Taped v1{leafs_[0], leafs_[1]}, v2{leafs_[2], leafs_[3]};
    Var mx = nn::Dense::apply(t, v2, t.tanh(nn::Dense::apply(t, v1, t.leaf(px, false))));
    Var my = nn::Dense::apply(t, v2, t.tanh(nn::Dense::apply(t, v1, t.leaf(py, false))));
    Var na = t.sqrt_s(t.dot(mx, mx));
    Var nb = t.sqrt_s(t.dot(my, my));
    Var cos = t.div_ss(t.dot(mx, my), t.mul_ss(na, nb));
    Var pred = t.affine(cos, -0.5, 0.5);
    Var err = t.abs_s(t.add(pred, t.leaf(Mat::Constant(1, 1, -target), false)));
    double lv = t.val(err)(0, 0);
    if (!std::isfinite(lv))
      throw std::runtime_error("deep levenshtein training aborted: non-finite loss");
    t.backward(err);
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
  DeepLevModel& m_;
  std::vector<nn::Param*> plist_;
  std::vector<Var> leafs_;
};

DeepLevModel train_deep_lev(const std::vector<PairExample>& pairs,
                            const Seq2SeqModel& encoder, const DeepLevConfig& cfg,
                            Rng& rng) {
  if (pairs.empty()) throw std::runtime_error("train_deep_lev: no pairs");
  DeepLevModel model(encoder.state_width(), cfg, encoder.vocab_hash(), rng);

  const MaskerSet& m = encoder.trained_ops();
  std::vector<Vec> px(pairs.size()), py(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    px[i] = pool_state(encoder.encode(pairs[i].x, m));
    py[i] = pool_state(encoder.encode(pairs[i].y, m));
  }

  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  size_t n_held = pairs.size() >= 20 ? pairs.size() / 10 : 0;
  std::vector<size_t> tr(order.begin(), order.end() - n_held);
  std::vector<size_t> held(order.end() - n_held, order.end());

  DeepLevTrainer trainer(model);
  nn::Adam adam(cfg.lr);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(tr);
    for (size_t i : tr) trainer.step(px[i], py[i], pairs[i].target, adam, cfg.clip_norm);
  }

  const auto& eval = held.empty() ? tr : held;
  double mae = 0.0;
  for (size_t i : eval) {
    double pred =
        0.5 * (1.0 - cosine(model.embed_pooled(px[i]), model.embed_pooled(py[i])));
    mae += std::abs(pred - pairs[i].target);
  }
  model.heldout_mae = mae / double(eval.size());
  model.heldout_indices.assign(eval.begin(), eval.end());
  return model;
}

double deep_lev_mae(const DeepLevModel& model, const Seq2SeqModel& encoder,
                    const std::vector<PairExample>& pairs) {
  if (pairs.empty()) return 0.0;
  const MaskerSet& m = encoder.trained_ops();
  double mae = 0.0;
  for (const auto& p : pairs) {
    double pred = wer_deep(model, encoder.encode(p.x, m), encoder.encode(p.y, m));
    mae += std::abs(pred - p.target);
  }
  return mae / double(pairs.size());
}

void DeepLevModel::save(const std::string& path) const {
  nlohmann::json hp;
  hp["hidden"] = cfg_.hidden;
  hp["d_m"] = cfg_.d_m;
  hp["state_width"] = state_width_;
  nlohmann::json extra;
  extra["heldout_mae"] = heldout_mae;
  auto plist = const_cast<DeepLevModel*>(this)->params();
  std::vector<const nn::Param*> cp(plist.begin(), plist.end());
  save_checkpoint(path, "deeplev", vocab_hash_, hp, cp, extra);
}

DeepLevModel DeepLevModel::load(const std::string& path, const Vocabulary& vocab) {
  nlohmann::json doc = peek_checkpoint(path);
  DeepLevConfig cfg;
  cfg.hidden = doc["hparams"]["hidden"].get<int>();
  cfg.d_m = doc["hparams"]["d_m"].get<int>();
  Rng dummy(1);
  DeepLevModel model(doc["hparams"]["state_width"].get<int>(), cfg, vocab.hash(),
                     dummy);
  load_checkpoint(path, "deeplev", vocab.hash(), model.params());
  model.heldout_mae = doc["extra"]["heldout_mae"].get<double>();
  return model;
}

}  // namespace advseq

#include "advseq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "advseq/checkpoint.hpp"
#include "advseq/editdist.hpp"

namespace advseq {

using nn::Mat;
using nn::Tape;
using nn::Var;
using nn::Vec;

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["roc_auc_drop"] = roc_auc_drop;
  j["accuracy_drop"] = accuracy_drop;
  j["probability_drop"] = probability_drop;
  j["mean_wer"] = mean_wer;
  j["normalized_wer"] = normalized_wer;
  j["log_perplexity"] = log_perplexity;
  j["nad"] = nad;
  j["n_examples"] = n_examples;
  j["attack_id"] = attack_id;
  j["config_hash"] = config_hash;
  return j;
}

namespace {
std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace

std::string MetricsReport::csv_header() const {
  return "attack_id,config_hash,n_examples,roc_auc_drop,accuracy_drop,"
         "probability_drop,mean_wer,normalized_wer,log_perplexity,nad";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os << attack_id << ',' << config_hash << ',' << n_examples << ','
     << fmt(roc_auc_drop) << ',' << fmt(accuracy_drop) << ','
     << fmt(probability_drop) << ',' << fmt(mean_wer) << ','
     << fmt(normalized_wer) << ',' << fmt(log_perplexity) << ',' << fmt(nad);
  return os.str();
}

// ---------------------------------------------------------------------------
// Language model

LanguageModel::LanguageModel(int vocab_size, const LmConfig& cfg,
                             uint64_t vocab_hash, Rng& rng)
    : cfg_(cfg),
      vocab_hash_(vocab_hash),
      emb_("lm.emb", vocab_size, cfg.d_emb),
      gru_("lm.gru", cfg.d_emb, cfg.d_hidden),
      out_("lm.out", vocab_size, cfg.d_hidden) {
  emb_.glorot(rng);
  gru_.init(rng);
  out_.init(rng);
}

std::vector<nn::Param*> LanguageModel::params() {
  std::vector<nn::Param*> out;
  out.push_back(&emb_);
  gru_.collect(out);
  out_.collect(out);
  return out;
}

double LanguageModel::nll_per_token(const TokenSequence& x) const {
  Vec h = Vec::Zero(gru_.hidden());
  int prev = Vocabulary::kBos;
  double nll = 0.0;
  std::vector<int> targets = x.ids;
  targets.push_back(Vocabulary::kEos);
  for (int tgt : targets) {
    h = gru_.step(emb_.value.row(prev).transpose(), h);
    Vec logits = out_.apply(h);
    nll -= logits(tgt) - nn::log_sum_exp(logits);
    prev = tgt;
  }
  return nll / double(targets.size());
}

class LmTrainer {
 public:
  explicit LmTrainer(LanguageModel& lm) : lm_(lm) {
    plist_.push_back(&lm_.emb_);
    lm_.gru_.collect(plist_);
    lm_.out_.collect(plist_);
  }

  double step(const TokenSequence& x, nn::Adam& adam, double clip) {
    Tape t;
    leafs_.clear();
    for (nn::Param* p : plist_) leafs_.push_back(t.leaf(p->value, true));
    int li = 0;
    Var emb = leafs_[li++];
    nn::GruParams::Taped gv;
    gv.Wr = leafs_[li++]; gv.Wz = leafs_[li++]; gv.Wn = leafs_[li++];
    gv.Ur = leafs_[li++]; gv.Uz = leafs_[li++]; gv.Un = leafs_[li++];
    gv.br = leafs_[li++]; gv.bz = leafs_[li++]; gv.bn = leafs_[li++];
    nn::Dense::Taped ov{leafs_[li], leafs_[li + 1]};
    li += 2;

    std::vector<int> inputs;
    inputs.push_back(Vocabulary::kBos);
    for (int id : x.ids) inputs.push_back(id);
    std::vector<int> targets = x.ids;
    targets.push_back(Vocabulary::kEos);

    Var in_emb = t.embed_rows(emb, inputs);
    Var h = t.leaf(Mat::Zero(lm_.gru_.hidden(), 1), false);
    std::vector<Var> losses;
    for (size_t s = 0; s < inputs.size(); ++s) {
      h = nn::GruParams::step(t, gv, t.row_col(in_emb, static_cast<int>(s)), h);
      losses.push_back(t.ce_logits(nn::Dense::apply(t, ov, h), targets[s]));
    }
    Var loss = t.affine(t.sum_elems(losses), 1.0 / double(losses.size()), 0.0);
    double lv = t.val(loss)(0, 0);
    if (!std::isfinite(lv))
      throw std::runtime_error("lm training aborted: non-finite loss");
    t.backward(loss);
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
  LanguageModel& lm_;
  std::vector<nn::Param*> plist_;
  std::vector<Var> leafs_;
};

LanguageModel train_lm(const std::vector<TokenSequence>& corpus,
                       const Vocabulary& vocab, const LmConfig& cfg, Rng& rng) {
  if (corpus.empty()) throw std::runtime_error("train_lm: empty corpus");
  LanguageModel lm(vocab.size(), cfg, vocab.hash(), rng);
  LmTrainer trainer(lm);
  nn::Adam adam(cfg.lr);

  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  size_t n_held = corpus.size() >= 20 ? corpus.size() / 10 : 0;
  std::vector<size_t> tr(order.begin(), order.end() - n_held);
  std::vector<size_t> held(order.end() - n_held, order.end());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(tr);
    for (size_t i : tr) trainer.step(corpus[i], adam, cfg.clip_norm);
  }
  const auto& eval = held.empty() ? tr : held;
  double total = 0.0;
  for (size_t i : eval) total += lm.nll_per_token(corpus[i]);
  lm.heldout_log_perplexity = total / double(eval.size());
  return lm;
}

void LanguageModel::save(const std::string& path) const {
  nlohmann::json hp;
  hp["d_emb"] = cfg_.d_emb;
  hp["d_hidden"] = cfg_.d_hidden;
  nlohmann::json extra;
  extra["heldout_log_perplexity"] = heldout_log_perplexity;
  auto plist = const_cast<LanguageModel*>(this)->params();
  std::vector<const nn::Param*> cp(plist.begin(), plist.end());
  save_checkpoint(path, "lm", vocab_hash_, hp, cp, extra);
}

LanguageModel LanguageModel::load(const std::string& path, const Vocabulary& vocab) {
  nlohmann::json doc = peek_checkpoint(path);
  LmConfig cfg;
  cfg.d_emb = doc["hparams"]["d_emb"].get<int>();
  cfg.d_hidden = doc["hparams"]["d_hidden"].get<int>();
  Rng dummy(1);
  LanguageModel lm(vocab.size(), cfg, vocab.hash(), dummy);
  load_checkpoint(path, "lm", vocab.hash(), lm.params());
  lm.heldout_log_perplexity = doc["extra"]["heldout_log_perplexity"].get<double>();
  return lm;
}

// ---------------------------------------------------------------------------
// Metrics

double macro_ovr_auc(const Mat& probs, const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  const int k = static_cast<int>(probs.cols());
  if (probs.rows() != n) throw std::runtime_error("macro_ovr_auc: shape mismatch");
  double total = 0.0;
  int used = 0;
  for (int c = 0; c < k; ++c) {
    long pos = std::count(labels.begin(), labels.end(), c);
    long neg = n - pos;
    if (pos == 0 || neg == 0) continue;
    // Average ranks (1-based) with ties averaged.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return probs(a, c) < probs(b, c); });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && probs(idx[j + 1], c) == probs(idx[i], c)) ++j;
      double avg = 0.5 * double(i + j) + 1.0;
      for (int t = i; t <= j; ++t) rank[idx[t]] = avg;
      i = j + 1;
    }
    double rank_sum = 0.0;
    for (int t = 0; t < n; ++t)
      if (labels[t] == c) rank_sum += rank[t];
    double auc = (rank_sum - 0.5 * double(pos) * double(pos + 1)) /
                 (double(pos) * double(neg));
    total += auc;
    ++used;
  }
  if (used == 0) throw std::runtime_error("macro_ovr_auc: no scorable class");
  return total / double(used);
}

double nad_core(const std::vector<int>& orig_labels, const std::vector<int>& adv_labels,
                const std::vector<int>& true_labels, const std::vector<int>& wers,
                const std::vector<int>& lens) {
  const size_t n = orig_labels.size();
  if (adv_labels.size() != n || true_labels.size() != n || wers.size() != n ||
      lens.size() != n)
    throw std::runtime_error("nad_core: length mismatch");
  double sum = 0.0;
  long z = 0;
  for (size_t i = 0; i < n; ++i) {
    if (orig_labels[i] != true_labels[i]) continue;
    ++z;
    if (adv_labels[i] == orig_labels[i]) continue;
    double num = double(lens[i] - wers[i]);
    double den = double(lens[i] - 1);
    double factor = den == 0.0 ? 0.0 : num / den;
    factor = std::clamp(factor, 0.0, 1.0);
    sum += factor;
  }
  if (z == 0) throw std::runtime_error("no correctly-classified examples");
  return sum / double(z);
}

double nad(const std::vector<AttackResult>& results, const TargetClassifier& target) {
  std::vector<int> orig, adv, truth, wers, lens;
  for (const AttackResult& r : results) {
    orig.push_back(target.classify(r.original).label);
    adv.push_back(target.classify(r.adversarial).label);
    truth.push_back(r.true_label);
    wers.push_back(wer(r.adversarial, r.original));
    lens.push_back(static_cast<int>(std::max(r.original.size(), r.adversarial.size())));
  }
  return nad_core(orig, adv, truth, wers, lens);
}

MetricsReport metric_suite(const std::vector<AttackResult>& results,
                           const TargetClassifier& target, const LanguageModel& lm,
                           const std::string& attack_id,
                           const std::string& config_hash) {
  if (results.empty()) throw std::runtime_error("metric_suite: no results");
  const int n = static_cast<int>(results.size());
  const int k = target.n_classes();

  Mat orig_probs(n, k), adv_probs(n, k);
  std::vector<int> labels(n);
  long orig_correct = 0, adv_correct = 0;
  long z_count = 0;
  double prob_drop = 0.0;
  double mean_w = 0.0, mean_nw = 0.0, ppl = 0.0;

  for (int i = 0; i < n; ++i) {
    const AttackResult& r = results[i];
    labels[i] = r.true_label;
    Classification co = target.classify(r.original);
    Classification ca = target.classify(r.adversarial);
    orig_probs.row(i) = co.probs.transpose();
    adv_probs.row(i) = ca.probs.transpose();
    if (co.label == r.true_label) {
      ++orig_correct;
      ++z_count;
      prob_drop += co.probs(r.true_label) - ca.probs(r.true_label);
    }
    if (ca.label == r.true_label) ++adv_correct;
    mean_w += wer(r.adversarial, r.original);
    mean_nw += wer_norm(r.adversarial, r.original);
    ppl += lm.nll_per_token(r.adversarial);
  }

  MetricsReport rep;
  rep.n_examples = n;
  rep.attack_id = attack_id;
  rep.config_hash = config_hash;
  rep.accuracy_drop =
      double(orig_correct) / double(n) - double(adv_correct) / double(n);
  rep.roc_auc_drop =
      macro_ovr_auc(orig_probs, labels) - macro_ovr_auc(adv_probs, labels);
  rep.probability_drop = z_count == 0 ? 0.0 : prob_drop / double(z_count);
  rep.mean_wer = mean_w / double(n);
  rep.normalized_wer = mean_nw / double(n);
  rep.log_perplexity = ppl / double(n);
  rep.nad = nad(results, target);
  return rep;
}

std::string scatter_csv(const std::vector<AttackResult>& results,
                        const TargetClassifier& target) {
  std::ostringstream os;
  os << "index,normalized_wer,orig_correct,adv_correct,prob_drop_true_class\n";
  for (size_t i = 0; i < results.size(); ++i) {
    const AttackResult& r = results[i];
    Classification co = target.classify(r.original);
    Classification ca = target.classify(r.adversarial);
    os << i << ',' << fmt(wer_norm(r.adversarial, r.original)) << ','
       << (co.label == r.true_label ? 1 : 0) << ','
       << (ca.label == r.true_label ? 1 : 0) << ','
       << fmt(co.probs(r.true_label) - ca.probs(r.true_label)) << '\n';
  }
  return os.str();
}

}  // namespace advseq

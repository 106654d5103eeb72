#include "advseq/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

namespace advseq {

using nn::Mat;
using nn::Tape;
using nn::Var;
using nn::Vec;

const char* attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::RandomWalk: return "random_walk";
    case AttackMethod::Mcmc: return "mcmc";
    case AttackMethod::Cascada: return "cascada";
    case AttackMethod::HotFlip: return "hotflip";
  }
  return "?";
}

AttackMethod attack_method_from_name(const std::string& name) {
  for (AttackMethod m : {AttackMethod::RandomWalk, AttackMethod::Mcmc,
                         AttackMethod::Cascada, AttackMethod::HotFlip})
    if (name == attack_method_name(m)) return m;
  throw std::runtime_error("unknown attack method: " + name);
}

void AttackConfig::validate() const {
  if (n < 1) throw std::runtime_error("attack config: n must be >= 1");
  if (sigma_wer <= 0 || sigma_class <= 0)
    throw std::runtime_error("attack config: temperatures must be > 0");
  if (step_size <= 0) throw std::runtime_error("attack config: step_size must be > 0");
  if (lambda < 0) throw std::runtime_error("attack config: lambda must be >= 0");
  if (beam < 1) throw std::runtime_error("attack config: beam must be >= 1");
}

int select_candidate(const CandidateTrace& trace, int true_label) {
  int best_flip = -1, best_any = -1;
  for (size_t i = 0; i < trace.entries.size(); ++i) {
    const TraceEntry& e = trace.entries[i];
    if (e.label != true_label) {
      if (best_flip < 0 || e.wer_to_orig < trace.entries[best_flip].wer_to_orig)
        best_flip = static_cast<int>(i);
    }
    if (best_any < 0 || e.score < trace.entries[best_any].score)
      best_any = static_cast<int>(i);
  }
  return best_flip >= 0 ? best_flip : best_any;
}

EmbeddedState random_walk_step(const EmbeddedState& z0, double sigma, Rng& rng) {
  if (sigma <= 0) throw std::runtime_error("random_walk_step: sigma must be > 0");
  EmbeddedState z;
  z.m = z0.m;
  for (int i = 0; i < z.m.rows(); ++i)
    for (int j = 0; j < z.m.cols(); ++j) z.m(i, j) += sigma * rng.normal();
  return z;
}

double mcmc_alpha(int wer_to_orig, bool same_class, double sigma_wer,
                  double sigma_class) {
  return std::exp(-double(wer_to_orig) / sigma_wer -
                  (same_class ? 1.0 : 0.0) / sigma_class);
}

bool mcmc_accept(double alpha, Rng& rng) { return !(alpha < rng.uniform()); }

Mat flip_gains(const Mat& input_grads, const Mat& emb, const std::vector<int>& ids) {
  Mat G = input_grads * emb.transpose();  // T x V
  for (int i = 0; i < G.rows(); ++i) G.row(i).array() -= G(i, ids[i]);
  return G;
}

EditAudit audit_edits(const TokenSequence& x, const TokenSequence& y) {
  EditAudit a;
  a.script = edit_script(x, y);
  a.len_delta = static_cast<int>(y.size()) - static_cast<int>(x.size());
  std::map<int, int> mult;
  for (int id : x.ids) ++mult[id];
  for (int id : y.ids) --mult[id];
  a.multiset_preserved = true;
  for (auto& [id, n] : mult)
    if (n != 0) a.multiset_preserved = false;
  return a;
}

namespace {

struct Guidance {
  const AttackModels& models;
  const MaskerSet& masker;
  AttackMethod method;

  // Score of the class under attack plus the guidance label for a decoded
  // candidate. HotFlip judges with the token head it differentiates; the
  // walk attacks judge with the embedded head over the frozen encoder.
  std::pair<double, int> operator()(const TokenSequence& cand, int true_label) const {
    Classification c;
    if (models.white_box) {
      c = models.white_box->classify(cand);
    } else if (method == AttackMethod::HotFlip) {
      c = models.surrogate->classify_tokens(cand);
    } else {
      c = models.surrogate->classify_embedded(models.seq2seq->encode(cand, masker));
    }
    return {c.probs(true_label), c.label};
  }
};

TokenSequence decode_top(const Seq2SeqModel& model, const EmbeddedState& z,
                         const AttackConfig& cfg, int orig_len) {
  int max_len = std::max(4, cfg.max_len_factor * orig_len);
  return model.decode(z, cfg.beam, max_len).top().tokens;
}

void hotflip_attack(const TokenSequence& x, int true_label,
                    const AttackModels& models, const AttackConfig& cfg,
                    const Guidance& guide, CandidateTrace& trace) {
  const SurrogateClassifier& s = *models.surrogate;
  const Mat& emb = s.token_embeddings();

  struct Item {
    TokenSequence seq;
    double loss = 0.0;  // guidance cross-entropy; larger is more adversarial
  };
  std::vector<Item> beam{{x, 0.0}};

  while (static_cast<int>(trace.entries.size()) < cfg.n && !beam.empty()) {
    std::vector<Item> children;
    for (const Item& item : beam) {
      if (static_cast<int>(trace.entries.size()) >= cfg.n) break;
      Mat grads = s.token_input_gradients(item.seq, true_label);
      Mat gains = flip_gains(grads, emb, item.seq.ids);

      struct Flip {
        double gain;
        int pos, tok;
      };
      std::vector<Flip> flips;
      for (int i = 0; i < gains.rows(); ++i)
        for (int v = Vocabulary::kFirstRegular; v < gains.cols(); ++v) {
          if (v == item.seq.ids[i]) continue;
          flips.push_back({gains(i, v), i, v});
        }
      if (flips.empty()) break;
      std::sort(flips.begin(), flips.end(), [](const Flip& a, const Flip& b) {
        if (a.gain != b.gain) return a.gain > b.gain;
        if (a.pos != b.pos) return a.pos < b.pos;
        return a.tok < b.tok;
      });
      int width = std::min<int>(cfg.beam, static_cast<int>(flips.size()));
      for (int f = 0; f < width; ++f) {
        if (static_cast<int>(trace.entries.size()) >= cfg.n) break;
        Item child;
        child.seq = item.seq;
        child.seq.ids[flips[f].pos] = flips[f].tok;
        auto [score, label] = guide(child.seq, true_label);
        child.loss = -std::log(std::max(score, 1e-300));
        TraceEntry e;
        e.step = static_cast<int>(trace.entries.size()) + 1;
        e.z_norm = 0.0;
        e.decoded = child.seq;
        e.score = score;
        e.label = label;
        e.wer_to_orig = wer(child.seq, x);
        trace.entries.push_back(std::move(e));
        children.push_back(std::move(child));
      }
    }
    std::stable_sort(children.begin(), children.end(),
                     [](const Item& a, const Item& b) { return a.loss > b.loss; });
    if (static_cast<int>(children.size()) > cfg.beam) children.resize(cfg.beam);
    beam = std::move(children);
  }
}

}  // namespace

AttackResult run_attack(const TokenSequence& x, int true_label, AttackMethod method,
                        const AttackModels& models, const AttackConfig& cfg,
                        Rng& rng, const AttackDebug& debug) {
  cfg.validate();
  if (!models.seq2seq || !models.surrogate)
    throw std::runtime_error("run_attack: seq2seq and surrogate models required");
  if (method == AttackMethod::Cascada && !models.deeplev)
    throw std::runtime_error("run_attack: cascada requires a deep levenshtein model");
  if (x.empty()) throw std::runtime_error("run_attack: empty input sequence");

  const MaskerSet masker =
      cfg.masker.empty() ? models.seq2seq->trained_ops() : cfg.masker;
  const double sigma =
      cfg.sigma > 0 ? cfg.sigma : 0.1 * models.seq2seq->state_std();
  const Guidance guide{models, masker, method};
  const int orig_len = static_cast<int>(x.size());

  auto t0 = std::chrono::steady_clock::now();

  AttackResult res;
  res.original = x;
  res.true_label = true_label;

  auto record = [&](const EmbeddedState& z, bool accepted) -> const TraceEntry& {
    TraceEntry e;
    e.step = static_cast<int>(res.trace.entries.size()) + 1;
    e.z_norm = z.norm();
    e.decoded = decode_top(*models.seq2seq, z, cfg, orig_len);
    auto [score, label] = guide(e.decoded, true_label);
    e.score = score;
    e.label = label;
    e.wer_to_orig = wer(e.decoded, x);
    e.accepted = accepted;
    res.trace.entries.push_back(std::move(e));
    return res.trace.entries.back();
  };

  switch (method) {
    case AttackMethod::RandomWalk: {
      EmbeddedState z0 = models.seq2seq->encode(x, masker);
      for (int i = 0; i < cfg.n; ++i)
        record(random_walk_step(z0, sigma, rng), true);
      break;
    }
    case AttackMethod::Mcmc: {
      EmbeddedState z0 = models.seq2seq->encode(x, masker);
      EmbeddedState z = z0;
      for (int i = 0; i < cfg.n; ++i) {
        EmbeddedState prop = random_walk_step(z, sigma, rng);
        TokenSequence decoded = decode_top(*models.seq2seq, prop, cfg, orig_len);
        auto [score, label] = guide(decoded, true_label);
        int w = wer(decoded, x);
        double alpha = mcmc_alpha(w, label == true_label, cfg.sigma_wer,
                                  cfg.sigma_class);
        bool accepted = mcmc_accept(alpha, rng);
        TraceEntry e;
        e.step = i + 1;
        e.z_norm = prop.norm();
        e.decoded = std::move(decoded);
        e.score = score;
        e.label = label;
        e.wer_to_orig = w;
        e.accepted = accepted;
        res.trace.entries.push_back(std::move(e));
        if (accepted) z = std::move(prop);
        if (debug.mcmc_chain_norms) debug.mcmc_chain_norms->push_back(z.norm());
      }
      break;
    }
    case AttackMethod::Cascada: {
      EmbeddedState z0 = models.seq2seq->encode(x, masker);
      Vec mz0 = models.deeplev->embed(z0);
      EmbeddedState z = z0;
      for (int i = 0; i < cfg.n; ++i) {
        Tape t;
        Var zv = t.leaf(z.m, true);
        Var obj = models.surrogate->embedded_prob(t, zv, true_label);
        if (cfg.lambda > 0) {
          Var wd = wer_deep_var(t, *models.deeplev, zv, mz0);
          obj = t.add(obj, t.affine(wd, cfg.lambda, 0.0));
        }
        t.backward(obj);
        const Mat& g = t.grad(zv);
        if (g.allFinite()) {
          z.m -= cfg.step_size * g;
        } else {
          ++res.aborted_steps;  // keep the previous iterate
        }
        if (debug.cascada_iterates) debug.cascada_iterates->push_back(z.m);
        record(z, true);
      }
      break;
    }
    case AttackMethod::HotFlip:
      hotflip_attack(x, true_label, models, cfg, guide, res.trace);
      break;
  }

  if (res.trace.entries.empty())
    throw std::runtime_error("attack produced no candidates (degenerate vocabulary)");
  int sel = select_candidate(res.trace, true_label);
  res.selected_step = sel + 1;
  res.adversarial = res.trace.entries[sel].decoded;
  res.flipped = false;
  for (const TraceEntry& e : res.trace.entries)
    if (e.label != true_label) res.flipped = true;

  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace advseq

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "advseq/rng.hpp"
#include "advseq/vocab.hpp"

namespace advseq {

// Nine ascending amount boundaries delimiting ten decile bins.
struct DecileBinning {
  std::array<double, 9> boundaries{};

  // bin(x) = number of boundaries strictly below x; clamps to [0, 9].
  int bin(double amount) const {
    int b = 0;
    for (double t : boundaries)
      if (amount > t) ++b;
    return b;
  }
};

// Boundaries are the 10%..90% empirical quantiles of the sorted amounts
// using lower interpolation: boundary k = sorted[floor((n-1)*k/10)].
// Throws with fewer than 10 amounts.
DecileBinning fit_decile_bins(const std::vector<double>& amounts);

// "{mcc}_{type}_{bin}"; bin 0 is the cheapest decile, 9 the most expensive.
std::string encode_transaction(const std::string& tx_type, const std::string& mcc,
                               double amount, const DecileBinning& bins);

enum class DatasetFormat { AgNewsCsv, TransactionsCsv, VisitsCsv, SyntheticJsonl };
DatasetFormat dataset_format_from_name(const std::string& name);

struct LoadOptions {
  int min_freq = 1;
  // Most recent contiguous window kept per client/patient sequence.
  int max_seq_len = 20;
};

// Token lists plus labels, before any vocabulary is fixed. Loading is
// deterministic: rows are grouped and ordered by key, then by file order.
struct RawDataset {
  std::vector<std::vector<std::string>> tokens;
  std::vector<int> labels;
  int n_classes = 0;
};

RawDataset load_raw(const std::string& path, DatasetFormat format,
                    const LoadOptions& opts = {});

struct Dataset {
  std::vector<LabeledExample> examples;
  Vocabulary vocab;
  int n_classes = 0;
};

// load_raw + Vocabulary::build + encode in one step.
Dataset load_dataset(const std::string& path, DatasetFormat format,
                     const LoadOptions& opts = {});

// Lowercase, punctuation stripped to spaces, whitespace tokenized.
std::vector<std::string> tokenize_text(const std::string& text);

enum class SyntheticRule { MajorityToken, MarkerPresence, TokenCountParity };
SyntheticRule synthetic_rule_from_name(const std::string& name);

struct SyntheticConfig {
  int n_classes = 2;
  int vocab_size = 12;  // regular tokens t0..t{V-1}; must be >= 4
  int len_min = 6;
  int len_max = 12;
  SyntheticRule rule = SyntheticRule::MarkerPresence;
  int marker = 3;  // index of the marker token for marker/parity rules
  int n_train = 600;
  int n_test = 300;
  uint64_t seed = 1;
};

struct SyntheticDataset {
  RawDataset train;
  RawDataset test;
};

// Labels follow the rule exactly, so a Bayes-optimal classifier is known.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

// The generating rule itself, applied to a raw token list (the oracle).
int synthetic_label(const SyntheticConfig& cfg, const std::vector<std::string>& toks);

void save_jsonl(const std::string& path, const RawDataset& ds);

}  // namespace advseq

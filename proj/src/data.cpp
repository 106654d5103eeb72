#include "advseq/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace advseq {

using nlohmann::json;

namespace {

[[noreturn]] void row_error(const std::string& path, size_t line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

// Decile boundaries for any n >= 1 (loaders accept short files; the public
// fit_decile_bins enforces the >= 10 precondition).
DecileBinning bins_from_sorted(std::vector<double> sorted) {
  std::sort(sorted.begin(), sorted.end());
  DecileBinning b;
  const size_t n = sorted.size();
  for (int k = 1; k <= 9; ++k)
    b.boundaries[k - 1] = sorted[(n - 1) * size_t(k) / 10];
  return b;
}

// Minimal CSV with double-quote quoting and "" escapes.
std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

bool parse_int(const std::string& s, long& out) {
  try {
    size_t pos = 0;
    out = std::stol(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

struct GroupedRow {
  std::string sort_key;
  double numeric_key = 0;
  bool numeric = false;
  std::string token;
  size_t file_order = 0;
};

RawDataset load_agnews(const std::string& path) {
  auto lines = read_lines(path);
  RawDataset ds;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split_csv_row(lines[i]);
    if (f.size() < 3) row_error(path, i + 1, "expected columns label,title,description");
    long label;
    if (!parse_int(f[0], label)) {
      if (i == 0) continue;  // header row
      row_error(path, i + 1, "label is not an integer: " + f[0]);
    }
    if (label < 1 || label > 4) row_error(path, i + 1, "unknown label " + f[0]);
    ds.tokens.push_back(tokenize_text(f[1] + " " + f[2]));
    ds.labels.push_back(static_cast<int>(label) - 1);
    if (ds.tokens.back().empty()) row_error(path, i + 1, "row tokenizes to nothing");
  }
  if (ds.tokens.empty()) throw std::runtime_error("empty dataset: " + path);
  ds.n_classes = 4;
  return ds;
}

// Shared shape of the transactions and visits loaders: rows grouped by key,
// sorted by a secondary key, token per row from encode_transaction-style
// binning, one optional/required label per group.
RawDataset load_grouped(const std::string& path, bool visits, const LoadOptions& opts) {
  auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("empty dataset: " + path);

  const std::vector<std::string> base_cols =
      visits ? std::vector<std::string>{"patient_id", "visit_index", "drug_code",
                                        "amount", "label"}
             : std::vector<std::string>{"client_id", "timestamp", "tx_type", "mcc",
                                        "amount"};
  std::vector<std::string> cols = base_cols;
  size_t first_data = 0;
  {
    auto f = split_csv_row(lines[0]);
    bool header = std::find(f.begin(), f.end(), base_cols[0]) != f.end();
    if (header) {
      cols = f;
      first_data = 1;
    } else if (!visits && f.size() >= 6) {
      cols.push_back("label");  // positional transactions with trailing label
    }
  }
  auto col = [&](const std::string& name) -> int {
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : static_cast<int>(it - cols.begin());
  };
  int c_key = col(base_cols[0]);
  int c_sort = col(base_cols[1]);
  int c_amount = col("amount");
  int c_label = col("label");
  int c_type = visits ? -1 : col("tx_type");
  int c_mcc = visits ? col("drug_code") : col("mcc");
  if (c_key < 0 || c_sort < 0 || c_amount < 0 || c_mcc < 0 || (!visits && c_type < 0))
    throw std::runtime_error(path + ": header missing required columns");
  if (c_label < 0)
    throw std::runtime_error(path + (visits ? ": visits file requires a label column"
                                            : ": transactions file requires a label "
                                              "column (sixth column or header)"));

  struct Row {
    std::string sort_key;
    double num_key;
    bool numeric;
    size_t order;
    std::string type, code;
    double amount;
    long label;
    bool has_label;
  };
  std::map<std::string, std::vector<Row>> groups;
  std::vector<double> amounts;

  for (size_t i = first_data; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split_csv_row(lines[i]);
    size_t need = cols.size();
    if (f.size() < need) row_error(path, i + 1, "expected " + std::to_string(need) + " columns");
    Row r;
    r.sort_key = f[c_sort];
    r.numeric = parse_double(f[c_sort], r.num_key);
    r.order = i;
    r.type = visits ? "" : f[c_type];
    r.code = f[c_mcc];
    if (!parse_double(f[c_amount], r.amount))
      row_error(path, i + 1, "amount is not a number: " + f[c_amount]);
    r.has_label = c_label >= 0;
    r.label = 0;
    if (r.has_label && !parse_int(f[c_label], r.label))
      row_error(path, i + 1, "label is not an integer: " + f[c_label]);
    if (r.has_label && r.label < 0) row_error(path, i + 1, "unknown label " + f[c_label]);
    amounts.push_back(r.amount);
    groups[f[c_key]].push_back(std::move(r));
  }
  if (groups.empty()) throw std::runtime_error("empty dataset: " + path);

  DecileBinning bins = bins_from_sorted(amounts);

  RawDataset ds;
  int max_label = 0;
  for (auto& [key, rows] : groups) {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      if (a.numeric && b.numeric) {
        if (a.num_key != b.num_key) return a.num_key < b.num_key;
      } else if (a.sort_key != b.sort_key) {
        return a.sort_key < b.sort_key;
      }
      return a.order < b.order;
    });
    long label = rows.front().label;
    for (const Row& r : rows)
      if (r.label != label)
        throw std::runtime_error(path + ": inconsistent label within group " + key);
    std::vector<std::string> toks;
    size_t start = rows.size() > size_t(opts.max_seq_len)
                       ? rows.size() - size_t(opts.max_seq_len)
                       : 0;
    for (size_t i = start; i < rows.size(); ++i) {
      const Row& r = rows[i];
      if (visits)
        toks.push_back(r.code + "_" + std::to_string(bins.bin(r.amount)));
      else
        toks.push_back(encode_transaction(r.type, r.code, r.amount, bins));
    }
    ds.tokens.push_back(std::move(toks));
    ds.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, static_cast<int>(label));
  }
  ds.n_classes = max_label + 1;
  return ds;
}

RawDataset load_jsonl(const std::string& path) {
  auto lines = read_lines(path);
  RawDataset ds;
  int max_label = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const std::exception& e) {
      row_error(path, i + 1, std::string("bad json: ") + e.what());
    }
    if (!j.contains("tokens") || !j.contains("label"))
      row_error(path, i + 1, "object requires \"tokens\" and \"label\"");
    std::vector<std::string> toks;
    for (const auto& t : j["tokens"]) toks.push_back(t.get<std::string>());
    if (toks.empty()) row_error(path, i + 1, "empty token list");
    int label = j["label"].get<int>();
    if (label < 0) row_error(path, i + 1, "unknown label " + std::to_string(label));
    max_label = std::max(max_label, label);
    ds.tokens.push_back(std::move(toks));
    ds.labels.push_back(label);
  }
  if (ds.tokens.empty()) throw std::runtime_error("empty dataset: " + path);
  ds.n_classes = max_label + 1;
  return ds;
}

}  // namespace

DecileBinning fit_decile_bins(const std::vector<double>& amounts) {
  if (amounts.size() < 10)
    throw std::runtime_error("fit_decile_bins requires at least 10 amounts");
  return bins_from_sorted(amounts);
}

std::string encode_transaction(const std::string& tx_type, const std::string& mcc,
                               double amount, const DecileBinning& bins) {
  return mcc + "_" + tx_type + "_" + std::to_string(bins.bin(amount));
}

DatasetFormat dataset_format_from_name(const std::string& name) {
  if (name == "agnews_csv") return DatasetFormat::AgNewsCsv;
  if (name == "transactions_csv") return DatasetFormat::TransactionsCsv;
  if (name == "visits_csv") return DatasetFormat::VisitsCsv;
  if (name == "synthetic_jsonl") return DatasetFormat::SyntheticJsonl;
  throw std::runtime_error("unknown dataset format: " + name);
}

RawDataset load_raw(const std::string& path, DatasetFormat format,
                    const LoadOptions& opts) {
  switch (format) {
    case DatasetFormat::AgNewsCsv: return load_agnews(path);
    case DatasetFormat::TransactionsCsv: return load_grouped(path, false, opts);
    case DatasetFormat::VisitsCsv: return load_grouped(path, true, opts);
    case DatasetFormat::SyntheticJsonl: return load_jsonl(path);
  }
  throw std::runtime_error("unknown dataset format");
}

Dataset load_dataset(const std::string& path, DatasetFormat format,
                     const LoadOptions& opts) {
  RawDataset raw = load_raw(path, format, opts);
  Dataset ds;
  ds.vocab = Vocabulary::build(raw.tokens, opts.min_freq);
  ds.n_classes = raw.n_classes;
  ds.examples.reserve(raw.tokens.size());
  for (size_t i = 0; i < raw.tokens.size(); ++i)
    ds.examples.push_back({ds.vocab.encode(raw.tokens[i]), raw.labels[i]});
  return ds;
}

std::vector<std::string> tokenize_text(const std::string& text) {
  std::string clean;
  clean.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c))
      clean += static_cast<char>(std::tolower(c));
    else
      clean += ' ';
  }
  std::vector<std::string> toks;
  std::stringstream ss(clean);
  std::string tok;
  while (ss >> tok) toks.push_back(tok);
  return toks;
}

SyntheticRule synthetic_rule_from_name(const std::string& name) {
  if (name == "majority") return SyntheticRule::MajorityToken;
  if (name == "marker") return SyntheticRule::MarkerPresence;
  if (name == "parity") return SyntheticRule::TokenCountParity;
  throw std::runtime_error("unknown synthetic rule: " + name);
}

int synthetic_label(const SyntheticConfig& cfg, const std::vector<std::string>& toks) {
  auto tok_name = [](int i) { return "t" + std::to_string(i); };
  switch (cfg.rule) {
    case SyntheticRule::MajorityToken: {
      int best = 0;
      long best_count = -1;
      for (int c = 0; c < cfg.n_classes; ++c) {
        long n = std::count(toks.begin(), toks.end(), tok_name(c));
        if (n > best_count) {
          best_count = n;
          best = c;
        }
      }
      return best;
    }
    case SyntheticRule::MarkerPresence:
      return std::find(toks.begin(), toks.end(), tok_name(cfg.marker)) != toks.end()
                 ? 1
                 : 0;
    case SyntheticRule::TokenCountParity:
      return static_cast<int>(
          std::count(toks.begin(), toks.end(), tok_name(cfg.marker)) % 2);
  }
  return 0;
}

namespace {

RawDataset generate_split(const SyntheticConfig& cfg, int count, Rng& rng) {
  RawDataset ds;
  ds.n_classes = cfg.rule == SyntheticRule::MajorityToken ? cfg.n_classes : 2;
  auto tok_name = [](int i) { return "t" + std::to_string(i); };
  for (int s = 0; s < count; ++s) {
    int len = cfg.len_min +
              static_cast<int>(rng.uniform_int(uint64_t(cfg.len_max - cfg.len_min + 1)));
    std::vector<std::string> toks(len);
    for (auto& t : toks) t = tok_name(static_cast<int>(rng.uniform_int(cfg.vocab_size)));
    if (cfg.rule == SyntheticRule::MarkerPresence) {
      // Balance the classes: half the draws carry the marker, half do not.
      bool want_marker = rng.uniform() < 0.5;
      std::string marker = tok_name(cfg.marker);
      if (want_marker) {
        if (std::find(toks.begin(), toks.end(), marker) == toks.end())
          toks[rng.uniform_int(toks.size())] = marker;
      } else {
        for (auto& t : toks)
          while (t == marker)
            t = tok_name(static_cast<int>(rng.uniform_int(cfg.vocab_size)));
      }
    }
    ds.labels.push_back(synthetic_label(cfg, toks));
    ds.tokens.push_back(std::move(toks));
  }
  return ds;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.vocab_size < 4) throw std::runtime_error("synthetic vocab_size must be >= 4");
  if (cfg.len_min < 1 || cfg.len_max < cfg.len_min)
    throw std::runtime_error("bad synthetic length range");
  if (cfg.marker >= cfg.vocab_size)
    throw std::runtime_error("synthetic marker outside vocabulary");
  SyntheticDataset out;
  Rng train_rng(Rng::mix(cfg.seed, 0x7261696eull));
  Rng test_rng(Rng::mix(cfg.seed, 0x74657374ull));
  out.train = generate_split(cfg, cfg.n_train, train_rng);
  out.test = generate_split(cfg, cfg.n_test, test_rng);
  return out;
}

void save_jsonl(const std::string& path, const RawDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (size_t i = 0; i < ds.tokens.size(); ++i) {
    json j;
    j["tokens"] = ds.tokens[i];
    j["label"] = ds.labels[i];
    out << j.dump() << '\n';
  }
}

}  // namespace advseq

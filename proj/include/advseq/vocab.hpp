#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace advseq {

// Edit operations available to the corruption masker and to constrained
// attacks. Each operation owns a reserved control token in every Vocabulary.
enum class EditOp : int { AddToken = 0, Replace = 1, Delete = 2, Swap = 3 };

constexpr std::array<EditOp, 4> kAllEditOps = {EditOp::AddToken, EditOp::Replace,
                                               EditOp::Delete, EditOp::Swap};

const char* edit_op_name(EditOp op);
EditOp edit_op_from_name(const std::string& name);

// Non-empty subset of edit operations, kept in canonical order.
class MaskerSet {
 public:
  MaskerSet() = default;
  explicit MaskerSet(std::initializer_list<EditOp> ops);
  static MaskerSet all();
  // Parses a comma-separated list such as "add,replace,delete,swap".
  static MaskerSet parse(const std::string& spec);

  void insert(EditOp op) { present_[static_cast<int>(op)] = true; }
  bool contains(EditOp op) const { return present_[static_cast<int>(op)]; }
  bool empty() const;
  size_t size() const;
  std::vector<EditOp> ops() const;  // canonical order
  std::string str() const;
  bool operator==(const MaskerSet& o) const { return present_ == o.present_; }

 private:
  std::array<bool, 4> present_ = {false, false, false, false};
};

// A sequence of token ids over some Vocabulary; the object under attack.
// Never stores PAD, and BOS/EOS only ever appear as model I/O framing.
struct TokenSequence {
  std::vector<int> ids;

  TokenSequence() = default;
  explicit TokenSequence(std::vector<int> v) : ids(std::move(v)) {}
  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSequence& o) const { return ids == o.ids; }
};

struct LabeledExample {
  TokenSequence sequence;
  int label = 0;
};

// Immutable token alphabet. Ids are dense, starting at 0 with the reserved
// specials: PAD, BOS, EOS, UNK, then one control token per edit operation.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFirstControl = 4;
  static constexpr int kFirstRegular = 8;

  Vocabulary();  // specials only

  // Every token with corpus frequency >= min_freq receives an id; rarer
  // tokens encode to UNK. Order is (frequency desc, token asc) so builds are
  // reproducible. Throws on an empty corpus.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          int min_freq);

  static int control_id(EditOp op) { return kFirstControl + static_cast<int>(op); }

  int add_token(const std::string& tok);  // returns new id; throws on duplicate
  int id(const std::string& tok) const;   // kUnk when absent
  bool has(const std::string& tok) const { return index_.count(tok) > 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool is_special(int id) const { return id >= 0 && id < kFirstRegular; }

  TokenSequence encode(const std::vector<std::string>& toks) const;
  std::vector<std::string> decode(const TokenSequence& seq) const;

  // FNV-1a over the token list; used to pair checkpoints with their alphabet.
  uint64_t hash() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace advseq

#include "advseq/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace advseq {

const char* edit_op_name(EditOp op) {
  switch (op) {
    case EditOp::AddToken: return "add";
    case EditOp::Replace: return "replace";
    case EditOp::Delete: return "delete";
    case EditOp::Swap: return "swap";
  }
  return "?";
}

EditOp edit_op_from_name(const std::string& name) {
  for (EditOp op : kAllEditOps)
    if (name == edit_op_name(op)) return op;
  throw std::runtime_error("unknown edit operation: " + name);
}

MaskerSet::MaskerSet(std::initializer_list<EditOp> ops) {
  for (EditOp op : ops) insert(op);
}

MaskerSet MaskerSet::all() {
  MaskerSet m;
  for (EditOp op : kAllEditOps) m.insert(op);
  return m;
}

MaskerSet MaskerSet::parse(const std::string& spec) {
  MaskerSet m;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    m.insert(edit_op_from_name(item.substr(a, b - a + 1)));
  }
  return m;
}

bool MaskerSet::empty() const {
  for (bool p : present_)
    if (p) return false;
  return true;
}

size_t MaskerSet::size() const {
  size_t n = 0;
  for (bool p : present_) n += p;
  return n;
}

std::vector<EditOp> MaskerSet::ops() const {
  std::vector<EditOp> out;
  for (EditOp op : kAllEditOps)
    if (contains(op)) out.push_back(op);
  return out;
}

std::string MaskerSet::str() const {
  std::string s;
  for (EditOp op : ops()) {
    if (!s.empty()) s += ',';
    s += edit_op_name(op);
  }
  return s;
}

Vocabulary::Vocabulary() {
  add_token("<pad>");
  add_token("<bos>");
  add_token("<eos>");
  add_token("<unk>");
  for (EditOp op : kAllEditOps) add_token(std::string("<op:") + edit_op_name(op) + ">");
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             int min_freq) {
  if (corpus.empty()) throw std::runtime_error("empty corpus");
  if (min_freq < 1) throw std::runtime_error("min_freq must be >= 1");
  std::map<std::string, long> freq;
  for (const auto& doc : corpus)
    for (const auto& tok : doc) ++freq[tok];

  std::vector<std::pair<std::string, long>> kept;
  kept.reserve(freq.size());
  for (const auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, n] : kept) v.add_token(tok);
  return v;
}

int Vocabulary::add_token(const std::string& tok) {
  if (tok.find('\n') != std::string::npos)
    throw std::runtime_error("token may not contain a newline");
  auto [it, inserted] = index_.emplace(tok, static_cast<int>(tokens_.size()));
  if (!inserted) throw std::runtime_error("duplicate token: " + tok);
  tokens_.push_back(tok);
  return it->second;
}

int Vocabulary::id(const std::string& tok) const {
  auto it = index_.find(tok);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens_[id];
}

TokenSequence Vocabulary::encode(const std::vector<std::string>& toks) const {
  TokenSequence s;
  s.ids.reserve(toks.size());
  for (const auto& t : toks) s.ids.push_back(id(t));
  return s;
}

std::vector<std::string> Vocabulary::decode(const TokenSequence& seq) const {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (int id : seq.ids) out.push_back(token(id));
  return out;
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& tok : tokens_) {
    for (unsigned char c : tok) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= '\n';
    h *= 0x100000001b3ull;
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  out << "advseq-vocab 1\n";
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "advseq-vocab 1")
    throw std::runtime_error("unsupported vocabulary file version: " + header);
  Vocabulary v;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (id < kFirstRegular) {
      if (line != v.tokens_[id])
        throw std::runtime_error("vocabulary file special token mismatch at id " +
                                 std::to_string(id));
    } else {
      v.add_token(line);
    }
    ++id;
  }
  if (id < kFirstRegular) throw std::runtime_error("vocabulary file truncated");
  return v;
}

}  // namespace advseq

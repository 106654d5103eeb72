#include "advseq/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace advseq {

using nlohmann::json;

std::string hash_hex(uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::string& path, const std::string& kind,
                     uint64_t vocab_hash, const json& hparams,
                     const std::vector<const nn::Param*>& params,
                     const json& extra) {
  json doc;
  doc["format"] = "advseq-checkpoint";
  doc["version"] = 1;
  doc["kind"] = kind;
  doc["vocab_hash"] = hash_hex(vocab_hash);
  doc["hparams"] = hparams;
  doc["extra"] = extra;
  json p = json::object();
  for (const nn::Param* prm : params) {
    json entry;
    entry["rows"] = prm->value.rows();
    entry["cols"] = prm->value.cols();
    std::vector<double> flat(prm->value.size());
    for (int i = 0; i < prm->value.rows(); ++i)
      for (int j = 0; j < prm->value.cols(); ++j)
        flat[size_t(i) * prm->value.cols() + j] = prm->value(i, j);
    entry["data"] = flat;
    p[prm->name] = std::move(entry);
  }
  doc["params"] = std::move(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << doc.dump() << '\n';
}

json peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json doc = json::parse(in);
  if (doc.value("format", "") != "advseq-checkpoint" || doc.value("version", 0) != 1)
    throw std::runtime_error("unsupported checkpoint format: " + path);
  return doc;
}

json load_checkpoint(const std::string& path, const std::string& kind,
                     uint64_t expected_vocab_hash,
                     const std::vector<nn::Param*>& params) {
  json doc = peek_checkpoint(path);
  if (doc.value("kind", "") != kind)
    throw std::runtime_error("checkpoint kind mismatch: expected " + kind +
                             ", found " + doc.value("kind", "?") + " in " + path);
  if (doc.value("vocab_hash", "") != hash_hex(expected_vocab_hash))
    throw std::runtime_error("checkpoint vocabulary hash mismatch: " + path);
  const json& p = doc.at("params");
  for (nn::Param* prm : params) {
    if (!p.contains(prm->name))
      throw std::runtime_error("checkpoint missing parameter " + prm->name);
    const json& entry = p.at(prm->name);
    int rows = entry.at("rows").get<int>();
    int cols = entry.at("cols").get<int>();
    const auto& flat = entry.at("data");
    if (static_cast<int>(flat.size()) != rows * cols)
      throw std::runtime_error("checkpoint parameter size mismatch: " + prm->name);
    prm->value.resize(rows, cols);
    prm->m = nn::Mat::Zero(rows, cols);
    prm->v = nn::Mat::Zero(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        prm->value(i, j) = flat[size_t(i) * cols + j].get<double>();
  }
  return doc;
}

}  // namespace advseq

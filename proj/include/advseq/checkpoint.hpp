#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "advseq/nn.hpp"

namespace advseq {

// Versioned checkpoint container shared by every trained model. Loading
// verifies format version, model kind and vocabulary hash, so attacks never
// mix models trained on different alphabets.

void save_checkpoint(const std::string& path, const std::string& kind,
                     uint64_t vocab_hash, const nlohmann::json& hparams,
                     const std::vector<const nn::Param*>& params,
                     const nlohmann::json& extra = nlohmann::json::object());

// Fills the listed parameters by name, resizing to the stored shapes, and
// returns the full checkpoint document. Throws on version, kind, parameter
// or vocabulary-hash mismatch.
nlohmann::json load_checkpoint(const std::string& path, const std::string& kind,
                               uint64_t expected_vocab_hash,
                               const std::vector<nn::Param*>& params);

// Reads the document without touching parameters (for hash/kind inspection).
nlohmann::json peek_checkpoint(const std::string& path);

std::string hash_hex(uint64_t h);

}  // namespace advseq

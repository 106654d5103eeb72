#pragma once

#include "advseq/vocab.hpp"

namespace advseq {

// Token-level Levenshtein distance (unit-cost insert/delete/substitute).
int wer(const TokenSequence& x, const TokenSequence& y);

// wer(x, y) / max(|x|, |y|); 0 when both are empty.
double wer_norm(const TokenSequence& x, const TokenSequence& y);

// Operation counts of one minimal edit script from x to y, recovered by a
// deterministic DP backtrace (match > substitute > delete > insert on ties).
struct EditScript {
  int matches = 0;
  int substitutions = 0;
  int deletions = 0;   // tokens of x removed
  int insertions = 0;  // tokens of y added
  int total() const { return substitutions + deletions + insertions; }
};

EditScript edit_script(const TokenSequence& x, const TokenSequence& y);

}  // namespace advseq

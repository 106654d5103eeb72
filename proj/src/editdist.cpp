#include "advseq/editdist.hpp"

#include <algorithm>
#include <vector>

namespace advseq {

int wer(const TokenSequence& x, const TokenSequence& y) {
  const size_t n = x.size(), m = y.size();
  if (n == 0) return static_cast<int>(m);
  if (m == 0) return static_cast<int>(n);
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (x.ids[i - 1] != y.ids[j - 1] ? 1 : 0);
      int del = prev[j] + 1;
      int ins = cur[j - 1] + 1;
      cur[j] = std::min({sub, del, ins});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double wer_norm(const TokenSequence& x, const TokenSequence& y) {
  size_t L = std::max(x.size(), y.size());
  if (L == 0) return 0.0;
  return static_cast<double>(wer(x, y)) / static_cast<double>(L);
}

EditScript edit_script(const TokenSequence& x, const TokenSequence& y) {
  const size_t n = x.size(), m = y.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (x.ids[i - 1] != y.ids[j - 1] ? 1 : 0),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});

  EditScript s;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] &&
        x.ids[i - 1] == y.ids[j - 1]) {
      ++s.matches;
      --i, --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      ++s.substitutions;
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++s.deletions;
      --i;
    } else {
      ++s.insertions;
      --j;
    }
  }
  return s;
}

}  // namespace advseq

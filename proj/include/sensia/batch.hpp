#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sensia/ops.hpp"

namespace sensia {

// Right-padded token rows with their masks.
struct PaddedSequences {
  std::size_t count = 0;
  std::size_t length = 0;
  std::vector<int> ids;              // count x length
  ad::Mask mask;                     // count x length, 1 = real token
  std::vector<std::size_t> last_index;  // last non-pad position per row

  std::span<const int> row(std::size_t i) const {
    return std::span<const int>(ids).subspan(i * length, length);
  }
  ad::Mask row_mask(std::size_t i) const {
    return ad::Mask(mask.begin() + i * length, mask.begin() + (i + 1) * length);
  }
  // Row i without its trailing padding.
  std::span<const int> trimmed_row(std::size_t i) const {
    return row(i).first(last_index[i] + 1);
  }
  ad::Mask trimmed_mask(std::size_t i) const {
    return ad::Mask(mask.begin() + i * length, mask.begin() + i * length + last_index[i] + 1);
  }
};

// Row i of src is the translation of row i of tgt.
struct TokenizedBatch {
  PaddedSequences src;
  PaddedSequences tgt;
  std::size_t size() const { return src.count; }
};

// Pads `rows` on the right with `pad_id`. Rows must be non-empty.
PaddedSequences pad_sequences(const std::vector<std::vector<int>>& rows, int pad_id);

}  // namespace sensia

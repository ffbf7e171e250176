#pragma once

// Checkpoint file layout:
//
//   SENSIA-CHECKPOINT
//   format_version=1
//   seed=<u64>
//   model.<field>=<value>            (every ModelConfig field)
//   param_count=<n>
//   param <name> <group> <d0>x<d1>[x...] <offset>   (n lines, manifest order)
//   end
//   <raw little-endian float32 values, offsets counted in values>
//
// Values are stored at 32-bit; loading widens them back to 64-bit, so a
// save/load/save cycle is byte-identical.

#include <cstdint>
#include <string>

#include "sensia/model.hpp"

namespace sensia {

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const BackpackModel& model, const std::string& path);
BackpackModel load_checkpoint(const std::string& path);

class CheckpointReader {
 public:
  static BackpackModel read(const std::string& path);
};

}  // namespace sensia

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace limtr {

class ParamStore;

// Self-describing parameter container. Layout, all little-endian:
//   magic "LIMTR", format version u32, then per-entry records of
//   (name_len u32, name bytes, rank u32, dims u32 each, float32 payload).
struct CheckpointEntry {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> data;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
// Throws std::runtime_error naming the byte offset on malformed input and on
// version mismatch.
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

// ParamStore round-trip. Loading requires every store parameter to be present
// with matching shape; the error lists all missing/mismatched names.
std::vector<CheckpointEntry> params_to_entries(const ParamStore& store);
void load_params(ParamStore& store, const std::vector<CheckpointEntry>& entries);

}  // namespace limtr

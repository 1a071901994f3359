#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssmg/params.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

struct StoredTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

// Checkpoint file layout (little-endian):
//   "SSMG", u32 version
//   str config text
//   u32 tensor count, then per tensor: str name, u32 rank, u64 extents..., u32 dtype (0 = f32), f32 payload
//   u32 trainer flag, then (when 1) str trainer state
//   u64 FNV-1a of every preceding byte
struct CheckpointData {
    std::string config_text;
    std::vector<StoredTensor> tensors;
    std::optional<std::string> trainer_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const CheckpointData& data);
// Validates the whole buffer before returning; any defect raises IntegrityError.
CheckpointData decode_checkpoint(const std::string& bytes);

void save_checkpoint(const CheckpointData& data, const std::filesystem::path& path);
CheckpointData load_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<StoredTensor> export_parameters(const ParameterSet<T>& params);

// Copies stored values into `params`. Names, order and shapes must match exactly;
// everything is checked before the first value is written.
template <typename T>
void import_parameters(const ParameterSet<T>& params, const std::vector<StoredTensor>& stored);

}  // namespace ssmg

#include "ssmg/checkpoint.hpp"

#include <cmath>

#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"
#include "ssmg/random.hpp"

namespace ssmg {

namespace {

constexpr std::uint32_t kDtypeF32 = 0;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::string encode_checkpoint(const CheckpointData& data) {
    ByteWriter w;
    w.bytes("SSMG");
    w.u32(kCheckpointVersion);
    w.str(data.config_text);
    w.u32(static_cast<std::uint32_t>(data.tensors.size()));
    for (const auto& t : data.tensors) {
        if (shape_numel(t.shape) != t.values.size()) {
            throw DimensionError("checkpoint tensor " + t.name + " has shape " + shape_to_string(t.shape) + " but " +
                                 std::to_string(t.values.size()) + " values");
        }
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto extent : t.shape) w.u64(extent);
        w.u32(kDtypeF32);
        w.f32_array(t.values);
    }
    w.u32(data.trainer_state ? 1 : 0);
    if (data.trainer_state) w.str(*data.trainer_state);
    const std::uint64_t checksum = fnv1a64(w.buffer());
    w.u64(checksum);
    return w.take();
}

CheckpointData decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 + 8) throw IntegrityError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
    {
        ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8));
        const std::uint64_t stored = tail.u64();
        if (stored != fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8))) {
            throw IntegrityError("checkpoint checksum mismatch (file truncated or corrupted)");
        }
    }
    ByteReader r(std::string_view(bytes).substr(0, bytes.size() - 8));
    r.expect_magic("SSMG", "checkpoint");
    const auto version = r.u32();
    if (version != kCheckpointVersion) throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
    CheckpointData out;
    out.config_text = r.str();
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        StoredTensor t;
        t.name = r.str();
        const auto rank = r.u32();
        if (rank == 0 || rank > kMaxRank) throw IntegrityError("checkpoint tensor " + t.name + " has rank " + std::to_string(rank));
        std::size_t numel = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const auto extent = r.u64();
            if (extent == 0 || extent > r.remaining()) {
                throw IntegrityError("checkpoint tensor " + t.name + " has invalid extent " + std::to_string(extent));
            }
            t.shape.push_back(static_cast<std::size_t>(extent));
            numel *= static_cast<std::size_t>(extent);
            if (numel > r.remaining()) throw IntegrityError("checkpoint tensor " + t.name + " overruns the file");
        }
        if (r.u32() != kDtypeF32) throw IntegrityError("checkpoint tensor " + t.name + " has unknown dtype");
        t.values.resize(numel);
        r.f32_array(t.values);
        for (float v : t.values) {
            if (!std::isfinite(v)) throw IntegrityError("checkpoint tensor " + t.name + " holds non-finite values");
        }
        out.tensors.push_back(std::move(t));
    }
    const auto flag = r.u32();
    if (flag > 1) throw IntegrityError("checkpoint trainer flag is corrupt");
    if (flag == 1) out.trainer_state = r.str();
    if (r.remaining() != 0) throw IntegrityError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
    return out;
}

void save_checkpoint(const CheckpointData& data, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(data));
}

CheckpointData load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

template <typename T>
std::vector<StoredTensor> export_parameters(const ParameterSet<T>& params) {
    std::vector<StoredTensor> out;
    for (const auto& [name, t] : params.entries()) {
        auto d = t.data();
        out.push_back({name, t.shape(), std::vector<float>(d.begin(), d.end())});
    }
    return out;
}

template <typename T>
void import_parameters(const ParameterSet<T>& params, const std::vector<StoredTensor>& stored) {
    const auto& entries = params.entries();
    if (entries.size() != stored.size()) {
        throw IntegrityError("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                             std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].first != stored[i].name || entries[i].second.shape() != stored[i].shape) {
            throw IntegrityError("checkpoint tensor " + stored[i].name + " " + shape_to_string(stored[i].shape) +
                                 " does not match model tensor " + entries[i].first + " " +
                                 shape_to_string(entries[i].second.shape()));
        }
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto dst = entries[i].second.mutable_data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(stored[i].values[j]);
    }
}

template std::vector<StoredTensor> export_parameters<float>(const ParameterSet<float>&);
template std::vector<StoredTensor> export_parameters<double>(const ParameterSet<double>&);
template void import_parameters<float>(const ParameterSet<float>&, const std::vector<StoredTensor>&);
template void import_parameters<double>(const ParameterSet<double>&, const std::vector<StoredTensor>&);

}  // namespace ssmg

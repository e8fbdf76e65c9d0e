#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace rainnas::grad {

struct NamedTensor {
    std::string name;
    Tensor tensor;
    bool trainable = true;  // false for buffers and frozen parameters
};

// Ordered, name-addressable set of tensors. Order is insertion order and is
// the order used by checkpoints and optimizers.
class ParamStore {
public:
    Tensor& add(std::string name, Tensor tensor, bool trainable = true);
    bool contains(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    NamedTensor& entry(const std::string& name);

    std::vector<NamedTensor>& entries() { return entries_; }
    const std::vector<NamedTensor>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    void zero_grad();
    // Deep copy; the copy's leaves are independent of this store's.
    ParamStore clone() const;

private:
    std::vector<NamedTensor> entries_;
};

// Checkpoint container: "ADNW", u32 version, u32 count, then per tensor a u16
// name length, name bytes, u8 rank, u32 extents and little-endian f64 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params);
ParamStore decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace rainnas::grad

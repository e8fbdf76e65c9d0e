#include "params.hpp"

#include <algorithm>

#include "binio.hpp"
#include "error.hpp"

namespace rainnas::grad {

Tensor& ParamStore::add(std::string name, Tensor tensor, bool trainable) {
    require(!contains(name), "duplicate parameter name " + name);
    require(tensor.is_leaf(), "parameter " + name + " must be a leaf tensor");
    tensor.set_requires_grad(trainable);
    entries_.push_back({std::move(name), std::move(tensor), trainable});
    return entries_.back().tensor;
}

bool ParamStore::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const NamedTensor& e) { return e.name == name; });
}

NamedTensor& ParamStore::entry(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return e;
    fail(ErrorKind::InvalidArgument, "no parameter named " + name);
}

Tensor& ParamStore::at(const std::string& name) { return entry(name).tensor; }

const Tensor& ParamStore::at(const std::string& name) const {
    for (auto& e : entries_)
        if (e.name == name) return e.tensor;
    fail(ErrorKind::InvalidArgument, "no parameter named " + name);
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const auto& e : entries_) {
        auto t = Tensor::from(e.tensor.shape(), {e.tensor.data().begin(), e.tensor.data().end()});
        out.add(e.name, std::move(t), e.trainable);
    }
    return out;
}

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params) {
    io::ByteWriter w;
    w.text("ADNW");
    w.le<std::uint32_t>(kCheckpointVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
        require(e.name.size() <= 0xFFFF, "parameter name too long: " + e.name);
        w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
        w.text(e.name);
        w.le<std::uint8_t>(static_cast<std::uint8_t>(e.tensor.rank()));
        for (auto extent : e.tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(extent));
        for (double v : e.tensor.data()) w.f64(v);
    }
    return w.take();
}

ParamStore decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    io::ByteReader r(bytes, "checkpoint");
    if (bytes.size() < 4 || r.text(4) != "ADNW") fail(ErrorKind::Format, "not an ADNW file");
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion) r.error("unsupported version " + std::to_string(version));
    const auto count = r.le<std::uint32_t>();
    ParamStore out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.le<std::uint16_t>();
        std::string name = r.text(len);
        const auto rank = r.le<std::uint8_t>();
        if (rank > 4) r.error("tensor rank " + std::to_string(rank) + " above 4");
        Shape shape(rank);
        for (auto& e : shape) e = r.le<std::uint32_t>();
        const std::size_t n = numel_of(shape);
        if (r.remaining() / 8 < n) r.error("truncated tensor data for " + name);
        std::vector<double> data(n);
        for (auto& v : data) v = r.f64();
        if (out.contains(name)) r.error("duplicate tensor " + name);
        // Running statistics and normalizer constants never train.
        const bool trainable = name.find(".running_") == std::string::npos && !name.starts_with("norm.");
        out.add(std::move(name), Tensor::from(std::move(shape), std::move(data)), trainable);
    }
    if (!r.at_end()) r.error("trailing bytes after last tensor");
    return out;
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
    io::write_file(path, encode_checkpoint(params));
}

ParamStore load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace rainnas::grad

// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace seqrec {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw ParseError("checkpoint: truncated file");
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw ParseError("checkpoint: truncated file");
    return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const ParameterList& params,
                     const std::string& metadata_json) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open for writing: " + path);

    os.write(kMagic, sizeof(kMagic));
    write_u32(os, static_cast<std::uint32_t>(metadata_json.size()));
    os.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
    write_u32(os, static_cast<std::uint32_t>(params.size()));

    std::uint64_t offset = 0;
    for (const auto& p : params) {
        write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(os, static_cast<std::uint32_t>(p.tensor.ndim()));
        for (std::size_t i = 0; i < p.tensor.ndim(); ++i) {
            write_u64(os, static_cast<std::uint64_t>(p.tensor.dim(i)));
        }
        write_u64(os, offset);
        offset += static_cast<std::uint64_t>(p.tensor.size()) * sizeof(double);
    }
    write_u64(os, offset);
    for (const auto& p : params) {
        os.write(reinterpret_cast<const char*>(p.tensor.data()),
                 static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
    }
    if (!os) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);

    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw SchemaError("checkpoint: bad magic in " + path);
    }

    Checkpoint ckpt;
    const std::uint32_t meta_len = read_u32(is);
    ckpt.metadata_json.resize(meta_len);
    is.read(ckpt.metadata_json.data(), meta_len);
    if (!is) throw ParseError("checkpoint: truncated metadata");

    const std::uint32_t count = read_u32(is);
    struct Entry {
        std::string name;
        Shape shape;
        std::uint64_t offset;
        std::size_t size;
    };
    std::vector<Entry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const std::uint32_t name_len = read_u32(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        const std::uint32_t ndim = read_u32(is);
        e.size = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const std::uint64_t dim = read_u64(is);
            e.shape.push_back(static_cast<std::size_t>(dim));
            e.size *= static_cast<std::size_t>(dim);
        }
        e.offset = read_u64(is);
        entries.push_back(std::move(e));
    }
    const std::uint64_t payload_bytes = read_u64(is);
    std::vector<char> payload(payload_bytes);
    is.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (!is) throw ParseError("checkpoint: truncated payload");

    for (auto& e : entries) {
        if (e.offset + e.size * sizeof(double) > payload_bytes) {
            throw ParseError("checkpoint: tensor '" + e.name + "' exceeds payload");
        }
        std::vector<double> values(e.size);
        std::memcpy(values.data(), payload.data() + e.offset, e.size * sizeof(double));
        ckpt.tensors.emplace_back(e.name, Tensor::from_values(e.shape, std::move(values)));
    }
    return ckpt;
}

void assign_parameters(ParameterList& params, const Checkpoint& ckpt) {
    for (auto& p : params) {
        const Tensor* src = ckpt.find(p.name);
        if (!src) throw ContractError("checkpoint: missing tensor '" + p.name + "'");
        if (src->shape() != p.tensor.shape()) {
            throw ContractError("checkpoint: shape mismatch for '" + p.name + "': " +
                                shape_str(src->shape()) + " vs " + shape_str(p.tensor.shape()));
        }
        p.tensor.values() = src->values();
        p.tensor.zero_grad();
    }
}

}  // namespace seqrec

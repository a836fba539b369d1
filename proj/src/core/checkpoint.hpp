// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Named-tensor archive. Byte layout (all integers little-endian), see
// docs/formats.md:
//
//   magic   8 bytes  "SRCKPT01"
//   u32     metadata length M, then M bytes of UTF-8 JSON
//   u32     tensor count N
//   N x     u32 name length, name bytes, u32 ndim, u64 dims[ndim],
//           u64 payload offset (bytes from payload start)
//   u64     payload total bytes
//   payload raw f64 values, row-major, in manifest order

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/optimizer.hpp"
#include "core/tensor.hpp"

namespace seqrec {

struct Checkpoint {
    std::string metadata_json;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const ParameterList& params,
                     const std::string& metadata_json);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into an existing parameter list; every parameter
// must be present with an identical shape.
void assign_parameters(ParameterList& params, const Checkpoint& ckpt);

}  // namespace seqrec

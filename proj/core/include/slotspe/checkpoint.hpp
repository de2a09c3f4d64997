// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "slotspe/config.hpp"
#include "slotspe/model.hpp"
#include "slotspe/optim.hpp"

namespace slotspe {

struct Checkpoint {
    TrainConfig config;
    Model model;
    AdamState adam;
    std::size_t epoch = 0;
    std::size_t fold = 0;
    std::string rng_state;

    bool operator==(const Checkpoint&) const = default;
};

// Layout: "SSPC", u64 LE index length n, n bytes of JSON index, then the
// tensor payloads as little-endian binary32, row-major, at the offsets the
// index lists (relative to the payload start). Values are stored as binary32
// whatever the precision the run used.

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on a malformed container.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace slotspe

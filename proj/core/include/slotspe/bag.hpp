// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "slotspe/error.hpp"
#include "slotspe/tensor.hpp"

namespace slotspe {

enum class Modality : std::uint8_t { histology = 0, genomic = 1 };

std::string_view modality_name(Modality m);

/// One patient-modality instance set: M instances of width d, stored as
/// binary32 exactly as on disk.
struct FeatureBag {
    Modality modality = Modality::histology;
    std::size_t instances = 0;
    std::size_t width = 0;
    std::vector<float> values;

    float at(std::size_t i, std::size_t j) const { return values[i * width + j]; }
    Tensor to_tensor() const;
    /// Rows in `rows` order, as a tensor.
    Tensor rows_to_tensor(std::span<const std::size_t> rows) const;
    static FeatureBag from_tensor(Modality modality, const Tensor& t);

    bool operator==(const FeatureBag&) const = default;
};

class BagError : public DataError {
public:
    enum class Kind { io, bad_magic, version_mismatch, bad_header, truncated, trailing_bytes, non_finite, empty };

    BagError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr std::uint16_t kBagVersion = 1;
inline constexpr std::size_t kBagHeaderBytes = 16;

/// Byte layout: "SSPE", u16 LE version, u8 modality, u8 reserved (0),
/// u32 LE M, u32 LE d, then M*d little-endian binary32 values, row-major.
std::vector<std::uint8_t> encode_bag(const FeatureBag& bag);
FeatureBag decode_bag(std::span<const std::uint8_t> bytes);

void write_bag(const FeatureBag& bag, const std::filesystem::path& path);
FeatureBag load_bag(const std::filesystem::path& path);

/// Throws BagError(empty / non_finite) for bags that violate the invariants.
void validate_bag(const FeatureBag& bag);

}  // namespace slotspe

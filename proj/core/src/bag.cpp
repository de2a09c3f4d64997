// SPDX-License-Identifier: Apache-2.0
#include "slotspe/bag.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace slotspe {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>((v >> (8 * k)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace

std::string_view modality_name(Modality m) { return m == Modality::histology ? "histology" : "genomic"; }

Tensor FeatureBag::to_tensor() const {
    Tensor t(instances, width);
    for (std::size_t i = 0; i < values.size(); ++i) t[i] = values[i];
    return t;
}

Tensor FeatureBag::rows_to_tensor(std::span<const std::size_t> rows) const {
    Tensor t(rows.size(), width);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < width; ++j) t(r, j) = at(rows[r], j);
    return t;
}

FeatureBag FeatureBag::from_tensor(Modality modality, const Tensor& t) {
    FeatureBag bag;
    bag.modality = modality;
    bag.instances = t.rows();
    bag.width = t.cols();
    bag.values.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) bag.values[i] = static_cast<float>(t[i]);
    return bag;
}

void validate_bag(const FeatureBag& bag) {
    if (bag.instances == 0 || bag.width == 0)
        throw BagError(BagError::Kind::empty, "bag must have at least one instance and one feature");
    if (bag.values.size() != bag.instances * bag.width)
        throw BagError(BagError::Kind::bad_header, "bag value count does not match M x d");
    for (float v : bag.values)
        if (!std::isfinite(v)) throw BagError(BagError::Kind::non_finite, "bag contains non-finite entries");
}

std::vector<std::uint8_t> encode_bag(const FeatureBag& bag) {
    validate_bag(bag);
    if (bag.instances > 0xffffffffu || bag.width > 0xffffffffu)
        throw BagError(BagError::Kind::bad_header, "bag extents exceed u32");
    std::vector<std::uint8_t> out;
    out.reserve(kBagHeaderBytes + 4 * bag.values.size());
    for (char c : {'S', 'S', 'P', 'E'}) out.push_back(static_cast<std::uint8_t>(c));
    put_u16(out, kBagVersion);
    out.push_back(static_cast<std::uint8_t>(bag.modality));
    out.push_back(0);
    put_u32(out, static_cast<std::uint32_t>(bag.instances));
    put_u32(out, static_cast<std::uint32_t>(bag.width));
    for (float v : bag.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

FeatureBag decode_bag(std::span<const std::uint8_t> bytes) {
    using K = BagError::Kind;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "SSPE", 4) != 0)
        throw BagError(K::bad_magic, "not a bag file (bad magic)");
    if (bytes.size() < kBagHeaderBytes) throw BagError(K::truncated, "bag header truncated");
    const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != kBagVersion)
        throw BagError(K::version_mismatch, "unsupported bag version " + std::to_string(version));
    if (bytes[6] > 1) throw BagError(K::bad_header, "unknown modality code " + std::to_string(bytes[6]));
    if (bytes[7] != 0) throw BagError(K::bad_header, "reserved header byte is not zero");

    FeatureBag bag;
    bag.modality = static_cast<Modality>(bytes[6]);
    bag.instances = get_u32(bytes, 8);
    bag.width = get_u32(bytes, 12);
    if (bag.instances == 0 || bag.width == 0) throw BagError(K::empty, "bag declares zero instances or width");

    const std::uint64_t count = static_cast<std::uint64_t>(bag.instances) * bag.width;
    const std::uint64_t payload = bytes.size() - kBagHeaderBytes;
    if (count > payload / 4)
        throw BagError(K::truncated, "payload holds " + std::to_string(payload) + " bytes, header declares " +
                                         std::to_string(bag.instances) + "x" + std::to_string(bag.width) +
                                         " binary32 values");
    if (payload != count * 4) throw BagError(K::trailing_bytes, "unexpected bytes after bag payload");

    bag.values.resize(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < bag.values.size(); ++i) {
        const float v = std::bit_cast<float>(get_u32(bytes, kBagHeaderBytes + 4 * i));
        if (!std::isfinite(v)) throw BagError(K::non_finite, "non-finite entry at index " + std::to_string(i));
        bag.values[i] = v;
    }
    return bag;
}

void write_bag(const FeatureBag& bag, const std::filesystem::path& path) {
    const auto bytes = encode_bag(bag);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw BagError(BagError::Kind::io, "cannot open '" + path.string() + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw BagError(BagError::Kind::io, "write failed for '" + path.string() + "'");
}

FeatureBag load_bag(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw BagError(BagError::Kind::io, "cannot open bag '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return decode_bag(bytes);
    } catch (const BagError& e) {
        throw BagError(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace slotspe

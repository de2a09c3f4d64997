// SPDX-License-Identifier: Apache-2.0
#include "slotspe/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "slotspe/error.hpp"

namespace slotspe {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'S', 'P', 'C'};
constexpr std::size_t kPrefixBytes = 12;

struct Writer {
    json table = json::array();
    std::vector<std::uint8_t> payload;

    void put(const std::string& group, const std::string& name, const Tensor& t, bool trainable = true) {
        table.push_back({{"group", group},
                         {"name", name},
                         {"rows", t.rows()},
                         {"cols", t.cols()},
                         {"trainable", trainable},
                         {"offset", payload.size()}});
        for (double v : t.values()) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int b = 0; b < 4; ++b) payload.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        }
    }
};

Tensor read_tensor(std::span<const std::uint8_t> payload, const json& e) {
    const auto rows = e.at("rows").get<std::size_t>();
    const auto cols = e.at("cols").get<std::size_t>();
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t count = rows * cols;
    if (cols != 0 && count / cols != rows) throw DataError("checkpoint: tensor extent overflow");
    if (offset > payload.size() || count > (payload.size() - offset) / 4)
        throw DataError("checkpoint: tensor '" + e.at("name").get<std::string>() + "' runs past the payload");
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[offset + 4 * i + b]) << (8 * b);
        const float f = std::bit_cast<float>(bits);
        if (!std::isfinite(f)) throw DataError("checkpoint: non-finite value in '" + e.at("name").get<std::string>() + "'");
        t[i] = f;
    }
    return t;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    for (const auto& [name, entry] : ckpt.model.params.entries()) w.put("param", name, entry.value, entry.trainable);
    for (const auto& [name, t] : ckpt.adam.m) w.put("adam_m", name, t);
    for (const auto& [name, t] : ckpt.adam.v) w.put("adam_v", name, t);

    const json index{{"format", "slotspe-checkpoint"},
                     {"version", 1},
                     {"config", json::parse(to_json_string(ckpt.config))},
                     {"epoch", ckpt.epoch},
                     {"fold", ckpt.fold},
                     {"steps", ckpt.model.steps},
                     {"adam_step", ckpt.adam.step},
                     {"adam_skipped", ckpt.adam.skipped},
                     {"rng_state", ckpt.rng_state},
                     {"tensors", w.table}};
    const std::string text = index.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    const std::uint64_t n = text.size();
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(n >> (8 * b)));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), w.payload.begin(), w.payload.end());
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPrefixBytes) throw DataError("checkpoint: file too short");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("checkpoint: bad magic");
    std::uint64_t n = 0;
    for (int b = 0; b < 8; ++b) n |= static_cast<std::uint64_t>(bytes[4 + b]) << (8 * b);
    if (n > bytes.size() - kPrefixBytes) throw DataError("checkpoint: index runs past end of file");
    const auto* text = reinterpret_cast<const char*>(bytes.data() + kPrefixBytes);
    const auto payload = bytes.subspan(kPrefixBytes + n);

    Checkpoint c;
    try {
        const json index = json::parse(text, text + n);
        if (index.at("format") != "slotspe-checkpoint" || index.at("version") != 1)
            throw DataError("checkpoint: unsupported format or version");
        c.config = train_config_from_json(index.at("config").dump());
        c.epoch = index.at("epoch").get<std::size_t>();
        c.fold = index.at("fold").get<std::size_t>();
        c.rng_state = index.at("rng_state").get<std::string>();
        c.model.config = c.config.model;
        c.model.steps = index.at("steps").get<std::uint64_t>();
        c.adam.step = index.at("adam_step").get<std::uint64_t>();
        c.adam.skipped = index.at("adam_skipped").get<std::uint64_t>();
        std::size_t used = 0;
        for (const json& e : index.at("tensors")) {
            used += 4 * e.at("rows").get<std::size_t>() * e.at("cols").get<std::size_t>();
            const auto group = e.at("group").get<std::string>();
            const auto name = e.at("name").get<std::string>();
            Tensor t = read_tensor(payload, e);
            if (group == "param") c.model.params.add(name, std::move(t), e.at("trainable").get<bool>());
            else if (group == "adam_m") c.adam.m.emplace(name, std::move(t));
            else if (group == "adam_v") c.adam.v.emplace(name, std::move(t));
            else throw DataError("checkpoint: unknown tensor group '" + group + "'");
        }
        if (used != payload.size()) throw DataError("checkpoint: payload size does not match the index");
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed index: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace slotspe

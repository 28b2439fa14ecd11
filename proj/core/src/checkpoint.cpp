// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "advsdg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "advsdg/errors.hpp"
#include "advsdg/random.hpp"

namespace advsdg {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'S', 'D', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    std::memcpy(&v, in.data() + at, 8);
    return v;
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

}  // namespace

const ParameterBlob& Checkpoint::blob(const std::string& name) const {
    for (const auto& b : blobs) {
        if (b.name == name) return b;
    }
    throw ValueError("checkpoint has no parameter '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::string payload;
    nlohmann::ordered_json blobs = nlohmann::ordered_json::array();
    for (const auto& b : ckpt.blobs) {
        blobs.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", payload.size()}, {"count", b.values.size()}});
        payload.append(reinterpret_cast<const char*>(b.values.data()), b.values.size() * sizeof(float));
    }
    Fnv1a h;
    h.update(payload);
    nlohmann::ordered_json header;
    header["version"] = kVersion;
    header["step"] = ckpt.step;
    header["config_hash"] = hex(ckpt.config_hash);
    header["val_dice"] = ckpt.val_dice;
    header["num_classes"] = ckpt.num_classes;
    header["metrics"] = ckpt.metrics;
    header["config"] = ckpt.config_text;
    header["blobs"] = blobs;
    header["payload_bytes"] = payload.size();
    header["payload_fnv1a"] = hex(h.digest());
    const std::string head = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_u64(out, head.size());
    out += head;
    out += payload;

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write then rename, so a crash never leaves a half-written checkpoint.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("cannot write checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const std::string where = "checkpoint " + path.string();
    if (in.size() < 16 || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IoError(where + " is not an advsdg checkpoint");
    }
    const std::uint64_t head_size = get_u64(in, 8);
    if (head_size > in.size() - 16) throw IoError(where + " is truncated");

    Checkpoint ckpt;
    std::size_t payload_bytes = 0;
    std::string payload_hash;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.substr(16, head_size));
        if (header.at("version").get<std::uint32_t>() != kVersion) throw IoError(where + ": unsupported version");
        ckpt.step = header.at("step").get<std::int64_t>();
        ckpt.config_hash = std::stoull(header.at("config_hash").get<std::string>(), nullptr, 16);
        ckpt.val_dice = header.at("val_dice").get<double>();
        ckpt.num_classes = header.at("num_classes").get<int>();
        ckpt.metrics = header.at("metrics").get<std::map<std::string, double>>();
        ckpt.config_text = header.at("config").get<std::string>();
        payload_bytes = header.at("payload_bytes").get<std::size_t>();
        payload_hash = header.at("payload_fnv1a").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + " has a corrupt header: " + e.what());
    } catch (const std::logic_error& e) {
        throw IoError(where + " has a corrupt header: " + e.what());
    }
    const std::size_t base = 16 + head_size;
    if (in.size() != base + payload_bytes) throw IoError(where + " is truncated or has trailing bytes");
    Fnv1a h;
    h.update(in.data() + base, payload_bytes);
    if (hex(h.digest()) != payload_hash) throw IoError(where + " is corrupt (payload hash mismatch)");

    try {
        for (const auto& b : header.at("blobs")) {
            ParameterBlob blob;
            blob.name = b.at("name").get<std::string>();
            blob.shape = b.at("shape").get<std::array<int, 4>>();
            const auto offset = b.at("offset").get<std::size_t>();
            const auto count = b.at("count").get<std::size_t>();
            if (offset + count * sizeof(float) > payload_bytes) throw IoError(where + ": blob out of range");
            blob.values.resize(count);
            std::memcpy(blob.values.data(), in.data() + base + offset, count * sizeof(float));
            ckpt.blobs.push_back(std::move(blob));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + " has a corrupt blob table: " + e.what());
    }
    return ckpt;
}

const Checkpoint& select_checkpoint(const std::vector<Checkpoint>& checkpoints) {
    if (checkpoints.empty()) throw ValueError("select_checkpoint: no checkpoints");
    const Checkpoint* best = &checkpoints.front();
    for (const auto& c : checkpoints) {
        if (c.val_dice > best->val_dice || (c.val_dice == best->val_dice && c.step >= best->step)) best = &c;
    }
    return *best;
}

}  // namespace advsdg

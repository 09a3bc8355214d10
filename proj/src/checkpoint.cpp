// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/checkpoint.hpp"

#include "binary_io.hpp"

#include <algorithm>

namespace dualsplat {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'C', 'K', 'P', 'T', 0, 0};

void write_moments(ByteWriter& w, const AdamMoments& m) {
    w.f64s(m.m);
    w.f64s(m.v);
}

AdamMoments read_moments(ByteReader& r) {
    AdamMoments m;
    m.m = r.f64s();
    m.v = r.f64s();
    return m;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    ByteWriter p;
    p.i64(c.iteration);
    const GaussianCloud& g = c.cloud;
    p.f64s(g.positions);
    p.f64s(g.log_scales);
    p.f64s(g.rotations);
    p.f64s(g.opacity_logits);
    p.f64s(g.colors);
    p.f64s(g.depths);
    p.f64s(g.densify_r_max);
    p.f64s(g.densify_grad_accum);
    p.u64(g.densify_count.size());
    for (std::int64_t v : g.densify_count) p.i64(v);
    p.f64s(g.conflict_ema);
    p.f64s(c.predictor_weights);
    p.i64(c.optimizer_state.step);
    for (const AdamMoments& m : c.optimizer_state.groups) write_moments(p, m);
    write_moments(p, c.optimizer_state.predictor);
    p.u64(c.rng_seed);
    p.u64(c.rng_counter);

    ByteWriter out;
    out.bytes(kMagic, sizeof kMagic);
    out.u32(c.format_version);
    out.u64(p.buffer().size());
    out.bytes(p.buffer().data(), p.buffer().size());
    out.u64(fnv1a64(p.buffer()));
    return std::move(out.buffer());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    using K = CheckpointError::Kind;
    constexpr std::size_t header = sizeof kMagic + 4 + 8;
    if (bytes.size() < header + 8) throw CheckpointError(K::Corrupt, "checkpoint truncated");
    if (!std::equal(kMagic, kMagic + 8, bytes.begin())) throw CheckpointError(K::Corrupt, "not a checkpoint file");
    ByteReader head(bytes.subspan(sizeof kMagic, 12));
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError(K::Version, "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                              std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t len = head.u64();
    if (len != bytes.size() - header - 8) throw CheckpointError(K::Corrupt, "checkpoint truncated or padded");
    const auto payload = bytes.subspan(header, len);
    ByteReader tail(bytes.subspan(header + len, 8));
    if (tail.u64() != fnv1a64(payload)) throw CheckpointError(K::Corrupt, "checkpoint checksum mismatch");

    Checkpoint c;
    c.format_version = version;
    try {
        ByteReader r(payload);
        c.iteration = r.i64();
        GaussianCloud& g = c.cloud;
        g.positions = r.f64s();
        g.log_scales = r.f64s();
        g.rotations = r.f64s();
        g.opacity_logits = r.f64s();
        g.colors = r.f64s();
        g.depths = r.f64s();
        g.densify_r_max = r.f64s();
        g.densify_grad_accum = r.f64s();
        const std::uint64_t n = r.u64();
        if (n > r.remaining() / 8) throw IoError("truncated data");
        g.densify_count.resize(n);
        for (auto& v : g.densify_count) v = r.i64();
        g.conflict_ema = r.f64s();
        c.predictor_weights = r.f64s();
        c.optimizer_state.step = r.i64();
        for (AdamMoments& m : c.optimizer_state.groups) m = read_moments(r);
        c.optimizer_state.predictor = read_moments(r);
        c.rng_seed = r.u64();
        c.rng_counter = r.u64();
        if (!r.at_end()) throw IoError("trailing bytes");
    } catch (const IoError& e) {
        throw CheckpointError(K::Corrupt, std::string("checkpoint payload malformed: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    try {
        write_file_bytes(path, serialize_checkpoint(ckpt));
    } catch (const IoError& e) {
        throw CheckpointError(CheckpointError::Kind::Io, e.what());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        throw CheckpointError(CheckpointError::Kind::Io, e.what());
    }
    return deserialize_checkpoint(bytes);
}

}  // namespace dualsplat

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vforest/forest.hpp"
#include "vforest/hash_tree.hpp"
#include "vforest/repair.hpp"

namespace vforest {

/// Thrown on truncated, over-long, or internally inconsistent buffers.
/// `offset` is the position the decoder had reached.
struct DecodeError : std::runtime_error {
    size_t offset;
    DecodeError(const std::string& what, size_t off)
        : std::runtime_error(what + " at offset " + std::to_string(off)), offset(off) {}
};

namespace wire {

// All multi-byte integers are big-endian.

class Writer {
public:
    std::vector<std::uint8_t> out;

    void u8(std::uint8_t v) { out.push_back(v); }
    void u16(std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v) {
        out.push_back(static_cast<std::uint8_t>(v >> 24));
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v));
    }
    void bytes(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
    void digest(const Digest& d) { bytes(d.bytes()); }
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        auto b = take(2);
        return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
    }
    std::uint32_t u32() {
        auto b = take(4);
        return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
               (std::uint32_t(b[2]) << 8) | b[3];
    }
    Digest digest() {
        auto b = take(32);
        Digest d;
        std::memcpy(d.b.data(), b.data(), 32);
        return d;
    }
    std::span<const std::uint8_t> take(size_t n) {
        if (data_.size() - pos_ < n) throw DecodeError("truncated buffer", pos_);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    size_t pos() const { return pos_; }
    void expect_end() const {
        if (pos_ != data_.size()) throw DecodeError("trailing bytes", pos_);
    }

private:
    std::span<const std::uint8_t> data_;
    size_t pos_ = 0;
};

}  // namespace wire

// ---------------------------------------------------------------------------
// Proof of inclusion: leaf (32B) || bitmap (32B) || count (2B) || path
// elements bottom-up, 32B each.

inline void encode_poi_into(wire::Writer& w, const ProofOfInclusion& poi) {
    w.digest(poi.leaf_hash);
    w.bytes({poi.path_bitmap.b.data(), poi.path_bitmap.b.size()});
    w.u16(static_cast<std::uint16_t>(poi.path.size()));
    for (const Digest& d : poi.path) w.digest(d);
}

inline std::vector<std::uint8_t> encode_poi(const ProofOfInclusion& poi) {
    wire::Writer w;
    encode_poi_into(w, poi);
    return std::move(w.out);
}

inline ProofOfInclusion decode_poi_from(wire::Reader& r) {
    ProofOfInclusion poi;
    poi.leaf_hash = r.digest();
    auto bm = r.take(32);
    std::memcpy(poi.path_bitmap.b.data(), bm.data(), 32);
    std::uint16_t count = r.u16();
    if (count > kTreeDepth) throw DecodeError("path length over tree depth", r.pos());
    if (poi.path_bitmap.popcount() != count) {
        throw DecodeError("bitmap popcount does not match path count", r.pos());
    }
    poi.path.reserve(count);
    for (unsigned i = 0; i < count; ++i) poi.path.push_back(r.digest());
    return poi;
}

inline ProofOfInclusion decode_poi(std::span<const std::uint8_t> buf) {
    wire::Reader r(buf);
    ProofOfInclusion poi = decode_poi_from(r);
    r.expect_end();
    return poi;
}

inline size_t poi_wire_size(const ProofOfInclusion& poi) { return 66 + 32 * poi.path.size(); }

// ---------------------------------------------------------------------------
// Primer: root (32B) || parities || timestamp (4B). The encoding is
// primer_bytes() from forest.hpp; the byte string doubles as the signature
// domain.

inline std::vector<std::uint8_t> encode_primer(const Primer& p) { return primer_bytes(p); }

inline Primer decode_primer_from(wire::Reader& r, const EpochConfig& cfg) {
    Primer p;
    p.root = r.digest();
    auto par = r.take(static_cast<size_t>(cfg.parity_bytes()));
    p.parities.assign(par.begin(), par.end());
    p.timestamp = r.u32();
    return p;
}

inline Primer decode_primer(std::span<const std::uint8_t> buf, const EpochConfig& cfg) {
    wire::Reader r(buf);
    Primer p = decode_primer_from(r, cfg);
    r.expect_end();
    return p;
}

// ---------------------------------------------------------------------------
// Contact message: primer || signature (64B) || info byte. The info byte
// packs the sender's certificate epoch relative to the primer window in the
// top 6 bits (63 = no certificate), has-cache in bit 1 and cache-fresh in
// bit 0.

inline constexpr std::uint8_t kNoEpochSentinel = 63;

struct ContactMessage {
    Primer primer;
    Signature primer_sig{};
    std::uint8_t relative_epoch = kNoEpochSentinel;
    bool has_cache = false;
    bool cache_fresh = false;

    bool operator==(const ContactMessage&) const = default;
};

inline std::vector<std::uint8_t> encode_contact(const ContactMessage& m) {
    wire::Writer w;
    w.bytes(primer_bytes(m.primer));
    w.bytes(m.primer_sig);
    std::uint8_t info = static_cast<std::uint8_t>(m.relative_epoch << 2);
    if (m.has_cache) info |= 0x02;
    if (m.cache_fresh) info |= 0x01;
    w.u8(info);
    return std::move(w.out);
}

inline ContactMessage decode_contact(std::span<const std::uint8_t> buf, const EpochConfig& cfg) {
    wire::Reader r(buf);
    ContactMessage m;
    m.primer = decode_primer_from(r, cfg);
    auto sig = r.take(64);
    std::memcpy(m.primer_sig.data(), sig.data(), 64);
    std::uint8_t info = r.u8();
    m.relative_epoch = static_cast<std::uint8_t>(info >> 2);
    m.has_cache = info & 0x02;
    m.cache_fresh = info & 0x01;
    r.expect_end();
    return m;
}

// ---------------------------------------------------------------------------
// Parity request: count (1B) || slot indices (1B each). Requesting every
// slot is the full-forest fallback after a checksum collision.

inline std::vector<std::uint8_t> encode_parity_request(std::span<const int> slots) {
    wire::Writer w;
    w.u8(static_cast<std::uint8_t>(slots.size()));
    for (int s : slots) w.u8(static_cast<std::uint8_t>(s));
    return std::move(w.out);
}

inline std::vector<int> decode_parity_request(std::span<const std::uint8_t> buf,
                                              const EpochConfig& cfg) {
    wire::Reader r(buf);
    std::uint8_t count = r.u8();
    std::vector<int> slots;
    slots.reserve(count);
    for (unsigned i = 0; i < count; ++i) {
        std::uint8_t s = r.u8();
        if (s >= cfg.parity_slots()) throw DecodeError("parity slot out of range", r.pos());
        slots.push_back(s);
    }
    r.expect_end();
    return slots;
}

// ---------------------------------------------------------------------------
// Root response: primer || signature || count (1B) || entries of relative
// epoch (1B, 0 = oldest in the responder's window) + root (32B).

struct RootResponse {
    Primer primer;
    Signature primer_sig{};
    std::vector<std::pair<std::uint8_t, Digest>> roots;

    bool operator==(const RootResponse&) const = default;
};

inline std::vector<std::uint8_t> encode_root_response(const RootResponse& m) {
    wire::Writer w;
    w.bytes(primer_bytes(m.primer));
    w.bytes(m.primer_sig);
    w.u8(static_cast<std::uint8_t>(m.roots.size()));
    for (const auto& [rel, root] : m.roots) {
        w.u8(rel);
        w.digest(root);
    }
    return std::move(w.out);
}

inline RootResponse decode_root_response(std::span<const std::uint8_t> buf,
                                         const EpochConfig& cfg) {
    wire::Reader r(buf);
    RootResponse m;
    m.primer = decode_primer_from(r, cfg);
    auto sig = r.take(64);
    std::memcpy(m.primer_sig.data(), sig.data(), 64);
    std::uint8_t count = r.u8();
    m.roots.reserve(count);
    for (unsigned i = 0; i < count; ++i) {
        std::uint8_t rel = r.u8();
        if (rel >= cfg.epoch_count) throw DecodeError("relative epoch out of range", r.pos());
        m.roots.emplace_back(rel, r.digest());
    }
    r.expect_end();
    return m;
}

// ---------------------------------------------------------------------------
// Authority update: primer || signature || root count (2B) || (epoch 2B +
// root 32B) entries || proof count (2B) || (epoch 2B + proof) entries.
// Epoch fields carry absolute epoch indices.

struct CaUpdate {
    Primer primer;
    Signature primer_sig{};
    std::vector<std::pair<std::uint16_t, Digest>> changed_roots;
    std::vector<std::pair<std::uint16_t, ProofOfInclusion>> update_pois;

    bool operator==(const CaUpdate&) const = default;
    bool is_heartbeat() const { return changed_roots.empty() && update_pois.empty(); }
};

inline std::vector<std::uint8_t> encode_ca_update(const CaUpdate& u) {
    wire::Writer w;
    w.bytes(primer_bytes(u.primer));
    w.bytes(u.primer_sig);
    w.u16(static_cast<std::uint16_t>(u.changed_roots.size()));
    for (const auto& [epoch, root] : u.changed_roots) {
        w.u16(epoch);
        w.digest(root);
    }
    w.u16(static_cast<std::uint16_t>(u.update_pois.size()));
    for (const auto& [epoch, poi] : u.update_pois) {
        w.u16(epoch);
        encode_poi_into(w, poi);
    }
    return std::move(w.out);
}

inline CaUpdate decode_ca_update(std::span<const std::uint8_t> buf, const EpochConfig& cfg) {
    wire::Reader r(buf);
    CaUpdate u;
    u.primer = decode_primer_from(r, cfg);
    auto sig = r.take(64);
    std::memcpy(u.primer_sig.data(), sig.data(), 64);
    std::uint16_t nroots = r.u16();
    u.changed_roots.reserve(nroots);
    for (unsigned i = 0; i < nroots; ++i) {
        std::uint16_t epoch = r.u16();
        u.changed_roots.emplace_back(epoch, r.digest());
    }
    std::uint16_t npois = r.u16();
    u.update_pois.reserve(npois);
    for (unsigned i = 0; i < npois; ++i) {
        std::uint16_t epoch = r.u16();
        u.update_pois.emplace_back(epoch, decode_poi_from(r));
    }
    r.expect_end();
    return u;
}

// ---------------------------------------------------------------------------
// Epoch change update: primer || signature || new epoch (2B) || leaf count
// (4B) || leaf hashes. Rebuilding a tree over the leaves reproduces the new
// epoch root.

struct EpochChangeUpdate {
    Primer primer;
    Signature primer_sig{};
    std::uint16_t new_epoch = 0;
    std::vector<Digest> leaves;

    bool operator==(const EpochChangeUpdate&) const = default;
};

inline std::vector<std::uint8_t> encode_epoch_change(const EpochChangeUpdate& u) {
    wire::Writer w;
    w.bytes(primer_bytes(u.primer));
    w.bytes(u.primer_sig);
    w.u16(u.new_epoch);
    w.u32(static_cast<std::uint32_t>(u.leaves.size()));
    for (const Digest& d : u.leaves) w.digest(d);
    return std::move(w.out);
}

inline EpochChangeUpdate decode_epoch_change(std::span<const std::uint8_t> buf,
                                             const EpochConfig& cfg) {
    wire::Reader r(buf);
    EpochChangeUpdate u;
    u.primer = decode_primer_from(r, cfg);
    auto sig = r.take(64);
    std::memcpy(u.primer_sig.data(), sig.data(), 64);
    u.new_epoch = r.u16();
    std::uint32_t count = r.u32();
    if (std::uint64_t(count) * 32 != buf.size() - r.pos()) {
        throw DecodeError("leaf count does not match buffer", r.pos());
    }
    u.leaves.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) u.leaves.push_back(r.digest());
    r.expect_end();
    return u;
}

// ---------------------------------------------------------------------------
// Direct proof fetch from the authority: request is the bare certificate
// hash, response is proof || primer || signature.

struct CaPoiResponse {
    ProofOfInclusion poi;
    Primer primer;
    Signature primer_sig{};

    bool operator==(const CaPoiResponse&) const = default;
};

inline std::vector<std::uint8_t> encode_ca_poi_request(const Digest& cert_hash) {
    return std::vector<std::uint8_t>(cert_hash.b.begin(), cert_hash.b.end());
}

inline Digest decode_ca_poi_request(std::span<const std::uint8_t> buf) {
    wire::Reader r(buf);
    Digest d = r.digest();
    r.expect_end();
    return d;
}

inline std::vector<std::uint8_t> encode_ca_poi_response(const CaPoiResponse& m) {
    wire::Writer w;
    encode_poi_into(w, m.poi);
    w.bytes(primer_bytes(m.primer));
    w.bytes(m.primer_sig);
    return std::move(w.out);
}

inline CaPoiResponse decode_ca_poi_response(std::span<const std::uint8_t> buf,
                                            const EpochConfig& cfg) {
    wire::Reader r(buf);
    CaPoiResponse m;
    m.poi = decode_poi_from(r);
    m.primer = decode_primer_from(r, cfg);
    auto sig = r.take(64);
    std::memcpy(m.primer_sig.data(), sig.data(), 64);
    r.expect_end();
    return m;
}

// ---------------------------------------------------------------------------
// Level cache: clvl (1B) || epoch (2B) || 2^clvl entries of 32B.

inline std::vector<std::uint8_t> encode_level_cache(const LevelCache& lc) {
    wire::Writer w;
    w.u8(lc.clvl);
    w.u16(static_cast<std::uint16_t>(lc.epoch));
    for (const Digest& d : lc.entries) w.digest(d);
    return std::move(w.out);
}

inline LevelCache decode_level_cache(std::span<const std::uint8_t> buf) {
    wire::Reader r(buf);
    LevelCache lc;
    lc.clvl = r.u8();
    if (lc.clvl < 1 || lc.clvl > kMaxCacheLevel) {
        throw DecodeError("cache level out of range", r.pos());
    }
    lc.epoch = r.u16();
    size_t count = size_t{1} << lc.clvl;
    lc.entries.reserve(count);
    for (size_t i = 0; i < count; ++i) lc.entries.push_back(r.digest());
    r.expect_end();
    return lc;
}

// ---------------------------------------------------------------------------
// Cache refresh between cachers: request lists the stale epochs relative to
// the requester's window (count 1B + 1B each); the response concatenates
// level-cache encodings.

inline std::vector<std::uint8_t> encode_lc_request(std::span<const std::uint8_t> relative_epochs) {
    wire::Writer w;
    w.u8(static_cast<std::uint8_t>(relative_epochs.size()));
    w.bytes(relative_epochs);
    return std::move(w.out);
}

inline std::vector<std::uint8_t> decode_lc_request(std::span<const std::uint8_t> buf,
                                                   const EpochConfig& cfg) {
    wire::Reader r(buf);
    std::uint8_t count = r.u8();
    std::vector<std::uint8_t> epochs;
    epochs.reserve(count);
    for (unsigned i = 0; i < count; ++i) {
        std::uint8_t rel = r.u8();
        if (rel >= cfg.epoch_count) throw DecodeError("relative epoch out of range", r.pos());
        epochs.push_back(rel);
    }
    r.expect_end();
    return epochs;
}

}  // namespace vforest

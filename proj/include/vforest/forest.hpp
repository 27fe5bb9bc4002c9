#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vforest/crypto.hpp"
#include "vforest/hash_tree.hpp"

namespace vforest {

struct ReplayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AuthenticationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InconsistentUpdateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutOfWindowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Epoch window and parity layout. Defaults model one-year certificate
/// lifetimes split into 52 week-long epochs, with 2 main checksums over the
/// newest roots and 10 roots per aggregated checksum: 7 parity slots of
/// 2 bytes each.
struct EpochConfig {
    int epoch_count = 52;
    std::uint32_t epoch_duration = 7 * 24 * 3600;
    int main_checksums = 2;
    int roots_per_aggregate = 10;
    int checksum_bytes = 2;

    int parity_slots() const {
        int aggregated = epoch_count - main_checksums;
        return main_checksums + (aggregated + roots_per_aggregate - 1) / roots_per_aggregate;
    }
    int parity_bytes() const { return parity_slots() * checksum_bytes; }

    /// Ages covered by a parity slot, newest-first: slot 0 is the newest
    /// root alone, aggregate slots cover contiguous blocks of older roots.
    /// Returns [begin, end) in age units (age 0 = newest epoch).
    std::pair<int, int> slot_age_range(int slot) const {
        if (slot < main_checksums) return {slot, slot + 1};
        int begin = main_checksums + (slot - main_checksums) * roots_per_aggregate;
        int end = begin + roots_per_aggregate;
        if (end > epoch_count) end = epoch_count;
        return {begin, end};
    }

    int slot_for_age(int age) const {
        if (age < main_checksums) return age;
        return main_checksums + (age - main_checksums) / roots_per_aggregate;
    }
};

/// Absolute epoch index a timestamp falls into.
inline std::uint32_t epoch_index(std::uint64_t timestamp, const EpochConfig& cfg) {
    return static_cast<std::uint32_t>(timestamp / cfg.epoch_duration);
}

/// The 50-byte freshness token: forest root, parity checksums, timestamp.
struct Primer {
    Digest root;
    std::vector<std::uint8_t> parities;  // parity_bytes() long, slot 0 first
    std::uint32_t timestamp = 0;

    bool operator==(const Primer&) const = default;
};

/// Parity checksum vector over the window roots (oldest -> newest on input).
/// Each slot is the first checksum_bytes of the hash over the covered roots,
/// concatenated newest-first within the slot.
inline std::vector<std::uint8_t> compute_parities(std::span<const Digest> roots,
                                                  const EpochConfig& cfg, HashFn hash = sha256) {
    if (roots.size() != static_cast<size_t>(cfg.epoch_count)) {
        throw std::invalid_argument("root count does not match epoch count");
    }
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<size_t>(cfg.parity_bytes()));
    std::vector<std::uint8_t> buf;
    for (int slot = 0; slot < cfg.parity_slots(); ++slot) {
        auto [age_begin, age_end] = cfg.slot_age_range(slot);
        buf.clear();
        for (int age = age_begin; age < age_end; ++age) {
            const Digest& r = roots[static_cast<size_t>(cfg.epoch_count - 1 - age)];
            buf.insert(buf.end(), r.b.begin(), r.b.end());
        }
        Digest h = hash(buf);
        out.insert(out.end(), h.b.begin(), h.b.begin() + cfg.checksum_bytes);
    }
    return out;
}

inline Primer compute_primer(std::span<const Digest> roots, std::uint32_t timestamp,
                             const EpochConfig& cfg, HashFn hash = sha256) {
    if (roots.size() != static_cast<size_t>(cfg.epoch_count)) {
        throw std::invalid_argument("root count does not match epoch count");
    }
    std::vector<std::uint8_t> buf;
    buf.reserve(roots.size() * 32);
    for (const Digest& r : roots) buf.insert(buf.end(), r.b.begin(), r.b.end());
    Primer p;
    p.root = hash(buf);
    p.parities = compute_parities(roots, cfg, hash);
    p.timestamp = timestamp;
    return p;
}

/// Wire encoding of a primer, which is also exactly what the authority
/// signs: root (32B) || parities (slot 0 first) || timestamp (4B, big-endian).
/// 50 bytes under the default configuration.
inline std::vector<std::uint8_t> primer_bytes(const Primer& p) {
    std::vector<std::uint8_t> out;
    out.reserve(32 + p.parities.size() + 4);
    out.insert(out.end(), p.root.b.begin(), p.root.b.end());
    out.insert(out.end(), p.parities.begin(), p.parities.end());
    out.push_back(static_cast<std::uint8_t>(p.timestamp >> 24));
    out.push_back(static_cast<std::uint8_t>(p.timestamp >> 16));
    out.push_back(static_cast<std::uint8_t>(p.timestamp >> 8));
    out.push_back(static_cast<std::uint8_t>(p.timestamp));
    return out;
}

/// Parity slots whose bytes differ. An empty result despite differing
/// primer roots is a checksum collision; the caller must then fetch the
/// whole forest.
inline std::vector<int> diff_parities(const Primer& local, const Primer& remote,
                                      const EpochConfig& cfg) {
    std::vector<int> slots;
    for (int slot = 0; slot < cfg.parity_slots(); ++slot) {
        size_t off = static_cast<size_t>(slot * cfg.checksum_bytes);
        for (int k = 0; k < cfg.checksum_bytes; ++k) {
            if (local.parities[off + k] != remote.parities[off + k]) {
                slots.push_back(slot);
                break;
            }
        }
    }
    return slots;
}

/// Sliding window of epoch roots plus the last authority-signed primer.
/// Epochs not yet populated carry the all-empty tree root; an epoch whose
/// root equals H(empty) is the explicit no-revocations marker.
struct ValidationForest {
    std::uint32_t base_epoch = 0;         // absolute epoch of roots.front()
    std::vector<Digest> roots;            // epoch_count entries, oldest -> newest
    Primer primer;
    Signature primer_sig{};

    bool in_window(std::uint32_t epoch, const EpochConfig& cfg) const {
        return epoch >= base_epoch && epoch < base_epoch + static_cast<std::uint32_t>(cfg.epoch_count);
    }
    const Digest& root_of(std::uint32_t epoch) const { return roots[epoch - base_epoch]; }
};

inline ValidationForest make_empty_forest(std::uint32_t base_epoch, const EpochConfig& cfg,
                                          const EmptyHashes& eh) {
    ValidationForest vf;
    vf.base_epoch = base_epoch;
    vf.roots.assign(static_cast<size_t>(cfg.epoch_count), eh.levels[0]);
    return vf;
}

/// Drops the oldest root and appends an unpopulated newest slot. The stored
/// primer is left alone and stays stale until the next authority update.
inline void forest_prune(ValidationForest& vf, const EmptyHashes& eh) {
    vf.roots.erase(vf.roots.begin());
    vf.roots.push_back(eh.levels[0]);
    ++vf.base_epoch;
}

/// Base epoch implied by a primer: its timestamp lies in the window's
/// oldest epoch, the one whose certificates expire next.
inline std::uint32_t base_epoch_of_primer(const Primer& p, const EpochConfig& cfg) {
    return epoch_index(p.timestamp, cfg);
}

/// Replaces roots per `updates` (absolute epoch -> new root), recomputes the
/// primer locally and requires it to match `new_primer` byte for byte, then
/// checks the signature. Commits atomically; any failure leaves the forest
/// untouched. Updates implying a newer window shift it first, so the same
/// path covers epoch changes.
inline void apply_root_updates(ValidationForest& vf,
                               std::span<const std::pair<std::uint32_t, Digest>> updates,
                               const Primer& new_primer, const Signature& new_sig,
                               const VerifyFn& verify_primer, const EpochConfig& cfg,
                               const EmptyHashes& eh) {
    if (new_primer.timestamp < vf.primer.timestamp) {
        throw ReplayError("primer timestamp older than current");
    }
    std::uint32_t new_base = base_epoch_of_primer(new_primer, cfg);
    if (new_base < vf.base_epoch) {
        throw ReplayError("primer window older than current");
    }
    std::uint64_t shift = new_base - vf.base_epoch;
    std::vector<Digest> scratch;
    if (shift >= static_cast<std::uint64_t>(cfg.epoch_count)) {
        scratch.assign(static_cast<size_t>(cfg.epoch_count), eh.levels[0]);
    } else {
        scratch.assign(vf.roots.begin() + static_cast<long>(shift), vf.roots.end());
        scratch.resize(static_cast<size_t>(cfg.epoch_count), eh.levels[0]);
    }
    for (const auto& [epoch, root] : updates) {
        if (epoch < new_base || epoch >= new_base + static_cast<std::uint32_t>(cfg.epoch_count)) {
            throw InconsistentUpdateError("root update outside forest window");
        }
        scratch[epoch - new_base] = root;
    }
    Primer recomputed = compute_primer(scratch, new_primer.timestamp, cfg, eh.hash);
    if (recomputed != new_primer) {
        throw InconsistentUpdateError("recomputed primer does not match update");
    }
    if (!verify_primer(primer_bytes(new_primer), new_sig)) {
        throw AuthenticationError("primer signature invalid");
    }
    vf.base_epoch = new_base;
    vf.roots = std::move(scratch);
    vf.primer = new_primer;
    vf.primer_sig = new_sig;
}

}  // namespace vforest

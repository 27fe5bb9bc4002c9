#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vforest/hash_tree.hpp"

namespace vforest {

/// Determines the value under which an update proof verifies against the
/// current epoch root: the leaf value itself for an active certificate, the
/// empty hash for a revoked one, and nullopt when the proof does not match
/// the root at all. Every repair input goes through this check before use.
inline std::optional<Digest> verified_update_value(const EmptyHashes& eh,
                                                   const ProofOfInclusion& poi,
                                                   const Digest& epoch_root) {
    try {
        if (calc_path_root(eh, poi) == epoch_root) return poi.leaf_hash;
        if (fold_path(eh, poi.leaf_hash, eh.levels[kTreeDepth], poi.path_bitmap, poi.path) ==
            epoch_root) {
            return eh.levels[kTreeDepth];
        }
    } catch (const MalformedProofError&) {
    }
    return std::nullopt;
}

/// Blends a fresh proof from the same epoch tree into a stale one. The two
/// leaves split at the most significant differing bit; every sibling slot
/// strictly above the split is copied from the fresh proof, and the slot at
/// the split is set to the fresh proof's subtree hash folded up to that
/// depth. Slots below the split are untouched, so applying updates in any
/// order writes only current values and never destroys repairable state.
///
/// `fresh_value` is the verified leaf value of the fresh proof (the empty
/// hash when it proves a revocation).
inline ProofOfInclusion update_poi_with_poi(const EmptyHashes& eh, const ProofOfInclusion& mine,
                                            const ProofOfInclusion& fresh,
                                            const Digest& fresh_value) {
    int target = first_diff_bit_msb(mine.leaf_hash, fresh.leaf_hash);
    if (target < 0) {
        throw std::invalid_argument("update proof is for the same leaf");
    }
    ProofOfInclusion out = mine;
    for (int depth = 1; depth <= target; ++depth) {
        out.set_slot(depth, fresh.has_slot(depth) ? fresh.slot(depth) : eh.levels[depth], eh);
    }
    Digest subtree = fold_path(eh, fresh.leaf_hash, fresh_value, fresh.path_bitmap, fresh.path,
                               target + 1);
    out.set_slot(target + 1, subtree, eh);
    return out;
}

inline ProofOfInclusion update_poi_with_poi(const EmptyHashes& eh, const ProofOfInclusion& mine,
                                            const ProofOfInclusion& fresh) {
    return update_poi_with_poi(eh, mine, fresh, fresh.leaf_hash);
}

/// All depth-clvl node hashes of one epoch tree, ordered left-to-right by
/// position. 2^clvl entries of 32 bytes; absent nodes carry the empty hash.
struct LevelCache {
    std::uint8_t clvl = 0;
    std::uint32_t epoch = 0;
    std::vector<Digest> entries;

    bool operator==(const LevelCache&) const = default;
};

inline constexpr int kMaxCacheLevel = 16;

inline LevelCache construct_lvl_cache(const LookUpTable& lut, int clvl, std::uint32_t epoch = 0) {
    if (clvl < 1 || clvl > kMaxCacheLevel) {
        throw std::invalid_argument("cache level out of range");
    }
    LevelCache lc;
    lc.clvl = static_cast<std::uint8_t>(clvl);
    lc.epoch = epoch;
    lc.entries.resize(size_t{1} << clvl);
    for (std::uint32_t i = 0; i < lc.entries.size(); ++i) {
        lc.entries[i] = lut.get(digest_from_top_bits(i, static_cast<unsigned>(clvl)), clvl);
    }
    return lc;
}

/// Reconstructs the hash of the depth-`depth` node identified by the top
/// `depth` bits of `part` by pairwise-folding the cache entries it covers.
/// depth = clvl selects a single entry.
inline Digest calc_pos_in_lc(const EmptyHashes& eh, const LevelCache& lc, std::uint32_t part,
                             int depth) {
    if (depth < 1 || depth > lc.clvl) {
        throw std::invalid_argument("depth outside cache range");
    }
    int below = lc.clvl - depth;
    std::uint32_t begin = (part >> below) << below;
    size_t width = size_t{1} << below;
    std::vector<Digest> level(lc.entries.begin() + begin, lc.entries.begin() + begin + width);
    while (level.size() > 1) {
        for (size_t i = 0; i < level.size() / 2; ++i) {
            level[i] = hash_pair(eh.hash, level[2 * i], level[2 * i + 1]);
        }
        level.resize(level.size() / 2);
    }
    return level[0];
}

/// Folds the whole cache down to the epoch root; used to check a cache
/// against the current tree before serving repairs from it.
inline Digest lc_root(const EmptyHashes& eh, const LevelCache& lc) {
    std::vector<Digest> level = lc.entries;
    while (level.size() > 1) {
        for (size_t i = 0; i < level.size() / 2; ++i) {
            level[i] = hash_pair(eh.hash, level[2 * i], level[2 * i + 1]);
        }
        level.resize(level.size() / 2);
    }
    return level[0];
}

/// Applies one verified update proof to the cache: the entry for the leaf's
/// depth-clvl part is replaced by the proof folded up to clvl.
inline void update_lvl_cache_with_poi(const EmptyHashes& eh, LevelCache& lc,
                                      const ProofOfInclusion& fresh, const Digest& fresh_value) {
    std::uint32_t part = fresh.leaf_hash.top_bits(lc.clvl);
    lc.entries[part] =
        fold_path(eh, fresh.leaf_hash, fresh_value, fresh.path_bitmap, fresh.path, lc.clvl);
}

inline void update_lvl_cache_with_poi(const EmptyHashes& eh, LevelCache& lc,
                                      const ProofOfInclusion& fresh) {
    update_lvl_cache_with_poi(eh, lc, fresh, fresh.leaf_hash);
}

/// Rewrites the proof's sibling slots for depths 1..clvl from a fresh cache.
/// At each depth the sibling of the leaf's ancestor is reconstructed from
/// the cache; reconstructed empty siblings clear the slot. Repairs are
/// partial when a missed change shares the leaf's depth-clvl part, since
/// deeper slots are beyond the cache's reach.
inline ProofOfInclusion update_poi_with_lvl_cache(const EmptyHashes& eh,
                                                  const ProofOfInclusion& mine,
                                                  const LevelCache& lc) {
    std::uint32_t part = mine.leaf_hash.top_bits(lc.clvl);
    ProofOfInclusion out = mine;
    for (int depth = 1; depth <= lc.clvl; ++depth) {
        std::uint32_t sibling_prefix = (part >> (lc.clvl - depth)) ^ 1u;
        std::uint32_t sibling_part = sibling_prefix << (lc.clvl - depth);
        out.set_slot(depth, calc_pos_in_lc(eh, lc, sibling_part, depth), eh);
    }
    return out;
}

}  // namespace vforest

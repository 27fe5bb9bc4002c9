#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "vforest/crypto.hpp"
#include "vforest/digest.hpp"

namespace vforest {

inline constexpr int kTreeDepth = 256;  // leaves live at depth 256, the root at 0

struct MalformedProofError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Hashes of fully-empty subtrees for every depth. levels[256] = H("") and
/// levels[d] = H(levels[d+1] || levels[d+1]). Carries the hash function it
/// was built with; all tree operations take their hash from here.
struct EmptyHashes {
    std::array<Digest, kTreeDepth + 1> levels{};
    HashFn hash = sha256;

    static EmptyHashes compute(HashFn h = sha256) {
        EmptyHashes eh;
        eh.hash = h;
        eh.levels[kTreeDepth] = h({});
        for (int d = kTreeDepth - 1; d >= 0; --d) {
            eh.levels[d] = hash_pair(h, eh.levels[d + 1], eh.levels[d + 1]);
        }
        return eh;
    }

    /// The shared table for the default SHA-256 tree.
    static const EmptyHashes& standard() {
        static const EmptyHashes eh = compute();
        return eh;
    }
};

/// Proof of inclusion: the non-empty sibling hashes along a leaf's path,
/// bottom-up (sibling closest to the leaf first), plus the bitmap marking
/// which depths carry an element.
struct ProofOfInclusion {
    Digest leaf_hash;
    Bitmap256 path_bitmap;
    std::vector<Digest> path;

    bool operator==(const ProofOfInclusion&) const = default;

    /// Bitmap index for the sibling at tree depth d (1 <= d <= 256).
    static unsigned bit_for_depth(int depth) { return static_cast<unsigned>(kTreeDepth - depth); }

    bool has_slot(int depth) const { return path_bitmap.test(bit_for_depth(depth)); }

    const Digest& slot(int depth) const {
        return path[path_bitmap.rank(bit_for_depth(depth))];
    }

    /// Sets the sibling value at `depth`, keeping the proof canonical: a
    /// value equal to the empty hash for that depth clears the slot instead.
    void set_slot(int depth, const Digest& value, const EmptyHashes& eh) {
        unsigned bit = bit_for_depth(depth);
        unsigned idx = path_bitmap.rank(bit);
        bool empty_value = (value == eh.levels[depth]);
        if (path_bitmap.test(bit)) {
            if (empty_value) {
                path.erase(path.begin() + idx);
                path_bitmap.clear(bit);
            } else {
                path[idx] = value;
            }
        } else if (!empty_value) {
            path.insert(path.begin() + idx, value);
            path_bitmap.set(bit);
        }
    }
};

/// Sparse store of the non-empty tree nodes, keyed by (position, depth) with
/// the position masked to its depth-bit prefix. Absent key means the node
/// equals the empty hash for its depth. Single-writer; reads may run
/// concurrently between mutations.
class LookUpTable {
public:
    explicit LookUpTable(const EmptyHashes& eh = EmptyHashes::standard()) : eh_(&eh) {}

    const EmptyHashes& empty_hashes() const { return *eh_; }

    Digest get(const Digest& position, int depth) const {
        NodeKey key{position.masked_to_depth(static_cast<unsigned>(depth)),
                    static_cast<std::uint16_t>(depth)};
        auto it = nodes_.find(key);
        return it == nodes_.end() ? eh_->levels[depth] : it->second;
    }

    bool contains(const Digest& position, int depth) const {
        NodeKey key{position.masked_to_depth(static_cast<unsigned>(depth)),
                    static_cast<std::uint16_t>(depth)};
        return nodes_.find(key) != nodes_.end();
    }

    /// Stored value or nullptr when the node is empty; the single-lookup
    /// variant the proof builder leans on.
    const Digest* find(const Digest& position, int depth) const {
        NodeKey key{position.masked_to_depth(static_cast<unsigned>(depth)),
                    static_cast<std::uint16_t>(depth)};
        auto it = nodes_.find(key);
        return it == nodes_.end() ? nullptr : &it->second;
    }

    Digest root() const { return get(Digest{}, 0); }

    bool has_leaf(const Digest& leaf_hash) const { return contains(leaf_hash, kTreeDepth); }

    size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    /// Inserts a leaf and recomputes its path bottom-up. Re-adding an
    /// existing leaf recomputes the same values; the root is unchanged.
    Digest add_leaf(const Digest& leaf_hash) {
        put(leaf_hash, kTreeDepth, leaf_hash);
        Digest current = leaf_hash;
        for (int d = kTreeDepth; d >= 1; --d) {
            current = combine_with_sibling(leaf_hash, d, current);
            put(leaf_hash, d - 1, current);
        }
        return current;
    }

    /// Removing a leaf sets its slot back to the empty hash, which for the
    /// sparse store means deleting it; ancestors that become empty are
    /// deleted too. Removing an absent leaf leaves the root unchanged.
    Digest remove_leaf(const Digest& leaf_hash) {
        if (!has_leaf(leaf_hash)) return root();
        erase(leaf_hash, kTreeDepth);
        Digest current = eh_->levels[kTreeDepth];
        for (int d = kTreeDepth; d >= 1; --d) {
            current = combine_with_sibling(leaf_hash, d, current);
            if (current == eh_->levels[d - 1]) {
                erase(leaf_hash, d - 1);
            } else {
                put(leaf_hash, d - 1, current);
            }
        }
        return current;
    }

private:
    struct NodeKey {
        Digest position;
        std::uint16_t depth;
        bool operator==(const NodeKey&) const = default;
    };
    struct NodeKeyHash {
        size_t operator()(const NodeKey& k) const {
            std::uint64_t x;
            std::memcpy(&x, k.position.b.data(), 8);
            return static_cast<size_t>(x ^ (std::uint64_t(k.depth) * 0x9E3779B97F4A7C15ull));
        }
    };

    // Parent of the depth-d node on the leaf's path, combining with the
    // sibling looked up at the same depth.
    Digest combine_with_sibling(const Digest& leaf_hash, int d, const Digest& current) const {
        Digest sibling_pos = leaf_hash;
        sibling_pos.flip_bit_msb(static_cast<unsigned>(d - 1));
        Digest sibling = get(sibling_pos, d);
        return leaf_hash.bit_msb(static_cast<unsigned>(d - 1))
                   ? hash_pair(eh_->hash, sibling, current)
                   : hash_pair(eh_->hash, current, sibling);
    }

    void put(const Digest& position, int depth, const Digest& value) {
        nodes_[NodeKey{position.masked_to_depth(static_cast<unsigned>(depth)),
                       static_cast<std::uint16_t>(depth)}] = value;
    }

    void erase(const Digest& position, int depth) {
        nodes_.erase(NodeKey{position.masked_to_depth(static_cast<unsigned>(depth)),
                             static_cast<std::uint16_t>(depth)});
    }

    const EmptyHashes* eh_;
    std::unordered_map<NodeKey, Digest, NodeKeyHash> nodes_;
};

/// Folds `start_value` upward from the leaf level, consuming a path element
/// where the bitmap bit is set and the empty hash otherwise, stopping at
/// depth `lvl`. lvl = 0 yields the root; lvl = d yields the ancestor value
/// at depth d.
inline Digest fold_path(const EmptyHashes& eh, const Digest& position, const Digest& start_value,
                        const Bitmap256& bitmap, std::span<const Digest> path, int lvl = 0) {
    if (bitmap.popcount() != path.size()) {
        throw MalformedProofError("path bitmap popcount does not match path length");
    }
    Digest acc = start_value;
    size_t consumed = 0;
    for (int i = 0; i < kTreeDepth - lvl; ++i) {
        int depth = kTreeDepth - i;
        const Digest& sibling = bitmap.test(static_cast<unsigned>(i))
                                    ? path[consumed++]
                                    : eh.levels[depth];
        acc = position.bit_msb(static_cast<unsigned>(depth - 1))
                  ? hash_pair(eh.hash, sibling, acc)
                  : hash_pair(eh.hash, acc, sibling);
    }
    return acc;
}

inline Digest calc_path_root(const EmptyHashes& eh, const ProofOfInclusion& poi, int lvl = 0) {
    return fold_path(eh, poi.leaf_hash, poi.leaf_hash, poi.path_bitmap, poi.path, lvl);
}

/// Collects the non-empty siblings along the leaf's path. Works unchanged
/// for absent or revoked leaves; the resulting proof then authenticates the
/// empty value at that position.
inline ProofOfInclusion calc_poi(const LookUpTable& lut, const Digest& leaf_hash) {
    ProofOfInclusion poi;
    poi.leaf_hash = leaf_hash;
    for (int i = 0; i < kTreeDepth; ++i) {
        int depth = kTreeDepth - i;
        Digest sibling_pos = leaf_hash;
        sibling_pos.flip_bit_msb(static_cast<unsigned>(depth - 1));
        if (const Digest* sibling = lut.find(sibling_pos, depth)) {
            poi.path_bitmap.set(static_cast<unsigned>(i));
            poi.path.push_back(*sibling);
        }
    }
    return poi;
}

/// Membership check: the proof must carry the claimed leaf and fold to the
/// expected root starting from the leaf value itself. Malformed proofs
/// verify as false.
inline bool verify_poi(const EmptyHashes& eh, const Digest& leaf_hash,
                       const ProofOfInclusion& poi, const Digest& expected_root) {
    if (poi.leaf_hash != leaf_hash) return false;
    try {
        return calc_path_root(eh, poi) == expected_root;
    } catch (const MalformedProofError&) {
        return false;
    }
}

/// Absence check: same path, but the leaf slot is interpreted as empty.
inline bool verify_absence(const EmptyHashes& eh, const Digest& position,
                           const ProofOfInclusion& poi, const Digest& expected_root) {
    if (poi.leaf_hash != position) return false;
    try {
        return fold_path(eh, position, eh.levels[kTreeDepth], poi.path_bitmap, poi.path) ==
               expected_root;
    } catch (const MalformedProofError&) {
        return false;
    }
}

}  // namespace vforest

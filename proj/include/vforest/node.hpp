#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vforest/forest.hpp"
#include "vforest/hash_tree.hpp"
#include "vforest/repair.hpp"
#include "vforest/wire.hpp"

namespace vforest {

/// Everything a node needs from its surroundings: epoch layout, the empty
/// hash table, and the authority's public verification key.
struct ProtocolEnv {
    EpochConfig cfg;
    const EmptyHashes* eh = &EmptyHashes::standard();
    VerifyFn verify_primer;
    int give_up_threshold = 30;
};

enum class CertValidity { kValid, kInvalid, kEpochOutOfWindow };

/// Node-side protocol state. A node holds its own certificate hash, the
/// proof for it, the validation forest, and, for cachers, one level cache
/// per window epoch (nullopt where the cache is missing).
struct NodeState {
    Digest cert_hash;
    std::uint32_t epoch = 0;
    bool has_certificate = false;
    ProofOfInclusion own_poi;
    bool own_poi_valid = false;
    ValidationForest vf;
    bool is_cacher = false;
    std::vector<std::optional<LevelCache>> caches;  // window-aligned, cachers only
    std::vector<bool> cache_fresh;                  // fold(cache) == root, tracked incrementally
    int failed_repair_meets = 0;
    bool wants_ca_poi = false;
};

inline bool own_epoch_in_window(const NodeState& s, const EpochConfig& cfg) {
    return s.has_certificate && s.vf.in_window(s.epoch, cfg);
}

/// Re-derives the own-proof validity flag from the committed forest.
inline void recheck_own_poi(NodeState& s, const ProtocolEnv& env) {
    if (!own_epoch_in_window(s, env.cfg)) {
        s.own_poi_valid = false;
        return;
    }
    s.own_poi_valid = verify_poi(*env.eh, s.cert_hash, s.own_poi, s.vf.root_of(s.epoch));
    if (s.own_poi_valid) {
        s.failed_repair_meets = 0;
        s.wants_ca_poi = false;
    }
}

inline bool all_caches_fresh(const NodeState& s) {
    if (!s.is_cacher) return false;
    for (bool f : s.cache_fresh) {
        if (!f) return false;
    }
    return true;
}

inline ContactMessage make_contact_message(const NodeState& s, const ProtocolEnv& env) {
    ContactMessage m;
    m.primer = s.vf.primer;
    m.primer_sig = s.vf.primer_sig;
    m.relative_epoch = own_epoch_in_window(s, env.cfg)
                           ? static_cast<std::uint8_t>(s.epoch - s.vf.base_epoch)
                           : kNoEpochSentinel;
    m.has_cache = s.is_cacher;
    m.cache_fresh = all_caches_fresh(s);
    return m;
}

/// What a node decides to do right after the contact exchange.
struct ContactActions {
    bool ignore = false;             // bad signature, drop the contact
    bool peer_is_fresher = false;    // we request roots below
    bool self_is_fresher = false;    // peer is expected to request from us
    std::vector<int> parity_request; // slots to request; all slots after a parity collision
    bool repair_direct = false;      // ask for the peer's proof once synced
    bool repair_via_cache = false;   // send our proof to the cacher once synced
};

/// Contact state machine: (a) equal primers, nothing to sync; (b) peer
/// strictly fresher, diff parities against the peer's window and request the
/// outdated slots; (c) self fresher, serve; (d) independent of sync, plan a
/// repair if our own proof needs one and the peer can plausibly help.
inline ContactActions on_contact(const NodeState& s, const ContactMessage& peer,
                                 const ProtocolEnv& env) {
    ContactActions act;
    bool same_primer = peer.primer == s.vf.primer;
    if (!same_primer && !env.verify_primer(primer_bytes(peer.primer), peer.primer_sig)) {
        act.ignore = true;
        return act;
    }
    if (!same_primer) {
        bool peer_newer_ts = peer.primer.timestamp > s.vf.primer.timestamp;
        bool root_differs = peer.primer.root != s.vf.primer.root;
        if (peer_newer_ts) {
            act.peer_is_fresher = true;
            if (root_differs) {
                // Align our roots to the peer's window before diffing, so an
                // epoch change on the peer side shows up as ordinary drift.
                std::uint32_t peer_base = base_epoch_of_primer(peer.primer, env.cfg);
                std::uint64_t shift = peer_base >= s.vf.base_epoch
                                          ? peer_base - s.vf.base_epoch
                                          : 0;
                std::vector<Digest> aligned;
                if (shift >= static_cast<std::uint64_t>(env.cfg.epoch_count)) {
                    aligned.assign(static_cast<size_t>(env.cfg.epoch_count), env.eh->levels[0]);
                } else {
                    aligned.assign(s.vf.roots.begin() + static_cast<long>(shift),
                                   s.vf.roots.end());
                    aligned.resize(static_cast<size_t>(env.cfg.epoch_count), env.eh->levels[0]);
                }
                Primer local = compute_primer(aligned, peer.primer.timestamp, env.cfg, env.eh->hash);
                act.parity_request = diff_parities(local, peer.primer, env.cfg);
                if (act.parity_request.empty()) {
                    // Checksum collision: every slot, i.e. the whole forest.
                    act.parity_request.resize(static_cast<size_t>(env.cfg.parity_slots()));
                    for (int i = 0; i < env.cfg.parity_slots(); ++i) act.parity_request[i] = i;
                }
            }
            // Newer timestamp over identical roots is a heartbeat; adopting
            // it needs no root transfer, so the request list stays empty.
        } else if (peer.primer.timestamp < s.vf.primer.timestamp) {
            act.self_is_fresher = true;
        }
        // Equal timestamps with different roots cannot come from one honest
        // authority; neither side syncs.
    }
    if (!s.own_poi_valid && own_epoch_in_window(s, env.cfg) && !act.ignore) {
        if (peer.has_cache && peer.cache_fresh) {
            act.repair_via_cache = true;
        } else if (peer.relative_epoch != kNoEpochSentinel) {
            std::uint32_t peer_epoch =
                base_epoch_of_primer(peer.primer, env.cfg) + peer.relative_epoch;
            act.repair_direct = (peer_epoch == s.epoch);
        }
    }
    return act;
}

/// Fresher side of the exchange: expand the requested parity slots into the
/// covered epochs and answer with the roots plus the current primer.
inline RootResponse serve_parity_request(const NodeState& s, std::span<const int> slots,
                                         const EpochConfig& cfg) {
    RootResponse resp;
    resp.primer = s.vf.primer;
    resp.primer_sig = s.vf.primer_sig;
    for (int slot : slots) {
        auto [age_begin, age_end] = cfg.slot_age_range(slot);
        for (int age = age_begin; age < age_end; ++age) {
            std::uint8_t rel = static_cast<std::uint8_t>(cfg.epoch_count - 1 - age);
            resp.roots.emplace_back(rel, s.vf.roots[rel]);
        }
    }
    return resp;
}

namespace detail {

/// Post-commit bookkeeping shared by every path that moves the forest:
/// realigns the cache window, reconstructs caches for epochs known to be
/// empty, and downgrades freshness where a root moved under a cache.
inline void after_forest_commit(NodeState& s, const ProtocolEnv& env, std::uint32_t old_base,
                                const std::vector<Digest>& old_roots) {
    if (s.is_cacher) {
        std::uint64_t shift = s.vf.base_epoch - old_base;
        size_t n = static_cast<size_t>(env.cfg.epoch_count);
        if (shift > 0) {
            if (shift >= n) {
                s.caches.assign(n, std::nullopt);
                s.cache_fresh.assign(n, false);
            } else {
                s.caches.erase(s.caches.begin(), s.caches.begin() + static_cast<long>(shift));
                s.caches.resize(n, std::nullopt);
                s.cache_fresh.erase(s.cache_fresh.begin(),
                                    s.cache_fresh.begin() + static_cast<long>(shift));
                s.cache_fresh.resize(n, false);
            }
        }
        int clvl = 0;
        for (const auto& c : s.caches) {
            if (c) { clvl = c->clvl; break; }
        }
        for (size_t i = 0; i < n; ++i) {
            std::uint32_t epoch = s.vf.base_epoch + static_cast<std::uint32_t>(i);
            std::uint64_t old_idx64 = std::uint64_t(epoch) - old_base;
            bool root_changed = old_idx64 >= old_roots.size() ||
                                old_roots[static_cast<size_t>(old_idx64)] != s.vf.roots[i];
            if (root_changed) s.cache_fresh[i] = false;
            if (!s.cache_fresh[i] && clvl > 0 && s.vf.roots[i] == env.eh->levels[0]) {
                // A tree known to be empty has a trivially reconstructible cache.
                LevelCache lc;
                lc.clvl = static_cast<std::uint8_t>(clvl);
                lc.epoch = epoch;
                lc.entries.assign(size_t{1} << clvl, env.eh->levels[clvl]);
                s.caches[i] = std::move(lc);
                s.cache_fresh[i] = true;
            }
        }
    }
    recheck_own_poi(s, env);
}

}  // namespace detail

/// Applies a root response; on any inconsistency the forest is untouched and
/// the function reports failure instead of throwing.
inline bool sync_forest(NodeState& s, const RootResponse& resp, const ProtocolEnv& env) {
    std::uint32_t resp_base = base_epoch_of_primer(resp.primer, env.cfg);
    std::vector<std::pair<std::uint32_t, Digest>> updates;
    updates.reserve(resp.roots.size());
    for (const auto& [rel, root] : resp.roots) {
        updates.emplace_back(resp_base + rel, root);
    }
    std::uint32_t old_base = s.vf.base_epoch;
    std::vector<Digest> old_roots = s.vf.roots;
    try {
        apply_root_updates(s.vf, updates, resp.primer, resp.primer_sig, env.verify_primer,
                           env.cfg, *env.eh);
    } catch (const std::runtime_error&) {
        return false;
    }
    detail::after_forest_commit(s, env, old_base, old_roots);
    return true;
}

enum class RepairOutcome {
    kRepaired,
    kFailed,     // qualifying attempt that did not produce a valid proof
    kNotUsable,  // peer input rejected before use; does not count
};

/// Direct repair: verify the peer's proof against our current epoch root,
/// blend it into a scratch copy, and commit only a verifying result.
inline RepairOutcome try_direct_repair(NodeState& s, const ProofOfInclusion& peer_poi,
                                       const ProtocolEnv& env) {
    if (!own_epoch_in_window(s, env.cfg) || s.own_poi_valid) return RepairOutcome::kNotUsable;
    const Digest& root = s.vf.root_of(s.epoch);
    if (!verify_poi(*env.eh, peer_poi.leaf_hash, peer_poi, root)) {
        return RepairOutcome::kNotUsable;
    }
    ProofOfInclusion repaired;
    try {
        repaired = update_poi_with_poi(*env.eh, s.own_poi, peer_poi);
    } catch (const std::invalid_argument&) {
        return RepairOutcome::kNotUsable;
    }
    if (verify_poi(*env.eh, s.cert_hash, repaired, root)) {
        s.own_poi = std::move(repaired);
        s.own_poi_valid = true;
        s.failed_repair_meets = 0;
        s.wants_ca_poi = false;
        return RepairOutcome::kRepaired;
    }
    // The scratch result did not verify; the committed proof stays as it
    // was, so a half-repair is never observable.
    if (++s.failed_repair_meets >= env.give_up_threshold) s.wants_ca_poi = true;
    return RepairOutcome::kFailed;
}

/// Cacher side of a cache repair. Declines (nullopt) unless the cache for
/// the requester's epoch is present and verified fresh against the cacher's
/// own forest, which the requester has just synced with.
inline std::optional<ProofOfInclusion> serve_lc_repair(const NodeState& cacher,
                                                       const ProofOfInclusion& stale,
                                                       std::uint32_t epoch,
                                                       const ProtocolEnv& env) {
    if (!cacher.is_cacher || !cacher.vf.in_window(epoch, env.cfg)) return std::nullopt;
    size_t idx = epoch - cacher.vf.base_epoch;
    if (!cacher.caches[idx] || !cacher.cache_fresh[idx]) return std::nullopt;
    return update_poi_with_lvl_cache(*env.eh, stale, *cacher.caches[idx]);
}

/// Requester side: commit the cacher's result only if it verifies.
inline RepairOutcome apply_lc_repair_result(NodeState& s, const ProofOfInclusion& repaired,
                                            const ProtocolEnv& env) {
    if (!own_epoch_in_window(s, env.cfg) || s.own_poi_valid) return RepairOutcome::kNotUsable;
    if (repaired.leaf_hash != s.cert_hash) return RepairOutcome::kNotUsable;
    const Digest& root = s.vf.root_of(s.epoch);
    if (verify_poi(*env.eh, s.cert_hash, repaired, root)) {
        s.own_poi = repaired;
        s.own_poi_valid = true;
        s.failed_repair_meets = 0;
        s.wants_ca_poi = false;
        return RepairOutcome::kRepaired;
    }
    if (++s.failed_repair_meets >= env.give_up_threshold) s.wants_ca_poi = true;
    return RepairOutcome::kFailed;
}

/// Revocation check for a presented certificate. A root equal to H(empty)
/// marks an epoch explicitly published as revocation-free; certificates of
/// such an epoch are accepted without a membership proof.
inline CertValidity validate_peer_certificate(const NodeState& s, const Digest& peer_cert,
                                              const ProofOfInclusion& peer_poi,
                                              std::uint32_t peer_epoch, const ProtocolEnv& env) {
    if (!s.vf.in_window(peer_epoch, env.cfg)) return CertValidity::kEpochOutOfWindow;
    const Digest& root = s.vf.root_of(peer_epoch);
    if (root == env.eh->levels[kTreeDepth]) return CertValidity::kValid;
    return verify_poi(*env.eh, peer_cert, peer_poi, root) ? CertValidity::kValid
                                                          : CertValidity::kInvalid;
}

/// Applies a daily authority update: commit the changed roots, then process
/// the update proofs for our own epoch and, on cachers, fold every proof
/// into the matching cache.
inline bool apply_ca_update(NodeState& s, const CaUpdate& upd, const ProtocolEnv& env) {
    std::vector<std::pair<std::uint32_t, Digest>> updates;
    updates.reserve(upd.changed_roots.size());
    for (const auto& [epoch, root] : upd.changed_roots) updates.emplace_back(epoch, root);
    std::uint32_t old_base = s.vf.base_epoch;
    std::vector<Digest> old_roots = s.vf.roots;
    try {
        apply_root_updates(s.vf, updates, upd.primer, upd.primer_sig, env.verify_primer, env.cfg,
                           *env.eh);
    } catch (const std::runtime_error&) {
        return false;
    }
    detail::after_forest_commit(s, env, old_base, old_roots);

    for (const auto& [epoch, poi] : upd.update_pois) {
        if (!s.vf.in_window(epoch, env.cfg)) continue;
        const Digest& root = s.vf.root_of(epoch);
        std::optional<Digest> value = verified_update_value(*env.eh, poi, root);
        if (!value) continue;
        if (s.has_certificate && epoch == s.epoch) {
            if (poi.leaf_hash == s.cert_hash) {
                if (*value == poi.leaf_hash) s.own_poi = poi;
            } else {
                s.own_poi = update_poi_with_poi(*env.eh, s.own_poi, poi, *value);
            }
        }
        if (s.is_cacher) {
            size_t idx = epoch - s.vf.base_epoch;
            if (s.caches[idx]) {
                update_lvl_cache_with_poi(*env.eh, *s.caches[idx], poi, *value);
            }
        }
    }
    if (s.is_cacher) {
        // A cache that absorbed every proof for its epoch folds to the new
        // root again; recheck the epochs the update touched.
        for (const auto& [epoch, root] : upd.changed_roots) {
            if (!s.vf.in_window(epoch, env.cfg)) continue;
            size_t idx = epoch - s.vf.base_epoch;
            if (s.caches[idx] && lc_root(*env.eh, *s.caches[idx]) == s.vf.roots[idx]) {
                s.cache_fresh[idx] = true;
            }
        }
    }
    recheck_own_poi(s, env);
    return true;
}

/// Adopts a verified cache received from another cacher.
inline bool adopt_level_cache(NodeState& s, const LevelCache& lc, const ProtocolEnv& env) {
    if (!s.is_cacher || !s.vf.in_window(lc.epoch, env.cfg)) return false;
    size_t idx = lc.epoch - s.vf.base_epoch;
    if (lc_root(*env.eh, lc) != s.vf.roots[idx]) return false;
    s.caches[idx] = lc;
    s.cache_fresh[idx] = true;
    return true;
}

/// Window-relative indices of the epochs whose cache needs a refresh.
inline std::vector<std::uint8_t> stale_cache_epochs(const NodeState& s) {
    std::vector<std::uint8_t> out;
    for (size_t i = 0; i < s.cache_fresh.size(); ++i) {
        if (!s.cache_fresh[i]) out.push_back(static_cast<std::uint8_t>(i));
    }
    return out;
}

/// Outcome of the give-up fallback: adopt the authority's proof. The
/// response primer must not be older than what the node already trusts.
inline bool apply_ca_poi_response(NodeState& s, const CaPoiResponse& resp,
                                  const ProtocolEnv& env) {
    if (resp.poi.leaf_hash != s.cert_hash) return false;
    if (resp.primer.timestamp < s.vf.primer.timestamp) return false;
    if (!env.verify_primer(primer_bytes(resp.primer), resp.primer_sig)) return false;
    s.own_poi = resp.poi;
    s.wants_ca_poi = false;
    s.failed_repair_meets = 0;
    recheck_own_poi(s, env);
    return true;
}

}  // namespace vforest

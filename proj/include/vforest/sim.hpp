#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vforest/authority.hpp"
#include "vforest/node.hpp"
#include "vforest/wire.hpp"

namespace vforest {

/// Deterministic RNG used throughout the simulator. All bounded draws are
/// hand-rolled so a seed pins the exact sequence independent of library
/// distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : g_(seed) {}

    std::uint64_t u64() { return g_(); }

    std::uint64_t below(std::uint64_t n) {
        std::uint64_t x, r;
        do {
            x = g_();
            r = x % n;
        } while (x - r > std::numeric_limits<std::uint64_t>::max() - (n - 1));
        return r;
    }

    double real01() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return real01() < p; }

    Digest digest() {
        Digest d;
        for (int i = 0; i < 4; ++i) {
            std::uint64_t x = g_();
            std::memcpy(d.b.data() + 8 * i, &x, 8);
        }
        return d;
    }

private:
    std::mt19937_64 g_;
};

// ---------------------------------------------------------------------------
// Message sizes. The hot simulation path counts bytes without materializing
// buffers; the size helpers are pinned against the encoders in the tests.

inline size_t primer_wire_size(const EpochConfig& cfg) {
    return 32 + static_cast<size_t>(cfg.parity_bytes()) + 4;
}
inline size_t contact_wire_size(const EpochConfig& cfg) { return primer_wire_size(cfg) + 64 + 1; }
inline size_t parity_request_wire_size(size_t slots) { return 1 + slots; }
inline size_t root_response_wire_size(const EpochConfig& cfg, size_t roots) {
    return primer_wire_size(cfg) + 64 + 1 + roots * 33;
}
inline size_t level_cache_wire_size(int clvl) { return 3 + (size_t{1} << clvl) * 32; }

// ---------------------------------------------------------------------------
// One full pairwise exchange: contact messages, forest sync for the staler
// side, cache refresh between cachers, then at most one repair attempt per
// side.

struct SessionBytes {
    std::uint64_t contact = 0;
    std::uint64_t sync = 0;
    std::uint64_t repair = 0;
    std::uint64_t cache_refresh = 0;
    std::uint64_t total() const { return contact + sync + repair + cache_refresh; }
};

struct SessionResult {
    SessionBytes bytes;
    bool synced = false;              // some side committed new roots
    int roots_transferred = 0;
    std::vector<int> slots_requested;
    std::optional<RepairOutcome> repair_a, repair_b;
    bool repair_a_via_cache = false, repair_b_via_cache = false;
};

namespace detail {

inline void session_sync(NodeState& staler, NodeState& fresher, const ContactActions& act,
                         const ProtocolEnv& env, SessionResult& res) {
    res.slots_requested = act.parity_request;
    res.bytes.sync += parity_request_wire_size(act.parity_request.size());
    RootResponse resp = serve_parity_request(fresher, act.parity_request, env.cfg);
    res.bytes.sync += root_response_wire_size(env.cfg, resp.roots.size());
    res.roots_transferred = static_cast<int>(resp.roots.size());
    if (sync_forest(staler, resp, env)) res.synced = true;
}

inline void session_cache_refresh(NodeState& stale, const NodeState& fresh,
                                  const ProtocolEnv& env, SessionResult& res) {
    std::vector<std::uint8_t> epochs = stale_cache_epochs(stale);
    if (epochs.empty()) return;
    res.bytes.cache_refresh += 1 + epochs.size();
    for (std::uint8_t rel : epochs) {
        const auto& lc = fresh.caches[rel];
        if (!lc) continue;
        res.bytes.cache_refresh += level_cache_wire_size(lc->clvl);
        adopt_level_cache(stale, *lc, env);
    }
}

inline std::optional<RepairOutcome> session_repair(NodeState& self, NodeState& peer,
                                                   const ContactMessage& peer_msg,
                                                   const ProtocolEnv& env, SessionResult& res,
                                                   bool& via_cache) {
    if (!self.has_certificate || self.own_poi_valid || !own_epoch_in_window(self, env.cfg)) {
        return std::nullopt;
    }
    if (self.vf.primer != peer.vf.primer) return std::nullopt;
    if (peer_msg.has_cache && peer_msg.cache_fresh) {
        via_cache = true;
        res.bytes.repair += poi_wire_size(self.own_poi);  // repair request carries our proof
        auto served = serve_lc_repair(peer, self.own_poi, self.epoch, env);
        if (!served) {
            // Cacher went stale between contact and serve; it answers with
            // the proof unchanged and the meeting does not qualify.
            res.bytes.repair += poi_wire_size(self.own_poi);
            return RepairOutcome::kNotUsable;
        }
        res.bytes.repair += poi_wire_size(*served);
        return apply_lc_repair_result(self, *served, env);
    }
    if (peer_msg.relative_epoch != kNoEpochSentinel) {
        std::uint32_t peer_epoch =
            base_epoch_of_primer(peer_msg.primer, env.cfg) + peer_msg.relative_epoch;
        if (peer_epoch == self.epoch && peer.has_certificate) {
            // Zero-payload proof request, then the peer's own proof.
            res.bytes.repair += poi_wire_size(peer.own_poi);
            return try_direct_repair(self, peer.own_poi, env);
        }
    }
    return std::nullopt;
}

}  // namespace detail

inline SessionResult run_contact_session(NodeState& a, NodeState& b, const ProtocolEnv& env) {
    SessionResult res;
    ContactMessage ma = make_contact_message(a, env);
    ContactMessage mb = make_contact_message(b, env);
    res.bytes.contact += 2 * contact_wire_size(env.cfg);
    ContactActions aa = on_contact(a, mb, env);
    ContactActions ab = on_contact(b, ma, env);
    if (aa.ignore || ab.ignore) return res;
    if (aa.peer_is_fresher) {
        detail::session_sync(a, b, aa, env, res);
    } else if (ab.peer_is_fresher) {
        detail::session_sync(b, a, ab, env, res);
    }
    if (a.is_cacher && b.is_cacher && a.vf.primer == b.vf.primer) {
        if (!all_caches_fresh(a) && all_caches_fresh(b)) {
            detail::session_cache_refresh(a, b, env, res);
        } else if (!all_caches_fresh(b) && all_caches_fresh(a)) {
            detail::session_cache_refresh(b, a, env, res);
        }
    }
    res.repair_a = detail::session_repair(a, b, mb, env, res, res.repair_a_via_cache);
    res.repair_b = detail::session_repair(b, a, ma, env, res, res.repair_b_via_cache);
    return res;
}

// ---------------------------------------------------------------------------
// Level-cache failure model: a repair fails when some missed update falls in
// the leaf's own depth-clvl part.

inline double lc_fail_probability(int clvl, int m) {
    return 1.0 - std::pow(1.0 - std::ldexp(1.0, -clvl), m);
}

/// Largest number of missable updates keeping the failure probability at or
/// under `target`.
inline int max_missable_updates(int clvl, double target) {
    int m = 0;
    while (lc_fail_probability(clvl, m + 1) <= target) ++m;
    return m;
}

struct LcMonteCarlo {
    double fail_rate = 0;
    double std_error = 0;
    int trials = 0;
};

inline LcMonteCarlo lc_fail_monte_carlo(int clvl, int m, int trials, std::uint64_t seed) {
    Rng rng(seed);
    std::uint64_t parts = std::uint64_t{1} << clvl;
    int fails = 0;
    for (int t = 0; t < trials; ++t) {
        std::uint64_t own = rng.below(parts);
        bool hit = false;
        for (int i = 0; i < m; ++i) {
            if (rng.below(parts) == own) {
                hit = true;
                break;
            }
        }
        fails += hit;
    }
    LcMonteCarlo out;
    out.trials = trials;
    out.fail_rate = static_cast<double>(fails) / trials;
    out.std_error = std::sqrt(out.fail_rate * (1.0 - out.fail_rate) / trials);
    return out;
}

// ---------------------------------------------------------------------------
// Direct-repair analysis: how well random fresh proofs repair a stale one
// after m missed revocations in the same tree.

struct DirectRepairStats {
    int missed_updates = 0;
    int trials = 0;
    double first_fail_rate = 0;    // still invalid after the first proof
    double first10_fail_rate = 0;  // still invalid after ten proofs
    double fail_rate = 0;          // gave up entirely
    double avg_tries = 0;          // proofs needed, over successful trials
    double avg_tries_std_error = 0;
};

inline DirectRepairStats run_direct_repair_analysis(int tree_leaves, int missed_updates,
                                                    int trials, int give_up, std::uint64_t seed) {
    const EmptyHashes& eh = EmptyHashes::standard();
    Rng rng(seed);
    LookUpTable lut(eh);
    std::vector<Digest> leaves(static_cast<size_t>(tree_leaves));
    for (auto& leaf : leaves) {
        leaf = rng.digest();
        lut.add_leaf(leaf);
    }
    DirectRepairStats st;
    st.missed_updates = missed_updates;
    st.trials = trials;
    int first_fail = 0, first10_fail = 0, fails = 0;
    double tries_sum = 0, tries_sumsq = 0;
    int successes = 0;

    std::vector<size_t> removed(static_cast<size_t>(missed_updates));
    std::vector<bool> is_removed(leaves.size(), false);
    for (int t = 0; t < trials; ++t) {
        size_t victim = static_cast<size_t>(rng.below(leaves.size()));
        ProofOfInclusion stale = calc_poi(lut, leaves[victim]);
        for (int i = 0; i < missed_updates; ++i) {
            size_t r;
            do {
                r = static_cast<size_t>(rng.below(leaves.size()));
            } while (r == victim || is_removed[r]);
            removed[static_cast<size_t>(i)] = r;
            is_removed[r] = true;
            lut.remove_leaf(leaves[r]);
        }
        Digest new_root = lut.root();
        ProofOfInclusion poi = stale;
        bool repaired = verify_poi(eh, leaves[victim], poi, new_root);
        int tries = 0;
        while (!repaired && tries < give_up) {
            ++tries;
            size_t helper;
            do {
                helper = static_cast<size_t>(rng.below(leaves.size()));
            } while (helper == victim || is_removed[helper]);
            ProofOfInclusion fresh = calc_poi(lut, leaves[helper]);
            poi = update_poi_with_poi(eh, poi, fresh);
            repaired = verify_poi(eh, leaves[victim], poi, new_root);
        }
        if (!repaired) {
            ++fails;
            ++first_fail;
            ++first10_fail;
        } else {
            if (tries > 1) ++first_fail;
            if (tries > 10) ++first10_fail;
            ++successes;
            tries_sum += tries;
            tries_sumsq += static_cast<double>(tries) * tries;
        }
        for (int i = 0; i < missed_updates; ++i) {
            lut.add_leaf(leaves[removed[static_cast<size_t>(i)]]);
            is_removed[removed[static_cast<size_t>(i)]] = false;
        }
    }
    st.first_fail_rate = static_cast<double>(first_fail) / trials;
    st.first10_fail_rate = static_cast<double>(first10_fail) / trials;
    st.fail_rate = static_cast<double>(fails) / trials;
    if (successes > 0) {
        st.avg_tries = tries_sum / successes;
        double var = tries_sumsq / successes - st.avg_tries * st.avg_tries;
        if (var < 0) var = 0;
        st.avg_tries_std_error = std::sqrt(var / successes);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Large-scale epidemic simulation.

struct SimParams {
    int node_count = 10000;
    int weeks = 4;
    double missing_share = 0.5;
    double cacher_share = 0.1;
    int clvl = 7;
    int encounters_per_node_per_hour = 5;
    double daily_revocation_rate = 0.00028;
    double weekly_issue_rate = 0.001;
    int give_up_threshold = 30;
    std::uint64_t rng_seed = 1;
    EpochConfig epochs{};
};

struct SimDay {
    int day = 0;
    std::uint64_t ca_update_bytes = 0;
    std::uint64_t epoch_change_bytes = 0;
    std::uint64_t node_exchange_bytes = 0;
    std::uint64_t meetings = 0;
    std::uint64_t both_outdated_meetings = 0;
    std::uint64_t episodes_started = 0;
    std::uint64_t resolved_distributed = 0;
    std::uint64_t resolved_self_heal = 0;
    std::uint64_t resolved_fallback = 0;
    double outdated_share_end = 0;
};

struct SimMetrics {
    SimParams params;
    // Headline figures.
    double failed_repair_share = 0;
    double avg_meets_until_repair = 0;
    double both_outdated_encounter_share = 0;
    double node_weekly_exchange_bytes = 0;  // per node per week, both directions
    double ca_daily_update_bytes = 0;       // mean daily update size
    double epoch_change_bytes = 0;          // mean weekly epoch-change size
    // Episode accounting.
    std::uint64_t episodes_started = 0;
    std::uint64_t episodes_resolved_distributed = 0;
    std::uint64_t episodes_resolved_self_heal = 0;
    std::uint64_t episodes_resolved_fallback = 0;
    std::uint64_t episodes_resolved_other = 0;
    std::uint64_t ca_fallback_requests = 0;
    // Traffic accounting (sums over actually encoded or size-pinned messages).
    std::uint64_t meetings_total = 0;
    std::uint64_t meetings_both_outdated = 0;
    std::uint64_t bytes_contacts = 0;
    std::uint64_t bytes_sync = 0;
    std::uint64_t bytes_repair = 0;
    std::uint64_t bytes_cache_refresh = 0;
    std::uint64_t bytes_ca_updates = 0;
    std::uint64_t bytes_epoch_change = 0;
    std::uint64_t bytes_ca_fallback = 0;
    std::vector<SimDay> days;
};

namespace detail {

struct SimNode {
    NodeState st;
    bool awaiting_reissue = false;
    // Ground-truth staleness: the root the committed own proof verifies
    // against, regardless of what the node itself knows.
    Digest poi_root;
    bool poi_root_known = false;
    // Episode bookkeeping.
    bool in_episode = false;
    int episode_meets = 0;
};

class EpidemicSim {
public:
    EpidemicSim(const SimParams& p)
        : p_(p),
          eh_(EmptyHashes::standard()),
          suite_(stub_suite(0x5eed + p.rng_seed)),
          rng_(p.rng_seed),
          start_(align_to_epoch(1'700'000'000ull, p.epochs)),
          ca_(p.epochs, suite_, start_) {
        env_.cfg = p_.epochs;
        env_.eh = &eh_;
        env_.verify_primer = suite_.verify;
        env_.give_up_threshold = p_.give_up_threshold;
    }

    SimMetrics run() {
        bootstrap();
        int hours = p_.weeks * 7 * 24;
        for (int hour = 1; hour <= hours; ++hour) {
            std::uint64_t t = start_ + std::uint64_t(hour) * 3600;
            if (hour % 24 == 0) {
                metrics_.days.push_back(SimDay{});
                metrics_.days.back().day = hour / 24;
                if (hour % (24 * 7) == 0) weekly_epoch_change(t);
                daily_ca_update(t + 1);
                sweep_episodes();
                mark_outdated_share();
            }
            hourly_meetings();
        }
        finalize();
        return metrics_;
    }

private:
    static std::uint64_t align_to_epoch(std::uint64_t t, const EpochConfig& cfg) {
        return (t / cfg.epoch_duration) * cfg.epoch_duration;
    }

    std::uint64_t expiry_in_epoch(std::uint32_t epoch) {
        return std::uint64_t(epoch) * p_.epochs.epoch_duration +
               rng_.below(p_.epochs.epoch_duration);
    }

    void provision_fresh(SimNode& n, Digest cert, std::uint32_t epoch, bool cacher) {
        n.st = NodeState{};
        n.st.cert_hash = cert;
        n.st.epoch = epoch;
        n.st.has_certificate = true;
        n.st.vf = ca_.forest();
        n.st.own_poi = calc_poi(ca_.epoch_lut(epoch), cert);
        n.st.is_cacher = cacher;
        if (cacher) {
            size_t e = static_cast<size_t>(p_.epochs.epoch_count);
            n.st.caches.resize(e);
            n.st.cache_fresh.assign(e, false);
            for (size_t i = 0; i < e; ++i) {
                std::uint32_t ep = ca_.base_epoch() + static_cast<std::uint32_t>(i);
                n.st.caches[i] = construct_lvl_cache(ca_.epoch_lut(ep), p_.clvl, ep);
                n.st.cache_fresh[i] = true;
            }
        }
        recheck_own_poi(n.st, env_);
        note_valid(n);
    }

    void bootstrap() {
        nodes_.resize(static_cast<size_t>(p_.node_count));
        std::uint32_t base = ca_.base_epoch();
        std::uint64_t window = std::uint64_t(p_.epochs.epoch_count) * p_.epochs.epoch_duration;
        for (auto& n : nodes_) {
            Digest cert = rng_.digest();
            std::uint64_t expiry = std::uint64_t(base) * p_.epochs.epoch_duration +
                                   rng_.below(window);
            ca_.issue_certificate(cert, expiry);
            n.st.cert_hash = cert;
            n.st.epoch = epoch_index(expiry, p_.epochs);
        }
        ca_.build_update(start_ + 1);  // flush enrollment; the run starts published
        int cachers = static_cast<int>(p_.node_count * p_.cacher_share);
        std::vector<size_t> order(nodes_.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);
        for (size_t i = 0; i < nodes_.size(); ++i) {
            provision_fresh(nodes_[order[i]], nodes_[order[i]].st.cert_hash,
                            nodes_[order[i]].st.epoch, static_cast<int>(i) < cachers);
        }
    }

    bool globally_outdated(const SimNode& n) const {
        if (!n.st.has_certificate) return true;
        if (!n.poi_root_known) return true;
        if (!ca_.forest().in_window(n.st.epoch, p_.epochs)) return true;
        return ca_.forest().root_of(n.st.epoch) != n.poi_root;
    }

    void note_valid(SimNode& n) {
        if (n.st.own_poi_valid) {
            n.poi_root = n.st.vf.root_of(n.st.epoch);
            n.poi_root_known = true;
        }
    }

    void start_episode_if_needed(SimNode& n, SimDay* day) {
        if (!n.in_episode && n.st.has_certificate && globally_outdated(n)) {
            n.in_episode = true;
            n.episode_meets = 0;
            ++metrics_.episodes_started;
            if (day) ++day->episodes_started;
        }
    }

    enum class Resolution { kDistributed, kSelfHeal, kFallback, kOther };

    void resolve_episode(SimNode& n, Resolution how) {
        if (!n.in_episode) return;
        n.in_episode = false;
        switch (how) {
            case Resolution::kDistributed:
                ++metrics_.episodes_resolved_distributed;
                meets_sum_ += n.episode_meets;
                if (!metrics_.days.empty()) ++metrics_.days.back().resolved_distributed;
                break;
            case Resolution::kSelfHeal:
                ++metrics_.episodes_resolved_self_heal;
                if (!metrics_.days.empty()) ++metrics_.days.back().resolved_self_heal;
                break;
            case Resolution::kFallback:
                ++metrics_.episodes_resolved_fallback;
                if (!metrics_.days.empty()) ++metrics_.days.back().resolved_fallback;
                break;
            case Resolution::kOther:
                ++metrics_.episodes_resolved_other;
                break;
        }
    }

    // After boundary processing, open episodes for newly stale nodes and
    // close the ones a received update healed.
    void sweep_episodes() {
        SimDay* day = metrics_.days.empty() ? nullptr : &metrics_.days.back();
        for (auto& n : nodes_) {
            if (!n.st.has_certificate) continue;
            if (n.in_episode && n.st.own_poi_valid && !globally_outdated(n)) {
                resolve_episode(n, Resolution::kSelfHeal);
            }
            start_episode_if_needed(n, day);
        }
    }

    void weekly_epoch_change(std::uint64_t t) {
        std::uint32_t pruned_epoch = ca_.base_epoch();
        std::uint32_t new_epoch = ca_.newest_epoch() + 1;
        // Renewals: certificates expiring with the pruned epoch get a fresh
        // one with a full lifetime.
        for (auto& n : nodes_) {
            if (n.st.has_certificate && n.st.epoch == pruned_epoch && !n.awaiting_reissue) {
                Digest cert = rng_.digest();
                ca_.stage_certificate(cert, expiry_in_epoch(new_epoch));
                if (n.in_episode) resolve_episode(n, Resolution::kOther);
                n.st.cert_hash = cert;
                n.st.epoch = new_epoch;
                n.st.own_poi = ProofOfInclusion{};
                n.st.own_poi.leaf_hash = cert;
                n.st.own_poi_valid = false;
                n.poi_root_known = false;
                n.st.failed_repair_meets = 0;
                n.st.wants_ca_poi = false;
            }
        }
        // Joiners: newly issued certificates, provisioned with current state.
        int joiners = static_cast<int>(std::llround(nodes_.size() * p_.weekly_issue_rate));
        std::vector<Digest> joiner_certs;
        for (int j = 0; j < joiners; ++j) {
            Digest cert = rng_.digest();
            ca_.stage_certificate(cert, expiry_in_epoch(new_epoch));
            joiner_certs.push_back(cert);
        }

        EpochChangeUpdate upd = ca_.epoch_change(t);
        std::uint64_t full_size = encode_epoch_change(upd).size();
        epoch_change_sizes_.push_back(full_size);
        if (!metrics_.days.empty()) metrics_.days.back().epoch_change_bytes = full_size;

        // Companion root-only update for nodes outside the new epoch.
        CaUpdate mini;
        mini.primer = upd.primer;
        mini.primer_sig = upd.primer_sig;
        mini.changed_roots.emplace_back(upd.new_epoch, ca_.forest().root_of(new_epoch));
        std::uint64_t mini_size = encode_ca_update(mini).size();

        LevelCache shared_lc = construct_lvl_cache(ca_.epoch_lut(new_epoch), p_.clvl, new_epoch);

        for (size_t i = 0; i < nodes_.size(); ++i) {
            auto& n = nodes_[i];
            bool receives = !rng_.bernoulli(p_.missing_share);
            if (!receives) continue;
            bool affected = n.st.has_certificate && n.st.epoch == new_epoch;
            metrics_.bytes_epoch_change += affected ? full_size : mini_size;
            if (!apply_ca_update(n.st, mini, env_)) continue;
            if (n.st.is_cacher) adopt_level_cache(n.st, shared_lc, env_);
            if (affected) {
                n.st.own_poi = calc_poi(ca_.epoch_lut(new_epoch), n.st.cert_hash);
                recheck_own_poi(n.st, env_);
            }
            note_valid(n);
        }
        for (const Digest& cert : joiner_certs) {
            nodes_.emplace_back();
            provision_fresh(nodes_.back(), cert, new_epoch,
                            rng_.bernoulli(p_.cacher_share));
        }
    }

    void daily_ca_update(std::uint64_t t) {
        // Re-issue yesterday's revocations into the newest epoch.
        std::uint32_t newest = ca_.newest_epoch();
        for (auto& n : nodes_) {
            if (!n.awaiting_reissue) continue;
            Digest cert = rng_.digest();
            ca_.issue_certificate(cert, expiry_in_epoch(newest));
            n.st.cert_hash = cert;
            n.st.epoch = newest;
            n.st.has_certificate = true;
            n.st.own_poi = ProofOfInclusion{};
            n.st.own_poi.leaf_hash = cert;
            n.st.own_poi_valid = false;
            n.poi_root_known = false;
            n.awaiting_reissue = false;
        }
        // Today's revocations.
        double expected = ca_.active_count() * p_.daily_revocation_rate;
        int k = static_cast<int>(expected);
        if (rng_.bernoulli(expected - k)) ++k;
        for (int i = 0; i < k; ++i) {
            for (int guard = 0; guard < 1000; ++guard) {
                size_t idx = static_cast<size_t>(rng_.below(nodes_.size()));
                auto& n = nodes_[idx];
                if (!n.st.has_certificate || n.awaiting_reissue) continue;
                ca_.revoke(n.st.cert_hash);
                if (n.in_episode) resolve_episode(n, Resolution::kOther);
                n.st.has_certificate = false;
                n.st.own_poi_valid = false;
                n.poi_root_known = false;
                n.awaiting_reissue = true;
                break;
            }
        }
        CaUpdate upd = ca_.build_update(t);
        std::uint64_t size = encode_ca_update(upd).size();
        ca_update_sizes_.push_back(size);
        if (!metrics_.days.empty()) metrics_.days.back().ca_update_bytes = size;
        for (auto& n : nodes_) {
            if (rng_.bernoulli(p_.missing_share)) continue;
            metrics_.bytes_ca_updates += size;
            apply_ca_update(n.st, upd, env_);
            note_valid(n);
        }
    }

    void mark_outdated_share() {
        size_t outdated = 0, holders = 0;
        for (auto& n : nodes_) {
            if (!n.st.has_certificate) continue;  // awaiting re-issue
            ++holders;
            if (globally_outdated(n)) ++outdated;
        }
        metrics_.days.back().outdated_share_end =
            holders ? static_cast<double>(outdated) / holders : 0.0;
    }

    void service_fallback(SimNode& n) {
        if (!n.st.wants_ca_poi || !n.st.has_certificate) return;
        CaPoiResponse resp = ca_.answer_poi_request(n.st.cert_hash);
        std::uint64_t bytes = 32 + encode_ca_poi_response(resp).size();
        metrics_.bytes_ca_fallback += bytes;
        ++metrics_.ca_fallback_requests;
        apply_ca_poi_response(n.st, resp, env_);
        note_valid(n);
        resolve_episode(n, Resolution::kFallback);
    }

    void hourly_meetings() {
        const Primer& current = ca_.current_primer();
        size_t count = nodes_.size();
        for (size_t i = 0; i < count; ++i) {
            for (int e = 0; e < p_.encounters_per_node_per_hour; ++e) {
                size_t j = static_cast<size_t>(rng_.below(count - 1));
                if (j >= i) ++j;
                meet(nodes_[i], nodes_[j], current);
            }
        }
    }

    void meet(SimNode& a, SimNode& b, const Primer& current) {
        ++metrics_.meetings_total;
        bool a_out = globally_outdated(a);
        bool b_out = globally_outdated(b);
        if (a_out && b_out) ++metrics_.meetings_both_outdated;
        if (a.in_episode && b.st.vf.primer == current) ++a.episode_meets;
        if (b.in_episode && a.st.vf.primer == current) ++b.episode_meets;

        SessionResult res = run_contact_session(a.st, b.st, env_);
        metrics_.bytes_contacts += res.bytes.contact;
        metrics_.bytes_sync += res.bytes.sync;
        metrics_.bytes_repair += res.bytes.repair;
        metrics_.bytes_cache_refresh += res.bytes.cache_refresh;
        if (!metrics_.days.empty()) {
            metrics_.days.back().node_exchange_bytes += res.bytes.total();
            ++metrics_.days.back().meetings;
            if (a_out && b_out) ++metrics_.days.back().both_outdated_meetings;
        }

        finish_meeting(a, res.repair_a);
        finish_meeting(b, res.repair_b);
    }

    void finish_meeting(SimNode& n, const std::optional<RepairOutcome>& repair) {
        note_valid(n);
        if (n.in_episode && n.st.own_poi_valid && !globally_outdated(n)) {
            bool by_repair = repair && *repair == RepairOutcome::kRepaired;
            resolve_episode(n, by_repair ? Resolution::kDistributed : Resolution::kOther);
        }
        if (n.st.wants_ca_poi) service_fallback(n);
    }

    void finalize() {
        metrics_.params = p_;
        std::uint64_t resolved = metrics_.episodes_resolved_distributed +
                                 metrics_.episodes_resolved_self_heal +
                                 metrics_.episodes_resolved_fallback;
        if (resolved > 0) {
            metrics_.failed_repair_share =
                static_cast<double>(metrics_.episodes_resolved_fallback) / resolved;
        }
        if (metrics_.episodes_resolved_distributed > 0) {
            metrics_.avg_meets_until_repair =
                static_cast<double>(meets_sum_) / metrics_.episodes_resolved_distributed;
        }
        if (metrics_.meetings_total > 0) {
            metrics_.both_outdated_encounter_share =
                static_cast<double>(metrics_.meetings_both_outdated) / metrics_.meetings_total;
        }
        std::uint64_t exchange = metrics_.bytes_contacts + metrics_.bytes_sync +
                                 metrics_.bytes_repair + metrics_.bytes_cache_refresh;
        metrics_.node_weekly_exchange_bytes =
            2.0 * static_cast<double>(exchange) / (static_cast<double>(p_.node_count) * p_.weeks);
        if (!ca_update_sizes_.empty()) {
            std::uint64_t s = 0;
            for (auto v : ca_update_sizes_) s += v;
            metrics_.ca_daily_update_bytes = static_cast<double>(s) / ca_update_sizes_.size();
        }
        if (!epoch_change_sizes_.empty()) {
            std::uint64_t s = 0;
            for (auto v : epoch_change_sizes_) s += v;
            metrics_.epoch_change_bytes = static_cast<double>(s) / epoch_change_sizes_.size();
        }
    }

    SimParams p_;
    const EmptyHashes& eh_;
    CryptoSuite suite_;
    Rng rng_;
    std::uint64_t start_;
    CertificateAuthority ca_;
    ProtocolEnv env_;
    std::vector<SimNode> nodes_;
    SimMetrics metrics_;
    std::uint64_t meets_sum_ = 0;
    std::vector<std::uint64_t> ca_update_sizes_;
    std::vector<std::uint64_t> epoch_change_sizes_;
};

}  // namespace detail

inline SimMetrics run_epidemic_sim(const SimParams& params) {
    detail::EpidemicSim sim(params);
    return sim.run();
}

// ---------------------------------------------------------------------------
// Update-size measurement at full scale. Builds each epoch tree one at a
// time so a million-certificate forest fits in memory, applies one day of
// churn (half revocations across the window, half re-issuance into the
// newest epoch), and encodes the resulting update for real.

struct UpdateSizeReport {
    size_t total_certs = 0;
    size_t changed_leaves = 0;
    std::uint64_t ca_update_bytes = 0;
    double avg_poi_elements = 0;
    std::uint64_t epoch_change_bytes = 0;
    size_t epoch_change_leaves = 0;
};

namespace detail {

template <typename Fn>
void parallel_epochs(int count, Fn fn, unsigned threads) {
    if (threads < 2) {
        for (int e = 0; e < count; ++e) fn(e);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int e = next.fetch_add(1); e < count; e = next.fetch_add(1)) fn(e);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

inline UpdateSizeReport measure_ca_update_sizes(size_t total_certs, double daily_churn,
                                                double weekly_issue_rate, const EpochConfig& cfg,
                                                std::uint64_t seed,
                                                unsigned threads = 2) {
    const EmptyHashes& eh = EmptyHashes::standard();
    size_t per_epoch = total_certs / static_cast<size_t>(cfg.epoch_count);
    size_t churn = static_cast<size_t>(std::llround(static_cast<double>(total_certs) * daily_churn));
    size_t revocations = churn / 2;
    size_t reissues = churn - revocations;

    // Spread revocations uniformly over the epochs.
    Rng master(seed);
    std::vector<size_t> revoked_per_epoch(static_cast<size_t>(cfg.epoch_count), 0);
    for (size_t i = 0; i < revocations; ++i) {
        ++revoked_per_epoch[static_cast<size_t>(master.below(cfg.epoch_count))];
    }

    UpdateSizeReport rep;
    rep.total_certs = total_certs;
    std::vector<Digest> roots(static_cast<size_t>(cfg.epoch_count));
    std::vector<std::vector<ProofOfInclusion>> per_epoch_pois(
        static_cast<size_t>(cfg.epoch_count));

    // Each epoch tree is independent; build them one at a time per worker so
    // a million-certificate forest never lives in memory at once. Per-epoch
    // generator streams keep the result identical across thread counts.
    detail::parallel_epochs(cfg.epoch_count, [&](int e) {
        Rng rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(e) + 1);
        LookUpTable lut(eh);
        std::vector<Digest> leaves(per_epoch);
        for (auto& leaf : leaves) {
            leaf = rng.digest();
            lut.add_leaf(leaf);
        }
        std::vector<Digest> changed;
        std::vector<bool> removed(per_epoch, false);
        size_t want = std::min(revoked_per_epoch[static_cast<size_t>(e)], per_epoch);
        while (changed.size() < want) {
            size_t i = static_cast<size_t>(rng.below(per_epoch));
            if (removed[i]) continue;
            removed[i] = true;
            lut.remove_leaf(leaves[i]);
            changed.push_back(leaves[i]);
        }
        if (e == cfg.epoch_count - 1) {
            for (size_t i = 0; i < reissues; ++i) {
                Digest fresh = rng.digest();
                lut.add_leaf(fresh);
                changed.push_back(fresh);
            }
        }
        roots[static_cast<size_t>(e)] = lut.root();
        for (const Digest& leaf : changed) {
            per_epoch_pois[static_cast<size_t>(e)].push_back(calc_poi(lut, leaf));
        }
    }, threads);

    CaUpdate upd;
    size_t poi_elements = 0;
    for (int e = 0; e < cfg.epoch_count; ++e) {
        auto& pois = per_epoch_pois[static_cast<size_t>(e)];
        if (pois.empty()) continue;
        upd.changed_roots.emplace_back(static_cast<std::uint16_t>(e),
                                       roots[static_cast<size_t>(e)]);
        for (auto& poi : pois) {
            poi_elements += poi.path.size();
            upd.update_pois.emplace_back(static_cast<std::uint16_t>(e), std::move(poi));
        }
    }
    upd.primer = compute_primer(roots, 1, cfg, eh.hash);
    CryptoSuite suite = stub_suite(seed);
    upd.primer_sig = suite.sign(primer_bytes(upd.primer));
    rep.changed_leaves = upd.update_pois.size();
    rep.ca_update_bytes = encode_ca_update(upd).size();
    rep.avg_poi_elements =
        upd.update_pois.empty() ? 0 : static_cast<double>(poi_elements) / upd.update_pois.size();

    // Weekly epoch change: a full leaf list for the incoming epoch, sized by
    // the expiring share plus the new issuance.
    EpochChangeUpdate ec;
    size_t ec_leaves = per_epoch + static_cast<size_t>(std::llround(
                                       static_cast<double>(total_certs) * weekly_issue_rate));
    ec.leaves.resize(ec_leaves);
    for (auto& leaf : ec.leaves) leaf = master.digest();
    ec.primer = upd.primer;
    ec.primer_sig = upd.primer_sig;
    ec.new_epoch = static_cast<std::uint16_t>(cfg.epoch_count);
    rep.epoch_change_leaves = ec_leaves;
    rep.epoch_change_bytes = encode_epoch_change(ec).size();
    return rep;
}

// ---------------------------------------------------------------------------
// CSV emission: one row per run, stable column order.

inline std::string sim_csv_header() {
    return "seed,nodes,weeks,missing_share,cacher_share,clvl,encounters,revocation_rate,"
           "issue_rate,giveup,failed_repair_share,avg_meets_until_repair,"
           "both_outdated_encounter_share,node_weekly_exchange_bytes,ca_daily_update_bytes,"
           "epoch_change_bytes,episodes_started,resolved_distributed,resolved_self_heal,"
           "resolved_fallback,resolved_other,meetings_total,bytes_contacts,bytes_sync,"
           "bytes_repair,bytes_cache_refresh,bytes_ca_updates,bytes_epoch_change,"
           "bytes_ca_fallback";
}

inline std::string sim_csv_row(const SimMetrics& m) {
    std::ostringstream os;
    os << m.params.rng_seed << ',' << m.params.node_count << ',' << m.params.weeks << ','
       << m.params.missing_share << ',' << m.params.cacher_share << ',' << m.params.clvl << ','
       << m.params.encounters_per_node_per_hour << ',' << m.params.daily_revocation_rate << ','
       << m.params.weekly_issue_rate << ',' << m.params.give_up_threshold << ','
       << m.failed_repair_share << ',' << m.avg_meets_until_repair << ','
       << m.both_outdated_encounter_share << ',' << m.node_weekly_exchange_bytes << ','
       << m.ca_daily_update_bytes << ',' << m.epoch_change_bytes << ',' << m.episodes_started
       << ',' << m.episodes_resolved_distributed << ',' << m.episodes_resolved_self_heal << ','
       << m.episodes_resolved_fallback << ',' << m.episodes_resolved_other << ','
       << m.meetings_total << ',' << m.bytes_contacts << ',' << m.bytes_sync << ','
       << m.bytes_repair << ',' << m.bytes_cache_refresh << ',' << m.bytes_ca_updates << ','
       << m.bytes_epoch_change << ',' << m.bytes_ca_fallback;
    return os.str();
}

}  // namespace vforest

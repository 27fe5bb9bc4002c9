// Acceptance suite: end-to-end checks of the library's load-bearing
// guarantees, one criterion per section, one PASS/FAIL line each. Exits
// nonzero if any criterion fails. Heavy sections parallelize across
// independent trials; every random draw is seeded, so reruns are identical.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vforest/authority.hpp"
#include "vforest/node.hpp"
#include "vforest/sim.hpp"
#include "support/oracle.hpp"
#include "support/testutil.hpp"

using namespace vforest;

namespace {

const EmptyHashes& eh() { return EmptyHashes::standard(); }

struct Outcome {
    bool pass = true;
    std::string detail;
};

using CriterionFn = std::function<Outcome()>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Incremental tree vs. batch rebuild over randomized add/remove sequences,
//    with every final member's proof verifying.

Outcome criterion_smt_oracle() {
    auto t0 = std::chrono::steady_clock::now();
    const int kSequences = 1000;
    std::atomic<int> failures{0};
    std::atomic<long> total_ops{0};

    testutil::parallel_for(kSequences, [&](size_t seq) {
        std::mt19937_64 rng(10000 + seq);
        // Length mixture: mostly short, tail up to the full 4096.
        std::uint64_t pick = rng() % 100;
        int len;
        if (pick < 85) {
            len = 1 + static_cast<int>(rng() % 256);
        } else if (pick < 97) {
            len = 257 + static_cast<int>(rng() % (2048 - 257));
        } else {
            len = 2049 + static_cast<int>(rng() % (4096 - 2049 + 1));
        }
        total_ops += len;

        size_t pool_size = static_cast<size_t>(std::max(8, len / 2));
        auto pool = testutil::random_digests(rng, pool_size);
        std::vector<bool> present(pool_size, false);
        LookUpTable lut(eh());
        Digest root = lut.root();
        for (int op = 0; op < len; ++op) {
            size_t i = rng() % pool_size;
            if (rng() % 10 < 6) {
                root = lut.add_leaf(pool[i]);
                present[i] = true;
            } else {
                root = lut.remove_leaf(pool[i]);
                present[i] = false;
            }
        }
        std::vector<Digest> members;
        for (size_t i = 0; i < pool_size; ++i) {
            if (present[i]) members.push_back(pool[i]);
        }
        if (root != oracle::batch_root(members)) {
            ++failures;
            return;
        }
        for (const auto& m : members) {
            if (!verify_poi(eh(), m, calc_poi(lut, m), root)) {
                ++failures;
                return;
            }
        }
    });

    Outcome out;
    out.pass = failures == 0;
    std::ostringstream os;
    os << kSequences << " sequences, " << total_ops.load() << " ops, " << failures.load()
       << " mismatches, " << seconds_since(t0) << " s (target < 60 s)";
    out.pass = out.pass && seconds_since(t0) < 60.0;
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 2. Blind-update completeness: applying the full set of update proofs for k
//    mutations, in random order, always yields a verifying proof.

Outcome criterion_blind_update() {
    auto t0 = std::chrono::steady_clock::now();
    std::atomic<long> attempts{0};
    std::atomic<long> failures{0};

    testutil::parallel_for(64, [&](size_t idx) {
        int k = static_cast<int>(idx) + 1;
        std::mt19937_64 rng(20000 + k);
        auto leaves = testutil::random_digests(rng, 1024);
        LookUpTable lut(eh());
        for (const auto& l : leaves) lut.add_leaf(l);

        std::vector<bool> mutated(leaves.size(), false);
        std::vector<ProofOfInclusion> stale(200);
        std::vector<size_t> victims(200);
        for (int v = 0; v < 200; ++v) {
            victims[static_cast<size_t>(v)] = rng() % leaves.size();
        }
        for (int v = 0; v < 200; ++v) {
            stale[static_cast<size_t>(v)] =
                calc_poi(lut, leaves[victims[static_cast<size_t>(v)]]);
        }

        // k mutations: alternating revocations of existing leaves and fresh
        // insertions, never touching a victim.
        std::vector<bool> is_victim(leaves.size(), false);
        for (size_t v : victims) is_victim[v] = true;
        std::vector<Digest> changed;
        for (int m = 0; m < k; ++m) {
            if (m % 2 == 0) {
                size_t r;
                do {
                    r = rng() % leaves.size();
                } while (is_victim[r] || mutated[r]);
                mutated[r] = true;
                lut.remove_leaf(leaves[r]);
                changed.push_back(leaves[r]);
            } else {
                Digest fresh = testutil::random_digest(rng);
                lut.add_leaf(fresh);
                changed.push_back(fresh);
            }
        }
        Digest new_root = lut.root();
        std::vector<ProofOfInclusion> updates;
        std::vector<Digest> values;
        for (const auto& c : changed) {
            ProofOfInclusion poi = calc_poi(lut, c);
            auto value = verified_update_value(eh(), poi, new_root);
            if (!value) {
                ++failures;
                return;
            }
            updates.push_back(std::move(poi));
            values.push_back(*value);
        }

        std::vector<size_t> order(updates.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (int v = 0; v < 200; ++v) {
            for (size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng() % i]);
            }
            ProofOfInclusion poi = stale[static_cast<size_t>(v)];
            for (size_t i : order) {
                poi = update_poi_with_poi(eh(), poi, updates[i], values[i]);
            }
            ++attempts;
            if (!verify_poi(eh(), leaves[victims[static_cast<size_t>(v)]], poi, new_root)) {
                ++failures;
            }
        }
    });

    Outcome out;
    out.pass = failures == 0;
    std::ostringstream os;
    os << attempts.load() << " victim repairs over k=1..64, " << failures.load()
       << " failures (100% success required), " << seconds_since(t0) << " s";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 3. Level-cache correctness: cacher caches track the authority byte for
//    byte, and cache repair succeeds exactly when no miss shares the
//    victim's part.

Outcome criterion_level_cache() {
    auto t0 = std::chrono::steady_clock::now();
    long stream_checks = 0, stream_mismatches = 0;
    long iff_checks = 0, iff_violations = 0;

    // Byte-equality under random update streams.
    for (int clvl : {4, 5, 6, 7}) {
        std::mt19937_64 rng(30000 + clvl);
        auto leaves = testutil::random_digests(rng, 200);
        LookUpTable lut(eh());
        for (const auto& l : leaves) lut.add_leaf(l);
        LevelCache cache = construct_lvl_cache(lut, clvl);
        for (int step = 0; step < 40; ++step) {
            Digest leaf;
            Digest value;
            if (rng() % 2 && step < 35) {
                leaf = leaves[rng() % leaves.size()];
                if (!lut.has_leaf(leaf)) continue;
                lut.remove_leaf(leaf);
                value = eh().levels[kTreeDepth];
            } else {
                leaf = testutil::random_digest(rng);
                lut.add_leaf(leaf);
                value = leaf;
            }
            update_lvl_cache_with_poi(eh(), cache, calc_poi(lut, leaf), value);
            ++stream_checks;
            if (!(cache == construct_lvl_cache(lut, clvl))) ++stream_mismatches;
        }
    }

    // Exhaustive single-miss placement at clvl = 4 over a 64-leaf tree.
    {
        const int clvl = 4;
        std::mt19937_64 rng(31000);
        auto leaves = testutil::random_digests(rng, 64);
        LookUpTable lut(eh());
        for (const auto& l : leaves) lut.add_leaf(l);
        for (size_t v = 0; v < leaves.size(); ++v) {
            ProofOfInclusion stale = calc_poi(lut, leaves[v]);
            for (size_t miss = 0; miss < leaves.size(); ++miss) {
                if (miss == v) continue;
                Digest new_root = lut.remove_leaf(leaves[miss]);
                LevelCache lc = construct_lvl_cache(lut, clvl);
                ProofOfInclusion repaired = update_poi_with_lvl_cache(eh(), stale, lc);
                bool repaired_ok = verify_poi(eh(), leaves[v], repaired, new_root);
                bool different_part =
                    leaves[v].top_bits(clvl) != leaves[miss].top_bits(clvl);
                ++iff_checks;
                if (repaired_ok != different_part) ++iff_violations;
                lut.add_leaf(leaves[miss]);
            }
        }

        // Sampled multi-miss subsets at the same level.
        for (int k : {2, 3, 5}) {
            for (int trial = 0; trial < 300; ++trial) {
                size_t v = rng() % leaves.size();
                ProofOfInclusion stale = calc_poi(lut, leaves[v]);
                std::vector<size_t> misses;
                while (static_cast<int>(misses.size()) < k) {
                    size_t m = rng() % leaves.size();
                    if (m == v) continue;
                    bool dup = false;
                    for (size_t e : misses) dup |= (e == m);
                    if (!dup) misses.push_back(m);
                }
                bool same_part = false;
                for (size_t m : misses) {
                    lut.remove_leaf(leaves[m]);
                    same_part |= leaves[m].top_bits(clvl) == leaves[v].top_bits(clvl);
                }
                Digest new_root = lut.root();
                LevelCache lc = construct_lvl_cache(lut, clvl);
                ProofOfInclusion repaired = update_poi_with_lvl_cache(eh(), stale, lc);
                bool repaired_ok = verify_poi(eh(), leaves[v], repaired, new_root);
                ++iff_checks;
                if (repaired_ok != !same_part) ++iff_violations;
                for (size_t m : misses) lut.add_leaf(leaves[m]);
            }
        }
    }

    Outcome out;
    out.pass = stream_mismatches == 0 && iff_violations == 0;
    std::ostringstream os;
    os << stream_checks << " stream updates byte-checked (" << stream_mismatches
       << " mismatches); " << iff_checks << " repair-iff placements (" << iff_violations
       << " violations), " << seconds_since(t0) << " s";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 4. Cache-failure closed form 1 - (1 - 2^-clvl)^m against Monte-Carlo.

Outcome criterion_lc_closed_form() {
    auto t0 = std::chrono::steady_clock::now();
    const int kTrials = 100000;
    int combos = 0, outside = 0;
    double worst_sigma = 0;
    for (int clvl = 4; clvl <= 10; ++clvl) {
        for (int m : {1, 2, 4, 8, 16, 32, 64}) {
            double p = lc_fail_probability(clvl, m);
            auto mc = lc_fail_monte_carlo(clvl, m, kTrials,
                                          7000 + static_cast<std::uint64_t>(clvl) * 100 + m);
            double sigma = std::sqrt(p * (1 - p) / kTrials);
            double dev = std::fabs(mc.fail_rate - p) / sigma;
            worst_sigma = std::max(worst_sigma, dev);
            ++combos;
            if (dev > 3.0) ++outside;
        }
    }
    bool m0_zero = lc_fail_probability(7, 0) == 0.0;
    bool target13 = max_missable_updates(7, 0.10) == 13;

    Outcome out;
    out.pass = outside == 0 && m0_zero && target13;
    std::ostringstream os;
    os << combos << " (clvl, m) combos, worst |dev| = " << worst_sigma << " sigma, " << outside
       << " outside 3 sigma; clvl=7 @ 10% target -> max m = " << max_missable_updates(7, 0.10)
       << " (want 13), " << seconds_since(t0) << " s";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 5. Direct-repair statistics are monotone in the number of missed updates.

Outcome criterion_direct_repair_trends() {
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> ms{1, 2, 4, 8, 16, 32};
    std::vector<DirectRepairStats> stats(ms.size());
    testutil::parallel_for(ms.size(), [&](size_t i) {
        stats[i] = run_direct_repair_analysis(10000, ms[i], 1000, 100,
                                              3000 + static_cast<std::uint64_t>(ms[i]));
    });

    auto rate_sigma = [](double p, int n) {
        double s = std::sqrt(std::max(p * (1 - p), 1e-6) / n);
        return s;
    };
    struct Series {
        const char* name;
        std::vector<double> value, sigma;
    };
    std::vector<Series> series(4);
    series[0].name = "first_fail";
    series[1].name = "first10_fail";
    series[2].name = "fail";
    series[3].name = "avg_tries";
    for (size_t i = 0; i < ms.size(); ++i) {
        const auto& s = stats[i];
        series[0].value.push_back(s.first_fail_rate);
        series[0].sigma.push_back(rate_sigma(s.first_fail_rate, s.trials));
        series[1].value.push_back(s.first10_fail_rate);
        series[1].sigma.push_back(rate_sigma(s.first10_fail_rate, s.trials));
        series[2].value.push_back(s.fail_rate);
        series[2].sigma.push_back(rate_sigma(s.fail_rate, s.trials));
        series[3].value.push_back(s.avg_tries);
        series[3].sigma.push_back(std::max(s.avg_tries_std_error, 1e-6));
    }

    bool all_ok = true;
    std::ostringstream os;
    for (const auto& s : series) {
        int inversions = 0;
        bool severe = false;
        for (size_t i = 1; i < s.value.size(); ++i) {
            if (s.value[i] < s.value[i - 1]) {
                ++inversions;
                double combined =
                    std::sqrt(s.sigma[i] * s.sigma[i] + s.sigma[i - 1] * s.sigma[i - 1]);
                if (s.value[i] < s.value[i - 1] - combined) severe = true;
            }
        }
        bool ok = inversions <= 1 && !severe;
        all_ok = all_ok && ok;
        os << s.name << "(";
        for (size_t i = 0; i < s.value.size(); ++i) os << (i ? " " : "") << s.value[i];
        os << (ok ? ") ok; " : ") VIOLATED; ");
    }
    os << seconds_since(t0) << " s";

    Outcome out;
    out.pass = all_ok;
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 6. Large-scale simulation at desk scale: repair nearly always succeeds
//    without falling back to the authority.

Outcome criterion_epidemic_sim() {
    auto t0 = std::chrono::steady_clock::now();
    struct Run {
        double missing;
        std::uint64_t seed;
        SimMetrics m;
        double secs = 0;
    };
    std::vector<Run> runs;
    for (double missing : {0.1, 0.3, 0.5}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) runs.push_back({missing, seed, {}, 0});
    }
    testutil::parallel_for(runs.size(), [&](size_t i) {
        auto rt = std::chrono::steady_clock::now();
        SimParams p;
        p.node_count = 10000;
        p.weeks = 4;
        p.missing_share = runs[i].missing;
        p.rng_seed = runs[i].seed;
        runs[i].m = run_epidemic_sim(p);
        runs[i].secs = seconds_since(rt);
    }, 2);

    bool pass = true;
    std::ostringstream os;
    double worst_run_secs = 0;
    for (const auto& r : runs) {
        bool ok = true;
        if (r.missing == 0.5) {
            ok = ok && r.m.failed_repair_share < 0.10;
            ok = ok && r.m.both_outdated_encounter_share < 0.08;
        }
        ok = ok && r.m.avg_meets_until_repair >= 6.0 && r.m.avg_meets_until_repair <= 13.0;
        pass = pass && ok;
        worst_run_secs = std::max(worst_run_secs, r.secs);
        os << "\n      missing=" << r.missing << " seed=" << r.seed
           << ": failed_share=" << r.m.failed_repair_share
           << " avg_meets=" << r.m.avg_meets_until_repair
           << " both_outdated=" << r.m.both_outdated_encounter_share
           << " fallbacks=" << r.m.episodes_resolved_fallback << "/"
           << r.m.episodes_started << " (" << r.secs << " s)" << (ok ? "" : "  <-- FAIL");
    }
    os << "\n      worst run " << worst_run_secs << " s (target < 600 s), total "
       << seconds_since(t0) << " s";
    Outcome out;
    out.pass = pass && worst_run_secs < 600.0;
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 7. Message sizes, bit-exact where fixed.

Outcome criterion_message_sizes() {
    auto t0 = std::chrono::steady_clock::now();
    EpochConfig cfg;
    CryptoSuite suite = stub_suite(7);
    std::uint64_t start = std::uint64_t(2800) * cfg.epoch_duration;
    ProtocolEnv env{cfg, &eh(), suite.verify, 30};

    bool pass = true;
    std::ostringstream os;

    CertificateAuthority ca(cfg, suite, start);
    std::mt19937_64 rng(70);
    std::uint64_t clock = start;
    auto enroll = [&](std::uint32_t epoch) {
        Digest cert = testutil::random_digest(rng);
        ca.issue_certificate(cert, std::uint64_t(epoch) * cfg.epoch_duration + 100);
        return cert;
    };

    // Primer and contact sizes.
    size_t primer_size = encode_primer(ca.current_primer()).size();
    pass = pass && primer_size == 50;
    Digest second = enroll(2850);
    Digest middle = enroll(2825);
    Digest mine = enroll(2810);
    ca.build_update(clock += 60);
    NodeState stale;
    stale.cert_hash = mine;
    stale.epoch = 2810;
    stale.has_certificate = true;
    stale.vf = ca.forest();
    stale.own_poi = calc_poi(ca.epoch_lut(2810), mine);
    recheck_own_poi(stale, env);
    size_t contact_size = encode_contact(make_contact_message(stale, env)).size();
    pass = pass && contact_size == 115;

    // The two-change scenario: second-newest epoch and age 26.
    ca.revoke(second);
    ca.revoke(middle);
    ca.build_update(clock += 60);
    Digest donor_cert = enroll(2820);
    ca.build_update(clock += 60);
    NodeState fresh;
    fresh.cert_hash = donor_cert;
    fresh.epoch = 2820;
    fresh.has_certificate = true;
    fresh.vf = ca.forest();
    fresh.own_poi = calc_poi(ca.epoch_lut(2820), donor_cert);
    recheck_own_poi(fresh, env);

    ContactActions act = on_contact(stale, make_contact_message(fresh, env), env);
    bool slots_ok = act.parity_request == std::vector<int>{1, 4};
    SessionResult res = run_contact_session(stale, fresh, env);
    int follow_up = 50 + 64 + 32 * res.roots_transferred;
    pass = pass && slots_ok && res.roots_transferred == 11 && follow_up == 466;
    os << "primer=" << primer_size << "B contact=" << contact_size
       << "B; scenario slots {1,4}: " << (slots_ok ? "yes" : "NO") << ", roots="
       << res.roots_transferred << ", follow-up=" << follow_up << "B (want 466)";

    // Fallback response under 1KB for a 19,230-leaf epoch.
    {
        std::mt19937_64 rng2(71);
        LookUpTable lut(eh());
        auto leaves = testutil::random_digests(rng2, 19230);
        for (const auto& l : leaves) lut.add_leaf(l);
        size_t worst = 0;
        for (const auto& l : leaves) {
            ProofOfInclusion poi = calc_poi(lut, l);
            worst = std::max(worst, poi_wire_size(poi) + 50 + 64);
        }
        pass = pass && worst < 1024;
        os << "; worst fallback response over 19230 leaves = " << worst << "B (want < 1024)";
    }
    os << ", " << seconds_since(t0) << " s";

    Outcome out;
    out.pass = pass;
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 8. Update sizes at a million certificates, measured from real encodings.

Outcome criterion_update_sizes() {
    auto t0 = std::chrono::steady_clock::now();
    EpochConfig cfg;
    UpdateSizeReport rep = measure_ca_update_sizes(1000000, 0.00056, 0.001, cfg, 8);

    bool update_in_range = rep.ca_update_bytes >= 150000 && rep.ca_update_bytes <= 400000;
    double ec_target = 629800.0;
    double ec_dev = std::fabs(static_cast<double>(rep.epoch_change_bytes) - ec_target) / ec_target;
    bool ec_ok = ec_dev <= 0.15;

    Outcome out;
    out.pass = update_in_range && ec_ok;
    std::ostringstream os;
    os << "daily update = " << rep.ca_update_bytes << "B (" << rep.changed_leaves
       << " proofs, avg " << rep.avg_poi_elements
       << " elements each; unaggregated, want 150000..400000); epoch change = "
       << rep.epoch_change_bytes << "B for " << rep.epoch_change_leaves
       << " leaves (dev " << ec_dev * 100 << "% of 629800B, want <= 15%), "
       << seconds_since(t0) << " s";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 9. Security negatives: forged roots, replays, tampered repair material and
//    half-repairs are rejected every single time.

Outcome criterion_security_negatives() {
    auto t0 = std::chrono::steady_clock::now();
    EpochConfig cfg;
    CryptoSuite suite = stub_suite(9);
    ProtocolEnv env{cfg, &eh(), suite.verify, 1 << 30};
    std::mt19937_64 rng(90);
    const int kAttempts = 10000;

    long forged_accepted = 0, replay_accepted = 0, tamper_committed = 0, half_committed = 0;

    // Forged epoch roots.
    {
        ValidationForest vf = make_empty_forest(3000, cfg, eh());
        vf.roots = testutil::random_digests(rng, static_cast<size_t>(cfg.epoch_count));
        vf.primer = compute_primer(vf.roots, 3000u * cfg.epoch_duration + 1, cfg);
        vf.primer_sig = suite.sign(primer_bytes(vf.primer));
        for (int i = 0; i < kAttempts; ++i) {
            auto roots = vf.roots;
            size_t epoch_idx = rng() % roots.size();
            roots[epoch_idx] = testutil::random_digest(rng);
            Primer genuine = compute_primer(roots, vf.primer.timestamp + 1 + (i % 7), cfg);
            Signature sig = suite.sign(primer_bytes(genuine));
            std::vector<std::pair<std::uint32_t, Digest>> updates{
                {vf.base_epoch + static_cast<std::uint32_t>(epoch_idx), roots[epoch_idx]}};
            // The adversary flips a bit somewhere in the root it relays.
            updates[0].second.b[rng() % 32] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
            auto before_roots = vf.roots;
            Primer before_primer = vf.primer;
            try {
                apply_root_updates(vf, updates, genuine, sig, suite.verify, cfg, eh());
                ++forged_accepted;
            } catch (const InconsistentUpdateError&) {
            }
            if (!(vf.roots == before_roots) || !(vf.primer == before_primer)) ++forged_accepted;
        }
    }

    // Replayed old primers.
    {
        ValidationForest vf = make_empty_forest(3000, cfg, eh());
        vf.roots = testutil::random_digests(rng, static_cast<size_t>(cfg.epoch_count));
        std::uint32_t ts0 = 3000u * cfg.epoch_duration + 1000;
        // A history of genuine primers the node has moved past.
        std::vector<std::pair<Primer, Signature>> history;
        for (int i = 0; i < 50; ++i) {
            Primer p = compute_primer(vf.roots, ts0 + static_cast<std::uint32_t>(i), cfg);
            history.emplace_back(p, suite.sign(primer_bytes(p)));
        }
        vf.primer = history.back().first;
        vf.primer_sig = history.back().second;
        for (int i = 0; i < kAttempts; ++i) {
            const auto& [old_primer, old_sig] = history[rng() % (history.size() - 1)];
            try {
                apply_root_updates(vf, {}, old_primer, old_sig, suite.verify, cfg, eh());
                ++replay_accepted;
            } catch (const ReplayError&) {
            }
            if (vf.primer.timestamp != ts0 + 49) ++replay_accepted;
        }
    }

    // Tampered repair proofs never touch the committed state.
    {
        std::uint64_t start = std::uint64_t(3100) * cfg.epoch_duration;
        CertificateAuthority ca(cfg, suite, start);
        std::uint32_t epoch = 3130;
        Digest mine = testutil::random_digest(rng);
        ca.issue_certificate(mine, std::uint64_t(epoch) * cfg.epoch_duration + 5);
        Digest near = mine;
        near.b[31] ^= 1;
        ca.issue_certificate(near, std::uint64_t(epoch) * cfg.epoch_duration + 6);
        Digest peer_cert = testutil::random_digest(rng);
        ca.issue_certificate(peer_cert, std::uint64_t(epoch) * cfg.epoch_duration + 7);
        ca.build_update(start + 10);
        NodeState me;
        me.cert_hash = mine;
        me.epoch = epoch;
        me.has_certificate = true;
        me.vf = ca.forest();
        me.own_poi = calc_poi(ca.epoch_lut(epoch), mine);
        recheck_own_poi(me, env);
        ca.revoke(near);
        ca.build_update(start + 20);
        // Sync the forest but keep the stale proof.
        me.vf = ca.forest();
        recheck_own_poi(me, env);
        ProofOfInclusion fresh_peer = calc_poi(ca.epoch_lut(epoch), peer_cert);
        std::vector<std::uint8_t> wire = encode_poi(fresh_peer);
        ProofOfInclusion committed = me.own_poi;
        int counter = me.failed_repair_meets;
        for (int i = 0; i < kAttempts; ++i) {
            auto tampered = wire;
            tampered[rng() % tampered.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
            try {
                ProofOfInclusion poi = decode_poi(tampered);
                RepairOutcome o = try_direct_repair(me, poi, env);
                if (o == RepairOutcome::kRepaired) ++tamper_committed;
            } catch (const DecodeError&) {
            }
            if (!(me.own_poi == committed) || me.own_poi_valid ||
                me.failed_repair_meets != counter) {
                ++tamper_committed;
                committed = me.own_poi;
                counter = me.failed_repair_meets;
            }
        }

        // Half-repairs: same-part cache repairs fail verification and must
        // never replace the committed proof.
        NodeState cacher;
        cacher.is_cacher = true;
        cacher.vf = ca.forest();
        cacher.caches.resize(static_cast<size_t>(cfg.epoch_count));
        cacher.cache_fresh.assign(static_cast<size_t>(cfg.epoch_count), false);
        size_t idx = epoch - cacher.vf.base_epoch;
        cacher.caches[idx] = construct_lvl_cache(ca.epoch_lut(epoch), 7, epoch);
        cacher.cache_fresh[idx] = true;
        for (int i = 0; i < kAttempts; ++i) {
            auto served = serve_lc_repair(cacher, me.own_poi, epoch, env);
            if (!served) {
                ++half_committed;
                continue;
            }
            RepairOutcome o = apply_lc_repair_result(me, *served, env);
            if (o == RepairOutcome::kRepaired || me.own_poi_valid ||
                !(me.own_poi == committed)) {
                ++half_committed;
            }
            me.failed_repair_meets = 0;  // keep the give-up path out of the loop
        }
    }

    Outcome out;
    out.pass = forged_accepted == 0 && replay_accepted == 0 && tamper_committed == 0 &&
               half_committed == 0;
    std::ostringstream os;
    os << kAttempts << " attempts each: forged-root accepted " << forged_accepted
       << ", replay accepted " << replay_accepted << ", tampered repair committed "
       << tamper_committed << ", half-repair committed " << half_committed << ", "
       << seconds_since(t0) << " s";
    out.detail = os.str();
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc > 1) only = std::atoi(argv[1]);

    struct Entry {
        int id;
        const char* name;
        CriterionFn fn;
    };
    std::vector<Entry> entries{
        {1, "tree/batch-rebuild equivalence", criterion_smt_oracle},
        {2, "blind-update completeness", criterion_blind_update},
        {3, "level-cache correctness", criterion_level_cache},
        {4, "cache-failure closed form", criterion_lc_closed_form},
        {5, "direct-repair trend monotonicity", criterion_direct_repair_trends},
        {6, "epidemic simulation at desk scale", criterion_epidemic_sim},
        {7, "message sizes", criterion_message_sizes},
        {8, "authority update sizes at 1M certificates", criterion_update_sizes},
        {9, "security negative tests", criterion_security_negatives},
    };

    int failures = 0;
    for (const auto& e : entries) {
        if (only != 0 && e.id != only) continue;
        Outcome o = e.fn();
        std::printf("[%s] %d. %s: %s\n", o.pass ? "PASS" : "FAIL", e.id, e.name,
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}

// Command-line front end: run the epidemic simulation, the repair analyses,
// or a scripted end-to-end demo of the protocol.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "vforest/authority.hpp"
#include "vforest/node.hpp"
#include "vforest/sim.hpp"

using namespace vforest;
using nlohmann::json;

namespace {

json params_json(const SimParams& p) {
    return json{{"nodes", p.node_count},
                {"weeks", p.weeks},
                {"missing", p.missing_share},
                {"cachers", p.cacher_share},
                {"clvl", p.clvl},
                {"encounters", p.encounters_per_node_per_hour},
                {"revocation_rate", p.daily_revocation_rate},
                {"issue_rate", p.weekly_issue_rate},
                {"giveup", p.give_up_threshold},
                {"seed", p.rng_seed}};
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    f << text;
}

int cmd_simulate(const SimParams& params, const std::string& out, const std::string& format) {
    std::fprintf(stderr, "# simulate %s\n", params_json(params).dump().c_str());
    SimMetrics m = run_epidemic_sim(params);
    if (format == "csv") {
        std::ostringstream os;
        os << sim_csv_header() << "\n" << sim_csv_row(m) << "\n";
        write_output(out, os.str());
    } else {
        json days = json::array();
        for (const auto& d : m.days) {
            days.push_back({{"day", d.day},
                            {"ca_update_bytes", d.ca_update_bytes},
                            {"epoch_change_bytes", d.epoch_change_bytes},
                            {"node_exchange_bytes", d.node_exchange_bytes},
                            {"meetings", d.meetings},
                            {"both_outdated_meetings", d.both_outdated_meetings},
                            {"episodes_started", d.episodes_started},
                            {"resolved_distributed", d.resolved_distributed},
                            {"resolved_self_heal", d.resolved_self_heal},
                            {"resolved_fallback", d.resolved_fallback},
                            {"outdated_share_after_update", d.outdated_share_end}});
        }
        json j{{"params", params_json(m.params)},
               {"failed_repair_share", m.failed_repair_share},
               {"avg_meets_until_repair", m.avg_meets_until_repair},
               {"both_outdated_encounter_share", m.both_outdated_encounter_share},
               {"node_weekly_exchange_bytes", m.node_weekly_exchange_bytes},
               {"ca_daily_update_bytes", m.ca_daily_update_bytes},
               {"epoch_change_bytes", m.epoch_change_bytes},
               {"episodes",
                {{"started", m.episodes_started},
                 {"resolved_distributed", m.episodes_resolved_distributed},
                 {"resolved_self_heal", m.episodes_resolved_self_heal},
                 {"resolved_fallback", m.episodes_resolved_fallback},
                 {"resolved_other", m.episodes_resolved_other}}},
               {"traffic_bytes",
                {{"contacts", m.bytes_contacts},
                 {"sync", m.bytes_sync},
                 {"repair", m.bytes_repair},
                 {"cache_refresh", m.bytes_cache_refresh},
                 {"ca_updates", m.bytes_ca_updates},
                 {"epoch_change", m.bytes_epoch_change},
                 {"ca_fallback", m.bytes_ca_fallback}}},
               {"days", days}};
        write_output(out, j.dump(2) + "\n");
    }
    return 0;
}

int cmd_analyze_direct(int leaves, int trials, int give_up, std::uint64_t seed,
                       const std::string& out, const std::string& format) {
    std::fprintf(stderr, "# analyze-direct leaves=%d trials=%d giveup=%d seed=%llu\n", leaves,
                 trials, give_up, static_cast<unsigned long long>(seed));
    std::vector<int> ms{1, 2, 4, 8, 16, 32, 64};
    std::ostringstream csv;
    csv << "missed_updates,first_fail_rate,first10_fail_rate,fail_rate,avg_tries\n";
    json rows = json::array();
    for (int m : ms) {
        DirectRepairStats st = run_direct_repair_analysis(leaves, m, trials, give_up,
                                                          seed + static_cast<std::uint64_t>(m));
        csv << m << ',' << st.first_fail_rate << ',' << st.first10_fail_rate << ','
            << st.fail_rate << ',' << st.avg_tries << "\n";
        rows.push_back({{"missed_updates", m},
                        {"first_fail_rate", st.first_fail_rate},
                        {"first10_fail_rate", st.first10_fail_rate},
                        {"fail_rate", st.fail_rate},
                        {"avg_tries", st.avg_tries}});
        std::fprintf(stderr, "  m=%-3d first=%.4f first10=%.4f fail=%.4f avg_tries=%.2f\n", m,
                     st.first_fail_rate, st.first10_fail_rate, st.fail_rate, st.avg_tries);
    }
    if (format == "csv") {
        write_output(out, csv.str());
    } else {
        json j{{"leaves", leaves}, {"trials", trials}, {"giveup", give_up}, {"seed", seed},
               {"series", rows}};
        write_output(out, j.dump(2) + "\n");
    }
    return 0;
}

int cmd_analyze_lc(int clvl, double target, const std::string& out, const std::string& format) {
    std::fprintf(stderr, "# analyze-lc clvl=%d target=%.4f\n", clvl, target);
    std::ostringstream csv;
    csv << "clvl,missed_updates,fail_probability,storage_bytes_per_epoch\n";
    json rows = json::array();
    for (int m : {0, 1, 2, 4, 8, 13, 16, 32, 64}) {
        double p = lc_fail_probability(clvl, m);
        csv << clvl << ',' << m << ',' << p << ',' << (size_t{32} << clvl) << "\n";
        rows.push_back({{"missed_updates", m}, {"fail_probability", p}});
    }
    int max_m = max_missable_updates(clvl, target);
    std::printf("clvl=%d: up to %d missed updates stay under a %.1f%% failure probability\n",
                clvl, max_m, target * 100);
    std::printf("storage: %zu bytes per epoch\n", size_t{32} << clvl);
    if (format == "csv") {
        write_output(out, csv.str());
    } else {
        json j{{"clvl", clvl},
               {"target", target},
               {"max_missable", max_m},
               {"storage_bytes_per_epoch", size_t{32} << clvl},
               {"series", rows}};
        write_output(out, j.dump(2) + "\n");
    }
    return 0;
}

// Scripted walk through the whole protocol with real ECDSA signatures,
// printing every message size along the way.
int cmd_demo(std::uint64_t seed) {
    EpochConfig cfg;
    const EmptyHashes& eh = EmptyHashes::standard();
    CryptoSuite suite = ecdsa_p256_suite();
    ProtocolEnv env{cfg, &eh, suite.verify, 30};
    Rng rng(seed);
    std::uint64_t t = std::uint64_t(2800) * cfg.epoch_duration;

    std::printf("== issuance ==\n");
    CertificateAuthority ca(cfg, suite, t);
    std::uint32_t epoch = ca.base_epoch() + 20;
    auto issue = [&](const char* who) {
        Digest cert = rng.digest();
        ca.issue_certificate(cert, std::uint64_t(epoch) * cfg.epoch_duration + rng.below(1000));
        std::printf("  issued certificate %s... (%s)\n", to_hex(cert).substr(0, 16).c_str(), who);
        return cert;
    };
    Digest alice = issue("alice");
    Digest bob = issue("bob");
    Digest carol = issue("carol");
    Digest cacher_cert = issue("cacher");
    for (int i = 0; i < 60; ++i) {
        Digest c = rng.digest();
        ca.issue_certificate(c, std::uint64_t(epoch) * cfg.epoch_duration + 2000 + i);
    }
    CaUpdate initial = ca.build_update(t += 60);
    std::printf("  enrollment update: %zu bytes (%zu proofs)\n",
                encode_ca_update(initial).size(), initial.update_pois.size());
    std::printf("  primer: %zu bytes, signature: 64 bytes\n",
                encode_primer(ca.current_primer()).size());

    auto make_node = [&](const Digest& cert, bool cacher) {
        NodeState s;
        s.cert_hash = cert;
        s.epoch = epoch;
        s.has_certificate = true;
        s.vf = ca.forest();
        s.own_poi = calc_poi(ca.epoch_lut(epoch), cert);
        s.is_cacher = cacher;
        if (cacher) {
            size_t n = static_cast<size_t>(cfg.epoch_count);
            s.caches.resize(n);
            s.cache_fresh.assign(n, false);
            for (size_t i = 0; i < n; ++i) {
                std::uint32_t e = ca.base_epoch() + static_cast<std::uint32_t>(i);
                s.caches[i] = construct_lvl_cache(ca.epoch_lut(e), 7, e);
                s.cache_fresh[i] = true;
            }
        }
        recheck_own_poi(s, env);
        return s;
    };
    NodeState node_a = make_node(alice, false);
    NodeState node_b = make_node(bob, false);
    NodeState node_k = make_node(cacher_cert, true);
    std::printf("  alice proof: %zu bytes (%zu path elements)\n",
                poi_wire_size(node_a.own_poi), node_a.own_poi.path.size());

    std::printf("== revocation and daily update ==\n");
    ca.revoke(carol);
    CaUpdate upd = ca.build_update(t += 86400);
    std::printf("  revoked carol; update: %zu bytes (%zu roots, %zu proofs)\n",
                encode_ca_update(upd).size(), upd.changed_roots.size(), upd.update_pois.size());

    std::printf("== bob receives the update, alice and the cacher miss it ==\n");
    apply_ca_update(node_b, upd, env);
    std::printf("  bob's proof valid: %s; alice still carries the old forest\n",
                node_b.own_poi_valid ? "yes" : "no");

    std::printf("== contact: primer exchange ==\n");
    ContactMessage ma = make_contact_message(node_a, env);
    ContactMessage mb = make_contact_message(node_b, env);
    std::printf("  contact message: %zu bytes each (two exchanged, %zu total)\n",
                encode_contact(ma).size(), 2 * encode_contact(mb).size());
    SessionResult s1 = run_contact_session(node_a, node_b, env);
    std::printf("  alice was stale: parity request %zu bytes, root response %zu bytes "
                "(%d roots)\n",
                parity_request_wire_size(s1.slots_requested.size()),
                root_response_wire_size(cfg, static_cast<size_t>(s1.roots_transferred)),
                s1.roots_transferred);
    std::printf("  direct repair during the session: %s\n",
                s1.repair_a && *s1.repair_a == RepairOutcome::kRepaired ? "repaired"
                                                                        : "not repaired yet");
    std::printf("  alice proof now valid: %s\n", node_a.own_poi_valid ? "yes" : "no");

    std::printf("== cache repair ==\n");
    ca.revoke(bob);
    CaUpdate upd2 = ca.build_update(t += 86400);
    apply_ca_update(node_k, upd2, env);
    std::printf("  revoked bob; cacher applied the update (cache fresh: %s)\n",
                all_caches_fresh(node_k) ? "yes" : "no");
    SessionResult s2 = run_contact_session(node_a, node_k, env);
    std::printf("  alice -> cacher session: repair bytes %llu, outcome %s\n",
                static_cast<unsigned long long>(s2.bytes.repair),
                s2.repair_a && *s2.repair_a == RepairOutcome::kRepaired ? "repaired" : "failed");

    std::printf("== give-up fallback ==\n");
    CaPoiResponse resp = ca.answer_poi_request(alice);
    std::printf("  request: 32 bytes, response: %zu bytes (< 1KB)\n",
                encode_ca_poi_response(resp).size());
    apply_ca_poi_response(node_a, resp, env);
    std::printf("  alice proof valid after fallback: %s\n", node_a.own_poi_valid ? "yes" : "no");

    std::printf("== epoch change ==\n");
    Digest next_cert = rng.digest();
    ca.stage_certificate(next_cert,
                         std::uint64_t(ca.newest_epoch() + 1) * cfg.epoch_duration + 17);
    EpochChangeUpdate ec = ca.epoch_change(t = std::uint64_t(2801) * cfg.epoch_duration);
    std::printf("  epoch change update: %zu bytes (%zu leaves)\n", encode_epoch_change(ec).size(),
                ec.leaves.size());
    std::printf("done; seed was %llu\n", static_cast<unsigned long long>(seed));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"validation-forest certificate validation toolkit"};
    app.require_subcommand(1);

    SimParams params;
    std::string out;
    std::string format = "csv";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", params.rng_seed, "deterministic run seed");
        cmd->add_option("--out", out, "output path ('-' for stdout)");
        cmd->add_option("--format", format, "output format")
            ->check(CLI::IsMember({"csv", "json"}));
    };

    CLI::App* sim = app.add_subcommand("simulate", "run the epidemic dissemination simulation");
    sim->add_option("--nodes", params.node_count, "number of nodes")->check(CLI::Range(100, 1000000));
    sim->add_option("--weeks", params.weeks, "simulated weeks");
    sim->add_option("--missing", params.missing_share, "share of nodes missing each update")
        ->check(CLI::Range(0.0, 1.0));
    sim->add_option("--cachers", params.cacher_share, "share of cacher nodes")
        ->check(CLI::Range(0.0, 1.0));
    sim->add_option("--clvl", params.clvl, "cache level")->check(CLI::Range(1, 16));
    sim->add_option("--encounters", params.encounters_per_node_per_hour,
                    "meetings each node initiates per hour");
    sim->add_option("--revocation-rate", params.daily_revocation_rate,
                    "daily revocation share of active certificates")
        ->check(CLI::Range(0.0, 1.0));
    sim->add_option("--issue-rate", params.weekly_issue_rate, "weekly new-certificate share")
        ->check(CLI::Range(0.0, 1.0));
    sim->add_option("--giveup", params.give_up_threshold,
                    "failed repair attempts before asking the authority");
    add_common(sim);

    int leaves = 10000, trials = 1000, give_up = 100;
    CLI::App* ad = app.add_subcommand("analyze-direct",
                                      "repair success statistics for random fresh proofs");
    ad->add_option("--leaves", leaves, "tree size");
    ad->add_option("--trials", trials, "trials per missed-update count");
    ad->add_option("--giveup", give_up, "proofs tried before giving up");
    add_common(ad);

    int clvl = 7;
    double target = 0.10;
    CLI::App* al = app.add_subcommand("analyze-lc", "cache-level failure model");
    al->add_option("--clvl", clvl, "cache level")->check(CLI::Range(1, 16));
    al->add_option("--target", target, "target failure probability")->check(CLI::Range(0.0, 1.0));
    add_common(al);

    CLI::App* demo = app.add_subcommand("demo", "walk the full protocol once, printing sizes");
    demo->add_option("--seed", params.rng_seed, "deterministic run seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(params, out, format);
        if (ad->parsed()) return cmd_analyze_direct(leaves, trials, give_up, params.rng_seed, out, format);
        if (al->parsed()) return cmd_analyze_lc(clvl, target, out, format);
        if (demo->parsed()) return cmd_demo(params.rng_seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

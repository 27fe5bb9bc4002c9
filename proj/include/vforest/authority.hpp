#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vforest/forest.hpp"
#include "vforest/hash_tree.hpp"
#include "vforest/wire.hpp"

namespace vforest {

struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CertificateRecord {
    enum class Status { kActive, kRevoked, kExpired };
    Digest cert_hash;
    std::uint64_t expiry = 0;
    std::uint32_t epoch = 0;
    Status status = Status::kActive;
};

struct RequestRefused : std::runtime_error {
    CertificateRecord::Status status;
    RequestRefused(const char* what, CertificateRecord::Status st)
        : std::runtime_error(what), status(st) {}
};

/// The certificate authority: the registry, one incrementally maintained
/// tree per window epoch, and the update construction around them. State is
/// single-writer; update construction is atomic with respect to mutations.
class CertificateAuthority {
public:
    CertificateAuthority(EpochConfig cfg, CryptoSuite suite, std::uint64_t now,
                         const EmptyHashes& eh = EmptyHashes::standard())
        : cfg_(cfg), suite_(std::move(suite)), eh_(&eh) {
        vf_.base_epoch = epoch_index(now, cfg_);
        vf_.roots.assign(static_cast<size_t>(cfg_.epoch_count), eh_->levels[0]);
        luts_.assign(static_cast<size_t>(cfg_.epoch_count), LookUpTable(*eh_));
        members_.assign(static_cast<size_t>(cfg_.epoch_count), {});
        publish(now);
    }

    const EpochConfig& config() const { return cfg_; }
    const ValidationForest& forest() const { return vf_; }
    const Primer& current_primer() const { return vf_.primer; }
    const Signature& current_sig() const { return vf_.primer_sig; }
    std::uint32_t base_epoch() const { return vf_.base_epoch; }
    std::uint32_t newest_epoch() const {
        return vf_.base_epoch + static_cast<std::uint32_t>(cfg_.epoch_count) - 1;
    }
    const LookUpTable& epoch_lut(std::uint32_t epoch) const {
        require_in_window(epoch);
        return luts_[epoch - vf_.base_epoch];
    }
    const CertificateRecord* find(const Digest& cert_hash) const {
        auto it = registry_.find(cert_hash);
        return it == registry_.end() ? nullptr : &it->second;
    }
    size_t active_count() const { return active_count_; }
    std::vector<Digest> epoch_leaves(std::uint32_t epoch) const {
        require_in_window(epoch);
        const auto& set = members_[epoch - vf_.base_epoch];
        return std::vector<Digest>(set.begin(), set.end());
    }
    bool has_pending() const { return !pending_.empty(); }

    /// Queues a certificate for insertion at the next epoch change. The
    /// expiry may reach one epoch past the current window, which is where
    /// the newest tree will sit once the change happens.
    void stage_certificate(const Digest& cert_hash, std::uint64_t expiry) {
        ensure_unknown(cert_hash);
        std::uint32_t epoch = epoch_index(expiry, cfg_);
        if (epoch < vf_.base_epoch ||
            epoch > newest_epoch() + 1) {
            throw OutOfWindowError("certificate lifetime exceeds the forest window");
        }
        staged_.emplace_back(cert_hash, expiry);
        staged_hashes_.insert(cert_hash);
    }

    /// Inserts a certificate into its window epoch immediately; the fresh
    /// proof ships with the next update. Used for re-issuance after
    /// revocation, which lands in the newest epoch without waiting for an
    /// epoch change.
    void issue_certificate(const Digest& cert_hash, std::uint64_t expiry) {
        ensure_unknown(cert_hash);
        std::uint32_t epoch = epoch_index(expiry, cfg_);
        require_in_window(epoch);
        size_t idx = epoch - vf_.base_epoch;
        luts_[idx].add_leaf(cert_hash);
        members_[idx].insert(cert_hash);
        registry_[cert_hash] = {cert_hash, expiry, epoch, CertificateRecord::Status::kActive};
        ++active_count_;
        pending_.emplace_back(epoch, cert_hash);
    }

    /// Removes the leaf from its epoch tree and marks the record revoked.
    /// The proof of the now-empty position is captured at update-build time
    /// so that every shipped proof is consistent with the final root.
    void revoke(const Digest& cert_hash) {
        auto it = registry_.find(cert_hash);
        if (it == registry_.end()) throw StateError("revoke: unknown certificate");
        if (it->second.status != CertificateRecord::Status::kActive) {
            throw StateError("revoke: certificate not active");
        }
        std::uint32_t epoch = it->second.epoch;
        require_in_window(epoch);
        size_t idx = epoch - vf_.base_epoch;
        luts_[idx].remove_leaf(cert_hash);
        members_[idx].erase(cert_hash);
        it->second.status = CertificateRecord::Status::kRevoked;
        --active_count_;
        pending_.emplace_back(epoch, cert_hash);
    }

    /// Bundles everything since the previous update: the changed roots and a
    /// fresh proof for every changed leaf, revoked ones included. With no
    /// mutations this is the heartbeat, a re-signed primer with a new
    /// timestamp and nothing else.
    CaUpdate build_update(std::uint64_t now) {
        CaUpdate upd;
        std::set<std::uint32_t> changed;
        for (const auto& [epoch, leaf] : pending_) changed.insert(epoch);
        for (std::uint32_t epoch : changed) {
            upd.changed_roots.emplace_back(static_cast<std::uint16_t>(epoch),
                                           luts_[epoch - vf_.base_epoch].root());
        }
        for (const auto& [epoch, leaf] : pending_) {
            upd.update_pois.emplace_back(static_cast<std::uint16_t>(epoch),
                                         calc_poi(luts_[epoch - vf_.base_epoch], leaf));
        }
        pending_.clear();
        publish(now);
        upd.primer = vf_.primer;
        upd.primer_sig = vf_.primer_sig;
        return upd;
    }

    /// Epoch boundary: prune the oldest tree (its certificates expire),
    /// shift the window, insert the staged certificates into their epochs,
    /// and emit the new tree's complete leaf list so affected nodes can
    /// build their own proofs.
    EpochChangeUpdate epoch_change(std::uint64_t now) {
        if (!pending_.empty()) {
            throw StateError("epoch_change: unpublished mutations, build an update first");
        }
        for (const Digest& leaf : members_.front()) {
            auto it = registry_.find(leaf);
            if (it != registry_.end() &&
                it->second.status == CertificateRecord::Status::kActive) {
                it->second.status = CertificateRecord::Status::kExpired;
                --active_count_;
            }
        }
        luts_.erase(luts_.begin());
        luts_.emplace_back(*eh_);
        members_.erase(members_.begin());
        members_.push_back({});
        ++vf_.base_epoch;

        std::vector<std::pair<Digest, std::uint64_t>> still_staged;
        for (const auto& [hash, expiry] : staged_) {
            std::uint32_t epoch = epoch_index(expiry, cfg_);
            if (epoch > newest_epoch()) {
                still_staged.emplace_back(hash, expiry);
                continue;
            }
            if (epoch < vf_.base_epoch) {
                // Expired while staged; never entered a tree.
                staged_hashes_.erase(hash);
                continue;
            }
            size_t idx = epoch - vf_.base_epoch;
            luts_[idx].add_leaf(hash);
            members_[idx].insert(hash);
            registry_[hash] = {hash, expiry, epoch, CertificateRecord::Status::kActive};
            staged_hashes_.erase(hash);
            ++active_count_;
        }
        staged_ = std::move(still_staged);

        publish(now);
        EpochChangeUpdate upd;
        upd.primer = vf_.primer;
        upd.primer_sig = vf_.primer_sig;
        upd.new_epoch = static_cast<std::uint16_t>(newest_epoch());
        upd.leaves = epoch_leaves(newest_epoch());
        return upd;
    }

    /// Direct proof request, the give-up fallback for nodes whose
    /// distributed repair did not succeed.
    CaPoiResponse answer_poi_request(const Digest& cert_hash) const {
        auto it = registry_.find(cert_hash);
        if (it == registry_.end()) throw StateError("unknown certificate");
        if (it->second.status != CertificateRecord::Status::kActive) {
            throw RequestRefused("certificate not active", it->second.status);
        }
        if (!pending_.empty()) {
            throw StateError("unpublished mutations, build an update first");
        }
        CaPoiResponse resp;
        resp.poi = calc_poi(luts_[it->second.epoch - vf_.base_epoch], cert_hash);
        resp.primer = vf_.primer;
        resp.primer_sig = vf_.primer_sig;
        return resp;
    }

private:
    void require_in_window(std::uint32_t epoch) const {
        if (!vf_.in_window(epoch, cfg_)) throw OutOfWindowError("epoch outside forest window");
    }

    void ensure_unknown(const Digest& cert_hash) const {
        if (registry_.count(cert_hash) || staged_hashes_.count(cert_hash)) {
            throw StateError("duplicate certificate");
        }
    }

    /// Refreshes the published forest: roots from the trees, a primer with
    /// the given timestamp, and its signature. Timestamps must advance.
    void publish(std::uint64_t now) {
        if (vf_.primer.timestamp != 0 && now <= vf_.primer.timestamp) {
            throw StateError("primer timestamps must be strictly increasing");
        }
        for (size_t i = 0; i < luts_.size(); ++i) vf_.roots[i] = luts_[i].root();
        vf_.primer = compute_primer(vf_.roots, static_cast<std::uint32_t>(now), cfg_, eh_->hash);
        vf_.primer_sig = suite_.sign(primer_bytes(vf_.primer));
    }

    EpochConfig cfg_;
    CryptoSuite suite_;
    const EmptyHashes* eh_;
    ValidationForest vf_;
    std::vector<LookUpTable> luts_;                                  // window-aligned
    std::vector<std::unordered_set<Digest, DigestHash>> members_;    // active leaves per epoch
    std::unordered_map<Digest, CertificateRecord, DigestHash> registry_;
    std::vector<std::pair<Digest, std::uint64_t>> staged_;
    std::unordered_set<Digest, DigestHash> staged_hashes_;
    std::vector<std::pair<std::uint32_t, Digest>> pending_;  // changed leaves since last update
    size_t active_count_ = 0;
};

}  // namespace vforest

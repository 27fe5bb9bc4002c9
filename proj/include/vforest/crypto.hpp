#pragma once

#include <openssl/ecdsa.h>
#include <openssl/evp.h>
#include <openssl/obj_mac.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "vforest/digest.hpp"

namespace vforest {

using HashFn = Digest (*)(std::span<const std::uint8_t>);

/// SHA-256 through a thread-local, reused EVP context. The tree operations
/// hash millions of 64-byte inputs, so per-call context setup matters.
inline Digest sha256(std::span<const std::uint8_t> data) {
    struct Ctx {
        EVP_MD* md = EVP_MD_fetch(nullptr, "SHA256", nullptr);
        EVP_MD_CTX* ctx = EVP_MD_CTX_new();
        ~Ctx() {
            EVP_MD_CTX_free(ctx);
            EVP_MD_free(md);
        }
    };
    thread_local Ctx c;
    Digest out;
    unsigned int len = 32;
    EVP_DigestInit_ex(c.ctx, c.md, nullptr);
    EVP_DigestUpdate(c.ctx, data.data(), data.size());
    EVP_DigestFinal_ex(c.ctx, out.b.data(), &len);
    return out;
}

inline Digest hash_pair(HashFn h, const Digest& left, const Digest& right) {
    std::uint8_t buf[64];
    std::memcpy(buf, left.b.data(), 32);
    std::memcpy(buf + 32, right.b.data(), 32);
    return h({buf, 64});
}

using Signature = std::array<std::uint8_t, 64>;

using SignFn = std::function<Signature(std::span<const std::uint8_t>)>;
using VerifyFn = std::function<bool(std::span<const std::uint8_t>, const Signature&)>;

/// Hash plus a 64-byte signature scheme bound to one key pair. The signer
/// stays on the authority side; nodes only ever hold `verify`.
struct CryptoSuite {
    HashFn hash = sha256;
    SignFn sign;
    VerifyFn verify;
};

/// Deterministic keyed-hash signer for tests and simulation runs. Not a real
/// signature scheme: verification recomputes the MAC, so it only makes sense
/// where signer and verifier are both under test control.
inline CryptoSuite stub_suite(std::uint64_t key) {
    auto mac = [key](std::span<const std::uint8_t> msg) {
        std::vector<std::uint8_t> buf;
        buf.reserve(msg.size() + 9);
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(key >> (8 * i)));
        buf.push_back(0);
        buf.insert(buf.end(), msg.begin(), msg.end());
        Digest a = sha256(buf);
        buf[8] = 1;
        Digest b = sha256(buf);
        Signature sig;
        std::memcpy(sig.data(), a.b.data(), 32);
        std::memcpy(sig.data() + 32, b.b.data(), 32);
        return sig;
    };
    CryptoSuite s;
    s.sign = mac;
    s.verify = [mac](std::span<const std::uint8_t> msg, const Signature& sig) {
        return mac(msg) == sig;
    };
    return s;
}

namespace detail {

struct EvpKeyDeleter {
    void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
using EvpKeyPtr = std::shared_ptr<EVP_PKEY>;

inline EvpKeyPtr generate_p256_key() {
    EVP_PKEY* key = EVP_EC_gen("P-256");
    if (!key) throw std::runtime_error("P-256 key generation failed");
    return EvpKeyPtr(key, EvpKeyDeleter{});
}

// OpenSSL emits DER ECDSA signatures; the wire format wants raw r||s.
inline Signature der_to_raw64(const std::uint8_t* der, size_t der_len) {
    const std::uint8_t* p = der;
    ECDSA_SIG* sig = d2i_ECDSA_SIG(nullptr, &p, static_cast<long>(der_len));
    if (!sig) throw std::runtime_error("bad DER signature");
    const BIGNUM *r = nullptr, *s = nullptr;
    ECDSA_SIG_get0(sig, &r, &s);
    Signature out{};
    BN_bn2binpad(r, out.data(), 32);
    BN_bn2binpad(s, out.data() + 32, 32);
    ECDSA_SIG_free(sig);
    return out;
}

inline std::vector<std::uint8_t> raw64_to_der(const Signature& raw) {
    ECDSA_SIG* sig = ECDSA_SIG_new();
    BIGNUM* r = BN_bin2bn(raw.data(), 32, nullptr);
    BIGNUM* s = BN_bin2bn(raw.data() + 32, 32, nullptr);
    ECDSA_SIG_set0(sig, r, s);
    int len = i2d_ECDSA_SIG(sig, nullptr);
    std::vector<std::uint8_t> der(static_cast<size_t>(len));
    std::uint8_t* p = der.data();
    i2d_ECDSA_SIG(sig, &p);
    ECDSA_SIG_free(sig);
    return der;
}

}  // namespace detail

/// ECDSA over secp256r1 with raw 64-byte r||s signatures. Generates a fresh
/// key pair per suite; sign and verify share it through the closures.
inline CryptoSuite ecdsa_p256_suite() {
    auto key = detail::generate_p256_key();
    CryptoSuite s;
    s.sign = [key](std::span<const std::uint8_t> msg) {
        EVP_MD_CTX* ctx = EVP_MD_CTX_new();
        if (EVP_DigestSignInit(ctx, nullptr, EVP_sha256(), nullptr, key.get()) != 1) {
            EVP_MD_CTX_free(ctx);
            throw std::runtime_error("DigestSignInit failed");
        }
        size_t der_len = 0;
        EVP_DigestSign(ctx, nullptr, &der_len, msg.data(), msg.size());
        std::vector<std::uint8_t> der(der_len);
        if (EVP_DigestSign(ctx, der.data(), &der_len, msg.data(), msg.size()) != 1) {
            EVP_MD_CTX_free(ctx);
            throw std::runtime_error("ECDSA signing failed");
        }
        EVP_MD_CTX_free(ctx);
        return detail::der_to_raw64(der.data(), der_len);
    };
    s.verify = [key](std::span<const std::uint8_t> msg, const Signature& sig) {
        std::vector<std::uint8_t> der;
        try {
            der = detail::raw64_to_der(sig);
        } catch (const std::exception&) {
            return false;
        }
        EVP_MD_CTX* ctx = EVP_MD_CTX_new();
        bool ok = EVP_DigestVerifyInit(ctx, nullptr, EVP_sha256(), nullptr, key.get()) == 1 &&
                  EVP_DigestVerify(ctx, der.data(), der.size(), msg.data(), msg.size()) == 1;
        EVP_MD_CTX_free(ctx);
        return ok;
    };
    return s;
}

}  // namespace vforest

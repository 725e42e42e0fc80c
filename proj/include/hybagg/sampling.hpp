#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <span>
#include <string_view>

#include <sodium.h>

#include "hybagg/errors.hpp"
#include "hybagg/ring.hpp"

namespace hybagg {

namespace detail {

inline void ensure_sodium() {
    static const int status = [] { return sodium_init(); }();
    if (status < 0) throw Error("libsodium initialization failed");
}

inline void store_le64(uint64_t v, uint8_t* out) {
    for (int i = 0; i < 8; ++i) out[i] = static_cast<uint8_t>(v >> (8 * i));
}

inline void store_le32(uint32_t v, uint8_t* out) {
    for (int i = 0; i < 4; ++i) out[i] = static_cast<uint8_t>(v >> (8 * i));
}

inline std::array<uint8_t, 32> blake2b_256(std::span<const uint8_t> message,
                                           std::span<const uint8_t> key) {
    ensure_sodium();
    std::array<uint8_t, 32> out;
    crypto_generichash(out.data(), out.size(), message.data(), message.size(),
                       key.empty() ? nullptr : key.data(), key.size());
    return out;
}

}  // namespace detail

/// 256-bit seed; the root of every deterministic derivation in the library.
struct Seed {
    std::array<uint8_t, 32> bytes{};

    static Seed from_bytes(std::span<const uint8_t> data) {
        if (data.size() != 32) {
            throw ParamError("seed must be exactly 32 bytes");
        }
        Seed s;
        std::memcpy(s.bytes.data(), data.data(), 32);
        return s;
    }

    /// Convenience seed for CLIs and tests: hashes the integer so nearby
    /// inputs give unrelated seeds.
    static Seed from_u64(uint64_t value) {
        uint8_t msg[8];
        detail::store_le64(value, msg);
        Seed s;
        s.bytes = detail::blake2b_256(msg, {});
        return s;
    }

    friend bool operator==(const Seed& a, const Seed& b) {
        return a.bytes == b.bytes;
    }
};

/// Keyed-hash domain separation: child = H_seed(label || le64(index)).
inline Seed derive_seed(const Seed& parent, std::string_view label,
                        uint64_t index = 0) {
    std::vector<uint8_t> msg(label.size() + 8);
    std::memcpy(msg.data(), label.data(), label.size());
    detail::store_le64(index, msg.data() + label.size());
    Seed child;
    child.bytes = detail::blake2b_256(msg, parent.bytes);
    return child;
}

/// Gaussian widths for the three noise roles. The smudging width must sit at
/// least 2^10 above the encryption width so shares drown the per-client
/// noise they are meant to hide.
class NoiseSpec {
public:
    explicit NoiseSpec(double sigma_err = 3.2, double sigma_secret = 3.2,
                       double sigma_smudge = 3.2 * 1048576.0)
        : sigma_err_(sigma_err),
          sigma_secret_(sigma_secret),
          sigma_smudge_(sigma_smudge) {
        if (!(sigma_err > 0.0) || !std::isfinite(sigma_err) ||
            !(sigma_secret > 0.0) || !std::isfinite(sigma_secret) ||
            !(sigma_smudge > 0.0) || !std::isfinite(sigma_smudge)) {
            throw ParamError("noise widths must be positive and finite");
        }
        if (sigma_smudge < 1024.0 * sigma_err) {
            throw ParamError("sigma_smudge below the 2^10 * sigma_err floor");
        }
    }

    double sigma_err() const { return sigma_err_; }
    double sigma_secret() const { return sigma_secret_; }
    double sigma_smudge() const { return sigma_smudge_; }

private:
    double sigma_err_;
    double sigma_secret_;
    double sigma_smudge_;
};

/// Deterministic byte stream keyed by a Seed (ChaCha20 keystream, 8-byte
/// little-endian block nonce). Equal seeds give equal streams on every
/// platform.
class ChaChaRng {
public:
    explicit ChaChaRng(const Seed& seed) : key_(seed.bytes) {
        detail::ensure_sodium();
    }

    void fill(uint8_t* out, size_t len) {
        while (len > 0) {
            if (pos_ == buf_.size()) refill();
            const size_t take = std::min(len, buf_.size() - pos_);
            std::memcpy(out, buf_.data() + pos_, take);
            pos_ += take;
            out += take;
            len -= take;
        }
    }

    uint64_t next_u64() {
        uint8_t raw[8];
        fill(raw, 8);
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | raw[i];
        return v;
    }

    /// Uniform in (0, 1], 53-bit resolution.
    double next_unit_positive() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the second variate is cached.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit_positive();
        const double u2 = next_unit();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    void refill() {
        uint8_t nonce[8];
        detail::store_le64(block_++, nonce);
        crypto_stream_chacha20(buf_.data(), buf_.size(), nonce, key_.data());
        pos_ = 0;
    }

    std::array<uint8_t, 32> key_;
    uint64_t block_ = 0;
    std::array<uint8_t, 4096> buf_;
    size_t pos_ = buf_.size();
    bool have_spare_ = false;
    double spare_ = 0.0;
};

namespace detail {

/// Serialized (degree, chain) identity; mixed into uniform-sampling keys so
/// the same seed yields unrelated elements in different rings.
inline std::vector<uint8_t> context_digest_bytes(const RingContext& ctx) {
    std::vector<uint8_t> out(8 + 1 + 8 * ctx.chain_length());
    store_le64(static_cast<uint64_t>(ctx.degree()), out.data());
    out[8] = static_cast<uint8_t>(ctx.chain_length());
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        store_le64(ctx.moduli()[k].value(), out.data() + 9 + 8 * k);
    }
    return out;
}

/// Rejection-samples every residue plane from one ChaCha stream. Draws are
/// masked to bit_width(q-1) bits, so the acceptance rate is above 1/2.
inline RingElement uniform_from_key(const RingContextPtr& ctx,
                                    const Seed& stream_key) {
    ChaChaRng rng(stream_key);
    RingElement e = RingElement::zero(ctx);
    for (size_t k = 0; k < ctx->chain_length(); ++k) {
        const uint64_t q = ctx->moduli()[k].value();
        const uint64_t mask =
            (uint64_t{1} << std::bit_width(q - 1)) - 1;
        auto plane = e.plane(k);
        for (size_t j = 0; j < ctx->degree(); ++j) {
            uint64_t draw;
            do {
                draw = rng.next_u64() & mask;
            } while (draw >= q);
            plane[j] = draw;
        }
    }
    return e;
}

}  // namespace detail

/// Uniform element of R_q, deterministic in (seed, domain_tag, ring identity).
inline RingElement sample_uniform(const RingContextPtr& ctx, const Seed& seed,
                                  std::string_view domain_tag) {
    const auto digest = detail::context_digest_bytes(*ctx);
    std::vector<uint8_t> msg(domain_tag.size() + digest.size());
    std::memcpy(msg.data(), domain_tag.data(), domain_tag.size());
    std::memcpy(msg.data() + domain_tag.size(), digest.data(), digest.size());
    Seed stream_key;
    stream_key.bytes = detail::blake2b_256(msg, seed.bytes);
    return detail::uniform_from_key(ctx, stream_key);
}

/// Rounded continuous Gaussian with a hard tail cut: any draw rounding
/// outside [-6*sigma, 6*sigma] is discarded and redrawn, so the returned
/// coefficients respect the bound with certainty, not just with high
/// probability.
inline RingElement sample_gaussian(const RingContextPtr& ctx, double sigma,
                                   ChaChaRng& rng) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ParamError("gaussian width must be positive and finite");
    }
    const double bound = 6.0 * sigma;
    RingElement e = RingElement::zero(ctx);
    uint64_t tmp[4];
    for (size_t j = 0; j < ctx->degree(); ++j) {
        int64_t z;
        do {
            z = std::llround(sigma * rng.next_gaussian());
        } while (std::abs(static_cast<double>(z)) > bound);
        ctx->reduce_signed(z, tmp);
        for (size_t k = 0; k < ctx->chain_length(); ++k) e.plane(k)[j] = tmp[k];
    }
    return e;
}

/// Wide smudging noise for decryption shares.
inline RingElement sample_smudging(const RingContextPtr& ctx,
                                   const NoiseSpec& spec, ChaChaRng& rng) {
    return sample_gaussian(ctx, spec.sigma_smudge(), rng);
}

}  // namespace hybagg

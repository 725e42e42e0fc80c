#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <sodium.h>

#include "hybagg/errors.hpp"
#include "hybagg/mkckks.hpp"
#include "hybagg/ring.hpp"
#include "hybagg/sampling.hpp"

namespace hybagg {

struct EcdhKeyPair {
    std::array<uint8_t, 32> sk{};
    std::array<uint8_t, 32> pk{};
};

/// X25519 key pair from the caller's deterministic stream. The secret is
/// stored pre-clamped so serialized and in-memory forms agree.
inline EcdhKeyPair ecdh_keygen(ChaChaRng& rng) {
    detail::ensure_sodium();
    EcdhKeyPair kp;
    rng.fill(kp.sk.data(), kp.sk.size());
    kp.sk[0] &= 248;
    kp.sk[31] &= 127;
    kp.sk[31] |= 64;
    crypto_scalarmult_base(kp.pk.data(), kp.sk.data());
    return kp;
}

/// Symmetric secret for the unordered pair {lo, hi}: both endpoints derive
/// the same key bytes regardless of which side runs the computation.
struct PairSecret {
    std::array<uint8_t, 32> key{};
    uint32_t lo = 0;
    uint32_t hi = 0;
};

inline PairSecret derive_pair_secret(const EcdhKeyPair& mine,
                                     const std::array<uint8_t, 32>& their_pk,
                                     uint32_t my_id, uint32_t their_id) {
    detail::ensure_sodium();
    if (my_id == their_id) {
        throw MaskingError("pair secret requires two distinct client ids");
    }
    if ((their_pk[31] & 0x80) != 0) {
        throw MaskingError("peer public key is not in canonical form");
    }
    uint8_t shared[32];
    if (crypto_scalarmult(shared, mine.sk.data(), their_pk.data()) != 0 ||
        sodium_is_zero(shared, sizeof shared)) {
        throw MaskingError("ECDH produced a degenerate shared point");
    }
    PairSecret out;
    out.lo = std::min(my_id, their_id);
    out.hi = std::max(my_id, their_id);
    // Key = H(dh_bytes || lo || hi || context string); the sorted ids make
    // the derivation order-independent.
    std::array<uint8_t, 32 + 4 + 4 + 11> msg{};
    std::copy(shared, shared + 32, msg.begin());
    detail::store_le32(out.lo, msg.data() + 32);
    detail::store_le32(out.hi, msg.data() + 36);
    const char tag[] = "HYBAGG-PAIR";
    std::copy(tag, tag + 11, msg.begin() + 40);
    out.key = detail::blake2b_256(msg, {});
    sodium_memzero(shared, sizeof shared);
    return out;
}

/// One pairwise mask polynomial, pseudo-uniform in R_q, tied to a round.
struct MaskPoly {
    RingElement p;
    uint32_t lo = 0;
    uint32_t hi = 0;
    uint32_t round = 0;
};

/// Expands the pair secret into the round's mask. Both endpoints of the pair
/// produce the identical polynomial; the round counter and the ring identity
/// are folded into the stream key so no two (round, ring) pairs share bytes.
inline MaskPoly expand_mask(const PairSecret& secret, uint32_t round,
                            const RingContextPtr& ctx) {
    const auto digest = detail::context_digest_bytes(*ctx);
    std::vector<uint8_t> msg(8 + 11 + digest.size());
    detail::store_le64(round, msg.data());
    const char tag[] = "HYBAGG-MASK";
    std::copy(tag, tag + 11, msg.begin() + 8);
    std::copy(digest.begin(), digest.end(), msg.begin() + 19);
    Seed stream_key;
    stream_key.bytes = detail::blake2b_256(msg, secret.key);
    return MaskPoly{detail::uniform_from_key(ctx, stream_key), secret.lo,
                    secret.hi, round};
}

/// Client id's net mask r_id = sum_{j > id} p_{id,j} - sum_{j < id} p_{j,id}.
/// Requires exactly one mask for every other cohort member, all from the same
/// round; the antisymmetric signs make the masks vanish under summation over
/// a complete cohort.
inline RingElement net_mask(uint32_t id, std::span<const MaskPoly> masks,
                            uint32_t cohort_size) {
    if (cohort_size < 2) {
        throw MaskingError("masking needs a cohort of at least 2");
    }
    if (id >= cohort_size) {
        throw MaskingError("client id " + std::to_string(id) +
                           " outside cohort of " + std::to_string(cohort_size));
    }
    if (masks.size() != cohort_size - 1) {
        throw MaskingError("expected " + std::to_string(cohort_size - 1) +
                           " pair masks, got " + std::to_string(masks.size()));
    }
    std::vector<bool> seen(cohort_size, false);
    RingElement acc = RingElement::zero(masks[0].p.context());
    for (const MaskPoly& m : masks) {
        if (m.round != masks[0].round) {
            throw MaskingError("pair masks from different rounds were mixed");
        }
        uint32_t other;
        if (m.lo == id) {
            other = m.hi;
        } else if (m.hi == id) {
            other = m.lo;
        } else {
            throw MaskingError("mask for pair (" + std::to_string(m.lo) + "," +
                               std::to_string(m.hi) +
                               ") does not involve client " + std::to_string(id));
        }
        if (other >= cohort_size) {
            throw MaskingError("mask references client " + std::to_string(other) +
                               " outside the cohort");
        }
        if (seen[other]) {
            throw MaskingError("duplicate mask for pair with client " +
                               std::to_string(other));
        }
        seen[other] = true;
        if (id < other) {
            add_into(acc, m.p);
        } else {
            sub_into(acc, m.p);
        }
    }
    for (uint32_t j = 0; j < cohort_size; ++j) {
        if (j != id && !seen[j]) {
            throw MaskingError("missing mask for pair (" +
                               std::to_string(std::min(id, j)) + "," +
                               std::to_string(std::max(id, j)) + ")");
        }
    }
    return acc;
}

/// The one-shot upload payload component: masked decryption share.
inline RingElement mask_share(const PartialShare& share,
                              const RingElement& net) {
    return add(share.mu, net);
}

}  // namespace hybagg

#pragma once

#include <cmath>
#include <span>
#include <utility>

#include "hybagg/errors.hpp"
#include "hybagg/ring.hpp"
#include "hybagg/sampling.hpp"

namespace hybagg {

/// Common reference polynomial shared by every key in a cohort, together
/// with the seed it expands from (publishing the seed is enough to let any
/// party rebuild `a`).
struct CommonRef {
    RingElement a;
    Seed seed;
};

inline CommonRef crs_generate(const RingContextPtr& ctx, const Seed& seed) {
    return CommonRef{sample_uniform(ctx, seed, "HYBAGG-CRS"), seed};
}

/// Per-client key material: secret s and public key half b = -s*a + e.
struct HeKeyPair {
    RingElement s;
    RingElement b;
};

/// What encryption actually consumes: the client's own (b, a).
struct HePublicKey {
    RingElement b;
    RingElement a;
};

inline HeKeyPair he_keygen(const CommonRef& crs, const NoiseSpec& spec,
                           ChaChaRng& rng) {
    const RingContextPtr& ctx = crs.a.context();
    RingElement s = sample_gaussian(ctx, spec.sigma_secret(), rng);
    RingElement e = sample_gaussian(ctx, spec.sigma_err(), rng);
    RingElement b = sub(e, mul(s, crs.a));
    return HeKeyPair{std::move(s), std::move(b)};
}

struct Ciphertext {
    RingElement c0;
    RingElement c1;
};

/// c0 = v*b + m + e0, c1 = v*a + e1 with fresh ephemeral v per call.
inline Ciphertext encrypt(const HePublicKey& pk, const RingElement& m,
                          const NoiseSpec& spec, ChaChaRng& rng) {
    detail::require_same_ring(pk.b, m);
    detail::require_same_ring(pk.a, m);
    const RingContextPtr& ctx = m.context();
    const RingElement v = sample_gaussian(ctx, spec.sigma_secret(), rng);
    const RingElement e0 = sample_gaussian(ctx, spec.sigma_err(), rng);
    const RingElement e1 = sample_gaussian(ctx, spec.sigma_err(), rng);
    RingElement c0 = mul(v, pk.b);
    add_into(c0, m);
    add_into(c0, e0);
    RingElement c1 = mul(v, pk.a);
    add_into(c1, e1);
    return Ciphertext{std::move(c0), std::move(c1)};
}

/// One client's decryption share mu = c1*s + e_smudge. The smudging term is
/// drawn wide on purpose: it hides the small key-dependent noise from
/// anyone who sees the share.
struct PartialShare {
    RingElement mu;
};

inline PartialShare partial_share(const Ciphertext& ct, const HeKeyPair& kp,
                                  const NoiseSpec& spec, ChaChaRng& rng) {
    detail::require_same_ring(ct.c1, kp.s);
    RingElement mu = mul(ct.c1, kp.s);
    add_into(mu, sample_smudging(ct.c1.context(), spec, rng));
    return PartialShare{std::move(mu)};
}

/// sum_i c0_i + sum_i mu_i. With one c0 and one share per cohort member the
/// key-dependent terms telescope away and the result carries the summed
/// plaintexts plus bounded noise.
inline RingElement aggregate(std::span<const RingElement> c0s,
                             std::span<const RingElement> shares) {
    if (c0s.empty()) {
        throw ProtocolError("aggregate requires at least one ciphertext");
    }
    if (c0s.size() != shares.size()) {
        throw ProtocolError("aggregate got " + std::to_string(c0s.size()) +
                            " ciphertexts but " + std::to_string(shares.size()) +
                            " shares");
    }
    RingElement acc = c0s[0];
    for (size_t i = 1; i < c0s.size(); ++i) add_into(acc, c0s[i]);
    for (const RingElement& share : shares) add_into(acc, share);
    return acc;
}

/// Worst-case noise accounting under the 6-sigma tail cuts.
struct NoiseBudgetReport {
    double b_enc = 0.0;       // per-ciphertext decryption noise bound
    double b_total = 0.0;     // cohort-wide bound including smudging
    double delta_half = 0.0;  // the threshold b_total must stay below
    bool noise_ok = false;
    bool magnitude_ok = false;
    bool pass = false;
};

/// Decides whether `cohort_size` clients can aggregate under the given
/// scale without the noise reaching the rounding threshold and without the
/// summed plaintexts wrapping mod Q.
inline NoiseBudgetReport noise_budget_check(size_t degree,
                                            const NoiseSpec& spec,
                                            uint64_t delta,
                                            const BigInt& q_product,
                                            double max_abs_input,
                                            uint32_t cohort_size) {
    if (cohort_size == 0) throw ParamError("cohort size must be positive");
    if (!(max_abs_input > 0.0) || !std::isfinite(max_abs_input)) {
        throw ParamError("max_abs_input must be positive and finite");
    }
    NoiseBudgetReport report;
    const double root_n = std::sqrt(static_cast<double>(degree));
    report.b_enc = 6.0 * spec.sigma_err() *
                   (1.0 + 2.0 * 6.0 * spec.sigma_secret() * root_n);
    report.b_total =
        cohort_size * (report.b_enc + 6.0 * spec.sigma_smudge());
    report.delta_half = static_cast<double>(delta) / 2.0;
    report.noise_ok = report.b_total < report.delta_half;
    const double q_half = q_product.convert_to<double>() / 2.0;
    report.magnitude_ok = static_cast<double>(cohort_size) *
                              static_cast<double>(delta) * max_abs_input <
                          q_half;
    report.pass = report.noise_ok && report.magnitude_ok;
    return report;
}

}  // namespace hybagg

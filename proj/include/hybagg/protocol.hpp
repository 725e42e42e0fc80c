#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hybagg/codec.hpp"
#include "hybagg/errors.hpp"
#include "hybagg/masking.hpp"
#include "hybagg/mkckks.hpp"
#include "hybagg/ring.hpp"
#include "hybagg/sampling.hpp"

namespace hybagg {

/// Largest total modulus size (bits) considered safe at the 128-bit
/// classical level for each ring degree; the usual power-of-two ladder,
/// held flat above 2^15 as a conservative cap.
inline unsigned max_modulus_bits_128(size_t degree) {
    switch (degree) {
        case 1024: return 27;
        case 2048: return 54;
        case 4096: return 109;
        case 8192: return 218;
        case 16384: return 438;
        default: return degree >= 32768 ? 881 : 0;
    }
}

struct ParamOptions {
    uint64_t delta = uint64_t{1} << 40;
    NoiseSpec noise{};
    uint32_t max_cohort = 500;
    double max_abs_input = 1.0;
    uint32_t bit_budget = 110;
};

/// Everything a cohort must agree on before round 0. The ring degree is the
/// smallest power of two that (a) fits the update dimension and (b) admits
/// the requested modulus size at 128-bit security.
class ParamSet {
public:
    static ParamSet create(size_t dimension, const ParamOptions& opts = {}) {
        if (dimension == 0) throw ParamError("dimension must be positive");
        size_t degree = 1024;
        while (degree < dimension || max_modulus_bits_128(degree) < opts.bit_budget) {
            degree <<= 1;
            if (degree > (size_t{1} << 17)) {
                throw ParamError(
                    "no supported ring degree fits dimension " +
                    std::to_string(dimension) + " at modulus budget " +
                    std::to_string(opts.bit_budget));
            }
        }
        RingContextPtr ctx = RingContext::create(degree, opts.bit_budget);
        // The chain overshoots the budget slightly; re-check the actual size.
        while (boost::multiprecision::msb(ctx->modulus_product()) + 1 >
               max_modulus_bits_128(degree)) {
            degree <<= 1;
            if (degree > (size_t{1} << 17)) {
                throw ParamError("modulus chain too large for any supported degree");
            }
            ctx = RingContext::create(degree, opts.bit_budget);
        }
        return from_context(std::move(ctx), dimension, opts);
    }

    /// Assembles a ParamSet around an existing context (deserialization
    /// path); runs the same invariant checks as create().
    static ParamSet from_context(RingContextPtr ctx, size_t dimension,
                                 const ParamOptions& opts) {
        const unsigned q_bits =
            boost::multiprecision::msb(ctx->modulus_product()) + 1;
        if (q_bits > max_modulus_bits_128(ctx->degree())) {
            throw ParamError("modulus chain of " + std::to_string(q_bits) +
                             " bits exceeds the 128-bit security cap for degree " +
                             std::to_string(ctx->degree()));
        }
        ScaleParams scale =
            ScaleParams::create(ctx, opts.delta, dimension, opts.max_cohort);
        const auto report = noise_budget_check(
            ctx->degree(), opts.noise, opts.delta, ctx->modulus_product(),
            opts.max_abs_input, opts.max_cohort);
        if (!report.pass) {
            throw ParamError(
                "noise budget rejected the parameters: worst-case aggregate "
                "noise or magnitude leaves no rounding margin for cohorts up "
                "to " + std::to_string(opts.max_cohort));
        }
        ParamSet p(std::move(ctx), scale, opts);
        p.dimension_ = dimension;
        return p;
    }

    const RingContextPtr& context() const { return ctx_; }
    const ScaleParams& scale() const { return scale_; }
    const NoiseSpec& noise() const { return noise_; }
    size_t dimension() const { return dimension_; }
    size_t degree() const { return ctx_->degree(); }
    uint32_t max_cohort() const { return max_cohort_; }
    double max_abs_input() const { return max_abs_input_; }
    uint32_t bit_budget() const { return bit_budget_; }

private:
    ParamSet(RingContextPtr ctx, ScaleParams scale, const ParamOptions& opts)
        : ctx_(std::move(ctx)),
          scale_(scale),
          noise_(opts.noise),
          max_cohort_(opts.max_cohort),
          max_abs_input_(opts.max_abs_input),
          bit_budget_(opts.bit_budget) {}

    RingContextPtr ctx_;
    ScaleParams scale_;
    NoiseSpec noise_;
    size_t dimension_ = 0;
    uint32_t max_cohort_;
    double max_abs_input_;
    uint32_t bit_budget_;
};

inline NoiseBudgetReport noise_budget_check(const ParamSet& params,
                                            uint32_t cohort_size) {
    return noise_budget_check(params.degree(), params.noise(),
                              params.scale().delta(),
                              params.context()->modulus_product(),
                              params.max_abs_input(), cohort_size);
}

/// Secret material one client keeps locally. `round_seed` is the root of the
/// client's per-round encryption randomness; everything else about a round is
/// recomputable from it, which keeps uploads reproducible for a fixed setup.
struct ClientKeyring {
    uint32_t id = 0;
    HeKeyPair he;
    EcdhKeyPair ecdh;
    Seed round_seed;
};

struct DirectoryEntry {
    RingElement b;
    std::array<uint8_t, 32> ecdh_pk{};
};

/// Public bulletin: parameters, the CRS, and every client's public keys.
struct PublicDirectory {
    ParamSet params;
    CommonRef crs;
    std::vector<DirectoryEntry> entries;

    uint32_t cohort_size() const {
        return static_cast<uint32_t>(entries.size());
    }
};

struct SetupResult {
    PublicDirectory directory;
    std::vector<ClientKeyring> keyrings;
};

/// Trusted one-time ceremony (simulation stand-in for a PKI): derives every
/// client's keys from one master seed and publishes the directory.
inline SetupResult setup(const ParamSet& params, uint32_t cohort_size,
                         const Seed& master_seed) {
    if (cohort_size < 2) {
        throw ProtocolError("cohort must have at least 2 clients");
    }
    if (cohort_size > params.max_cohort()) {
        throw ProtocolError("cohort of " + std::to_string(cohort_size) +
                            " exceeds the declared maximum " +
                            std::to_string(params.max_cohort()));
    }
    const Seed crs_seed = derive_seed(master_seed, "hybagg/crs");
    SetupResult out{PublicDirectory{params,
                                    crs_generate(params.context(), crs_seed),
                                    {}},
                    {}};
    out.directory.entries.reserve(cohort_size);
    out.keyrings.reserve(cohort_size);
    for (uint32_t i = 0; i < cohort_size; ++i) {
        ChaChaRng rng(derive_seed(master_seed, "hybagg/client", i));
        ClientKeyring kr;
        kr.id = i;
        kr.he = he_keygen(out.directory.crs, params.noise(), rng);
        kr.ecdh = ecdh_keygen(rng);
        kr.round_seed = derive_seed(master_seed, "hybagg/round", i);
        out.directory.entries.push_back(
            DirectoryEntry{kr.he.b, kr.ecdh.pk});
        out.keyrings.push_back(std::move(kr));
    }
    return out;
}

/// The complete per-round uplink: ciphertext half c0 and the masked
/// decryption share. The c1 half never leaves the client.
struct ClientUpload {
    uint32_t round = 0;
    uint32_t id = 0;
    RingElement c0;
    RingElement masked_share;
};

struct ClientPhaseTimings {
    double encode_ms = 0.0;
    double encrypt_ms = 0.0;
    double share_ms = 0.0;
    double mask_ms = 0.0;
    double total_ms = 0.0;
};

/// client_round plus the intermediates tests and attack experiments need.
struct ClientRoundDetail {
    ClientUpload upload;
    RingElement mu;   // unmasked decryption share
    RingElement net;  // net pairwise mask added to mu
};

namespace detail {

class StopWatch {
public:
    StopWatch() : t0_(std::chrono::steady_clock::now()) {}

    double lap_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms =
            std::chrono::duration<double, std::milli>(now - t0_).count();
        t0_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

inline ClientRoundDetail client_round_detail(const ClientKeyring& keyring,
                                             const PublicDirectory& directory,
                                             std::span<const double> update,
                                             uint32_t round,
                                             ClientPhaseTimings* timings = nullptr) {
    const ParamSet& params = directory.params;
    const uint32_t cohort = directory.cohort_size();
    if (keyring.id >= cohort) {
        throw ProtocolError("client id " + std::to_string(keyring.id) +
                            " is not in the directory");
    }
    if (update.size() != params.dimension()) {
        throw ProtocolError("update has " + std::to_string(update.size()) +
                            " values, cohort dimension is " +
                            std::to_string(params.dimension()));
    }
    ChaChaRng rng(derive_seed(keyring.round_seed, "hybagg/enc", round));
    detail::StopWatch watch;
    ClientPhaseTimings t;

    const RingElement m = encode(update, params.scale(), params.context());
    t.encode_ms = watch.lap_ms();

    const HePublicKey pk{keyring.he.b, directory.crs.a};
    const Ciphertext ct = encrypt(pk, m, params.noise(), rng);
    t.encrypt_ms = watch.lap_ms();

    PartialShare share = partial_share(ct, keyring.he, params.noise(), rng);
    t.share_ms = watch.lap_ms();

    std::vector<MaskPoly> masks;
    masks.reserve(cohort - 1);
    for (uint32_t j = 0; j < cohort; ++j) {
        if (j == keyring.id) continue;
        const PairSecret secret = derive_pair_secret(
            keyring.ecdh, directory.entries[j].ecdh_pk, keyring.id, j);
        masks.push_back(expand_mask(secret, round, params.context()));
    }
    RingElement net = net_mask(keyring.id, masks, cohort);
    RingElement masked = mask_share(share, net);
    t.mask_ms = watch.lap_ms();

    t.total_ms = t.encode_ms + t.encrypt_ms + t.share_ms + t.mask_ms;
    if (timings != nullptr) *timings = t;
    return ClientRoundDetail{
        ClientUpload{round, keyring.id, ct.c0, std::move(masked)},
        std::move(share.mu), std::move(net)};
}

inline ClientUpload client_round(const ClientKeyring& keyring,
                                 const PublicDirectory& directory,
                                 std::span<const double> update, uint32_t round,
                                 ClientPhaseTimings* timings = nullptr) {
    return client_round_detail(keyring, directory, update, round, timings)
        .upload;
}

struct ServerPhaseTimings {
    double aggregate_ms = 0.0;
    double decode_ms = 0.0;
    double total_ms = 0.0;
};

struct AggregateResult {
    uint32_t round = 0;
    RingElement recovered;       // C0 + sum of masked shares
    std::vector<double> values;  // decode(recovered)
};

/// Folds a complete cohort's uploads and decodes the summed update. Rejects
/// incomplete cohorts, duplicate ids, and uploads from mixed rounds.
inline AggregateResult server_round(std::span<const ClientUpload> uploads,
                                    const PublicDirectory& directory,
                                    ServerPhaseTimings* timings = nullptr) {
    const uint32_t cohort = directory.cohort_size();
    if (uploads.size() != cohort) {
        throw ProtocolError("round has " + std::to_string(uploads.size()) +
                            " uploads for a cohort of " + std::to_string(cohort));
    }
    std::vector<bool> seen(cohort, false);
    for (const ClientUpload& u : uploads) {
        if (u.round != uploads[0].round) {
            throw ProtocolError("uploads from different rounds were mixed");
        }
        if (u.id >= cohort) {
            throw ProtocolError("upload from unknown client id " +
                                std::to_string(u.id));
        }
        if (seen[u.id]) {
            throw ProtocolError("duplicate upload from client " +
                                std::to_string(u.id));
        }
        seen[u.id] = true;
    }
    detail::StopWatch watch;
    ServerPhaseTimings t;
    RingElement acc = uploads[0].c0;
    add_into(acc, uploads[0].masked_share);
    for (size_t i = 1; i < uploads.size(); ++i) {
        add_into(acc, uploads[i].c0);
        add_into(acc, uploads[i].masked_share);
    }
    t.aggregate_ms = watch.lap_ms();
    AggregateResult result;
    result.round = uploads[0].round;
    result.values = decode(acc, directory.params.scale());
    result.recovered = std::move(acc);
    t.decode_ms = watch.lap_ms();
    t.total_ms = t.aggregate_ms + t.decode_ms;
    if (timings != nullptr) *timings = t;
    return result;
}

// ---------------------------------------------------------------------------
// Wire format. Every message starts with the same 19-byte header:
//   offset 0: magic "HAGG"
//   offset 4: version (1)
//   offset 5: message type (1 directory, 2 upload, 3 aggregate)
//   offset 6: round, u32 LE
//   offset 10: sender id, u32 LE
//   offset 14: ring degree, u32 LE
//   offset 18: modulus chain length, u8
// Polynomials follow as chain-length planes of degree u64 LE residues, each
// residue canonical (strictly below its modulus).
// ---------------------------------------------------------------------------

inline constexpr uint8_t kWireVersion = 1;
inline constexpr uint8_t kMsgDirectory = 1;
inline constexpr uint8_t kMsgUpload = 2;
inline constexpr uint8_t kMsgAggregate = 3;
inline constexpr size_t kHeaderBytes = 19;

namespace detail {

inline void append_u8(std::vector<uint8_t>& out, uint8_t v) {
    out.push_back(v);
}

inline void append_u32(std::vector<uint8_t>& out, uint32_t v) {
    uint8_t raw[4];
    store_le32(v, raw);
    out.insert(out.end(), raw, raw + 4);
}

inline void append_u64(std::vector<uint8_t>& out, uint64_t v) {
    uint8_t raw[8];
    store_le64(v, raw);
    out.insert(out.end(), raw, raw + 8);
}

inline void append_f64(std::vector<uint8_t>& out, double v) {
    append_u64(out, std::bit_cast<uint64_t>(v));
}

inline void append_header(std::vector<uint8_t>& out, uint8_t msg_type,
                          uint32_t round, uint32_t id, const RingContext& ctx) {
    out.push_back('H');
    out.push_back('A');
    out.push_back('G');
    out.push_back('G');
    append_u8(out, kWireVersion);
    append_u8(out, msg_type);
    append_u32(out, round);
    append_u32(out, id);
    append_u32(out, static_cast<uint32_t>(ctx.degree()));
    append_u8(out, static_cast<uint8_t>(ctx.chain_length()));
}

inline void append_element(std::vector<uint8_t>& out, const RingElement& e) {
    for (size_t k = 0; k < e.context()->chain_length(); ++k) {
        for (uint64_t r : e.plane(k)) append_u64(out, r);
    }
}

class ByteReader {
public:
    explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

    uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
        pos_ += 4;
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    void bytes(uint8_t* out, size_t len) {
        need(len);
        std::memcpy(out, data_.data() + pos_, len);
        pos_ += len;
    }

    void expect_end() const {
        if (pos_ != data_.size()) {
            throw SerializationError("trailing bytes after message body");
        }
    }

    size_t remaining() const { return data_.size() - pos_; }

private:
    void need(size_t len) const {
        if (data_.size() - pos_ < len) {
            throw SerializationError("truncated message");
        }
    }

    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

struct WireHeader {
    uint8_t msg_type = 0;
    uint32_t round = 0;
    uint32_t id = 0;
    uint32_t degree = 0;
    uint8_t chain_length = 0;
};

inline WireHeader read_header(ByteReader& reader, uint8_t expected_type) {
    uint8_t magic[4];
    reader.bytes(magic, 4);
    if (std::memcmp(magic, "HAGG", 4) != 0) {
        throw SerializationError("bad magic");
    }
    const uint8_t version = reader.u8();
    if (version != kWireVersion) {
        throw SerializationError("unsupported wire version " +
                                 std::to_string(version));
    }
    WireHeader h;
    h.msg_type = reader.u8();
    if (h.msg_type != expected_type) {
        throw SerializationError("unexpected message type " +
                                 std::to_string(h.msg_type));
    }
    h.round = reader.u32();
    h.id = reader.u32();
    h.degree = reader.u32();
    h.chain_length = reader.u8();
    return h;
}

inline void read_element(ByteReader& reader, RingElement& out) {
    const RingContext& ctx = *out.context();
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        const uint64_t q = ctx.moduli()[k].value();
        auto plane = out.plane(k);
        for (size_t j = 0; j < ctx.degree(); ++j) {
            const uint64_t r = reader.u64();
            if (r >= q) {
                throw SerializationError(
                    "non-canonical residue at plane " + std::to_string(k) +
                    ", coefficient " + std::to_string(j));
            }
            plane[j] = r;
        }
    }
}

inline void check_ring_header(const WireHeader& h, const RingContext& ctx) {
    if (h.degree != ctx.degree() || h.chain_length != ctx.chain_length()) {
        throw SerializationError("message ring shape (" +
                                 std::to_string(h.degree) + ", " +
                                 std::to_string(h.chain_length) +
                                 ") does not match the expected context");
    }
}

}  // namespace detail

inline std::vector<uint8_t> serialize_upload(const ClientUpload& upload) {
    const RingContext& ctx = *upload.c0.context();
    std::vector<uint8_t> out;
    out.reserve(kHeaderBytes + 2 * ctx.chain_length() * ctx.degree() * 8);
    detail::append_header(out, kMsgUpload, upload.round, upload.id, ctx);
    detail::append_element(out, upload.c0);
    detail::append_element(out, upload.masked_share);
    return out;
}

inline ClientUpload deserialize_upload(std::span<const uint8_t> bytes,
                                       const ParamSet& params) {
    detail::ByteReader reader(bytes);
    const detail::WireHeader h = detail::read_header(reader, kMsgUpload);
    detail::check_ring_header(h, *params.context());
    ClientUpload upload;
    upload.round = h.round;
    upload.id = h.id;
    upload.c0 = RingElement::zero(params.context());
    upload.masked_share = RingElement::zero(params.context());
    detail::read_element(reader, upload.c0);
    detail::read_element(reader, upload.masked_share);
    reader.expect_end();
    return upload;
}

inline std::vector<uint8_t> serialize_directory(const PublicDirectory& dir) {
    const ParamSet& p = dir.params;
    const RingContext& ctx = *p.context();
    std::vector<uint8_t> out;
    detail::append_header(out, kMsgDirectory, 0, 0, ctx);
    for (const Modulus& m : ctx.moduli()) detail::append_u64(out, m.value());
    detail::append_u64(out, p.scale().delta());
    detail::append_u32(out, static_cast<uint32_t>(p.dimension()));
    detail::append_u32(out, p.max_cohort());
    detail::append_f64(out, p.max_abs_input());
    detail::append_u32(out, p.bit_budget());
    detail::append_f64(out, p.noise().sigma_err());
    detail::append_f64(out, p.noise().sigma_secret());
    detail::append_f64(out, p.noise().sigma_smudge());
    out.insert(out.end(), dir.crs.seed.bytes.begin(), dir.crs.seed.bytes.end());
    detail::append_u32(out, dir.cohort_size());
    for (const DirectoryEntry& entry : dir.entries) {
        detail::append_element(out, entry.b);
        out.insert(out.end(), entry.ecdh_pk.begin(), entry.ecdh_pk.end());
    }
    return out;
}

inline PublicDirectory deserialize_directory(std::span<const uint8_t> bytes) {
    detail::ByteReader reader(bytes);
    const detail::WireHeader h = detail::read_header(reader, kMsgDirectory);
    std::vector<uint64_t> moduli(h.chain_length);
    for (uint64_t& q : moduli) q = reader.u64();
    const RingContextPtr ctx = RingContext::with_moduli(h.degree, moduli);
    ParamOptions opts;
    opts.delta = reader.u64();
    const uint32_t dimension = reader.u32();
    opts.max_cohort = reader.u32();
    opts.max_abs_input = reader.f64();
    opts.bit_budget = reader.u32();
    const double sigma_err = reader.f64();
    const double sigma_secret = reader.f64();
    const double sigma_smudge = reader.f64();
    opts.noise = NoiseSpec(sigma_err, sigma_secret, sigma_smudge);
    Seed crs_seed;
    reader.bytes(crs_seed.bytes.data(), crs_seed.bytes.size());
    PublicDirectory dir{ParamSet::from_context(ctx, dimension, opts),
                        crs_generate(ctx, crs_seed),
                        {}};
    const uint32_t cohort = reader.u32();
    dir.entries.reserve(cohort);
    for (uint32_t i = 0; i < cohort; ++i) {
        DirectoryEntry entry{RingElement::zero(ctx), {}};
        detail::read_element(reader, entry.b);
        reader.bytes(entry.ecdh_pk.data(), entry.ecdh_pk.size());
        dir.entries.push_back(std::move(entry));
    }
    reader.expect_end();
    return dir;
}

/// What the server sends back: just the decoded sum for the round.
struct AggregateDownlink {
    uint32_t round = 0;
    std::vector<double> values;
};

inline std::vector<uint8_t> serialize_aggregate(const AggregateResult& result,
                                                const PublicDirectory& dir) {
    std::vector<uint8_t> out;
    detail::append_header(out, kMsgAggregate, result.round, 0,
                          *dir.params.context());
    detail::append_u32(out, static_cast<uint32_t>(result.values.size()));
    for (double v : result.values) detail::append_f64(out, v);
    return out;
}

inline AggregateDownlink deserialize_aggregate(std::span<const uint8_t> bytes) {
    detail::ByteReader reader(bytes);
    const detail::WireHeader h = detail::read_header(reader, kMsgAggregate);
    AggregateDownlink down;
    down.round = h.round;
    const uint32_t count = reader.u32();
    if (reader.remaining() != size_t{count} * 8) {
        throw SerializationError("aggregate body length mismatch");
    }
    down.values.resize(count);
    for (double& v : down.values) v = reader.f64();
    reader.expect_end();
    return down;
}

/// Closed-form byte accounting; mirrors the serializers exactly and is
/// cross-checked against them in the test suite.
struct PayloadReport {
    uint64_t uplink_bytes_per_client = 0;
    uint64_t server_inbound_bytes = 0;
    uint64_t downlink_bytes = 0;
    uint64_t plain_update_bytes = 0;
    double expansion_vs_plain = 0.0;
};

inline PayloadReport payload_accounting(const ParamSet& params,
                                        uint32_t cohort_size) {
    PayloadReport r;
    const uint64_t poly_bytes = static_cast<uint64_t>(params.degree()) *
                                params.context()->chain_length() * 8;
    r.uplink_bytes_per_client = kHeaderBytes + 2 * poly_bytes;
    r.server_inbound_bytes = r.uplink_bytes_per_client * cohort_size;
    r.downlink_bytes = kHeaderBytes + 4 + 8 * params.dimension();
    r.plain_update_bytes = 8 * params.dimension();
    r.expansion_vs_plain = static_cast<double>(r.uplink_bytes_per_client) /
                           static_cast<double>(r.plain_update_bytes);
    return r;
}

}  // namespace hybagg

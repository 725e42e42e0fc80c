#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "hybagg/errors.hpp"

namespace hybagg {

using BigInt = boost::multiprecision::cpp_int;

namespace detail {

inline uint64_t add_mod(uint64_t a, uint64_t b, uint64_t q) {
    // a, b < q < 2^62, so the sum cannot wrap.
    uint64_t r = a + b;
    return r >= q ? r - q : r;
}

inline uint64_t sub_mod(uint64_t a, uint64_t b, uint64_t q) {
    return a >= b ? a - b : a + q - b;
}

inline uint64_t mul_mod(uint64_t a, uint64_t b, uint64_t q) {
    return static_cast<uint64_t>(static_cast<unsigned __int128>(a) * b % q);
}

inline uint64_t pow_mod(uint64_t base, uint64_t exp, uint64_t q) {
    uint64_t acc = 1 % q;
    uint64_t cur = base % q;
    while (exp != 0) {
        if (exp & 1) acc = mul_mod(acc, cur, q);
        cur = mul_mod(cur, cur, q);
        exp >>= 1;
    }
    return acc;
}

inline uint64_t inv_mod(uint64_t a, uint64_t q) {
    // q prime.
    return pow_mod(a, q - 2, q);
}

/// Precomputed-quotient modular multiplication (Shoup). Requires w < q < 2^63;
/// returns x*w mod q for any 64-bit x.
inline uint64_t shoup_quotient(uint64_t w, uint64_t q) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(w) << 64) / q);
}

inline uint64_t mul_shoup(uint64_t x, uint64_t w, uint64_t w_quot, uint64_t q) {
    const uint64_t hi =
        static_cast<uint64_t>((static_cast<unsigned __int128>(x) * w_quot) >> 64);
    uint64_t r = x * w - hi * q;
    return r >= q ? r - q : r;
}

/// Deterministic Miller-Rabin, valid for the full 64-bit range.
inline bool is_prime_u64(uint64_t x) {
    if (x < 2) return false;
    for (uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull,
                       23ull, 29ull, 31ull, 37ull}) {
        if (x == p) return true;
        if (x % p == 0) return false;
    }
    uint64_t d = x - 1;
    int s = 0;
    while ((d & 1) == 0) {
        d >>= 1;
        ++s;
    }
    for (uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull,
                       23ull, 29ull, 31ull, 37ull}) {
        uint64_t y = pow_mod(a, d, x);
        if (y == 1 || y == x - 1) continue;
        bool composite = true;
        for (int i = 1; i < s; ++i) {
            y = mul_mod(y, y, x);
            if (y == x - 1) {
                composite = false;
                break;
            }
        }
        if (composite) return false;
    }
    return true;
}

inline uint32_t reverse_bits(uint32_t v, unsigned bit_count) {
    uint32_t r = 0;
    for (unsigned i = 0; i < bit_count; ++i) {
        r = (r << 1) | ((v >> i) & 1);
    }
    return r;
}

}  // namespace detail

/// A single NTT-friendly prime together with the ring degree it was checked
/// against. Invariants (prime, q ≡ 1 mod 2n, q < 2^62) hold after construction.
class Modulus {
public:
    Modulus(uint64_t value, size_t degree) : value_(value) {
        if (value >= (uint64_t{1} << 62)) {
            throw ParamError("modulus " + std::to_string(value) + " exceeds 2^62");
        }
        if (!detail::is_prime_u64(value)) {
            throw ParamError("modulus " + std::to_string(value) + " is not prime");
        }
        if (value % (2 * static_cast<uint64_t>(degree)) != 1) {
            throw ParamError("modulus " + std::to_string(value) +
                             " is not 1 mod 2n for n=" + std::to_string(degree));
        }
    }

    uint64_t value() const { return value_; }

    friend bool operator==(const Modulus& a, const Modulus& b) {
        return a.value_ == b.value_;
    }

private:
    uint64_t value_;
};

namespace detail {

/// Twiddle tables for one prime of the chain. The forward transform maps the
/// coefficient vector (natural order) to evaluations at odd powers of psi in
/// bit-reversed order; the inverse undoes it, including the 1/n scaling.
class NttTable {
public:
    NttTable(uint64_t q, size_t n) : q_(q), n_(n) {
        log_n_ = static_cast<unsigned>(std::countr_zero(n));
        psi_ = find_primitive_root(q, n);
        const uint64_t psi_inv = inv_mod(psi_, q);
        fwd_roots_.resize(n);
        fwd_quot_.resize(n);
        inv_roots_.resize(n);
        inv_quot_.resize(n);
        uint64_t pw = 1, ipw = 1;
        for (size_t k = 0; k < n; ++k) {
            const uint32_t pos = reverse_bits(static_cast<uint32_t>(k), log_n_);
            fwd_roots_[pos] = pw;
            inv_roots_[pos] = ipw;
            pw = mul_mod(pw, psi_, q);
            ipw = mul_mod(ipw, psi_inv, q);
        }
        for (size_t k = 0; k < n; ++k) {
            fwd_quot_[k] = shoup_quotient(fwd_roots_[k], q);
            inv_quot_[k] = shoup_quotient(inv_roots_[k], q);
        }
        n_inv_ = inv_mod(static_cast<uint64_t>(n) % q, q);
        n_inv_quot_ = shoup_quotient(n_inv_, q);
    }

    void forward(uint64_t* a) const {
        for (size_t len = n_ >> 1; len >= 1; len >>= 1) {
            const size_t blocks = n_ / (2 * len);
            for (size_t b = 0; b < blocks; ++b) {
                const uint64_t w = fwd_roots_[blocks + b];
                const uint64_t wq = fwd_quot_[blocks + b];
                uint64_t* x = a + 2 * b * len;
                uint64_t* y = x + len;
                for (size_t j = 0; j < len; ++j) {
                    const uint64_t u = x[j];
                    const uint64_t v = mul_shoup(y[j], w, wq, q_);
                    x[j] = add_mod(u, v, q_);
                    y[j] = sub_mod(u, v, q_);
                }
            }
        }
    }

    void inverse(uint64_t* a) const {
        for (size_t len = 1; len < n_; len <<= 1) {
            const size_t blocks = n_ / (2 * len);
            for (size_t b = 0; b < blocks; ++b) {
                const uint64_t w = inv_roots_[blocks + b];
                const uint64_t wq = inv_quot_[blocks + b];
                uint64_t* x = a + 2 * b * len;
                uint64_t* y = x + len;
                for (size_t j = 0; j < len; ++j) {
                    const uint64_t u = x[j];
                    const uint64_t v = y[j];
                    x[j] = add_mod(u, v, q_);
                    y[j] = mul_shoup(sub_mod(u, v, q_), w, wq, q_);
                }
            }
        }
        for (size_t j = 0; j < n_; ++j) {
            a[j] = mul_shoup(a[j], n_inv_, n_inv_quot_, q_);
        }
    }

    uint64_t psi() const { return psi_; }

private:
    /// Smallest-witness primitive 2n-th root of unity mod q, verified by
    /// psi^n == -1. Exists because q ≡ 1 (mod 2n).
    static uint64_t find_primitive_root(uint64_t q, size_t n) {
        const uint64_t exp = (q - 1) / (2 * static_cast<uint64_t>(n));
        for (uint64_t g = 2; g < q; ++g) {
            const uint64_t cand = pow_mod(g, exp, q);
            if (pow_mod(cand, static_cast<uint64_t>(n), q) == q - 1) {
                return cand;
            }
        }
        throw ParamError("no primitive 2n-th root of unity mod " + std::to_string(q));
    }

    uint64_t q_;
    size_t n_;
    unsigned log_n_;
    uint64_t psi_;
    uint64_t n_inv_, n_inv_quot_;
    std::vector<uint64_t> fwd_roots_, fwd_quot_;
    std::vector<uint64_t> inv_roots_, inv_quot_;
};

}  // namespace detail

/// Immutable description of R_q = Z_q[X]/(X^n + 1) with q given as an RNS
/// chain of distinct NTT-friendly primes. Construction precomputes the NTT
/// tables and the CRT lift data; afterwards the context is read-only and can
/// be shared freely across threads.
class RingContext {
public:
    /// Chooses the modulus chain for a target total bit size. Splits the
    /// budget over ceil(budget/60) primes and takes, for each, the first
    /// prime ≡ 1 (mod 2n) above 2^(budget/count), so the product strictly
    /// exceeds 2^budget.
    static std::shared_ptr<const RingContext> create(size_t degree,
                                                     unsigned bit_budget) {
        if (bit_budget == 0) throw ParamError("bit budget must be positive");
        const unsigned count = (bit_budget + 59) / 60;
        if (count > 4) {
            throw ParamError("bit budget " + std::to_string(bit_budget) +
                             " needs more than 4 primes");
        }
        const unsigned per_prime = (bit_budget + count - 1) / count;
        std::vector<uint64_t> primes;
        const uint64_t step = 2 * static_cast<uint64_t>(degree);
        uint64_t candidate = ((uint64_t{1} << per_prime) / step + 1) * step + 1;
        while (primes.size() < count) {
            if (candidate >= (uint64_t{1} << 62)) {
                throw ParamError("prime search for bit budget " +
                                 std::to_string(bit_budget) + " left the 62-bit range");
            }
            if (detail::is_prime_u64(candidate)) primes.push_back(candidate);
            candidate += step;
        }
        return with_moduli(degree, primes);
    }

    /// Builds a context over caller-chosen primes (used by tests with toy
    /// moduli and when reconstructing a context from a serialized directory).
    static std::shared_ptr<const RingContext> with_moduli(
        size_t degree, const std::vector<uint64_t>& moduli) {
        return std::shared_ptr<const RingContext>(new RingContext(degree, moduli));
    }

    size_t degree() const { return n_; }
    size_t chain_length() const { return moduli_.size(); }
    const std::vector<Modulus>& moduli() const { return moduli_; }
    const BigInt& modulus_product() const { return q_product_; }

    bool same_ring(const RingContext& other) const {
        if (this == &other) return true;
        if (n_ != other.n_ || moduli_.size() != other.moduli_.size()) return false;
        for (size_t k = 0; k < moduli_.size(); ++k) {
            if (!(moduli_[k] == other.moduli_[k])) return false;
        }
        return true;
    }

    const detail::NttTable& ntt_table(size_t k) const { return tables_[k]; }

    /// Centered representative of a residue vector (one residue per prime),
    /// in (-Q/2, Q/2].
    BigInt lift_signed(const uint64_t* residues) const {
        if (moduli_.size() == 1) {
            const uint64_t q = moduli_[0].value();
            const uint64_t r = residues[0];
            return r > (q - 1) / 2 ? BigInt(r) - q : BigInt(r);
        }
        if (crt_fits_u128_) {
            unsigned __int128 acc = 0;
            for (size_t k = 0; k < moduli_.size(); ++k) {
                const uint64_t t = detail::mul_mod(residues[k], crt_hat_inv_[k],
                                                   moduli_[k].value());
                acc += static_cast<unsigned __int128>(t) * crt_hat_u128_[k];
                if (acc >= q_product_u128_) acc -= q_product_u128_;
            }
            BigInt v = BigInt(static_cast<uint64_t>(acc >> 64));
            v <<= 64;
            v += static_cast<uint64_t>(acc);
            if (v > q_half_) v -= q_product_;
            return v;
        }
        BigInt acc = 0;
        for (size_t k = 0; k < moduli_.size(); ++k) {
            const uint64_t t =
                detail::mul_mod(residues[k], crt_hat_inv_[k], moduli_[k].value());
            acc += crt_hat_[k] * t;
        }
        acc %= q_product_;
        if (acc > q_half_) acc -= q_product_;
        return acc;
    }

    void reduce_signed(const BigInt& value, uint64_t* residues_out) const {
        for (size_t k = 0; k < moduli_.size(); ++k) {
            const uint64_t q = moduli_[k].value();
            BigInt r = value % q;
            if (r < 0) r += q;
            residues_out[k] = static_cast<uint64_t>(r);
        }
    }

    void reduce_signed(int64_t value, uint64_t* residues_out) const {
        for (size_t k = 0; k < moduli_.size(); ++k) {
            const uint64_t q = moduli_[k].value();
            if (value >= 0) {
                residues_out[k] = static_cast<uint64_t>(value) % q;
            } else {
                const uint64_t m = static_cast<uint64_t>(-(value + 1)) + 1;
                const uint64_t r = m % q;
                residues_out[k] = r == 0 ? 0 : q - r;
            }
        }
    }

private:
    RingContext(size_t degree, const std::vector<uint64_t>& moduli) : n_(degree) {
        if (degree < 4 || degree > (size_t{1} << 17) ||
            !std::has_single_bit(degree)) {
            throw ParamError("ring degree " + std::to_string(degree) +
                             " is not a power of two in [4, 2^17]");
        }
        if (moduli.empty() || moduli.size() > 4) {
            throw ParamError("modulus chain length must be 1..4");
        }
        moduli_.reserve(moduli.size());
        tables_.reserve(moduli.size());
        q_product_ = 1;
        for (uint64_t q : moduli) {
            for (const Modulus& prev : moduli_) {
                if (prev.value() == q) {
                    throw ParamError("duplicate modulus " + std::to_string(q));
                }
            }
            moduli_.emplace_back(q, degree);
            tables_.emplace_back(q, degree);
            q_product_ *= q;
        }
        q_half_ = (q_product_ - 1) / 2;

        crt_hat_.resize(moduli_.size());
        crt_hat_inv_.resize(moduli_.size());
        for (size_t k = 0; k < moduli_.size(); ++k) {
            crt_hat_[k] = q_product_ / moduli_[k].value();
            const uint64_t hat_mod =
                static_cast<uint64_t>(crt_hat_[k] % moduli_[k].value());
            crt_hat_inv_[k] = detail::inv_mod(hat_mod, moduli_[k].value());
        }
        crt_fits_u128_ = boost::multiprecision::msb(q_product_) < 120;
        if (crt_fits_u128_) {
            q_product_u128_ = to_u128(q_product_);
            crt_hat_u128_.resize(moduli_.size());
            for (size_t k = 0; k < moduli_.size(); ++k) {
                crt_hat_u128_[k] = to_u128(crt_hat_[k]);
            }
        }
    }

    static unsigned __int128 to_u128(const BigInt& v) {
        const uint64_t lo = static_cast<uint64_t>(v & 0xffffffffffffffffULL);
        const uint64_t hi = static_cast<uint64_t>(v >> 64);
        return (static_cast<unsigned __int128>(hi) << 64) | lo;
    }

    size_t n_;
    std::vector<Modulus> moduli_;
    std::vector<detail::NttTable> tables_;
    BigInt q_product_;
    BigInt q_half_;
    std::vector<BigInt> crt_hat_;
    std::vector<uint64_t> crt_hat_inv_;
    bool crt_fits_u128_ = false;
    unsigned __int128 q_product_u128_ = 0;
    std::vector<unsigned __int128> crt_hat_u128_;
};

using RingContextPtr = std::shared_ptr<const RingContext>;

/// Element of R_q, stored as one canonical residue vector per prime of the
/// chain (residue plane k holds the coefficients mod q_k, natural order).
class RingElement {
public:
    static RingElement zero(RingContextPtr ctx) {
        RingElement e;
        e.ctx_ = std::move(ctx);
        e.planes_.assign(e.ctx_->chain_length(),
                         std::vector<uint64_t>(e.ctx_->degree(), 0));
        return e;
    }

    const RingContextPtr& context() const { return ctx_; }

    std::span<uint64_t> plane(size_t k) { return planes_[k]; }
    std::span<const uint64_t> plane(size_t k) const { return planes_[k]; }

    /// Residues of coefficient j across the chain, gathered into `out`
    /// (chain_length entries).
    void coeff_residues(size_t j, uint64_t* out) const {
        for (size_t k = 0; k < planes_.size(); ++k) out[k] = planes_[k][j];
    }

    void set_coeff(size_t j, int64_t signed_value) {
        uint64_t tmp[4];
        ctx_->reduce_signed(signed_value, tmp);
        for (size_t k = 0; k < planes_.size(); ++k) planes_[k][j] = tmp[k];
    }

    friend bool operator==(const RingElement& a, const RingElement& b) {
        if (!a.ctx_->same_ring(*b.ctx_)) return false;
        return a.planes_ == b.planes_;
    }

private:
    RingContextPtr ctx_;
    std::vector<std::vector<uint64_t>> planes_;

    friend RingElement add(const RingElement&, const RingElement&);
    friend RingElement sub(const RingElement&, const RingElement&);
    friend RingElement neg(const RingElement&);
    friend RingElement mul(const RingElement&, const RingElement&);
};

namespace detail {

inline void require_same_ring(const RingElement& a, const RingElement& b) {
    if (!a.context()->same_ring(*b.context())) {
        throw ContextMismatchError("ring elements belong to different contexts");
    }
}

}  // namespace detail

inline RingElement add(const RingElement& a, const RingElement& b) {
    detail::require_same_ring(a, b);
    RingElement out = a;
    const RingContext& ctx = *a.context();
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        const uint64_t q = ctx.moduli()[k].value();
        auto dst = out.plane(k);
        auto src = b.plane(k);
        for (size_t j = 0; j < ctx.degree(); ++j) {
            dst[j] = detail::add_mod(dst[j], src[j], q);
        }
    }
    return out;
}

inline RingElement sub(const RingElement& a, const RingElement& b) {
    detail::require_same_ring(a, b);
    RingElement out = a;
    const RingContext& ctx = *a.context();
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        const uint64_t q = ctx.moduli()[k].value();
        auto dst = out.plane(k);
        auto src = b.plane(k);
        for (size_t j = 0; j < ctx.degree(); ++j) {
            dst[j] = detail::sub_mod(dst[j], src[j], q);
        }
    }
    return out;
}

inline RingElement neg(const RingElement& a) {
    RingElement out = a;
    const RingContext& ctx = *a.context();
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        const uint64_t q = ctx.moduli()[k].value();
        auto dst = out.plane(k);
        for (size_t j = 0; j < ctx.degree(); ++j) {
            dst[j] = dst[j] == 0 ? 0 : q - dst[j];
        }
    }
    return out;
}

/// Negacyclic product via forward NTT, pointwise multiply, inverse NTT,
/// independently per residue plane.
inline RingElement mul(const RingElement& a, const RingElement& b) {
    detail::require_same_ring(a, b);
    const RingContext& ctx = *a.context();
    RingElement out = RingElement::zero(a.context());
    std::vector<uint64_t> fa(ctx.degree()), fb(ctx.degree());
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        const uint64_t q = ctx.moduli()[k].value();
        const detail::NttTable& table = ctx.ntt_table(k);
        auto pa = a.plane(k);
        auto pb = b.plane(k);
        std::copy(pa.begin(), pa.end(), fa.begin());
        std::copy(pb.begin(), pb.end(), fb.begin());
        table.forward(fa.data());
        table.forward(fb.data());
        auto dst = out.plane(k);
        for (size_t j = 0; j < ctx.degree(); ++j) {
            dst[j] = detail::mul_mod(fa[j], fb[j], q);
        }
        table.inverse(dst.data());
    }
    return out;
}

/// In-place accumulation; used by the fold-heavy aggregation paths.
inline void add_into(RingElement& acc, const RingElement& src) {
    detail::require_same_ring(acc, src);
    const RingContext& ctx = *acc.context();
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        const uint64_t q = ctx.moduli()[k].value();
        auto dst = acc.plane(k);
        auto s = src.plane(k);
        for (size_t j = 0; j < ctx.degree(); ++j) {
            dst[j] = detail::add_mod(dst[j], s[j], q);
        }
    }
}

inline void sub_into(RingElement& acc, const RingElement& src) {
    detail::require_same_ring(acc, src);
    const RingContext& ctx = *acc.context();
    for (size_t k = 0; k < ctx.chain_length(); ++k) {
        const uint64_t q = ctx.moduli()[k].value();
        auto dst = acc.plane(k);
        auto s = src.plane(k);
        for (size_t j = 0; j < ctx.degree(); ++j) {
            dst[j] = detail::sub_mod(dst[j], s[j], q);
        }
    }
}

inline RingElement operator+(const RingElement& a, const RingElement& b) {
    return add(a, b);
}
inline RingElement operator-(const RingElement& a, const RingElement& b) {
    return sub(a, b);
}
inline RingElement operator-(const RingElement& a) { return neg(a); }
inline RingElement operator*(const RingElement& a, const RingElement& b) {
    return mul(a, b);
}

/// Coefficients as centered representatives in (-Q/2, Q/2].
inline std::vector<BigInt> to_signed(const RingElement& a) {
    const RingContext& ctx = *a.context();
    std::vector<BigInt> out(ctx.degree());
    uint64_t tmp[4];
    for (size_t j = 0; j < ctx.degree(); ++j) {
        a.coeff_residues(j, tmp);
        out[j] = ctx.lift_signed(tmp);
    }
    return out;
}

inline RingElement from_signed(RingContextPtr ctx, std::span<const BigInt> coeffs) {
    if (coeffs.size() != ctx->degree()) {
        throw ParamError("coefficient count " + std::to_string(coeffs.size()) +
                         " does not match ring degree " +
                         std::to_string(ctx->degree()));
    }
    RingElement out = RingElement::zero(ctx);
    uint64_t tmp[4];
    for (size_t j = 0; j < coeffs.size(); ++j) {
        ctx->reduce_signed(coeffs[j], tmp);
        for (size_t k = 0; k < ctx->chain_length(); ++k) out.plane(k)[j] = tmp[k];
    }
    return out;
}

inline RingElement from_signed(RingContextPtr ctx, std::span<const int64_t> coeffs) {
    if (coeffs.size() != ctx->degree()) {
        throw ParamError("coefficient count " + std::to_string(coeffs.size()) +
                         " does not match ring degree " +
                         std::to_string(ctx->degree()));
    }
    RingElement out = RingElement::zero(ctx);
    uint64_t tmp[4];
    for (size_t j = 0; j < coeffs.size(); ++j) {
        ctx->reduce_signed(coeffs[j], tmp);
        for (size_t k = 0; k < ctx->chain_length(); ++k) out.plane(k)[j] = tmp[k];
    }
    return out;
}

/// max_j |coefficient_j| over the centered representatives.
inline BigInt infinity_norm(const RingElement& a) {
    BigInt best = 0;
    uint64_t tmp[4];
    const RingContext& ctx = *a.context();
    for (size_t j = 0; j < ctx.degree(); ++j) {
        a.coeff_residues(j, tmp);
        BigInt v = ctx.lift_signed(tmp);
        if (v < 0) v = -v;
        if (v > best) best = v;
    }
    return best;
}

inline bool is_zero(const RingElement& a) {
    for (size_t k = 0; k < a.context()->chain_length(); ++k) {
        for (uint64_t r : a.plane(k)) {
            if (r != 0) return false;
        }
    }
    return true;
}

}  // namespace hybagg

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hybagg/errors.hpp"
#include "hybagg/ring.hpp"

namespace hybagg {

/// Number of real values one element can carry: one per coefficient slot.
inline size_t capacity(const RingContext& ctx) { return ctx.degree(); }

/// Fixed-point scale for coefficient packing. `max_cohort` is the largest
/// number of vectors that will ever be summed under this scale; the encode
/// overflow guard keeps every aggregate coefficient strictly inside
/// (-Q/2, Q/2) with a 2x safety margin.
class ScaleParams {
public:
    static ScaleParams create(const RingContextPtr& ctx, uint64_t delta,
                              size_t dimension, uint32_t max_cohort = 1) {
        if (delta < (uint64_t{1} << 20) || !std::has_single_bit(delta)) {
            throw ParamError("delta must be a power of two, at least 2^20");
        }
        const size_t q_bits = boost::multiprecision::msb(ctx->modulus_product()) + 1;
        if (std::bit_width(delta) - 1 > static_cast<int>(q_bits) - 20) {
            throw ParamError("delta 2^" +
                             std::to_string(std::bit_width(delta) - 1) +
                             " leaves under 20 bits of headroom below Q");
        }
        if (dimension == 0 || dimension > capacity(*ctx)) {
            throw ParamError("dimension " + std::to_string(dimension) +
                             " exceeds ring capacity " +
                             std::to_string(capacity(*ctx)));
        }
        if (max_cohort == 0) {
            throw ParamError("max_cohort must be at least 1");
        }
        ScaleParams sp;
        sp.delta_ = delta;
        sp.dimension_ = dimension;
        sp.max_cohort_ = max_cohort;
        const double q_double = ctx->modulus_product().convert_to<double>();
        sp.scaled_limit_ = q_double / (2.0 * max_cohort * 2.0);
        return sp;
    }

    uint64_t delta() const { return delta_; }
    size_t dimension() const { return dimension_; }
    uint32_t max_cohort() const { return max_cohort_; }

    /// Largest |x|*delta the guard admits.
    double scaled_limit() const { return scaled_limit_; }

private:
    ScaleParams() = default;
    uint64_t delta_ = 0;
    size_t dimension_ = 0;
    uint32_t max_cohort_ = 1;
    double scaled_limit_ = 0.0;
};

/// x -> sum_j floor(x_j * delta) X^j, remaining coefficients zero. Rejects
/// (naming the offending index) any value that is non-finite or whose scaled
/// magnitude would let a max_cohort-fold sum leave the plaintext space.
inline RingElement encode(std::span<const double> values, const ScaleParams& sp,
                          const RingContextPtr& ctx) {
    if (values.size() != sp.dimension()) {
        throw CodecError("input has " + std::to_string(values.size()) +
                         " values but the scale is for dimension " +
                         std::to_string(sp.dimension()));
    }
    if (sp.dimension() > ctx->degree()) {
        throw CodecError("dimension " + std::to_string(sp.dimension()) +
                         " exceeds ring degree " + std::to_string(ctx->degree()));
    }
    RingElement out = RingElement::zero(ctx);
    const double delta = static_cast<double>(sp.delta());
    uint64_t tmp[4];
    for (size_t j = 0; j < values.size(); ++j) {
        const double x = values[j];
        if (!std::isfinite(x)) {
            throw CodecError("encode rejected non-finite value at index " +
                             std::to_string(j));
        }
        const double scaled = x * delta;
        if (!(std::abs(scaled) < sp.scaled_limit())) {
            throw CodecError("encode overflow at index " + std::to_string(j) +
                             ": |x|*delta exceeds the aggregate headroom");
        }
        const double floored = std::floor(scaled);
        if (std::abs(floored) < 0x1.0p62) {
            ctx->reduce_signed(static_cast<int64_t>(floored), tmp);
        } else {
            ctx->reduce_signed(BigInt(floored), tmp);
        }
        for (size_t k = 0; k < ctx->chain_length(); ++k) out.plane(k)[j] = tmp[k];
    }
    return out;
}

/// First `dimension` coefficients, centered and divided back by delta.
inline std::vector<double> decode(const RingElement& element,
                                  const ScaleParams& sp) {
    const RingContext& ctx = *element.context();
    if (sp.dimension() > ctx.degree()) {
        throw CodecError("dimension " + std::to_string(sp.dimension()) +
                         " exceeds ring degree " + std::to_string(ctx.degree()));
    }
    std::vector<double> out(sp.dimension());
    const double delta = static_cast<double>(sp.delta());
    uint64_t tmp[4];
    for (size_t j = 0; j < sp.dimension(); ++j) {
        element.coeff_residues(j, tmp);
        out[j] = ctx.lift_signed(tmp).convert_to<double>() / delta;
    }
    return out;
}

}  // namespace hybagg

// End-to-end acceptance checks for the aggregation stack. Each test prints
// one "[ACCEPT] <n> <name>: PASS/FAIL (details)" line so a log scrape shows
// the whole gate at a glance; the gtest assertions carry the same verdicts.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hybagg/bench.hpp"
#include "hybagg/hybagg.hpp"
#include "testing/oracles.hpp"

namespace hybagg {
namespace {

class WallClock {
public:
    WallClock() : t0_(std::chrono::steady_clock::now()) {}

    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             t0_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

void report(int number, const char* name, bool pass, const std::string& details) {
    std::printf("[ACCEPT] %d %s: %s (%s)\n", number, name,
                pass ? "PASS" : "FAIL", details.c_str());
    std::fflush(stdout);
}

std::string format(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

/// Reference parameters used by the cross-cohort byte measurements: degree
/// 8192, two-prime chain, 2^40 scale, floor smudging, cohorts up to 500.
const ParamSet& reference_params() {
    static const ParamSet params = [] {
        ParamOptions opts;
        opts.noise = NoiseSpec(3.2, 3.2, 3276.8);
        opts.max_cohort = 500;
        return ParamSet::create(8192, opts);
    }();
    return params;
}

struct UplinkSample {
    uint32_t cohort = 0;
    uint64_t bytes = 0;
    double expansion = 0.0;
};

/// One serialized upload per cohort size, measured against live cohorts.
const std::vector<UplinkSample>& uplink_samples() {
    static const std::vector<UplinkSample> samples = [] {
        std::vector<UplinkSample> out;
        const ParamSet& params = reference_params();
        const double plain = 8.0 * static_cast<double>(params.dimension());
        for (uint32_t cohort : {2u, 10u, 50u, 200u, 500u}) {
            SetupResult s = setup(params, cohort, Seed::from_u64(200 + cohort));
            const std::vector<double> update = bench::detail::synth_update(
                Seed::from_u64(300 + cohort), 0, 0,
                static_cast<uint32_t>(params.dimension()), 1.0);
            ClientUpload upload =
                client_round(s.keyrings[0], s.directory, update, 0);
            const uint64_t bytes = serialize_upload(upload).size();
            out.push_back(UplinkSample{cohort, bytes,
                                       static_cast<double>(bytes) / plain});
        }
        return out;
    }();
    return samples;
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return (sxy * sxy) / (sxx * syy);
}

TEST(Acceptance, ExactAggregationAtScale) {
    WallClock clock;
    bool pass = false;
    std::string details;
    try {
        bench::ExperimentConfig cfg;
        cfg.clients = {50};
        cfg.dims = {8192};
        cfg.rounds = 20;
        cfg.delta_bits = 40;
        cfg.smudge_bits = 10;
        cfg.digits = 6;
        cfg.seed = 1;
        const std::vector<bench::RoundMetrics> rows =
            bench::run_cohort(cfg, 50, 8192);
        double worst = 0.0;
        bool all_exact = rows.size() == 20;
        for (const bench::RoundMetrics& r : rows) {
            worst = std::max(worst, r.max_abs_error);
            all_exact = all_exact && r.exact_after_round;
        }
        const double elapsed = clock.seconds();
        pass = all_exact && worst <= 1e-6 && elapsed < 30.0;
        details = format(
            "20 rounds of 50 clients at dimension 8192, worst |err| %.3e "
            "(limit 1e-6), %.1fs (limit 30s)", worst, elapsed);
    } catch (const std::exception& e) {
        details = format("exception: %s", e.what());
    }
    report(1, "exact-aggregation", pass, details);
    EXPECT_TRUE(pass) << details;
}

TEST(Acceptance, UploadBytesIndependentOfCohort) {
    const std::vector<UplinkSample>& samples = uplink_samples();
    bool constant = samples.size() == 5;
    for (const UplinkSample& s : samples) {
        constant = constant && s.bytes == samples[0].bytes;
    }
    const bool pass = constant && samples[0].bytes == 262163u;
    report(2, "constant-uplink", pass,
           format("serialized upload %llu bytes for cohorts 2..500",
                  static_cast<unsigned long long>(samples[0].bytes)));
    EXPECT_TRUE(pass);
}

TEST(Acceptance, PayloadExpansionMatchesAccounting) {
    const std::vector<UplinkSample>& samples = uplink_samples();
    const PayloadReport predicted = payload_accounting(reference_params(), 50);
    bool within = true;
    double worst_rel = 0.0;
    for (const UplinkSample& s : samples) {
        const double rel = std::abs(s.expansion - predicted.expansion_vs_plain) /
                           predicted.expansion_vs_plain;
        worst_rel = std::max(worst_rel, rel);
        within = within && rel <= 0.01;
    }
    const bool pass = within;
    // The published reference point for this protocol family lands near 12x
    // (padded degree of twice the dimension and a 3-limb modulus chain); this
    // build's tighter parameters land near 4x. Both are cohort-independent.
    report(3, "payload-expansion", pass,
           format("measured %.4fx vs predicted %.4fx (max rel dev %.2e); "
                  "published reference configuration is ~12x",
                  samples[0].expansion, predicted.expansion_vs_plain,
                  worst_rel));
    EXPECT_TRUE(pass);
}

TEST(Acceptance, PairwiseMasksCancelAcrossRandomCohorts) {
    WallClock clock;
    auto ctx = RingContext::create(256, 55);
    testing::TestRng size_rng(4);
    ChaChaRng key_rng(Seed::from_u64(4));
    uint32_t failures = 0;
    uint64_t cohorts = 0;
    uint64_t pairs = 0;
    for (int iter = 0; iter < 1000; ++iter) {
        const uint32_t cohort = 2 + static_cast<uint32_t>(size_rng.below(63));
        std::vector<EcdhKeyPair> keys(cohort);
        for (EcdhKeyPair& kp : keys) kp = ecdh_keygen(key_rng);

        // One derivation and one expansion per unordered pair.
        const uint32_t round = static_cast<uint32_t>(iter);
        std::vector<std::vector<MaskPoly>> per_client(cohort);
        for (uint32_t i = 0; i < cohort; ++i) {
            for (uint32_t j = i + 1; j < cohort; ++j) {
                const PairSecret secret =
                    derive_pair_secret(keys[i], keys[j].pk, i, j);
                const MaskPoly mask = expand_mask(secret, round, ctx);
                per_client[i].push_back(mask);
                per_client[j].push_back(mask);
                ++pairs;
            }
        }
        RingElement total = RingElement::zero(ctx);
        for (uint32_t i = 0; i < cohort; ++i) {
            add_into(total, net_mask(i, per_client[i], cohort));
        }
        if (!is_zero(total)) ++failures;
        ++cohorts;
    }
    const double elapsed = clock.seconds();
    const bool pass = failures == 0 && cohorts == 1000 && elapsed < 60.0;
    report(4, "mask-cancellation", pass,
           format("%llu cohorts (sizes 2..64, %llu pair masks), %u nonzero "
                  "sums, %.1fs (limit 60s)",
                  static_cast<unsigned long long>(cohorts),
                  static_cast<unsigned long long>(pairs), failures, elapsed));
    EXPECT_TRUE(pass);
}

TEST(Acceptance, CollusionBelowThresholdRecoversNothing) {
    bool pass = false;
    std::string details;
    try {
        bench::ExperimentConfig cfg;
        cfg.dims = {1024};
        cfg.trials = 50;
        cfg.delta_bits = 36;
        cfg.bit_budget = 55;
        cfg.digits = 5;
        cfg.seed = 5;
        const bench::CollusionReport r = bench::collusion_experiment(cfg, 5, 3);
        pass = r.adversary_rate < 0.01 && r.control_rate >= 0.999;
        details = format(
            "server + 3 of 5 clients recover %.4f%% of coordinates; fully "
            "unmasked control recovers %.1f%% (50 trials, dimension 1024)",
            100.0 * r.adversary_rate, 100.0 * r.control_rate);
    } catch (const std::exception& e) {
        details = format("exception: %s", e.what());
    }
    report(5, "collusion-resistance", pass, details);
    EXPECT_TRUE(pass) << details;
}

TEST(Acceptance, CostsScaleLinearlyInCohortSize) {
    bool pass = false;
    std::string details;
    try {
        bench::ExperimentConfig cfg;
        cfg.clients = {10, 50, 100, 200, 500};
        cfg.dims = {8192};
        cfg.rounds = 2;
        cfg.delta_bits = 40;
        cfg.smudge_bits = 10;
        cfg.digits = 6;
        cfg.seed = 6;
        std::vector<bench::RoundMetrics> medians;
        bench::sweep_clients(cfg, &medians);

        std::vector<double> n, maskgen, server_agg;
        std::vector<double> encode, encrypt, share;
        for (const bench::RoundMetrics& m : medians) {
            n.push_back(static_cast<double>(m.clients));
            maskgen.push_back(m.maskgen_ms);
            server_agg.push_back(m.server_aggregate_ms);
            encode.push_back(m.encode_ms);
            encrypt.push_back(m.encrypt_ms);
            share.push_back(m.share_ms);
        }
        const double r2_mask = r_squared(n, maskgen);
        const double r2_server = r_squared(n, server_agg);

        auto flatness = [](const std::vector<double>& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double worst = 0.0;
            for (double x : v) {
                worst = std::max(worst, std::abs(x - mean) / mean);
            }
            return worst;
        };
        const double f_encode = flatness(encode);
        const double f_encrypt = flatness(encrypt);
        const double f_share = flatness(share);

        pass = r2_mask >= 0.9 && r2_server >= 0.9 && f_encode <= 0.25 &&
               f_encrypt <= 0.25 && f_share <= 0.25;
        details = format(
            "cohorts 10..500: R²(maskgen)=%.4f R²(server-fold)=%.4f "
            "(limits 0.9); per-client phase flatness encode %.1f%% encrypt "
            "%.1f%% share %.1f%% (limit 25%%)",
            r2_mask, r2_server, 100.0 * f_encode, 100.0 * f_encrypt,
            100.0 * f_share);
    } catch (const std::exception& e) {
        details = format("exception: %s", e.what());
    }
    report(6, "linear-scaling", pass, details);
    EXPECT_TRUE(pass) << details;
}

TEST(Acceptance, TransformMultiplicationMatchesSchoolbook) {
    uint32_t mismatches = 0;
    uint64_t checked = 0;
    for (size_t degree : {size_t{4}, size_t{8}, size_t{16}}) {
        auto ctx = RingContext::create(degree, 30);
        testing::TestRng rng(700 + degree);
        for (int i = 0; i < 500; ++i) {
            const RingElement a = testing::random_element(ctx, rng);
            const RingElement b = testing::random_element(ctx, rng);
            if (mul(a, b) != testing::schoolbook_mul(a, b)) ++mismatches;
            ++checked;
        }
    }
    const bool pass = mismatches == 0 && checked == 1500;
    report(7, "ntt-correctness", pass,
           format("%llu random products across degrees {4, 8, 16}, %u "
                  "mismatches against the quadratic reference",
                  static_cast<unsigned long long>(checked), mismatches));
    EXPECT_TRUE(pass);
}

TEST(Acceptance, AggregateNoiseStaysUnderTheAnalyticBound) {
    const size_t degree = 1024;
    auto ctx = RingContext::create(degree, 55);
    const NoiseSpec spec;
    const uint32_t cohort = 8;
    const NoiseBudgetReport budget = noise_budget_check(
        degree, spec, uint64_t{1} << 40, ctx->modulus_product(), 1.0, cohort);
    const BigInt bound(static_cast<int64_t>(budget.b_total));

    CommonRef crs = crs_generate(ctx, Seed::from_u64(8));
    const RingElement zero = RingElement::zero(ctx);
    uint32_t violations = 0;
    BigInt largest = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<RingElement> c0s;
        std::vector<RingElement> shares;
        for (uint32_t i = 0; i < cohort; ++i) {
            ChaChaRng rng(derive_seed(
                Seed::from_u64(8), "accept/noise",
                (uint64_t{static_cast<uint32_t>(trial)} << 32) | i));
            HeKeyPair kp = he_keygen(crs, spec, rng);
            Ciphertext ct = encrypt(HePublicKey{kp.b, crs.a}, zero, spec, rng);
            shares.push_back(partial_share(ct, kp, spec, rng).mu);
            c0s.push_back(std::move(ct.c0));
        }
        const BigInt norm = infinity_norm(aggregate(c0s, shares));
        largest = std::max(largest, norm);
        if (norm > bound) ++violations;
    }
    const bool pass = violations == 0;
    report(8, "noise-bound", pass,
           format("1000 all-zero aggregates of 8 clients at degree 1024: "
                  "max |noise| %s vs bound %s, %u violations",
                  largest.str().c_str(), bound.str().c_str(), violations));
    EXPECT_TRUE(pass);
}

TEST(Acceptance, FullRoundFinishesInInteractiveTime) {
    bool pass = false;
    std::string details;
    try {
        const ParamSet& params = reference_params();
        const uint32_t cohort = 50;
        const Seed master = Seed::from_u64(9);
        const SetupResult s = setup(params, cohort, master);
        std::vector<std::vector<double>> updates(cohort);
        std::vector<double> oracle(params.dimension(), 0.0);
        for (uint32_t i = 0; i < cohort; ++i) {
            updates[i] = bench::detail::synth_update(
                master, 0, i, static_cast<uint32_t>(params.dimension()), 1.0);
            for (size_t j = 0; j < oracle.size(); ++j) oracle[j] += updates[i][j];
        }

        WallClock clock;
        std::vector<ClientUpload> uploads;
        uploads.reserve(cohort);
        for (uint32_t i = 0; i < cohort; ++i) {
            uploads.push_back(
                client_round(s.keyrings[i], s.directory, updates[i], 0));
        }
        const AggregateResult result = server_round(uploads, s.directory);
        const double elapsed = clock.seconds();

        double worst = 0.0;
        for (size_t j = 0; j < oracle.size(); ++j) {
            worst = std::max(worst, std::abs(result.values[j] - oracle[j]));
        }
        pass = elapsed < 5.0 && worst <= 1e-6;
        details = format(
            "50 client uploads + server fold at dimension 8192 in %.2fs "
            "(limit 5s), worst |err| %.3e", elapsed, worst);
    } catch (const std::exception& e) {
        details = format("exception: %s", e.what());
    }
    report(9, "round-latency", pass, details);
    EXPECT_TRUE(pass) << details;
}

}  // namespace
}  // namespace hybagg

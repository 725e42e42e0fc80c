#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hybagg/errors.hpp"
#include "hybagg/protocol.hpp"

namespace hybagg::bench {

/// One row of experiment output. Client phase times are means across the
/// cohort (per-client cost); server times are totals for the round.
struct RoundMetrics {
    uint32_t clients = 0;
    uint32_t dimension = 0;
    uint32_t degree = 0;
    uint32_t round = 0;
    double encode_ms = 0.0;
    double encrypt_ms = 0.0;
    double share_ms = 0.0;
    double maskgen_ms = 0.0;
    double client_total_ms = 0.0;
    double server_aggregate_ms = 0.0;
    double server_decode_ms = 0.0;
    double server_total_ms = 0.0;
    uint64_t uplink_bytes = 0;
    uint64_t downlink_bytes = 0;
    double expansion_factor = 0.0;
    double max_abs_error = 0.0;
    bool exact_after_round = false;
};

struct ExperimentConfig {
    std::vector<uint32_t> clients{50};
    std::vector<uint32_t> dims{8192};
    uint32_t rounds = 1;
    uint32_t trials = 50;        // collusion experiment only
    uint32_t delta_bits = 40;
    uint32_t smudge_bits = 10;   // sigma_smudge = 2^smudge_bits * sigma_err
    double sigma_err = 3.2;
    uint32_t bit_budget = 110;
    double value_range = 1.0;
    int digits = 6;              // decimal places for the exactness check
    uint64_t seed = 1;
    std::string out_path;
    bool json = false;
    bool no_timings = false;
    bool parallel = false;

    void validate() const {
        if (clients.empty() || dims.empty()) {
            throw ParamError("client and dimension lists must be non-empty");
        }
        for (uint32_t n : clients) {
            if (n < 2) throw ParamError("cohorts need at least 2 clients");
        }
        for (uint32_t d : dims) {
            if (d == 0) throw ParamError("dimension must be positive");
        }
        if (rounds == 0) throw ParamError("rounds must be at least 1");
        if (trials == 0) throw ParamError("trials must be at least 1");
        if (delta_bits < 20 || delta_bits > 50) {
            throw ParamError("delta_bits must lie in [20, 50]");
        }
        if (digits < 1 || digits > 12) {
            throw ParamError("digits must lie in [1, 12]");
        }
        if (!(value_range > 0.0) || !std::isfinite(value_range)) {
            throw ParamError("value range must be positive and finite");
        }
    }
};

namespace detail {

inline ParamSet make_params(const ExperimentConfig& cfg, uint32_t dimension,
                            uint32_t max_cohort) {
    ParamOptions opts;
    opts.delta = uint64_t{1} << cfg.delta_bits;
    opts.noise = NoiseSpec(cfg.sigma_err, cfg.sigma_err,
                           std::ldexp(cfg.sigma_err, static_cast<int>(cfg.smudge_bits)));
    opts.max_cohort = max_cohort;
    opts.max_abs_input = cfg.value_range;
    opts.bit_budget = cfg.bit_budget;
    return ParamSet::create(dimension, opts);
}

inline double round_tolerance(int digits) {
    return 0.5 * std::pow(10.0, -digits);
}

/// Deterministic synthetic update for (seed, round, client).
inline std::vector<double> synth_update(const Seed& master, uint32_t round,
                                        uint32_t client, uint32_t dimension,
                                        double range) {
    ChaChaRng rng(derive_seed(master, "hybagg/data",
                              (uint64_t{round} << 32) | client));
    std::vector<double> x(dimension);
    for (double& v : x) v = (2.0 * rng.next_unit() - 1.0) * range;
    return x;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Runs `cfg.rounds` full protocol rounds with N clients at dimension d and
/// returns one metrics row per round. Every round is checked against the
/// plaintext oracle; a mismatch at the configured precision throws.
inline std::vector<RoundMetrics> run_cohort(const ExperimentConfig& cfg,
                                            uint32_t n_clients,
                                            uint32_t dimension) {
    cfg.validate();
    const ParamSet params = detail::make_params(cfg, dimension, n_clients);
    const Seed master = Seed::from_u64(cfg.seed);
    const SetupResult s = setup(params, n_clients, master);
    const PayloadReport payload = payload_accounting(params, n_clients);
    const double tolerance = detail::round_tolerance(cfg.digits);

    std::vector<RoundMetrics> rows;
    rows.reserve(cfg.rounds);
    for (uint32_t round = 0; round < cfg.rounds; ++round) {
        std::vector<std::vector<double>> updates(n_clients);
        for (uint32_t i = 0; i < n_clients; ++i) {
            updates[i] = detail::synth_update(master, round, i, dimension,
                                              cfg.value_range);
        }
        std::vector<double> oracle(dimension, 0.0);
        for (uint32_t i = 0; i < n_clients; ++i) {
            for (uint32_t j = 0; j < dimension; ++j) oracle[j] += updates[i][j];
        }

        std::vector<ClientUpload> uploads(n_clients);
        std::vector<ClientPhaseTimings> timings(n_clients);
        std::vector<uint64_t> sizes(n_clients);
        auto run_client = [&](uint32_t i) {
            uploads[i] = client_round(s.keyrings[i], s.directory, updates[i],
                                      round, &timings[i]);
            sizes[i] = serialize_upload(uploads[i]).size();
        };
        if (cfg.parallel) {
            const uint32_t workers = std::max(
                1u, std::min(n_clients, std::thread::hardware_concurrency()));
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (uint32_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    for (uint32_t i = w; i < n_clients; i += workers) {
                        run_client(i);
                    }
                });
            }
            for (std::thread& t : pool) t.join();
        } else {
            for (uint32_t i = 0; i < n_clients; ++i) run_client(i);
        }

        for (uint32_t i = 1; i < n_clients; ++i) {
            if (sizes[i] != sizes[0]) {
                throw VerificationError(
                    "upload sizes differ across clients: " +
                    std::to_string(sizes[i]) + " vs " + std::to_string(sizes[0]));
            }
        }

        ServerPhaseTimings server_t;
        const AggregateResult result = server_round(uploads, s.directory, &server_t);

        RoundMetrics row;
        row.clients = n_clients;
        row.dimension = dimension;
        row.degree = static_cast<uint32_t>(params.degree());
        row.round = round;
        for (const ClientPhaseTimings& t : timings) {
            row.encode_ms += t.encode_ms;
            row.encrypt_ms += t.encrypt_ms;
            row.share_ms += t.share_ms;
            row.maskgen_ms += t.mask_ms;
            row.client_total_ms += t.total_ms;
        }
        row.encode_ms /= n_clients;
        row.encrypt_ms /= n_clients;
        row.share_ms /= n_clients;
        row.maskgen_ms /= n_clients;
        row.client_total_ms /= n_clients;
        row.server_aggregate_ms = server_t.aggregate_ms;
        row.server_decode_ms = server_t.decode_ms;
        row.server_total_ms = server_t.total_ms;
        row.uplink_bytes = sizes[0];
        row.downlink_bytes = serialize_aggregate(result, s.directory).size();
        row.expansion_factor = static_cast<double>(row.uplink_bytes) /
                               static_cast<double>(payload.plain_update_bytes);
        row.max_abs_error = 0.0;
        row.exact_after_round = true;
        for (uint32_t j = 0; j < dimension; ++j) {
            const double err = std::abs(result.values[j] - oracle[j]);
            row.max_abs_error = std::max(row.max_abs_error, err);
            if (err > tolerance) row.exact_after_round = false;
        }
        if (!row.exact_after_round) {
            char err_buf[32];
            std::snprintf(err_buf, sizeof err_buf, "%.3e", row.max_abs_error);
            throw VerificationError(
                "round " + std::to_string(round) + " disagreed with the oracle "
                "beyond " + std::to_string(cfg.digits) + " decimal places "
                "(max |error| = " + err_buf + ")");
        }
        if (cfg.no_timings) {
            row.encode_ms = row.encrypt_ms = row.share_ms = row.maskgen_ms =
                row.client_total_ms = row.server_aggregate_ms =
                    row.server_decode_ms = row.server_total_ms = 0.0;
        }
        rows.push_back(row);
    }
    return rows;
}

namespace detail {

/// Median-of-rounds summary for one (clients, dimension) group.
inline RoundMetrics summarize(std::span<const RoundMetrics> rows) {
    RoundMetrics m = rows[0];
    m.round = static_cast<uint32_t>(rows.size());
    auto med = [&](double RoundMetrics::*field) {
        std::vector<double> v;
        v.reserve(rows.size());
        for (const RoundMetrics& r : rows) v.push_back(r.*field);
        return median(std::move(v));
    };
    m.encode_ms = med(&RoundMetrics::encode_ms);
    m.encrypt_ms = med(&RoundMetrics::encrypt_ms);
    m.share_ms = med(&RoundMetrics::share_ms);
    m.maskgen_ms = med(&RoundMetrics::maskgen_ms);
    m.client_total_ms = med(&RoundMetrics::client_total_ms);
    m.server_aggregate_ms = med(&RoundMetrics::server_aggregate_ms);
    m.server_decode_ms = med(&RoundMetrics::server_decode_ms);
    m.server_total_ms = med(&RoundMetrics::server_total_ms);
    m.max_abs_error = med(&RoundMetrics::max_abs_error);
    m.exact_after_round = std::all_of(
        rows.begin(), rows.end(),
        [](const RoundMetrics& r) { return r.exact_after_round; });
    return m;
}

}  // namespace detail

/// Fixed dimension, growing cohort; one summary row per cohort size.
inline std::vector<RoundMetrics> sweep_clients(const ExperimentConfig& cfg,
                                               std::vector<RoundMetrics>* medians = nullptr) {
    cfg.validate();
    if (cfg.dims.size() != 1) {
        throw ParamError("the client sweep takes exactly one dimension");
    }
    std::vector<RoundMetrics> rows;
    for (uint32_t n : cfg.clients) {
        std::vector<RoundMetrics> group = run_cohort(cfg, n, cfg.dims[0]);
        if (medians != nullptr) medians->push_back(detail::summarize(group));
        rows.insert(rows.end(), group.begin(), group.end());
    }
    return rows;
}

/// Fixed cohort, growing dimension.
inline std::vector<RoundMetrics> sweep_dims(const ExperimentConfig& cfg,
                                            std::vector<RoundMetrics>* medians = nullptr) {
    cfg.validate();
    if (cfg.clients.size() != 1) {
        throw ParamError("the dimension sweep takes exactly one cohort size");
    }
    std::vector<RoundMetrics> rows;
    for (uint32_t d : cfg.dims) {
        std::vector<RoundMetrics> group = run_cohort(cfg, cfg.clients[0], d);
        if (medians != nullptr) medians->push_back(detail::summarize(group));
        rows.insert(rows.end(), group.begin(), group.end());
    }
    return rows;
}

/// Outcome of the k-collusion reconstruction attempt. Rates count
/// coordinates recovered to the configured precision, pooled over trials.
struct CollusionReport {
    uint32_t clients = 0;
    uint32_t colluders = 0;
    uint32_t trials = 0;
    uint32_t dimension = 0;
    double adversary_rate = 0.0;
    double control_rate = 0.0;
};

/// Simulates a server colluding with `k` clients against the lowest honest
/// id. The adversary strips every mask it can derive from the colluders'
/// keyrings; the control run is additionally handed the pair secrets of the
/// remaining honest pairs (full unmasking), which reduces the upload to the
/// bare c0 + mu and must reconstruct the target's update.
inline CollusionReport collusion_experiment(const ExperimentConfig& cfg,
                                            uint32_t n_clients, uint32_t k) {
    cfg.validate();
    if (cfg.dims.size() != 1) {
        throw ParamError("the collusion experiment takes exactly one dimension");
    }
    if (n_clients < 2 || k > n_clients - 2) {
        throw ParamError("colluder count must satisfy 0 <= k <= N-2");
    }
    const uint32_t dimension = cfg.dims[0];
    const ParamSet params = detail::make_params(cfg, dimension, n_clients);
    const double tolerance = detail::round_tolerance(cfg.digits);
    const uint32_t target = 0;
    const uint32_t first_colluder = n_clients - k;

    uint64_t adversary_hits = 0;
    uint64_t control_hits = 0;
    for (uint32_t trial = 0; trial < cfg.trials; ++trial) {
        const Seed master =
            derive_seed(Seed::from_u64(cfg.seed), "hybagg/collude", trial);
        const SetupResult s = setup(params, n_clients, master);
        const std::vector<double> x = detail::synth_update(
            master, 0, target, dimension, cfg.value_range);
        const ClientRoundDetail det =
            client_round_detail(s.keyrings[target], s.directory, x, 0);

        // Masks the adversary can rebuild: one per colluding partner, using
        // the colluder's own ECDH secret against the target's public key.
        RingElement stripped = det.upload.masked_share;
        auto strip_pair = [&](uint32_t j) {
            const PairSecret secret =
                derive_pair_secret(s.keyrings[j].ecdh,
                                   s.directory.entries[target].ecdh_pk, j, target);
            const MaskPoly mask = expand_mask(secret, 0, params.context());
            // target == 0 is always the low id, so its net mask added +p.
            sub_into(stripped, mask.p);
        };
        for (uint32_t j = first_colluder; j < n_clients; ++j) strip_pair(j);

        RingElement guess = det.upload.c0;
        add_into(guess, stripped);
        const std::vector<double> decoded = decode(guess, params.scale());
        for (uint32_t j = 0; j < dimension; ++j) {
            if (std::abs(decoded[j] - x[j]) <= tolerance) ++adversary_hits;
        }

        // Control: also strip the honest pairs (grant every remaining secret).
        for (uint32_t j = 1; j < first_colluder; ++j) strip_pair(j);
        RingElement unmasked = det.upload.c0;
        add_into(unmasked, stripped);
        const std::vector<double> bare = decode(unmasked, params.scale());
        for (uint32_t j = 0; j < dimension; ++j) {
            if (std::abs(bare[j] - x[j]) <= tolerance) ++control_hits;
        }
    }

    CollusionReport report;
    report.clients = n_clients;
    report.colluders = k;
    report.trials = cfg.trials;
    report.dimension = dimension;
    const double total = static_cast<double>(cfg.trials) * dimension;
    report.adversary_rate = static_cast<double>(adversary_hits) / total;
    report.control_rate = static_cast<double>(control_hits) / total;
    return report;
}

// ---------------------------------------------------------------------------
// Output formatting
// ---------------------------------------------------------------------------

inline const char* csv_header() {
    return "kind,clients,dimension,degree,round,encode_ms,encrypt_ms,share_ms,"
           "maskgen_ms,client_total_ms,server_aggregate_ms,server_decode_ms,"
           "server_total_ms,uplink_bytes,downlink_bytes,expansion_factor,"
           "max_abs_error,exact_after_round";
}

inline std::string csv_row(const char* kind, const RoundMetrics& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%s,%u,%u,%u,%u,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,"
                  "%llu,%llu,%.6f,%.9e,%d",
                  kind, r.clients, r.dimension, r.degree, r.round, r.encode_ms,
                  r.encrypt_ms, r.share_ms, r.maskgen_ms, r.client_total_ms,
                  r.server_aggregate_ms, r.server_decode_ms, r.server_total_ms,
                  static_cast<unsigned long long>(r.uplink_bytes),
                  static_cast<unsigned long long>(r.downlink_bytes),
                  r.expansion_factor, r.max_abs_error,
                  r.exact_after_round ? 1 : 0);
    return buf;
}

inline std::string render_csv(std::span<const RoundMetrics> rows,
                              std::span<const RoundMetrics> medians) {
    std::string out = csv_header();
    out += '\n';
    for (const RoundMetrics& r : rows) {
        out += csv_row("round", r);
        out += '\n';
    }
    for (const RoundMetrics& r : medians) {
        out += csv_row("median", r);
        out += '\n';
    }
    return out;
}

}  // namespace hybagg::bench

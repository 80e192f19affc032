#pragma once

// Scenario runner and benchmark harness: deterministic workload generation,
// end-to-end execution of the evaluation scenarios on a virtual clock, the
// per-stage batch-size sweep, post-run invariant audits, and report output.

#include <spay/bridge.hpp>
#include <spay/result.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace spay::bench {

enum class ScenarioKind : std::uint8_t {
    Normal = 0,
    ReshippingDispute = 1,
    ProofPerSettlement = 2,
    BatchSweep = 3,
};

const char* to_string(ScenarioKind k);
std::optional<ScenarioKind> scenario_from_string(const std::string& name);

struct ScenarioConfig {
    ScenarioKind scenario = ScenarioKind::Normal;
    std::uint32_t num_transactions = 1000;
    std::size_t batch_size = 20;
    std::uint64_t block_timer_ms = 500;
    std::uint32_t num_buyers = 100;
    std::uint32_t num_merchants = 10;
    std::uint32_t num_couriers = 5;
    std::uint32_t num_banks = 2;
    std::uint32_t commission_rate_bp = kDefaultCommissionBp;
    std::uint64_t rng_seed = 42;
    Amount price_min = 100;
    Amount price_max = 10'000;
    std::uint64_t endorse_timeout_ms = 30'000;
    std::size_t shard_count = 2;
    std::uint64_t tick_ms = 50;
    std::vector<FaultSpec> faults;
    std::vector<std::size_t> sweep_sizes = {10, 20, 40, 80};
    bool wall_clock = false;  // report wall-clock tps/latency instead of virtual-clock

    Status validate() const;

    // Key-value file, one "key = value" per line, '#' comments.
    static Result<ScenarioConfig> from_file(const std::string& path);
    bool apply_key_value(const std::string& key, const std::string& value);
};

struct PurchaseIntent {
    std::string tx_id;
    std::string product_id;
    std::uint32_t buyer = 0;
    std::uint32_t merchant = 0;
    std::uint32_t courier = 0;
    Amount price = 0;
};

// Deterministic for a fixed seed; prices uniform in [price_min, price_max],
// buyer/merchant/courier assignment uniform.
Result<std::vector<PurchaseIntent>> workload_gen(const ScenarioConfig& config);

struct StageMetrics {
    std::string stage;  // "proposal" | "endorsement" | "escrow"
    double tps = 0.0;
    double avg_latency_s = 0.0;
    std::uint64_t completed = 0;
};

struct InvariantCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct MetricsReport {
    std::string scenario;
    std::uint32_t num_transactions = 0;
    std::size_t batch_size = 0;
    std::uint64_t rng_seed = 0;
    std::uint32_t commission_rate_bp = 0;

    double throughput_tps = 0.0;
    double avg_latency_s = 0.0;
    std::uint64_t completed = 0;
    double sim_seconds = 0.0;
    double wall_seconds = 0.0;
    std::uint64_t blocks = 0;
    std::uint64_t committed_ops = 0;

    std::vector<StageMetrics> stages;
    std::vector<InvariantCheck> invariants;
    std::uint64_t challenges_proof_supplied = 0;
    std::uint64_t challenges_compensated = 0;

    std::string world_digest;          // hex
    std::string balances_digest;       // hex
    std::string block_log_digest;      // hex

    bool all_invariants_pass() const;
    std::string to_json() const;   // one object, stable field order
    std::string to_csv() const;    // documented columns, one row per stage + summary
    std::string to_human() const;  // multi-line summary with invariant table

    static const char* csv_header();
};

Result<MetricsReport> run_scenario(const ScenarioConfig& config);

struct SweepRow {
    std::size_t batch_size = 0;
    std::string stage;
    double tps = 0.0;
    double avg_latency_s = 0.0;
    std::uint64_t completed = 0;
};

struct SweepTable {
    std::vector<SweepRow> rows;  // one per (batch size, stage)

    std::string to_json() const;
    std::string to_csv() const;
    std::string to_human() const;
};

// Isolated per-stage benchmark at each batch size: proposal intake,
// endorsement, and escrow tail are timed independently.
Result<SweepTable> run_batch_sweep(const ScenarioConfig& config);

enum class ReportFormat : std::uint8_t { JsonLines, Csv, Human };

std::optional<ReportFormat> format_from_string(const std::string& name);
Status emit_report(const std::string& content, const std::string& path);

}  // namespace spay::bench

// spay command line: run a scenario or the batch-size sweep and emit a
// machine-readable report. Exit code is nonzero when any invariant fails.

#include <spay/bench.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"payment protocol scenario runner"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute a scenario and report metrics");

    std::string scenario = "normal";
    std::string config_path;
    std::string report_path;
    std::string format = "jsonl";
    std::vector<std::string> fault_args;
    std::string sweep_sizes;
    double commission_rate = -1.0;
    std::uint64_t num_tx = 0, batch = 0, seed = 0, timer_ms = 0;
    bool have_seed = false, wall_clock = false;

    run->add_option("--scenario", scenario, "normal|dispute|proof|sweep");
    run->add_option("--config", config_path, "key=value config file");
    run->add_option("--num-tx", num_tx, "transactions to run");
    run->add_option("--batch-size", batch, "max ops per block");
    run->add_option("--block-timer-ms", timer_ms, "block cut timer");
    run->add_option("--seed", seed, "rng seed")->each([&](const std::string&) { have_seed = true; });
    run->add_option("--commission-rate", commission_rate,
                    "platform commission as a fraction, e.g. 0.05");
    run->add_option("--report", report_path, "write the report to this file");
    run->add_option("--format", format, "jsonl|csv|human (report file format)");
    run->add_option("--fault", fault_args,
                    "inject a settlement fault: skip:<txid> or wrong:<txid>");
    run->add_option("--sweep-sizes", sweep_sizes, "comma-separated batch sizes for sweep");
    run->add_flag("--wall-clock", wall_clock, "report wall-clock throughput");

    CLI11_PARSE(app, argc, argv);

    spay::bench::ScenarioConfig cfg;
    if (!config_path.empty()) {
        auto loaded = spay::bench::ScenarioConfig::from_file(config_path);
        if (!loaded.ok()) {
            std::cerr << "bad config file: " << config_path << "\n";
            return 1;
        }
        cfg = loaded.value();
    }

    auto kind = spay::bench::scenario_from_string(scenario);
    if (!kind) {
        std::cerr << "unknown scenario: " << scenario << "\n";
        return 1;
    }
    cfg.scenario = *kind;
    if (num_tx > 0) cfg.num_transactions = static_cast<std::uint32_t>(num_tx);
    if (batch > 0) cfg.batch_size = batch;
    if (timer_ms > 0) cfg.block_timer_ms = timer_ms;
    if (have_seed) cfg.rng_seed = seed;
    if (commission_rate >= 0.0)
        cfg.commission_rate_bp = static_cast<std::uint32_t>(std::lround(commission_rate * 10000));
    if (wall_clock) cfg.wall_clock = true;
    if (!sweep_sizes.empty() && !cfg.apply_key_value("sweep_sizes", sweep_sizes)) {
        std::cerr << "bad --sweep-sizes\n";
        return 1;
    }
    for (const auto& f : fault_args)
        if (!cfg.apply_key_value("fault", f)) {
            std::cerr << "bad --fault value: " << f << "\n";
            return 1;
        }

    auto fmt = spay::bench::format_from_string(format);
    if (!fmt) {
        std::cerr << "unknown format: " << format << "\n";
        return 1;
    }

    if (cfg.scenario == spay::bench::ScenarioKind::BatchSweep) {
        auto table = spay::bench::run_batch_sweep(cfg);
        if (!table.ok()) {
            std::cerr << "sweep failed: " << spay::to_string(table.error()) << "\n";
            return 1;
        }
        std::cout << table.value().to_human();
        if (!report_path.empty()) {
            std::string content;
            switch (*fmt) {
                case spay::bench::ReportFormat::JsonLines: content = table.value().to_json(); break;
                case spay::bench::ReportFormat::Csv: content = table.value().to_csv(); break;
                case spay::bench::ReportFormat::Human: content = table.value().to_human(); break;
            }
            if (!spay::bench::emit_report(content, report_path).ok()) {
                std::cerr << "cannot write " << report_path << "\n";
                return 1;
            }
        }
        return 0;
    }

    auto report = spay::bench::run_scenario(cfg);
    if (!report.ok()) {
        std::cerr << "run failed: " << spay::to_string(report.error()) << "\n";
        return 1;
    }
    std::cout << report.value().to_human();
    if (!report_path.empty()) {
        std::string content;
        switch (*fmt) {
            case spay::bench::ReportFormat::JsonLines: content = report.value().to_json(); break;
            case spay::bench::ReportFormat::Csv: content = report.value().to_csv(); break;
            case spay::bench::ReportFormat::Human: content = report.value().to_human(); break;
        }
        if (!spay::bench::emit_report(content, report_path).ok()) {
            std::cerr << "cannot write " << report_path << "\n";
            return 1;
        }
    }
    return report.value().all_invariants_pass() ? 0 : 2;
}

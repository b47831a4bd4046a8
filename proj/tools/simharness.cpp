// SPDX-License-Identifier: Apache-2.0
// Deterministic fleet simulator front end.
#include "dormctl/sim.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace dormctl;

namespace {

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::InvalidArgument, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool report(const std::vector<sim::InvariantResult>& results)
{
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.detail.empty())
            std::cout << ": " << r.detail;
        if (r.first_violation)
            std::cout << " (record " << *r.first_violation << ")";
        std::cout << '\n';
        ok = ok && r.passed;
    }
    return ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Deterministic discrete-event simulator for dormctl fleets"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::string trace_out;
    auto* run = app.add_subcommand("run", "Run a scenario file and check the resulting trace");
    run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--trace", trace_out, "Write the trace to this file");

    std::string trace_path;
    auto* check = app.add_subcommand("check", "Check a recorded trace");
    check->add_option("trace", trace_path, "Trace file")->required();

    int runs = 100;
    std::uint64_t first_seed = 1;
    auto* random = app.add_subcommand("random", "Run randomized scenarios and check each");
    random->add_option("--runs", runs, "Number of scenarios")->check(CLI::PositiveNumber);
    random->add_option("--first-seed", first_seed, "Seed of the first scenario");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            sim::Scenario scenario = sim::parse_scenario(wire::Json::parse(slurp(scenario_path)));
            if (seed)
                scenario.seed = *seed;
            const sim::Trace trace = sim::run(scenario);
            if (!trace_out.empty()) {
                std::ofstream out(trace_out, std::ios::binary | std::ios::trunc);
                out << sim::serialize(trace);
                if (!out)
                    throw Error(ErrorCode::InvalidArgument, "cannot write " + trace_out);
            }
            std::cout << scenario.name << " seed=" << scenario.seed << " records=" << trace.records.size() << '\n';
            return report(sim::check(trace).results) ? 0 : 1;
        }
        if (*check) {
            const sim::Trace trace = sim::parse_trace(slurp(trace_path));
            auto results = sim::check(trace).results;
            results.push_back(sim::check_determinism(trace));
            return report(results) ? 0 : 1;
        }
        int failed = 0;
        const auto start = std::chrono::steady_clock::now();
        for (int i = 0; i < runs; ++i) {
            const std::uint64_t s = first_seed + static_cast<std::uint64_t>(i);
            const auto rep = sim::check(sim::run(sim::random_scenario(s)));
            if (!rep.all_passed()) {
                ++failed;
                std::cout << "seed " << s << '\n';
                report(rep.results);
            }
        }
        const auto ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        std::cout << runs - failed << "/" << runs << " scenarios passed in " << ms << " ms\n";
        return failed == 0 ? 0 : 1;
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return 2;
    } catch (const wire::Json::exception& e) {
        std::cerr << "InvalidScenario: " << e.what() << '\n';
        return 2;
    }
}

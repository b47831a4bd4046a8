// SPDX-License-Identifier: Apache-2.0
// Emulated facility terminal speaking the device protocol over TCP.
#include "common.hpp"

#include "dormctl/terminal.hpp"

#include <CLI11.hpp>

using namespace dormctl;

int main(int argc, char** argv)
{
    CLI::App app{"dormctl emulated facility terminal"};
    TerminalConfig config;
    std::string kind = "door_lock";
    std::string listen = "127.0.0.1:7600";
    std::string state_path;
    app.add_option("--facility", config.facility_id, "Facility id")->required();
    app.add_option("--room", config.room_id, "Room id")->required();
    app.add_option("--kind", kind, "door_lock | laundry | bed | appliance");
    app.add_option("--listen", listen, "Local control address host:port (port 0 picks one)");
    app.add_option("--server", config.server_target, "Registry device port host:port");
    app.add_option("--relay", config.relay_target, "Relay host:port");
    app.add_option("--state", state_path, "Persisted state file")->required();
    app.add_option("--report-ms", config.report_interval_ms, "Status report interval")->check(CLI::PositiveNumber);
    app.add_option("--relock-ms", config.relock_ms, "Auto-relock delay")->check(CLI::PositiveNumber);
    app.add_option("--heartbeat-ms", config.heartbeat_ms, "Relay heartbeat interval")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        config.kind = parse_facility_kind(kind);
        FileTerminalStore store(state_path);
        TerminalNode terminal(config, store);
        EventLoop loop(terminal);
        const auto [host, port] = tools::split_host_port(listen);
        const std::uint16_t bound = loop.listen(host, port);
        tools::stop_on_signals(loop);
        std::cout << "relay name " << terminal.relay_name() << std::endl;
        tools::announce("terminal", host, bound);
        loop.run();
        return 0;
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return 2;
    }
}

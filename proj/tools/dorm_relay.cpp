// SPDX-License-Identifier: Apache-2.0
// Name-service relay: terminals lease names, clients open sessions by name.
#include "common.hpp"

#include "dormctl/relay.hpp"

#include <CLI11.hpp>

using namespace dormctl;

int main(int argc, char** argv)
{
    CLI::App app{"dormctl relay name service"};
    std::string listen = "127.0.0.1:7500";
    RelayConfig config;
    app.add_option("--listen", listen, "Listen address host:port (port 0 picks one)");
    app.add_option("--heartbeat-ms", config.heartbeat_ms, "Expected terminal heartbeat interval")
        ->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        RelayNode relay(config);
        EventLoop loop(relay);
        const auto [host, port] = tools::split_host_port(listen);
        const std::uint16_t bound = loop.listen(host, port);
        tools::stop_on_signals(loop);
        tools::announce("relay", host, bound);
        loop.run();
        return 0;
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return 2;
    }
}

// SPDX-License-Identifier: Apache-2.0
// Registry server: device port (stream protocol) plus the JSON web API.
#include "common.hpp"

#include "dormctl/digest.hpp"
#include "dormctl/web_api.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <thread>

using namespace dormctl;

int main(int argc, char** argv)
{
    CLI::App app{"dormctl registry server"};
    std::string config_path;
    app.add_option("--config", config_path, "Server config JSON")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        const ServerConfig cfg = parse_server_config(wire::Json::parse(tools::slurp(config_path)));

        RecoverResult recovered = recover_file(cfg.journal);
        for (const auto& w : recovered.warnings)
            std::cerr << "journal: " << w << '\n';
        if (std::filesystem::exists(cfg.journal) && std::filesystem::file_size(cfg.journal) != recovered.valid_bytes)
            std::filesystem::resize_file(cfg.journal, recovered.valid_bytes);

        FileJournal journal(cfg.journal);
        std::mutex guard;
        auto clock = [] {
            using namespace std::chrono;
            return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
        };
        Registry registry(journal, clock, random_hex,
                          RegistryOptions{cfg.report_interval_ms, cfg.liveness_multiplier},
                          std::move(recovered.state));

        ServerNode node(registry);
        EventLoop loop(node, &guard);
        provision(registry, cfg);

        const std::uint16_t device_port = loop.listen(cfg.host, cfg.device_port);

        WebApi api(registry, node, guard, cfg.relay, clock, random_hex,
                   [](const ControlRequest& req) { return run_control(req, "server"); });
        httplib::Server http;
        api.mount(http);
        const int web_port = cfg.web_port == 0 ? http.bind_to_any_port(cfg.host)
                                               : (http.bind_to_port(cfg.host, cfg.web_port) ? cfg.web_port : -1);
        if (web_port < 0)
            throw Error(ErrorCode::TransportError, "cannot bind web port " + std::to_string(cfg.web_port));
        std::thread web([&http] { http.listen_after_bind(); });

        tools::stop_on_signals(loop);
        tools::announce("device", cfg.host, device_port);
        tools::announce("web", cfg.host, static_cast<std::uint16_t>(web_port));
        loop.run();

        http.stop();
        web.join();
        return 0;
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

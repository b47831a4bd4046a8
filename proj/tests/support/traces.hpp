// SPDX-License-Identifier: Apache-2.0
// Trace queries shared by the simulation tests and the acceptance runner.
#pragma once

#include "dormctl/protocol.hpp"
#include "dormctl/sim.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dormctl::fixtures {

inline sim::Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return sim::parse_scenario(wire::Json::parse(buf.str()));
}

inline std::vector<const sim::TraceRecord*> records(const sim::Trace& t, std::string_view node,
                                                    std::string_view kind)
{
    std::vector<const sim::TraceRecord*> out;
    for (const auto& r : t.records) {
        if ((node.empty() || r.node == node) && r.kind == kind)
            out.push_back(&r);
    }
    return out;
}

/// Records of `kind` on `node` inside [from, to).
inline std::vector<const sim::TraceRecord*> between(const sim::Trace& t, std::string_view node,
                                                    std::string_view kind, TimeMs from, TimeMs to)
{
    std::vector<const sim::TraceRecord*> out;
    for (const auto* r : records(t, node, kind)) {
        if (r->time >= from && r->time < to)
            out.push_back(r);
    }
    return out;
}

} // namespace dormctl::fixtures

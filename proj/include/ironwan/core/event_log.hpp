#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ironwan/core/types.hpp"
#include "json.hpp"

namespace ironwan::core {

/// Append-only JSON-lines log. Each line: {"t_us", "actor", "event", ...fields}.
class EventLog {
public:
    explicit EventLog(bool enabled = true) : enabled_(enabled) {}

    void record(SimTime t, std::string_view actor, std::string_view event, nlohmann::json fields = nlohmann::json::object());

    bool enabled() const { return enabled_; }
    const std::vector<std::string>& lines() const { return lines_; }
    std::size_t size() const { return lines_.size(); }
    void write_jsonl(std::ostream& out) const;

private:
    bool enabled_;
    std::vector<std::string> lines_;
};

std::string actor_name(NodeAddr node);
std::string actor_name(GatewayId gateway);

}  // namespace ironwan::core

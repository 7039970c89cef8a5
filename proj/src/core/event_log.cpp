#include "ironwan/core/event_log.hpp"

#include <ostream>

namespace ironwan::core {

void EventLog::record(SimTime t, std::string_view actor, std::string_view event, nlohmann::json fields) {
    if (!enabled_) return;
    nlohmann::ordered_json line;
    line["t_us"] = t.us;
    line["actor"] = actor;
    line["event"] = event;
    for (auto& [k, v] : fields.items()) line[k] = std::move(v);
    lines_.push_back(line.dump());
}

void EventLog::write_jsonl(std::ostream& out) const {
    for (const auto& l : lines_) out << l << '\n';
}

std::string actor_name(NodeAddr node) { return "n:" + std::to_string(node.value); }
std::string actor_name(GatewayId gateway) { return "g:" + std::to_string(gateway.value); }

}  // namespace ironwan::core

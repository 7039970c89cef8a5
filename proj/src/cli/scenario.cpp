#include "ironwan/cli/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ironwan::cli {

using core::kMicrosPerMilli;
using core::kMicrosPerSecond;
using core::Micros;

LoadValue parse_load(const std::string& text) {
    if (text == "low") return {"low", 0.10};
    if (text == "med" || text == "medium") return {"medium", 0.50};
    if (text == "high") return {"high", 0.90};
    double v = 0.0;
    std::size_t used = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size() || !(v >= 0.0 && v <= 1.0)) {
        throw ConfigError("load '" + text + "' is not low, medium, high or a fraction in [0, 1]");
    }
    char label[32];
    std::snprintf(label, sizeof label, "%g", v);
    return {label, v};
}

namespace {

/// Map reader that remembers which keys were consumed, so leftovers can be rejected.
class Section {
public:
    Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
        if (node_ && !node_.IsMap()) throw ConfigError(where() + " must be a mapping");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return node_ && node_[key] && !node_[key].IsNull();
    }

    YAML::Node raw(const std::string& key) {
        seen_.insert(key);
        return node_ ? node_[key] : YAML::Node{};
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        out = as<T>(node_[key], key);
    }

    void seconds(const std::string& key, Micros& out) {
        if (!has(key)) return;
        const double s = as<double>(node_[key], key);
        if (!std::isfinite(s)) throw ConfigError(where(key) + " must be finite");
        out = static_cast<Micros>(std::llround(s * kMicrosPerSecond));
    }

    void millis(const std::string& key, Micros& out) {
        if (!has(key)) return;
        const double ms = as<double>(node_[key], key);
        if (!std::isfinite(ms)) throw ConfigError(where(key) + " must be finite");
        out = static_cast<Micros>(std::llround(ms * kMicrosPerMilli));
    }

    Section child(const std::string& key) { return Section(raw(key), where(key)); }

    void finish() const {
        if (!node_) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError("unknown key '" + where(key) + "'");
        }
    }

    std::string where(const std::string& key = {}) const {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    template <typename T>
    T as(const YAML::Node& n, const std::string& key) const {
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError(where(key) + " has the wrong type");
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename T>
std::vector<T> read_list(Section& s, const std::string& key) {
    std::vector<T> out;
    if (!s.has(key)) return out;
    const auto n = s.raw(key);
    if (n.IsScalar()) {
        out.push_back(s.as<T>(n, key));
        return out;
    }
    if (!n.IsSequence()) throw ConfigError(s.where(key) + " must be a list");
    for (const auto& item : n) out.push_back(s.as<T>(item, key));
    if (out.empty()) throw ConfigError(s.where(key) + " must not be empty");
    return out;
}

template <typename T>
T non_negative_int(Section& s, const std::string& key, long long value) {
    if (value < 0) throw ConfigError(s.where(key) + " must be non-negative");
    return static_cast<T>(value);
}

void read_link(Section s, phy::LinkModel& link) {
    s.read("path_loss_exponent", link.path_loss_exponent);
    s.read("reference_loss_db", link.reference_loss_db);
    s.read("noise_floor_dbm", link.noise_floor_dbm);
    s.read("capture_threshold_db", link.capture_threshold_db);
    if (s.has("sf_sensitivity_dbm")) {
        const auto v = read_list<double>(s, "sf_sensitivity_dbm");
        if (v.size() != 6) throw ConfigError(s.where("sf_sensitivity_dbm") + " needs 6 values (SF7..SF12)");
        std::copy(v.begin(), v.end(), link.sf_sensitivity_dbm.begin());
    }
    s.finish();
}

void read_rmip(Section s, rmip::RmipConfig& r) {
    long long n = static_cast<long long>(r.n);
    s.read("n", n);
    r.n = non_negative_int<std::size_t>(s, "n", n);
    s.read("e_s", r.e);
    s.read("t_crit", r.t_crit);
    s.read("grace_s", r.grace);
    int gap = r.max_counter_gap;
    s.read("max_counter_gap", gap);
    if (gap < 1 || gap > 0x7fff) throw ConfigError(s.where("max_counter_gap") + " must be in 1..32767");
    r.max_counter_gap = static_cast<std::uint16_t>(gap);
    s.finish();
}

void read_interpred(Section s, interpred::InterPredConfig& c) {
    s.read("P", c.P);
    s.read("F", c.F);
    s.read("C", c.C);
    s.read("alpha", c.alpha);
    s.read("gamma", c.gamma);
    s.read("epsilon", c.epsilon);
    s.read("count_cap", c.count_cap);
    s.seconds("training_s", c.training_duration);
    s.millis("action_airtime_ms", c.action_airtime);
    s.seconds("observation_lag_s", c.observation_lag);
    long long states = static_cast<long long>(c.max_states);
    s.read("max_states", states);
    c.max_states = non_negative_int<std::size_t>(s, "max_states", states);
    s.finish();
}

void read_gateways(Section& root, ScenarioFile& file) {
    if (!root.has("gateways")) return;
    const auto n = root.raw("gateways");
    if (n.IsScalar()) {
        const auto count = root.as<long long>(n, "gateways");
        file.base.gateway_count = non_negative_int<std::size_t>(root, "gateways", count);
        return;
    }
    if (!n.IsSequence()) throw ConfigError("gateways must be a count or a list of sites");
    std::size_t i = 0;
    for (const auto& item : n) {
        Section site(item, "gateways[" + std::to_string(i++) + "]");
        netsim::GatewaySite g;
        if (!site.has("x_m") || !site.has("y_m") || !site.has("network")) {
            throw ConfigError(site.where() + " needs x_m, y_m and network");
        }
        site.read("x_m", g.position.x);
        site.read("y_m", g.position.y);
        long long net = 0;
        site.read("network", net);
        g.network = non_negative_int<std::uint32_t>(site, "network", net);
        site.finish();
        file.base.gateways.push_back(g);
    }
    file.base.gateway_count = file.base.gateways.size();
}

void read_sweep(Section s, ScenarioFile& file) {
    for (auto v : read_list<long long>(s, "gateways")) {
        file.sweep.gateways.push_back(non_negative_int<std::size_t>(s, "gateways", v));
    }
    for (const auto& v : read_list<std::string>(s, "load")) file.sweep.loads.push_back(parse_load(v));
    for (const auto& v : read_list<std::string>(s, "system")) {
        try {
            file.sweep.systems.push_back(netsim::parse_system(v));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(s.where("system") + ": " + e.what());
        }
    }
    for (auto v : read_list<int>(s, "retx_limit")) file.sweep.retx_limits.push_back(v);
    for (auto v : read_list<long long>(s, "networks")) {
        file.sweep.networks.push_back(non_negative_int<std::size_t>(s, "networks", v));
    }
    for (auto v : read_list<long long>(s, "seeds")) {
        file.sweep.seeds.push_back(non_negative_int<std::uint64_t>(s, "seeds", v));
    }
    s.finish();
    if (!file.sweep.gateways.empty() && !file.base.gateways.empty()) {
        throw ConfigError("sweep.gateways cannot be combined with explicit gateway sites");
    }
}

}  // namespace

ScenarioFile parse_scenario(const std::string& yaml_text) {
    YAML::Node doc;
    try {
        doc = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("YAML syntax: ") + e.what());
    }
    ScenarioFile file;
    if (!doc || doc.IsNull()) return file;
    Section root(doc, "");
    auto& cfg = file.base;

    root.read("name", file.name);
    long long nodes = static_cast<long long>(cfg.node_count);
    root.read("nodes", nodes);
    cfg.node_count = non_negative_int<std::size_t>(root, "nodes", nodes);
    root.read("area_km2", cfg.area_km2);
    read_gateways(root, file);
    long long networks = static_cast<long long>(cfg.networks);
    root.read("networks", networks);
    cfg.networks = non_negative_int<std::size_t>(root, "networks", networks);
    if (root.has("load")) file.base_load = parse_load(root.as<std::string>(root.raw("load"), "load"));
    cfg.load = file.base_load.fraction;
    root.seconds("duration_s", cfg.duration);
    root.seconds("drain_s", cfg.drain);
    root.read("seed", cfg.seed);
    if (root.has("system")) {
        try {
            cfg.system = netsim::parse_system(root.as<std::string>(root.raw("system"), "system"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("system: ") + e.what());
        }
    }
    root.read("retx_limit", cfg.retx_limit);
    root.seconds("period_s", cfg.period);
    long long payload = static_cast<long long>(cfg.payload_len);
    root.read("payload_len", payload);
    cfg.payload_len = non_negative_int<std::size_t>(root, "payload_len", payload);
    root.read("event_log", cfg.event_log);

    {
        auto radio = root.child("radio");
        radio.read("node_tx_power_dbm", cfg.node_tx_power_dbm);
        radio.read("gateway_tx_power_dbm", cfg.gateway_tx_power_dbm);
        radio.read("adr_margin_db", cfg.adr_margin_db);
        radio.read("gateway_link_gain_db", cfg.gateway_link_gain_db);
        long long ack = static_cast<long long>(cfg.ack_payload_len);
        radio.read("ack_payload_len", ack);
        cfg.ack_payload_len = non_negative_int<std::size_t>(radio, "ack_payload_len", ack);
        radio.millis("server_wait_ms", cfg.server_wait);
        radio.finish();
    }
    read_link(root.child("link"), cfg.link);
    {
        auto g2g = root.child("ironwan");
        int sf = cfg.g2g_sf;
        g2g.read("g2g_sf", sf);
        if (sf < 7 || sf > 12) throw ConfigError("ironwan.g2g_sf must be in 7..12");
        cfg.g2g_sf = static_cast<std::uint8_t>(sf);
        g2g.read("g2g_duty_cycle", cfg.g2g_duty_cycle);
        g2g.read("g2g_retry_limit", cfg.g2g_retry_limit);
        g2g.seconds("cache_ttl_s", cfg.cache_ttl);
        g2g.finish();
    }
    read_rmip(root.child("rmip"), cfg.rmip);
    read_interpred(root.child("interpred"), cfg.interpred);
    read_sweep(root.child("sweep"), file);
    root.finish();

    for (const auto& cell : expand(file)) {
        try {
            cell.config.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("cell " + cell.id + ": " + e.what());
        }
    }
    return file;
}

ScenarioFile load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read scenario file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scenario(text.str());
}

std::vector<Cell> expand(const ScenarioFile& file) {
    const auto& base = file.base;
    const auto& sw = file.sweep;
    auto or_base = [](const auto& axis, auto value) {
        using T = std::decay_t<decltype(value)>;
        return axis.empty() ? std::vector<T>{value} : std::vector<T>(axis.begin(), axis.end());
    };
    const auto systems = or_base(sw.systems, base.system);
    const auto gateways = or_base(sw.gateways, base.gateway_count);
    const auto networks = or_base(sw.networks, base.networks);
    const auto loads = or_base(sw.loads, file.base_load);
    const auto retx = or_base(sw.retx_limits, base.retx_limit);
    const auto seeds = or_base(sw.seeds, base.seed);

    std::vector<Cell> cells;
    for (auto system : systems) {
        for (auto gw : gateways) {
            for (auto net : networks) {
                for (const auto& load : loads) {
                    for (int r : retx) {
                        char id[160];
                        std::snprintf(id, sizeof id, "%s_gw%zu_net%zu_%s_retx%d", netsim::to_string(system), gw, net,
                                      load.label.c_str(), r);
                        for (auto seed : seeds) {
                            Cell c;
                            c.id = id;
                            c.load_label = load.label;
                            c.config = base;
                            c.config.system = system;
                            c.config.gateway_count = gw;
                            c.config.networks = net;
                            c.config.load = load.fraction;
                            c.config.retx_limit = r;
                            c.config.seed = seed;
                            cells.push_back(std::move(c));
                        }
                    }
                }
            }
        }
    }
    return cells;
}

}  // namespace ironwan::cli

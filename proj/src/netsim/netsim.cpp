#include "ironwan/netsim/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "ironwan/core/random.hpp"
#include "ironwan/gateway/runtime.hpp"

namespace ironwan::netsim {

using core::FrameKind;
using core::Micros;
using core::SimTime;

const char* to_string(SystemKind system) {
    switch (system) {
        case SystemKind::LoRaWAN: return "lorawan";
        case SystemKind::IRONWAN: return "ironwan";
        case SystemKind::WCS: return "wcs";
        case SystemKind::FLIP: return "flip";
    }
    return "?";
}

SystemKind parse_system(const std::string& text) {
    std::string t;
    for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "lorawan") return SystemKind::LoRaWAN;
    if (t == "ironwan") return SystemKind::IRONWAN;
    if (t == "wcs") return SystemKind::WCS;
    if (t == "flip") return SystemKind::FLIP;
    throw std::invalid_argument("unknown system '" + text + "'");
}

double distance(Position a, Position b) { return std::hypot(a.x - b.x, a.y - b.y); }

interpred::InterPredConfig ScenarioConfig::desk_interpred() {
    interpred::InterPredConfig c;
    c.training_duration = 1800 * core::kMicrosPerSecond;
    return c;
}

double ScenarioConfig::side_m() const { return std::sqrt(area_km2) * 1000.0; }

void ScenarioConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
    if (!(area_km2 > 0.0)) fail("area_km2 must be positive");
    if (networks < 1 || networks > 255) fail("networks must be in 1..255");
    if (gateways.empty() && gateway_count < 1) fail("at least one gateway is required");
    for (const auto& g : gateways) {
        if (g.network >= networks) fail("gateway network id out of range");
    }
    if (node_count > 0x00ff'ffff) fail("node_count too large");
    if (!(load >= 0.0 && load <= 1.0)) fail("load must be in [0, 1]");
    if (duration <= 0) fail("duration must be positive");
    if (drain < 0) fail("drain must be non-negative");
    if (retx_limit < 0) fail("retx_limit must be non-negative");
    if (period <= 0) fail("period must be positive");
    if (payload_len > 255 || ack_payload_len > 255) fail("payload length over 255");
    if (!(adr_margin_db >= 0.0)) fail("adr_margin_db must be non-negative");
    if (!std::isfinite(gateway_link_gain_db)) fail("gateway_link_gain_db must be finite");
    if (server_wait < 0 || server_wait >= 900 * core::kMicrosPerMilli) fail("server_wait must be in [0, 900 ms)");
    if (cache_ttl <= 0) fail("cache_ttl must be positive");
    if (g2g_retry_limit < 1) fail("g2g_retry_limit must be at least 1");
    if (g2g_sf < 7 || g2g_sf > 12) fail("g2g_sf must be in 7..12");
    if (!(g2g_duty_cycle > 0.0 && g2g_duty_cycle <= phy::duty_cycle_limit(core::Band::Band0))) {
        fail("g2g_duty_cycle must be in (0, 0.01]");
    }
    if (interpred.C != kUplinkChannels) fail("interpred C must equal the 3 uplink channels");
    link.validate();
    rmip.validate();
    interpred.validate();
}

std::vector<GatewaySite> grid_gateways(std::size_t count, double side_m, std::size_t networks) {
    std::vector<GatewaySite> out;
    if (count == 0) return out;
    const auto rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(double(count)))));
    const auto cols = (count + rows - 1) / rows;
    for (std::size_t r = 0; r < rows && out.size() < count; ++r) {
        const auto in_row = std::min(cols, count - out.size());
        for (std::size_t c = 0; c < in_row; ++c) {
            GatewaySite g;
            g.position = {(c + 0.5) * side_m / in_row, (r + 0.5) * side_m / rows};
            g.network = static_cast<std::uint32_t>(out.size() % networks);
            out.push_back(g);
        }
    }
    return out;
}

std::uint8_t assign_spreading_factor(double best_rx_dbm, const phy::LinkModel& link, double margin_db, bool* reachable) {
    for (int sf = 7; sf <= 12; ++sf) {
        if (best_rx_dbm >= link.sensitivity(sf) + margin_db) {
            if (reachable) *reachable = true;
            return static_cast<std::uint8_t>(sf);
        }
    }
    if (reachable) *reachable = false;
    return 12;
}

std::vector<std::optional<std::size_t>> balance_assignment(const std::vector<std::vector<std::size_t>>& reachable,
                                                           std::size_t gateway_count) {
    const std::size_t n = reachable.size();
    std::vector<std::optional<std::size_t>> assign(n);
    std::vector<long> load(gateway_count, 0);

    // Greedy seed: most constrained nodes first, least loaded gateway.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return reachable[a].size() < reachable[b].size(); });
    for (auto i : order) {
        std::optional<std::size_t> best;
        for (auto g : reachable[i]) {
            if (g >= gateway_count) throw std::invalid_argument("gateway index out of range");
            if (!best || load[g] < load[*best] || (load[g] == load[*best] && g < *best)) best = g;
        }
        if (best) {
            assign[i] = best;
            ++load[*best];
        }
    }

    // Then shift nodes along augmenting chains until no gateway can hand
    // load to one at least two lighter; that is the convex-cost optimum.
    std::vector<std::vector<std::size_t>> members(gateway_count);
    for (std::size_t i = 0; i < n; ++i) {
        if (assign[i]) members[*assign[i]].push_back(i);
    }
    bool improved = true;
    while (improved) {
        improved = false;
        std::vector<std::size_t> sources(gateway_count);
        std::iota(sources.begin(), sources.end(), 0);
        std::stable_sort(sources.begin(), sources.end(), [&](auto a, auto b) { return load[a] > load[b]; });
        for (auto s : sources) {
            std::vector<std::optional<std::pair<std::size_t, std::size_t>>> parent(gateway_count);  // (from gw, node)
            std::vector<bool> seen(gateway_count, false);
            std::deque<std::size_t> queue{s};
            seen[s] = true;
            std::optional<std::size_t> target;
            while (!queue.empty() && !target) {
                const auto u = queue.front();
                queue.pop_front();
                for (auto node : members[u]) {
                    for (auto v : reachable[node]) {
                        if (seen[v]) continue;
                        seen[v] = true;
                        parent[v] = std::make_pair(u, node);
                        if (load[v] + 2 <= load[s]) {
                            target = v;
                            break;
                        }
                        queue.push_back(v);
                    }
                    if (target) break;
                }
            }
            if (!target) continue;
            for (auto v = *target; v != s;) {
                const auto [u, node] = *parent[v];
                auto& from = members[u];
                from.erase(std::find(from.begin(), from.end(), node));
                members[v].push_back(node);
                assign[node] = v;
                v = u;
            }
            --load[s];
            ++load[*target];
            improved = true;
            break;
        }
    }
    return assign;
}

Deployment plan_deployment(const ScenarioConfig& cfg) {
    Deployment d;
    const double side = cfg.side_m();
    d.gateways = cfg.gateways.empty() ? grid_gateways(cfg.gateway_count, side, cfg.networks) : cfg.gateways;

    core::Rng place(core::mix_seed(cfg.seed, 1));
    d.nodes.resize(cfg.node_count);
    for (std::size_t i = 0; i < cfg.node_count; ++i) {
        auto& n = d.nodes[i];
        const auto network = static_cast<std::uint32_t>(i % cfg.networks);
        n.addr = core::make_node_addr(core::NetworkId{network}, static_cast<std::uint32_t>(i));
        n.position = {place.uniform(0.0, side), place.uniform(0.0, side)};
    }

    // Exactly round(load * N) nodes want acks.
    std::vector<std::size_t> idx(cfg.node_count);
    std::iota(idx.begin(), idx.end(), 0);
    core::Rng pick(core::mix_seed(cfg.seed, 2));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[pick.below(i)]);
    const auto acked = static_cast<std::size_t>(std::llround(cfg.load * double(cfg.node_count)));
    for (std::size_t k = 0; k < acked; ++k) d.nodes[idx[k]].needs_ack = true;

    std::vector<std::vector<std::size_t>> reach(cfg.node_count);
    for (std::size_t i = 0; i < cfg.node_count; ++i) {
        auto& n = d.nodes[i];
        const auto network = core::network_of(n.addr).value;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& g : d.gateways) {
            if (g.network != network) continue;
            best = std::max(best, phy::received_power(cfg.node_tx_power_dbm,
                                                      std::max(1.0, distance(n.position, g.position)), cfg.link));
        }
        n.spreading_factor = assign_spreading_factor(best, cfg.link, cfg.adr_margin_db, &n.reachable);
        for (std::size_t g = 0; g < d.gateways.size(); ++g) {
            const double p = phy::received_power(cfg.node_tx_power_dbm,
                                                 std::max(1.0, distance(n.position, d.gateways[g].position)), cfg.link);
            if (p >= cfg.link.sensitivity(n.spreading_factor)) reach[i].push_back(g);
        }
    }
    if (cfg.system == SystemKind::FLIP) {
        const auto assign = balance_assignment(reach, d.gateways.size());
        for (std::size_t i = 0; i < cfg.node_count; ++i) {
            auto& n = d.nodes[i];
            if (assign[i]) {
                n.flip_gateway = assign[i];
                continue;
            }
            // Unreachable everywhere: nearest own gateway, if the owner has one.
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t g = 0; g < d.gateways.size(); ++g) {
                if (d.gateways[g].network != core::network_of(n.addr).value) continue;
                const double dist = distance(n.position, d.gateways[g].position);
                if (dist < best) {
                    best = dist;
                    n.flip_gateway = g;
                }
            }
        }
    }
    return d;
}

std::optional<double> NodeMetrics::pdr() const {
    if (!needs_ack || generated == 0) return std::nullopt;
    return static_cast<double>(acked) / static_cast<double>(generated);
}

std::uint64_t RunMetrics::overhead() const {
    return system == SystemKind::IRONWAN ? band0_g2g + band1_downlinks : band1_downlinks;
}

namespace {

enum class EvKind : std::uint8_t { Generate, Attempt, TxEnd, RxTimeout, Decide, Wake };

struct Event {
    std::int64_t t;
    std::uint64_t seq;
    EvKind kind;
    std::size_t who;
    std::uint64_t token;

    bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

struct OnAir {
    core::Frame frame;
    Position position;
    std::optional<std::size_t> node;     // transmitter
    std::optional<std::size_t> gateway;  // transmitter
};

struct NodeState {
    NodePlan plan;
    std::uint32_t network = 0;
    phy::DutyCycleTracker duty{core::Band::Band0};
    core::Rng rng;
    std::uint16_t next_counter = 0;
    std::uint16_t counter = 0;
    bool pending = false;
    int retx = 0;
    std::uint64_t token = 0;
    SimTime last_end{};
    std::unordered_set<std::uint16_t> delivered;
    NodeMetrics m;
};

struct Copy {
    std::size_t gateway;
    double power;
};

struct Instance {
    std::size_t node;
    core::Frame uplink;
    std::vector<Copy> copies;
};

class Engine {
public:
    explicit Engine(const ScenarioConfig& cfg) : cfg_(cfg), log_(cfg.event_log) {
        cfg_.validate();
        deployment_ = plan_deployment(cfg_);
        for (std::size_t g = 0; g < deployment_.gateways.size(); ++g) {
            const auto& site = deployment_.gateways[g];
            gateway::GatewayConfig gc;
            gc.id = core::GatewayId{static_cast<std::uint32_t>(g)};
            gc.network = core::NetworkId{site.network};
            gc.x = site.position.x;
            gc.y = site.position.y;
            gc.overlay = cfg_.system == SystemKind::IRONWAN;
            gc.tx_power_dbm = cfg_.gateway_tx_power_dbm;
            gc.cache_ttl = cfg_.cache_ttl;
            gc.g2g_retry_limit = cfg_.g2g_retry_limit;
            gc.g2g_sf = cfg_.g2g_sf;
            gc.ack_payload_len = cfg_.ack_payload_len;
            gc.g2g_duty_cycle = cfg_.g2g_duty_cycle;
            gc.rmip = cfg_.rmip;
            gc.interpred = cfg_.interpred;
            gc.seed = cfg_.seed;
            gateways_.emplace_back(gc, &log_);
        }
        wake_.resize(gateways_.size());
        core::RadioParams rx2{3, 12, 125'000, cfg_.gateway_tx_power_dbm, core::Band::Band1};
        max_ack_airtime_ = phy::compute_airtime(cfg_.ack_payload_len, rx2);

        for (std::size_t i = 0; i < deployment_.nodes.size(); ++i) {
            NodeState n;
            n.plan = deployment_.nodes[i];
            n.network = core::network_of(n.plan.addr).value;
            n.rng = core::Rng(core::mix_seed(cfg_.seed, 1000 + i));
            n.m.addr = n.plan.addr;
            n.m.network = n.network;
            n.m.needs_ack = n.plan.needs_ack;
            n.m.reachable = n.plan.reachable;
            n.m.spreading_factor = n.plan.spreading_factor;
            const auto phase = static_cast<Micros>(n.rng.uniform(0.0, double(cfg_.period)));
            node_index_.emplace(n.plan.addr, i);
            nodes_.push_back(std::move(n));
            push(phase, EvKind::Generate, i, 0);
        }
    }

    RunResult finish() {
        const std::int64_t stop = cfg_.duration + cfg_.drain;
        while (!queue_.empty() && queue_.top().t <= stop) {
            const Event ev = queue_.top();
            queue_.pop();
            dispatch(ev);
        }
        return collect();
    }

private:
    void push(std::int64_t t, EvKind kind, std::size_t who, std::uint64_t token) {
        queue_.push(Event{t, seq_++, kind, who, token});
    }

    void dispatch(const Event& ev) {
        const SimTime now{ev.t};
        switch (ev.kind) {
            case EvKind::Generate: generate(ev.who, now); break;
            case EvKind::Attempt: attempt(ev.who, ev.token, now); break;
            case EvKind::TxEnd: tx_end(ev.who, now); break;
            case EvKind::RxTimeout: rx_timeout(ev.who, ev.token, now); break;
            case EvKind::Decide: decide(ev.token, now); break;
            case EvKind::Wake: wake(ev.who, ev.token, now); break;
        }
    }

    // --- nodes --------------------------------------------------------------

    void generate(std::size_t i, SimTime now) {
        auto& n = nodes_[i];
        if (now.us >= cfg_.duration) return;
        n.pending = true;  // any unfinished message is abandoned
        n.counter = n.next_counter++;
        n.retx = 0;
        ++n.token;
        ++n.m.generated;
        push(now.us + cfg_.period, EvKind::Generate, i, 0);
        attempt(i, n.token, now);
    }

    void attempt(std::size_t i, std::uint64_t token, SimTime now) {
        auto& n = nodes_[i];
        if (!n.pending || token != n.token) return;
        core::RadioParams radio{static_cast<std::uint8_t>(n.rng.below(kUplinkChannels)), n.plan.spreading_factor,
                                125'000, cfg_.node_tx_power_dbm, core::Band::Band0};
        const Micros airtime = phy::compute_airtime(cfg_.payload_len, radio);
        if (!n.duty.try_reserve(airtime, now)) {
            push(n.duty.next_allowed(airtime, now).us, EvKind::Attempt, i, token);
            return;
        }
        core::Frame f;
        f.kind = FrameKind::Uplink;
        f.source = n.plan.addr;
        f.subject_node = n.plan.addr;
        f.counter = n.counter;
        f.payload_len = static_cast<std::uint8_t>(cfg_.payload_len);
        f.radio = radio;
        f.needs_ack = n.plan.needs_ack;
        f.tx_start = now;
        f.airtime = airtime;
        f.payload = core::opaque_payload(n.plan.addr, n.counter, cfg_.payload_len);
        ++n.m.transmissions;
        if (n.retx > 0) ++n.m.retransmissions;
        n.last_end = f.tx_end();
        if (log_.enabled()) {
            log_.record(now, core::actor_name(n.plan.addr), "tx",
                        {{"kind", "Uplink"}, {"node", n.plan.addr.value}, {"counter", n.counter}, {"band", 0},
                         {"channel", radio.channel}, {"sf", radio.spreading_factor}, {"airtime_us", airtime},
                         {"retx", n.retx}});
        }
        if (n.plan.needs_ack) {
            push(n.last_end.us + 2 * core::kMicrosPerSecond + 100 * core::kMicrosPerMilli + max_ack_airtime_ +
                     core::kMicrosPerMilli,
                 EvKind::RxTimeout, i, n.token);
        } else {
            n.pending = false;
        }
        put_on_air(std::move(f), n.plan.position, i, std::nullopt);
    }

    void rx_timeout(std::size_t i, std::uint64_t token, SimTime now) {
        auto& n = nodes_[i];
        if (!n.pending || token != n.token) return;
        if (n.retx >= cfg_.retx_limit) {
            n.pending = false;
            return;
        }
        ++n.retx;
        const auto backoff = static_cast<Micros>(n.rng.uniform(1.0, 3.0) * core::kMicrosPerSecond);
        push(now.us + backoff, EvKind::Attempt, i, token);
    }

    bool in_rx_window(const NodeState& n, SimTime start) const {
        const Micros d = start - n.last_end;
        const Micros tol = 100 * core::kMicrosPerMilli;
        return std::llabs(d - core::kMicrosPerSecond) <= tol || std::llabs(d - 2 * core::kMicrosPerSecond) <= tol;
    }

    // --- air ----------------------------------------------------------------

    void put_on_air(core::Frame f, Position pos, std::optional<std::size_t> node, std::optional<std::size_t> gw) {
        const auto end = f.tx_end().us;
        air_.push_back(OnAir{std::move(f), pos, node, gw});
        live_.push_back(air_.size() - 1);
        push(end, EvKind::TxEnd, air_.size() - 1, 0);
    }

    double power_at(const OnAir& a, Position rx, bool rx_is_gateway) const {
        const double gain = a.gateway && rx_is_gateway ? cfg_.gateway_link_gain_db : 0.0;
        return gain + phy::received_power(a.frame.radio.tx_power_dbm, std::max(1.0, distance(a.position, rx)), cfg_.link);
    }

    /// Can a receiver at `rx` decode air record `idx`, given everything else on air?
    bool decodable(std::size_t idx, Position rx, std::optional<std::size_t> rx_gateway, double* power) {
        const auto& target = air_[idx];
        std::vector<phy::Arrival> arrivals;
        *power = power_at(target, rx, rx_gateway.has_value());
        arrivals.push_back({&target.frame, *power});
        for (auto j : live_) {
            if (j == idx) continue;
            const auto& other = air_[j];
            if (other.frame.radio.channel != target.frame.radio.channel) continue;
            if (!phy::overlaps(other.frame, target.frame)) continue;
            if (rx_gateway && other.gateway == rx_gateway) continue;
            arrivals.push_back({&other.frame, power_at(other, rx, rx_gateway.has_value())});
        }
        const auto ok = phy::resolve_collisions(arrivals, cfg_.link);
        return std::find(ok.begin(), ok.end(), 0) != ok.end();
    }

    void prune_live(SimTime now) {
        const std::int64_t horizon = now.us - 10 * core::kMicrosPerSecond;
        std::erase_if(live_, [&](std::size_t j) { return air_[j].frame.tx_end().us < horizon; });
    }

    void tx_end(std::size_t idx, SimTime now) {
        if (++tx_end_count_ % 256 == 0) prune_live(now);
        const core::Frame f = air_[idx].frame;  // flush() may grow air_
        if (core::is_downlink(f.kind)) {
            auto it = node_index_.find(f.subject_node);
            if (it == node_index_.end()) return;
            auto& n = nodes_[it->second];
            if (!n.pending || f.counter != n.counter || !in_rx_window(n, f.tx_start)) return;
            double p = 0.0;
            if (!decodable(idx, n.plan.position, std::nullopt, &p)) return;
            n.pending = false;
            ++n.token;
            ++n.m.acked;
            n.m.acked_retransmissions += static_cast<std::uint64_t>(n.retx);
            if (f.kind == FrameKind::NeighbourDownlink) ++neighbour_acks_;
            if (log_.enabled()) {
                log_.record(now, core::actor_name(n.plan.addr), "ack_rx",
                            {{"counter", n.counter}, {"via", core::to_string(f.kind)}});
            }
            return;
        }
        // Uplinks and G2G frames: every gateway that is not transmitting listens.
        for (std::size_t g = 0; g < gateways_.size(); ++g) {
            if (air_[idx].gateway == g) continue;
            auto& gw = gateways_[g];
            if (gw.transmitting_during(f.tx_start, f.tx_end())) continue;
            double p = 0.0;
            if (!decodable(idx, deployment_.gateways[g].position, g, &p)) continue;
            gw.on_receive(f, p, now);
            flush(g, now);
        }
    }

    // --- gateways -----------------------------------------------------------

    void flush(std::size_t g, SimTime now) {
        auto& gw = gateways_[g];
        for (auto& f : gw.take_transmissions()) {
            if (core::is_g2g(f.kind)) {
                ++g2g_messages_;
                if (f.radio.band == core::Band::Band0) ++band0_g2g_;
            }
            if (core::is_downlink(f.kind) && f.radio.band == core::Band::Band1) ++band1_downlinks_;
            put_on_air(std::move(f), deployment_.gateways[g].position, std::nullopt, g);
        }
        for (auto& d : gw.take_deliveries()) deliver(g, std::move(d), now);
        const auto next = gw.next_wakeup();
        if (next && (!wake_[g] || *next != *wake_[g])) {
            wake_[g] = *next;
            push(std::max(next->us, now.us), EvKind::Wake, g, static_cast<std::uint64_t>(next->us));
        }
    }

    void wake(std::size_t g, std::uint64_t token, SimTime now) {
        if (!wake_[g] || static_cast<std::uint64_t>(wake_[g]->us) != token) return;
        wake_[g].reset();
        gateways_[g].on_wakeup(now);
        flush(g, now);
    }

    // --- servers ------------------------------------------------------------

    void count_unique(std::size_t i, std::uint16_t counter, bool recovered) {
        auto& n = nodes_[i];
        if (!n.delivered.insert(counter).second) return;
        ++n.m.unique_received;
        if (recovered) ++recovered_;
    }

    void deliver(std::size_t g, gateway::ServerDelivery d, SimTime now) {
        auto it = node_index_.find(d.uplink.subject_node);
        if (it == node_index_.end()) return;
        const std::size_t i = it->second;
        if (d.recovered) {
            if (deployment_.gateways[g].network == nodes_[i].network) count_unique(i, d.uplink.counter, true);
            return;
        }
        const auto key = std::make_tuple(i, d.uplink.counter, d.uplink.tx_start.us);
        auto [pos, fresh] = instance_ids_.try_emplace(key, next_instance_);
        if (fresh) {
            instances_.emplace(next_instance_, Instance{i, d.uplink, {}});
            push(now.us + cfg_.server_wait, EvKind::Decide, 0, next_instance_);
            ++next_instance_;
        }
        instances_.at(pos->second).copies.push_back({g, d.rx_power_dbm});
    }

    std::optional<Copy> strongest(const Instance& inst, bool own) const {
        std::optional<Copy> best;
        const auto network = nodes_[inst.node].network;
        for (const auto& c : inst.copies) {
            if ((deployment_.gateways[c.gateway].network == network) != own) continue;
            if (!best || c.power > best->power) best = c;
        }
        return best;
    }

    void decide(std::uint64_t id, SimTime now) {
        auto node_it = instances_.find(id);
        const Instance inst = std::move(node_it->second);
        instances_.erase(node_it);
        instance_ids_.erase(std::make_tuple(inst.node, inst.uplink.counter, inst.uplink.tx_start.us));
        auto& n = nodes_[inst.node];

        const auto own = strongest(inst, true);
        std::optional<Copy> ack_via = own;
        bool delivered = own.has_value();
        switch (cfg_.system) {
            case SystemKind::LoRaWAN:
            case SystemKind::IRONWAN: break;
            case SystemKind::WCS:
                if (!own) {
                    ack_via = strongest(inst, false);
                    delivered = ack_via.has_value();
                    if (delivered) ++wcs_overhead_;  // used a foreign copy
                    if (delivered && n.plan.needs_ack) ++wcs_overhead_;  // and a foreign gateway for the ack
                }
                break;
            case SystemKind::FLIP: {
                const auto assigned = n.plan.flip_gateway;
                for (const auto& c : inst.copies) {
                    if (assigned && c.gateway == *assigned) {
                        ack_via = c;
                        delivered = true;
                    }
                }
                break;
            }
        }
        if (!delivered) return;
        count_unique(inst.node, inst.uplink.counter, false);
        if (log_.enabled()) {
            log_.record(now, "s:" + std::to_string(n.network), "deliver",
                        {{"node", n.plan.addr.value}, {"counter", inst.uplink.counter}, {"copies", inst.copies.size()}});
        }
        if (!inst.uplink.needs_ack || !ack_via) return;
        gateway::DownlinkRequest req{n.plan.addr, inst.uplink.counter, inst.uplink.tx_end(), inst.uplink.radio.channel,
                                     inst.uplink.radio.spreading_factor};
        gateways_[ack_via->gateway].send_downlink(req, now);
        flush(ack_via->gateway, now);
    }

    RunResult collect() {
        RunResult out;
        auto& m = out.metrics;
        m.system = cfg_.system;
        m.nodes = nodes_.size();
        m.gateways = gateways_.size();
        m.networks = cfg_.networks;
        m.load = cfg_.load;
        m.seed = cfg_.seed;
        m.retx_limit = cfg_.retx_limit;
        std::uint64_t acked_retx = 0;
        std::uint64_t ack_retx = 0;
        for (const auto& n : nodes_) {
            const auto& nm = n.m;
            m.per_node.push_back(nm);
            m.generated += nm.generated;
            m.unique_received += nm.unique_received;
            m.uplink_tx += nm.transmissions;
            if (!nm.reachable) ++m.unreachable_nodes;
            if (nm.needs_ack) {
                m.ack_required += nm.generated;
                m.acked += nm.acked;
                acked_retx += nm.acked_retransmissions;
                ack_retx += nm.retransmissions;
                const auto p = nm.pdr();
                if (p && nm.reachable && (!m.min_node_pdr || *p < *m.min_node_pdr)) m.min_node_pdr = p;
            }
        }
        if (m.ack_required > 0) m.pdr = static_cast<double>(m.acked) / static_cast<double>(m.ack_required);
        m.no_retx = m.ack_required ? static_cast<double>(ack_retx) / static_cast<double>(m.ack_required) : 0.0;
        m.no_retx_acked = m.acked ? static_cast<double>(acked_retx) / static_cast<double>(m.acked) : 0.0;
        m.unique_per_node = m.nodes ? static_cast<double>(m.unique_received) / static_cast<double>(m.nodes) : 0.0;
        m.recovered = recovered_;
        m.g2g_messages = g2g_messages_;
        m.band0_g2g = band0_g2g_;
        m.band1_downlinks = band1_downlinks_;
        m.wcs_overhead = wcs_overhead_;
        m.neighbour_acks = neighbour_acks_;
        for (const auto& gw : gateways_) {
            const auto& c = gw.counters();
            m.rx1_acks += c.rx1_sent;
            m.rx2_acks += c.rx2_sent;
            m.dropped_acks += c.downlinks_dropped;
            m.handovers += c.handover_sent;
            m.neighbour_downlinks += c.neighbour_downlinks;
            m.handover_requests_heard += c.handover_requests_heard;
            m.handover_unanswerable += c.handover_unanswerable;
            m.g2g_starved += c.g2g_starved;
            m.slot_declined += c.slot_declined;
            m.slot_blocked += c.slot_blocked;
            m.ack_abandoned += c.ack_abandoned;
            m.missing_reports += c.missing_reports;
            m.malformed += c.malformed;
        }
        if (log_.enabled()) m.duty_violations = phy::audit_duty_cycle(tx_records(log_)).size();
        out.log = std::move(log_);
        return out;
    }

    ScenarioConfig cfg_;
    core::EventLog log_;
    Deployment deployment_;
    std::vector<gateway::GatewayRuntime> gateways_;
    std::vector<std::optional<SimTime>> wake_;
    std::vector<NodeState> nodes_;
    std::unordered_map<core::NodeAddr, std::size_t> node_index_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::uint64_t seq_ = 0;
    std::vector<OnAir> air_;
    std::vector<std::size_t> live_;
    std::uint64_t tx_end_count_ = 0;
    Micros max_ack_airtime_ = 0;
    std::map<std::tuple<std::size_t, std::uint16_t, std::int64_t>, std::uint64_t> instance_ids_;
    std::unordered_map<std::uint64_t, Instance> instances_;
    std::uint64_t next_instance_ = 0;
    std::uint64_t recovered_ = 0;
    std::uint64_t g2g_messages_ = 0;
    std::uint64_t band0_g2g_ = 0;
    std::uint64_t band1_downlinks_ = 0;
    std::uint64_t wcs_overhead_ = 0;
    std::uint64_t neighbour_acks_ = 0;
};

}  // namespace

RunResult run(const ScenarioConfig& cfg) {
    Engine engine(cfg);
    return engine.finish();
}

std::vector<phy::TxRecord> tx_records(const core::EventLog& log) {
    std::vector<phy::TxRecord> out;
    for (const auto& line : log.lines()) {
        if (line.find("\"event\":\"tx\"") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line);
        phy::TxRecord r;
        r.transmitter = j.at("actor").get<std::string>();
        if (j.value("allocation", "") == "g2g") r.transmitter += "/g2g";
        r.band = j.at("band").get<int>() == 0 ? core::Band::Band0 : core::Band::Band1;
        r.start = SimTime{j.at("t_us").get<std::int64_t>()};
        r.airtime = j.at("airtime_us").get<Micros>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace ironwan::netsim

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bdfl/common.hpp"
#include "bdfl/hash.hpp"

namespace bdfl {

// Position of one client in the L virtual ring spaces.
struct Coordinate {
    std::vector<double> values;  // one per ring, each in [0,1)
};

// Ring coordinate i = first 8 bytes of SHA-256(salt|address|i) as an unsigned
// integer scaled into [0,1). Same address always maps to the same position.
inline Coordinate compute_coordinates(const std::string& address, int rings,
                                      const std::string& salt) {
    if (rings < 1) throw std::invalid_argument("compute_coordinates: rings must be >= 1");
    if (address.empty()) throw std::invalid_argument("compute_coordinates: empty address");
    Coordinate c;
    c.values.reserve(static_cast<std::size_t>(rings));
    for (int i = 0; i < rings; ++i) {
        Digest d = Sha256().update(salt).update("|").update(address).update("|").update_u64(
                                static_cast<std::uint64_t>(i))
                       .finish();
        c.values.push_back(static_cast<double>(d.leading_u64()) / 18446744073709551616.0);
    }
    return c;
}

// min(|a-b|, 1-|a-b|) on the unit circle.
inline double circular_distance(double a, double b) {
    double d = std::fabs(a - b);
    return std::min(d, 1.0 - d);
}

struct NeighborEntry {
    ClientId peer_id;
    std::string address;
    Coordinate coordinate;
    std::optional<Digest> last_fingerprint;
    SimTime last_heartbeat = 0;
};

struct RepairEvent {
    SimTime at = 0;
    ClientId detector;
    ClientId failed;
};

struct RoutingUnavailableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The L-virtual-ring overlay. Each live client sits in every ring at its
// hashed coordinate; ring adjacency (two per ring) induces the neighbor
// graph, so degree is at most 2L. All mutation happens through join/leave/
// failure repair, which keep each ring's circular order equal to the
// ascending order of (coordinate, id).
class Topology {
public:
    Topology(int rings, std::string salt, SimTime heartbeat_period = 1, int miss_limit = 3)
        : rings_(rings), salt_(std::move(salt)), heartbeat_period_(heartbeat_period),
          miss_limit_(miss_limit) {
        if (rings_ < 1) throw std::invalid_argument("Topology: rings must be >= 1");
    }

    int rings() const { return rings_; }
    const std::string& salt() const { return salt_; }
    std::size_t size() const { return nodes_.size(); }
    bool contains(const ClientId& id) const { return nodes_.count(id) > 0; }

    std::vector<ClientId> client_ids() const {
        std::vector<ClientId> out;
        out.reserve(nodes_.size());
        for (const auto& [id, _] : nodes_) out.push_back(id);
        return out;
    }

    const Coordinate& coordinate(const ClientId& id) const { return node_at(id).coord; }
    const std::string& address(const ClientId& id) const { return node_at(id).address; }

    // Seeds the very first client; later clients go through join_network.
    void add_first(const ClientId& id, const std::string& address, SimTime now = 0) {
        if (!nodes_.empty()) throw std::invalid_argument("add_first: topology not empty");
        Node n;
        n.address = address;
        n.coord = compute_coordinates(address, rings_, salt_);
        n.next.assign(static_cast<std::size_t>(rings_), id);
        n.prev.assign(static_cast<std::size_t>(rings_), id);
        nodes_.emplace(id, std::move(n));
        heartbeats_[id] = now;
    }

    // Walks ring `ring` from `start` toward `target`, moving to whichever ring
    // adjacent is circularly closer, and stops at the closest client. Ties on
    // distance break toward the lexicographically smaller id.
    ClientId greedy_route(int ring, double target, const ClientId& start, int* hops = nullptr) const {
        if (ring < 0 || ring >= rings_) throw std::invalid_argument("greedy_route: bad ring index");
        if (nodes_.empty()) throw RoutingUnavailableError("greedy_route: empty ring");
        const Node* cur = &node_at(start);
        ClientId cur_id = start;
        int steps = 0;
        const int limit = static_cast<int>(nodes_.size()) + 1;
        while (true) {
            auto key = [&](const ClientId& id, const Node& n) {
                return std::make_pair(circular_distance(n.coord.values[static_cast<std::size_t>(ring)], target), id);
            };
            auto cur_key = key(cur_id, *cur);
            const ClientId& nx = cur->next[static_cast<std::size_t>(ring)];
            const ClientId& pv = cur->prev[static_cast<std::size_t>(ring)];
            ClientId best_id = cur_id;
            auto best_key = cur_key;
            for (const ClientId* cand : {&nx, &pv}) {
                if (*cand == cur_id) continue;
                auto k = key(*cand, node_at(*cand));
                if (k < best_key) {
                    best_key = k;
                    best_id = *cand;
                }
            }
            if (best_id == cur_id) break;
            cur_id = best_id;
            cur = &node_at(cur_id);
            if (++steps > limit)
                throw std::logic_error("greedy_route: did not terminate");  // ring corrupt
        }
        if (hops) *hops = steps;
        return cur_id;
    }

    // Joins u via `bootstrap`: per ring, route to the closest client w, pick
    // the adjacent side whose arc contains u's coordinate, and splice u in.
    // Returns u's resulting neighbor set (at most 2L entries).
    std::vector<NeighborEntry> join_network(const ClientId& u, const std::string& address,
                                            const ClientId& bootstrap, SimTime now) {
        if (nodes_.count(u)) throw std::invalid_argument("join_network: client already present");
        if (!nodes_.count(bootstrap))
            throw std::invalid_argument("join_network: bootstrap unreachable");

        Node n;
        n.address = address;
        n.coord = compute_coordinates(address, rings_, salt_);
        n.next.assign(static_cast<std::size_t>(rings_), u);
        n.prev.assign(static_cast<std::size_t>(rings_), u);

        // Resolve all insertion points before mutating anything.
        std::vector<std::pair<ClientId, ClientId>> slots;  // (pred, succ) per ring
        for (int r = 0; r < rings_; ++r) {
            ClientId w = greedy_route(r, n.coord.values[static_cast<std::size_t>(r)], bootstrap);
            slots.push_back(insertion_slot(r, n.coord.values[static_cast<std::size_t>(r)], u, w));
        }
        auto [it, _] = nodes_.emplace(u, std::move(n));
        for (int r = 0; r < rings_; ++r) {
            auto [pred, succ] = slots[static_cast<std::size_t>(r)];
            link(r, pred, u);
            link(r, u, succ);
        }
        heartbeats_[u] = now;
        return neighbors(u);
    }

    // Splices u out of every ring; u's adjacents become adjacent to each
    // other. Returns false (no-op) for an unknown client.
    bool leave_network(const ClientId& u) {
        auto it = nodes_.find(u);
        if (it == nodes_.end()) return false;
        for (int r = 0; r < rings_; ++r) {
            const ClientId pred = it->second.prev[static_cast<std::size_t>(r)];
            const ClientId succ = it->second.next[static_cast<std::size_t>(r)];
            if (pred != u) link(r, pred, succ);
        }
        for (auto& [_, node] : nodes_) node.peer_meta.erase(u);
        nodes_.erase(it);
        heartbeats_.erase(u);
        return true;
    }

    // Heartbeat stamp: u announces liveness to its neighbors.
    void heartbeat(const ClientId& u, SimTime now) { heartbeats_.at(u) = now; }

    // u checks its neighbors; any neighbor silent for miss_limit heartbeat
    // periods is declared failed and repaired out exactly like a leave.
    std::vector<RepairEvent> heartbeat_maintenance(const ClientId& u, SimTime now) {
        std::vector<RepairEvent> repairs;
        if (!nodes_.count(u)) return repairs;
        std::set<ClientId> peers;
        for (const auto& e : neighbors(u)) peers.insert(e.peer_id);
        for (const ClientId& v : peers) {
            auto hb = heartbeats_.find(v);
            if (hb == heartbeats_.end()) continue;
            if (now - hb->second >= static_cast<SimTime>(miss_limit_) * heartbeat_period_) {
                leave_network(v);
                repairs.push_back(RepairEvent{now, u, v});
            }
        }
        return repairs;
    }

    // Current neighbor set of u: ring adjacents over all rings, deduplicated.
    std::vector<NeighborEntry> neighbors(const ClientId& u) const {
        const Node& n = node_at(u);
        std::set<ClientId> peers;
        for (int r = 0; r < rings_; ++r) {
            if (n.next[static_cast<std::size_t>(r)] != u) peers.insert(n.next[static_cast<std::size_t>(r)]);
            if (n.prev[static_cast<std::size_t>(r)] != u) peers.insert(n.prev[static_cast<std::size_t>(r)]);
        }
        std::vector<NeighborEntry> out;
        for (const ClientId& p : peers) {
            const Node& pn = node_at(p);
            NeighborEntry e;
            e.peer_id = p;
            e.address = pn.address;
            e.coordinate = pn.coord;
            auto mit = n.peer_meta.find(p);
            if (mit != n.peer_meta.end()) e.last_fingerprint = mit->second;
            auto hb = heartbeats_.find(p);
            e.last_heartbeat = hb == heartbeats_.end() ? 0 : hb->second;
            out.push_back(std::move(e));
        }
        return out;
    }

    std::optional<Digest> last_fingerprint(const ClientId& u, const ClientId& peer) const {
        const Node& n = node_at(u);
        auto it = n.peer_meta.find(peer);
        if (it == n.peer_meta.end()) return std::nullopt;
        return it->second;
    }

    void set_last_fingerprint(const ClientId& u, const ClientId& peer, const Digest& d) {
        nodes_.at(u).peer_meta[peer] = d;
    }

    // Undirected edge set, each pair once with u < v.
    std::set<std::pair<ClientId, ClientId>> edges() const {
        std::set<std::pair<ClientId, ClientId>> out;
        for (const auto& [id, n] : nodes_) {
            for (int r = 0; r < rings_; ++r) {
                const ClientId& nx = n.next[static_cast<std::size_t>(r)];
                if (nx != id) out.insert(std::minmax(id, nx));
            }
        }
        return out;
    }

    // Ring r's members in circular order, starting from the smallest key.
    std::vector<ClientId> ring_order(int r) const {
        std::vector<ClientId> out;
        if (nodes_.empty()) return out;
        ClientId start = min_key_node(r);
        ClientId cur = start;
        do {
            out.push_back(cur);
            cur = node_at(cur).next[static_cast<std::size_t>(r)];
        } while (cur != start && out.size() <= nodes_.size());
        return out;
    }

    // Checks every structural invariant; returns problems (empty = healthy).
    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        for (int r = 0; r < rings_; ++r) {
            auto order = ring_order(r);
            if (order.size() != nodes_.size()) {
                problems.push_back("ring " + std::to_string(r) + ": cycle covers " +
                                   std::to_string(order.size()) + " of " +
                                   std::to_string(nodes_.size()) + " clients");
                continue;
            }
            auto expected = sorted_ring(r);
            if (order != expected)
                problems.push_back("ring " + std::to_string(r) +
                                   ": circular order differs from sorted coordinate order");
            // prev links must mirror next links
            for (const auto& [id, n] : nodes_) {
                const ClientId& nx = n.next[static_cast<std::size_t>(r)];
                if (node_at(nx).prev[static_cast<std::size_t>(r)] != id)
                    problems.push_back("ring " + std::to_string(r) + ": broken prev link at " + id);
            }
        }
        for (const auto& [id, _] : nodes_) {
            std::size_t deg = neighbors(id).size();
            if (deg > static_cast<std::size_t>(2 * rings_))
                problems.push_back("client " + id + ": degree " + std::to_string(deg) +
                                   " exceeds 2L=" + std::to_string(2 * rings_));
        }
        return problems;
    }

    // Snapshot: `u v` edge lines plus #-comments carrying what the checker
    // needs to recompute coordinates (rings, salt, node addresses).
    std::string export_snapshot() const {
        std::ostringstream out;
        out << "# bdfl-topology v1\n";
        out << "# rings " << rings_ << "\n";
        out << "# salt " << salt_ << "\n";
        for (const auto& [id, n] : nodes_) out << "# node " << id << " " << n.address << "\n";
        for (const auto& [u, v] : edges()) out << u << " " << v << "\n";
        return out.str();
    }

private:
    struct Node {
        std::string address;
        Coordinate coord;
        std::vector<ClientId> next;  // per ring
        std::vector<ClientId> prev;
        std::map<ClientId, Digest> peer_meta;  // last update fingerprint per neighbor
    };

    using RingKey = std::pair<double, ClientId>;

    RingKey ring_key(int r, const ClientId& id) const {
        return {node_at(id).coord.values[static_cast<std::size_t>(r)], id};
    }

    const Node& node_at(const ClientId& id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw std::invalid_argument("unknown client: " + id);
        return it->second;
    }

    void link(int r, const ClientId& a, const ClientId& b) {
        nodes_.at(a).next[static_cast<std::size_t>(r)] = b;
        nodes_.at(b).prev[static_cast<std::size_t>(r)] = a;
    }

    // True if walking ascending from a reaches x before b (keys circular).
    static bool in_arc(const RingKey& a, const RingKey& x, const RingKey& b) {
        if (a < b) return a < x && x < b;
        return x > a || x < b;
    }

    // Given the closest client w in ring r, the new key's slot is one of the
    // two arcs incident to w.
    std::pair<ClientId, ClientId> insertion_slot(int r, double coord, const ClientId& id,
                                                 const ClientId& w) const {
        const Node& wn = node_at(w);
        const ClientId& succ = wn.next[static_cast<std::size_t>(r)];
        const ClientId& pred = wn.prev[static_cast<std::size_t>(r)];
        if (succ == w) return {w, w};  // singleton ring
        RingKey key{coord, id};
        if (in_arc(ring_key(r, w), key, ring_key(r, succ))) return {w, succ};
        return {pred, w};
    }

    ClientId min_key_node(int r) const {
        const ClientId* best = nullptr;
        for (const auto& [id, n] : nodes_) {
            if (!best || std::make_pair(n.coord.values[static_cast<std::size_t>(r)], id) <
                             ring_key(r, *best))
                best = &id;
        }
        return *best;
    }

    std::vector<ClientId> sorted_ring(int r) const {
        std::vector<ClientId> ids = client_ids();
        std::sort(ids.begin(), ids.end(), [&](const ClientId& a, const ClientId& b) {
            return ring_key(r, a) < ring_key(r, b);
        });
        return ids;
    }

    int rings_;
    std::string salt_;
    SimTime heartbeat_period_;
    int miss_limit_;
    std::map<ClientId, Node> nodes_;
    std::map<ClientId, SimTime> heartbeats_;
};

// Validates a snapshot file produced by export_snapshot against a freshly
// recomputed expectation. Returns problems; empty means the snapshot holds
// every invariant.
inline std::vector<std::string> check_snapshot_text(const std::string& text) {
    std::vector<std::string> problems;
    int rings = -1;
    std::string salt;
    std::map<ClientId, std::string> addresses;
    std::set<std::pair<ClientId, ClientId>> file_edges;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (line[0] == '#') {
            std::string hash, key;
            ls >> hash >> key;
            if (key == "rings") ls >> rings;
            else if (key == "salt") ls >> salt;
            else if (key == "node") {
                ClientId id;
                std::string addr;
                ls >> id >> addr;
                addresses[id] = addr;
            }
            continue;
        }
        ClientId u, v;
        if (!(ls >> u >> v)) {
            problems.push_back("line " + std::to_string(lineno) + ": malformed edge line");
            continue;
        }
        file_edges.insert(std::minmax(u, v));
    }
    if (rings < 1) {
        problems.push_back("snapshot missing '# rings' header");
        return problems;
    }
    if (addresses.empty()) {
        problems.push_back("snapshot lists no nodes");
        return problems;
    }

    // Expected edges: per ring, adjacency of the sorted (coordinate, id) order.
    std::map<ClientId, Coordinate> coords;
    for (const auto& [id, addr] : addresses) coords[id] = compute_coordinates(addr, rings, salt);
    std::set<std::pair<ClientId, ClientId>> expected;
    for (int r = 0; r < rings; ++r) {
        std::vector<ClientId> ids;
        for (const auto& [id, _] : addresses) ids.push_back(id);
        std::sort(ids.begin(), ids.end(), [&](const ClientId& a, const ClientId& b) {
            return std::make_pair(coords[a].values[static_cast<std::size_t>(r)], a) <
                   std::make_pair(coords[b].values[static_cast<std::size_t>(r)], b);
        });
        if (ids.size() < 2) continue;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const ClientId& a = ids[i];
            const ClientId& b = ids[(i + 1) % ids.size()];
            if (a != b) expected.insert(std::minmax(a, b));
        }
    }
    if (file_edges != expected) {
        for (const auto& e : file_edges)
            if (!expected.count(e))
                problems.push_back("edge " + e.first + "-" + e.second +
                                   " not implied by sorted ring order");
        for (const auto& e : expected)
            if (!file_edges.count(e))
                problems.push_back("missing ring-adjacency edge " + e.first + "-" + e.second);
    }
    std::map<ClientId, int> degree;
    for (const auto& [u, v] : file_edges) {
        degree[u]++;
        degree[v]++;
    }
    for (const auto& [id, d] : degree)
        if (d > 2 * rings)
            problems.push_back("client " + id + ": degree " + std::to_string(d) + " exceeds 2L");
    return problems;
}

}  // namespace bdfl

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "bdfl/chain.hpp"
#include "bdfl/common.hpp"
#include "bdfl/util.hpp"

namespace bdfl {

// Cumulative counters snapshotted into every per-round metrics row.
struct MetricsCounters {
    long verifications = 0;   // fresh committee evaluations
    long cache_hits = 0;
    long malicious_verdicts = 0;
    long malicious_rejections = 0;
    long attack_updates_sent = 0;
    long attack_updates_aggregated = 0;        // attack-sourced updates an honest client absorbed
    long malicious_verdict_aggregated = 0;     // must stay zero: containment property
    long expulsions = 0;
    long messages = 0;
    long duplicate_skips = 0;
    long repairs = 0;
};

struct MetricsTickRow {
    Round round = 0;
    double avg_honest_acc = -1.0;
    double avg_update_acc = -1.0;
    int live_clients = 0;
    MetricsCounters counters;
    std::vector<double> reputations;  // per client_order; -1 = not in the table
    std::vector<double> cum_rewards;
};

// Per-client per-round activity row (emitted for rounds the client fired).
struct ClientRow {
    Round round = 0;
    ClientId client;
    std::string role;
    double local_acc = -1.0;
    double agg_acc = -1.0;
    int kept = 0;
    int rejected = 0;
    double fee_paid = 0.0;
    double reward = 0.0;
};

struct MetricsFrame : MetricsCounters {
    std::vector<MetricsTickRow> rows;
    std::vector<ClientRow> client_rows;

    void init(const struct Scenario&, const std::vector<ClientId>& order) {
        rows.reserve(256);
        (void)order;
    }

    std::string to_csv(const std::vector<ClientId>& order) const {
        std::string out =
            "round,avg_honest_acc,avg_update_acc,live_clients,verifications,cache_hits,"
            "malicious_verdicts,attack_updates_sent,attack_aggregated,"
            "malicious_verdict_aggregated,expulsions,messages,duplicate_skips,repairs";
        for (const ClientId& id : order) out += ",rep_" + id;
        for (const ClientId& id : order) out += ",cumreward_" + id;
        out += "\n";
        for (const MetricsTickRow& r : rows) {
            out += std::to_string(r.round) + "," + fmt_g(r.avg_honest_acc) + "," +
                   fmt_g(r.avg_update_acc) + "," + std::to_string(r.live_clients) + "," +
                   std::to_string(r.counters.verifications) + "," +
                   std::to_string(r.counters.cache_hits) + "," +
                   std::to_string(r.counters.malicious_verdicts) + "," +
                   std::to_string(r.counters.attack_updates_sent) + "," +
                   std::to_string(r.counters.attack_updates_aggregated) + "," +
                   std::to_string(r.counters.malicious_verdict_aggregated) + "," +
                   std::to_string(r.counters.expulsions) + "," +
                   std::to_string(r.counters.messages) + "," +
                   std::to_string(r.counters.duplicate_skips) + "," +
                   std::to_string(r.counters.repairs);
            for (double rep : r.reputations) out += "," + fmt_g(rep);
            for (double cr : r.cum_rewards) out += "," + fmt_g(cr);
            out += "\n";
        }
        return out;
    }

    std::string client_rows_csv() const {
        std::string out =
            "round,client_id,role,local_acc,agg_acc,neighbors_kept,neighbors_rejected,"
            "fee_paid,reward\n";
        for (const ClientRow& r : client_rows) {
            out += std::to_string(r.round) + "," + r.client + "," + r.role + "," +
                   fmt_g(r.local_acc) + "," + fmt_g(r.agg_acc) + "," + std::to_string(r.kept) +
                   "," + std::to_string(r.rejected) + "," + fmt_g(r.fee_paid) + "," +
                   fmt_g(r.reward) + "\n";
        }
        return out;
    }
};

struct SimResult {
    std::string metrics_csv, clients_csv, events_log, chain_log, verifications_csv,
        topology_snapshot, summary;
    double final_avg_honest_acc = -1.0;
    MetricsCounters counters;
    RewardLedger ledger;
    double conservation_gap = 0.0;
    bool ledger_replay_exact = false;
    std::map<ClientId, Round> expulsion_round;
    std::set<ClientId> malicious_clients;
    Round rounds = 0;
    std::vector<ClientId> client_order;
    std::vector<MetricsTickRow> tick_rows;
};

}  // namespace bdfl

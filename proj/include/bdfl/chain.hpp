#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdfl/common.hpp"
#include "bdfl/hash.hpp"
#include "bdfl/rng.hpp"
#include "bdfl/util.hpp"

namespace bdfl {

struct ChainConfig {
    Tokens min_collateral = 100.0;
    double eps_dev = 0.05;       // absolute accuracy band around the median
    int k_strikes = 3;           // slashed once strike_count exceeds this
    Tokens bounty = 10.0;        // dispute compensation
    Tokens verify_fee = 0.01;    // debited from the requester per fresh verification
    double reward_scale = 1.0;   // tokens per accuracy point above the window mean
    double auditor_market_share = 0.5;
    Tokens model_list_price = 1.0;
    double default_reputation = 0.5;
};

// Auditor-maintained client information: current reputations plus the sets
// of clients joining/leaving since the last committed block.
struct ClientTable {
    std::map<ClientId, double> reputations;
    std::set<ClientId> joining;
    std::set<ClientId> leaving;
};

enum class LeaveReason { voluntary, inactive, low_reputation };

struct Block {
    std::int64_t height = 0;
    SimTime timestamp = 0;
    ClientTable table_delta;                 // reputation changes + join/leave sets
    std::set<ClientId> expelled;             // subset of leaving barred forever
    std::vector<std::pair<std::string, double>> verification_digests;  // (fingerprint hex, consensus)
    std::set<AuditorId> signer_set;
    int active_auditors = 0;                 // auditor count when committed
};

struct AuditorAccount {
    AuditorId id;
    Tokens collateral = 0.0;
    int strike_count = 0;
    bool active = false;
};

struct LedgerEntry {
    Round round = 0;
    std::string account;
    Tokens delta = 0.0;  // signed; positive = credit
    std::string reason;
};

// Balances plus the append-only history that replays to them exactly.
struct RewardLedger {
    std::map<std::string, Tokens> balances;
    std::vector<LedgerEntry> history;

    Tokens balance(const std::string& account) const {
        auto it = balances.find(account);
        return it == balances.end() ? 0.0 : it->second;
    }

    void apply(Round round, const std::string& account, Tokens delta, const std::string& reason) {
        balances[account] += delta;
        history.push_back(LedgerEntry{round, account, delta, reason});
    }

    // Rebuilds balances from history; exact because the same additions run in
    // the same order.
    std::map<std::string, Tokens> replay() const {
        std::map<std::string, Tokens> out;
        for (const auto& e : history) out[e.account] += e.delta;
        return out;
    }
};

struct ModelDigestRecord {
    std::string digest_hex;
    double accuracy = 0.0;
    Round round = 0;
    std::set<AuditorId> holders;
};

enum class ReputationStatus { known, unknown, expelled };

struct ReputationView {
    ReputationStatus status = ReputationStatus::unknown;
    double value = 0.0;
};

struct AggregationOutcome {
    double consensus = 0.0;
    std::set<AuditorId> deviants;
    std::set<AuditorId> in_band;
    bool accepted = false;  // quorum of in-band results reached
    std::set<AuditorId> slashed;  // auditors whose strikes crossed the threshold
};

enum class DisputeVerdict { dismissed, compensated, deferred };

struct ServeResult {
    bool ok = false;
    std::string reason;
    AuditorId holder;
    std::string digest_hex;
};

// Simulated chain plus the auditor smart contract: auditor registry and
// collateral, quorum aggregation of verification results, the client table
// with periodic block commits, rewards/fees/slashing, and the model-digest
// marketplace. Signatures are abstract attestations recorded by the event
// loop; safety rests on the honest-quorum assumption.
class AuditorContract {
public:
    explicit AuditorContract(ChainConfig cfg = {}, std::uint64_t seed = 0)
        : cfg_(cfg), market_rng_(make_rng(seed, "marketplace")) {}

    const ChainConfig& config() const { return cfg_; }

    // --- auditor registry ----------------------------------------------

    bool register_auditor(const AuditorId& id, Tokens collateral) {
        if (collateral < cfg_.min_collateral) return false;
        if (auditors_.count(id)) return false;
        auditors_.emplace(id, AuditorAccount{id, collateral, 0, true});
        external_in_ += collateral;
        collateral_pool_ += collateral;
        return true;
    }

    const std::map<AuditorId, AuditorAccount>& auditors() const { return auditors_; }

    std::vector<AuditorId> active_auditors() const {
        std::vector<AuditorId> out;
        for (const auto& [id, a] : auditors_)
            if (a.active) out.push_back(id);
        return out;
    }

    int active_auditor_count() const { return static_cast<int>(active_auditors().size()); }

    // ceil(2/3 of active auditors), the minimum signer set for any commit.
    int quorum() const {
        int n = active_auditor_count();
        return (2 * n + 2) / 3;
    }

    // --- verification aggregation ---------------------------------------

    // Keeps results within eps_dev of the median, strikes the rest, and
    // accepts only when the in-band count reaches quorum. Slashing of
    // auditors whose strike count exceeds k_strikes happens immediately.
    AggregationOutcome aggregate_verification(
        const Digest& fingerprint, const std::vector<std::pair<AuditorId, double>>& results) {
        (void)fingerprint;
        if (results.empty())
            throw std::invalid_argument("aggregate_verification: no results");
        for (const auto& [id, _] : results) {
            auto it = auditors_.find(id);
            if (it == auditors_.end() || !it->second.active)
                throw std::invalid_argument("aggregate_verification: inactive submitter " + id);
        }
        const int required = quorum();

        std::vector<std::pair<AuditorId, double>> sorted(results.begin(), results.end());
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> accs;
        accs.reserve(sorted.size());
        for (const auto& [_, a] : sorted) accs.push_back(a);
        std::vector<double> tmp(accs);
        std::sort(tmp.begin(), tmp.end());
        const std::size_t n = tmp.size();
        const double median = (n % 2 == 1) ? tmp[n / 2] : 0.5 * (tmp[n / 2 - 1] + tmp[n / 2]);

        AggregationOutcome out;
        double sum = 0.0;
        int kept = 0;
        for (const auto& [id, a] : sorted) {
            if (std::fabs(a - median) <= cfg_.eps_dev) {
                sum += a;
                ++kept;
                out.in_band.insert(id);
            } else {
                out.deviants.insert(id);
            }
        }
        out.consensus = kept > 0 ? sum / kept : 0.0;
        out.accepted = kept >= required;
        for (const AuditorId& id : out.deviants) {
            auditors_.at(id).strike_count++;
            if (slash_auditor(id)) out.slashed.insert(id);
        }
        return out;
    }

    // Slashes iff strike_count strictly exceeds k_strikes: collateral burned,
    // auditor removed from the active list. No-op on inactive auditors.
    bool slash_auditor(const AuditorId& id) {
        auto it = auditors_.find(id);
        if (it == auditors_.end() || !it->second.active) return false;
        if (it->second.strike_count <= cfg_.k_strikes) return false;
        burn_collateral(it->second, it->second.collateral);
        return true;
    }

    // --- client table ----------------------------------------------------

    // Registers a client in the pending joining set with the default
    // reputation. Expelled ids are barred forever; a pending leave overrides
    // a join in the same block period.
    bool register_client(const ClientId& id) {
        if (expelled_.count(id)) return false;
        if (reputations_.count(id)) return false;
        if (pending_.leaving.count(id)) return false;
        reputations_[id] = cfg_.default_reputation;
        pending_.joining.insert(id);
        pending_.reputations[id] = cfg_.default_reputation;
        return true;
    }

    void mark_leaving(const ClientId& id, LeaveReason reason) {
        if (!reputations_.count(id)) return;
        pending_.leaving.insert(id);
        pending_.joining.erase(id);     // leave overrides join
        pending_.reputations.erase(id);
        if (reason == LeaveReason::low_reputation) pending_expelled_.insert(id);
    }

    // Live (auditor-table) view, ahead of the chain by up to one block period.
    std::optional<double> live_reputation(const ClientId& id) const {
        auto it = reputations_.find(id);
        if (it == reputations_.end()) return std::nullopt;
        return it->second;
    }

    const std::map<ClientId, double>& live_table() const { return reputations_; }
    bool is_expelled(const ClientId& id) const { return expelled_.count(id) > 0; }

    void set_reputation(const ClientId& id, double rep) {
        if (!reputations_.count(id))
            throw std::invalid_argument("set_reputation: unknown client " + id);
        if (rep < 0.0 || rep > 1.0)
            throw std::invalid_argument("set_reputation: out of range");
        if (pending_.leaving.count(id)) return;  // leave overrides later edits
        reputations_[id] = rep;
        pending_.reputations[id] = rep;
    }

    void queue_verification_digest(const std::string& fingerprint_hex, double consensus) {
        pending_digest_records_.emplace_back(fingerprint_hex, consensus);
    }

    // --- blocks -----------------------------------------------------------

    // Packs the pending table delta into a block. Returns nullopt and keeps
    // the delta when the signer set is below quorum or contains inactive ids.
    std::optional<Block> commit_block(SimTime now, const std::set<AuditorId>& signers) {
        if (static_cast<int>(signers.size()) < quorum()) return std::nullopt;
        for (const AuditorId& s : signers) {
            auto it = auditors_.find(s);
            if (it == auditors_.end() || !it->second.active) return std::nullopt;
        }
        Block b;
        b.height = static_cast<std::int64_t>(chain_.size());
        b.timestamp = now;
        b.table_delta = pending_;
        b.expelled = pending_expelled_;
        b.verification_digests = pending_digest_records_;
        b.signer_set = signers;
        b.active_auditors = active_auditor_count();
        chain_.push_back(b);

        for (const ClientId& id : pending_.leaving) {
            reputations_.erase(id);
            committed_reputations_.erase(id);
        }
        for (const auto& [id, rep] : pending_.reputations) committed_reputations_[id] = rep;
        for (const ClientId& id : pending_expelled_) expelled_.insert(id);
        pending_ = ClientTable{};
        pending_expelled_.clear();
        pending_digest_records_.clear();
        return b;
    }

    const std::vector<Block>& chain() const { return chain_; }

    // Reputation as of a committed block (default: the latest). Unknown and
    // expelled are distinct outcomes.
    ReputationView read_reputation(const ClientId& id, std::int64_t at_height = -1) const {
        if (chain_.empty()) throw std::logic_error("read_reputation: chain empty");
        if (at_height < 0) {
            // committed-at-tip view, materialized at each commit
            if (expelled_.count(id)) return {ReputationStatus::expelled, 0.0};
            auto it = committed_reputations_.find(id);
            if (it == committed_reputations_.end()) return {ReputationStatus::unknown, 0.0};
            return {ReputationStatus::known, it->second};
        }
        if (at_height >= static_cast<std::int64_t>(chain_.size()))
            throw std::invalid_argument("read_reputation: height beyond tip");
        // replay deltas up to and including at_height
        std::optional<double> rep;
        bool expelled = false;
        for (std::int64_t h = 0; h <= at_height; ++h) {
            const Block& b = chain_[static_cast<std::size_t>(h)];
            auto it = b.table_delta.reputations.find(id);
            if (it != b.table_delta.reputations.end()) rep = it->second;
            if (b.table_delta.leaving.count(id)) rep.reset();
            if (b.expelled.count(id)) expelled = true;
        }
        if (expelled) return {ReputationStatus::expelled, 0.0};
        if (!rep) return {ReputationStatus::unknown, 0.0};
        return {ReputationStatus::known, *rep};
    }

    // --- disputes ----------------------------------------------------------

    // A client disputes the reputation an auditor served for `round`. If the
    // claim disagrees with the committed chain, the auditor is slashed and
    // the client compensated from the collateral.
    DisputeVerdict resolve_dispute(const ClientId& client, double claimed_rep,
                                   const AuditorId& auditor, Round round) {
        if (chain_.empty() || chain_.back().timestamp < round) return DisputeVerdict::deferred;
        ReputationView v = read_reputation(client);
        double chain_rep = v.status == ReputationStatus::known ? v.value : -1.0;
        if (claimed_rep == chain_rep) return DisputeVerdict::dismissed;
        auto it = auditors_.find(auditor);
        if (it == auditors_.end() || !it->second.active)
            return DisputeVerdict::dismissed;  // already slashed; no double debit
        Tokens pay = std::min(cfg_.bounty, it->second.collateral);
        it->second.collateral -= pay;
        collateral_pool_ -= pay;
        ledger_.apply(round, client, pay, "dispute-bounty:" + auditor);
        burn_collateral(it->second, it->second.collateral);
        return DisputeVerdict::compensated;
    }

    // --- rewards & fees ----------------------------------------------------

    struct VerificationOutcome {
        ClientId submitter;
        double consensus = 0.0;
        double mu_prev = 0.0;
        bool honest = false;
        ClientId requester;
        std::vector<AuditorId> fee_payees;  // non-deviant auditors
        bool charge_fee = true;
    };

    // Client rewards are minted (inflationary budget); verification fees move
    // from the requester to the non-deviant auditors, waived (and logged)
    // when the balance cannot cover them.
    void distribute_rewards(Round round, const std::vector<VerificationOutcome>& outcomes) {
        for (const auto& o : outcomes) {
            if (o.honest && o.consensus > o.mu_prev) {
                Tokens amount = cfg_.reward_scale * (o.consensus - o.mu_prev);
                minted_ += amount;
                ledger_.apply(round, o.submitter, amount, "reward");
            }
            if (o.charge_fee && !o.fee_payees.empty()) {
                if (ledger_.balance(o.requester) >= cfg_.verify_fee) {
                    ledger_.apply(round, o.requester, -cfg_.verify_fee, "verify-fee");
                    Tokens share = cfg_.verify_fee / static_cast<double>(o.fee_payees.size());
                    for (const AuditorId& a : o.fee_payees)
                        ledger_.apply(round, a, share, "verify-fee-share");
                } else {
                    fee_waivers_.push_back({round, o.requester});
                }
            }
        }
    }

    void deposit(Round round, const std::string& account, Tokens amount, const std::string& why) {
        external_in_ += amount;
        ledger_.apply(round, account, amount, why);
    }

    const RewardLedger& ledger() const { return ledger_; }
    const std::vector<std::pair<Round, std::string>>& fee_waivers() const { return fee_waivers_; }

    // --- model digest marketplace -------------------------------------------

    void record_model_digest(const std::string& digest_hex, double accuracy, Round round,
                             const AuditorId& holder) {
        auto it = auditors_.find(holder);
        if (it == auditors_.end() || !it->second.active)
            throw std::invalid_argument("record_model_digest: inactive auditor " + holder);
        auto& rec = digests_[digest_hex];
        rec.digest_hex = digest_hex;
        rec.accuracy = accuracy;
        rec.round = round;
        rec.holders.insert(holder);
        latest_digest_ = digest_hex;
    }

    const std::map<std::string, ModelDigestRecord>& digests() const { return digests_; }

    // Serves the latest recorded model: debits the buyer (the fee enters as
    // an external inflow), pays the serving auditor its share, and splits the
    // rest across clients pro-rata by committed reputation.
    ServeResult serve_model_request(Round round, const std::string& buyer, Tokens fee) {
        ServeResult res;
        if (fee < cfg_.model_list_price) {
            res.reason = "fee below list price";
            return res;
        }
        if (latest_digest_.empty() || !digests_.count(latest_digest_)) {
            res.reason = "no holders";
            return res;
        }
        ModelDigestRecord& rec = digests_.at(latest_digest_);
        std::vector<AuditorId> holders;
        for (const AuditorId& h : rec.holders)
            if (auditors_.count(h) && auditors_.at(h).active) holders.push_back(h);
        if (holders.empty()) {
            res.reason = "no holders";
            return res;
        }
        std::uniform_int_distribution<std::size_t> pick(0, holders.size() - 1);
        res.holder = holders[pick(market_rng_)];
        res.digest_hex = rec.digest_hex;
        res.ok = true;

        deposit(round, buyer, fee, "model-purchase-deposit");
        ledger_.apply(round, buyer, -fee, "model-purchase");
        Tokens auditor_cut = fee * cfg_.auditor_market_share;
        ledger_.apply(round, res.holder, auditor_cut, "model-serve");
        Tokens client_pool = fee - auditor_cut;
        double rep_sum = 0.0;
        for (const auto& [id, rep] : committed_reputations_) rep_sum += rep;
        if (rep_sum > 0.0) {
            for (const auto& [id, rep] : committed_reputations_) {
                Tokens cut = client_pool * (rep / rep_sum);
                if (cut > 0.0) ledger_.apply(round, id, cut, "model-contribution");
            }
        } else if (client_pool > 0.0) {
            ledger_.apply(round, res.holder, client_pool, "model-serve-remainder");
        }
        return res;
    }

    // The buyer recomputes the digest of the fetched weights; a mismatch is
    // the dispute path and slashes the holder outright.
    bool verify_fetched_model(const std::string& digest_hex, const Digest& recomputed,
                              const AuditorId& holder) {
        if (recomputed.hex() == digest_hex) return true;
        auto it = auditors_.find(holder);
        if (it != auditors_.end() && it->second.active)
            burn_collateral(it->second, it->second.collateral);
        return false;
    }

    // --- conservation --------------------------------------------------------

    // sum(balances) + collateral pool == external inflows + minted - burned.
    double conservation_gap() const {
        Tokens total = 0.0;
        for (const auto& [_, b] : ledger_.balances) total += b;
        return std::fabs(total + collateral_pool_ - (external_in_ + minted_ - burned_));
    }

    Tokens minted() const { return minted_; }
    Tokens burned() const { return burned_; }
    Tokens external_in() const { return external_in_; }
    Tokens collateral_pool() const { return collateral_pool_; }

    // --- export / verify -------------------------------------------------------

    // One block per line, canonical field order.
    std::string export_chain() const {
        std::string out;
        for (const Block& b : chain_) out += block_to_json(b).dump() + "\n";
        return out;
    }

    static nlohmann::ordered_json block_to_json(const Block& b) {
        nlohmann::ordered_json j;
        j["height"] = b.height;
        j["time"] = b.timestamp;
        j["active_auditors"] = b.active_auditors;
        j["signers"] = b.signer_set;
        nlohmann::ordered_json reps = nlohmann::ordered_json::object();
        for (const auto& [id, rep] : b.table_delta.reputations) reps[id] = rep;
        j["reputations"] = reps;
        j["joining"] = b.table_delta.joining;
        j["leaving"] = b.table_delta.leaving;
        j["expelled"] = b.expelled;
        nlohmann::ordered_json digs = nlohmann::ordered_json::array();
        for (const auto& [fp, acc] : b.verification_digests) digs.push_back({fp, acc});
        j["digests"] = digs;
        return j;
    }

private:
    void burn_collateral(AuditorAccount& a, Tokens amount) {
        a.collateral -= amount;
        collateral_pool_ -= amount;
        burned_ += amount;
        a.active = false;
    }

    ChainConfig cfg_;
    std::map<AuditorId, AuditorAccount> auditors_;
    std::map<ClientId, double> reputations_;            // live auditor table
    std::map<ClientId, double> committed_reputations_;  // as of the latest block
    std::set<ClientId> expelled_;
    ClientTable pending_;
    std::set<ClientId> pending_expelled_;
    std::vector<std::pair<std::string, double>> pending_digest_records_;
    std::vector<Block> chain_;
    RewardLedger ledger_;
    std::vector<std::pair<Round, std::string>> fee_waivers_;
    std::map<std::string, ModelDigestRecord> digests_;
    std::string latest_digest_;
    Tokens minted_ = 0.0, burned_ = 0.0, external_in_ = 0.0, collateral_pool_ = 0.0;
    std::mt19937_64 market_rng_;
};

// Re-validates an exported chain file: quorum on every block, strictly
// increasing heights, disjoint join/leave sets, reputations in range, and the
// monotone-expulsion rule. Returns problems; empty means valid.
inline std::vector<std::string> verify_chain_text(const std::string& text) {
    std::vector<std::string> problems;
    std::istringstream in(text);
    std::string line;
    std::int64_t expected_height = 0;
    std::set<ClientId> expelled;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            problems.push_back("line " + std::to_string(lineno) + ": bad json: " + e.what());
            continue;
        }
        std::string where = "block " + std::to_string(expected_height);
        if (j["height"].get<std::int64_t>() != expected_height)
            problems.push_back(where + ": height not strictly increasing from genesis");
        ++expected_height;
        int active = j["active_auditors"].get<int>();
        int signers = static_cast<int>(j["signers"].size());
        int required = (2 * active + 2) / 3;
        if (signers < required)
            problems.push_back(where + ": " + std::to_string(signers) + " signers below quorum " +
                               std::to_string(required));
        std::set<ClientId> joining = j["joining"].get<std::set<ClientId>>();
        std::set<ClientId> leaving = j["leaving"].get<std::set<ClientId>>();
        for (const auto& id : joining)
            if (leaving.count(id)) problems.push_back(where + ": " + id + " both joining and leaving");
        for (auto it = j["reputations"].begin(); it != j["reputations"].end(); ++it) {
            double rep = it.value().get<double>();
            if (rep < 0.0 || rep > 1.0)
                problems.push_back(where + ": reputation of " + it.key() + " out of [0,1]");
            if (expelled.count(it.key()))
                problems.push_back(where + ": expelled client " + it.key() + " reappears");
        }
        for (const auto& id : joining)
            if (expelled.count(id)) problems.push_back(where + ": expelled client " + id + " rejoins");
        for (const auto& id : j["expelled"].get<std::set<ClientId>>()) expelled.insert(id);
    }
    if (expected_height == 0) problems.push_back("chain file holds no blocks");
    return problems;
}

}  // namespace bdfl

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bdfl/chain.hpp"
#include "bdfl/dataset.hpp"
#include "bdfl/model.hpp"
#include "bdfl/update.hpp"
#include "bdfl/util.hpp"

namespace bdfl {

// Rolling window of the latest verified accuracies (20 per the contract).
// Mean and sample standard deviation are recomputed from the window contents
// on every query, so they are exact by construction.
class AccuracyHistory {
public:
    explicit AccuracyHistory(std::size_t capacity = 20) : capacity_(capacity) {}

    void push(double a) {
        window_.push_back(a);
        if (window_.size() > capacity_) window_.pop_front();
    }

    std::size_t size() const { return window_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<double>& window() const { return window_; }

    double mean() const {
        if (window_.empty()) return 0.0;
        double s = 0.0;
        for (double a : window_) s += a;
        return s / static_cast<double>(window_.size());
    }

    // Sample standard deviation (n-1 denominator); 0 when n < 2.
    double stddev() const {
        if (window_.size() < 2) return 0.0;
        double mu = mean();
        double ss = 0.0;
        for (double a : window_) ss += (a - mu) * (a - mu);
        return std::sqrt(ss / static_cast<double>(window_.size() - 1));
    }

private:
    std::size_t capacity_;
    std::deque<double> window_;
};

struct AuditorConfig {
    int min_history = 2;       // verified accuracies before the mu-2sigma rule activates
    double gain_cap = 0.05;    // per-round honest reputation gain bound
    double q_gap = 0.1;        // validation-set curation accuracy slack
    double theta_expel = 0.05; // strictly below -> purged
    std::size_t history_window = 20;
    bool record_digests = true;
};

enum class Verdict { honest, malicious, pending };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::honest: return "honest";
        case Verdict::malicious: return "malicious";
        case Verdict::pending: return "pending";
    }
    return "?";
}

// malicious iff A < mu - 2*sigma strictly, once the window carries enough
// history; earlier updates default honest (bootstrap grace).
inline Verdict classify_update(double accuracy, const AccuracyHistory& hist, int min_history) {
    if (static_cast<int>(hist.size()) < min_history) return Verdict::honest;
    if (accuracy < hist.mean() - 2.0 * hist.stddev()) return Verdict::malicious;
    return Verdict::honest;
}

struct ReputationChange {
    double new_rep = 0.0;
    double delta = 0.0;
};

// Reputation arithmetic: malicious halves; honest above the mean gains
// ((A-mu)/sigma)*0.01 capped per round and at 1.0; honest at or below the
// mean is unchanged. sigma == 0 with A > mu applies the cap directly.
inline ReputationChange update_reputation(double rep, Verdict verdict, double accuracy,
                                          const AccuracyHistory& hist, double gain_cap) {
    if (rep < 0.0 || rep > 1.0) throw std::invalid_argument("update_reputation: rep out of [0,1]");
    ReputationChange out;
    if (verdict == Verdict::malicious) {
        out.new_rep = rep / 2.0;
        out.delta = out.new_rep - rep;
        return out;
    }
    double mu = hist.mean();
    double sigma = hist.stddev();
    double gain = 0.0;
    if (accuracy > mu) {
        gain = sigma > 0.0 ? ((accuracy - mu) / sigma) * 0.01 : gain_cap;
        gain = std::min(gain, gain_cap);
        gain = std::min(gain, 1.0 - rep);  // cap at 1.0
    }
    out.new_rep = rep + gain;
    out.delta = gain;
    return out;
}

struct ContributedPart {
    ClientId contributor;
    Eigen::Index sample_count = 0;
    double accuracy = 0.0;  // of omega_0 on the candidate at admission time
    Round round = 0;
    bool accepted = false;
};

// The public validation data D plus provenance of client contributions.
// version bumps whenever D changes so verification caches can key on it.
struct ValidationSet {
    Dataset data;
    std::vector<ContributedPart> parts;
    Round refresh_round = 0;
    int version = 0;
};

struct VerificationRecord {
    Digest fingerprint;
    ClientId submitter;
    double accuracy = 0.0;   // quorum consensus
    Verdict verdict = Verdict::pending;
    Round round = 0;
    double mu_prev = 0.0;
    double sigma_prev = 0.0;
    double rep_before = 0.0;
    double rep_after = 0.0;
    bool malformed = false;
    bool from_cache = false;
};

// The auditor committee: owns the validation set, the accuracy history and
// the fingerprint cache, and drives the contract for quorum aggregation,
// reputation updates, rewards and purges. Honest auditors all evaluate the
// same deterministic accuracy; configured deviants report an offset.
class AuditorCommittee {
public:
    AuditorCommittee(AuditorContract& contract, ModelSpec spec, ValidationSet validation,
                     AuditorConfig cfg = {})
        : contract_(contract), spec_(std::move(spec)), validation_(std::move(validation)),
          cfg_(cfg), history_(cfg.history_window) {
        log_rows_.push_back("round,fingerprint,submitter,accuracy,mu,sigma,verdict,rep_before,rep_after");
    }

    const AuditorConfig& config() const { return cfg_; }
    const AccuracyHistory& history() const { return history_; }
    AccuracyHistory& history() { return history_; }
    const ValidationSet& validation() const { return validation_; }
    long evaluations() const { return evaluations_; }
    long cache_hits() const { return cache_hits_; }
    const std::vector<std::string>& verification_log() const { return log_rows_; }

    void set_deviance_offset(const AuditorId& id, double offset) { offsets_[id] = offset; }
    const std::map<AuditorId, double>& deviance_offsets() const { return offsets_; }

    // Accuracy of the update on the public validation set (no cache, no side
    // effects). Shape mismatches surface as ShapeMismatchError.
    double verify_model(const Eigen::VectorXd& weights) {
        ++evaluations_;
        return evaluate_accuracy(spec_, weights, validation_.data);
    }

    // Full committee round for one update: fingerprint cache, per-auditor
    // reports, quorum aggregation, verdict, reputation update, history and
    // rewards. Cached fingerprints are answered without re-evaluation and
    // without repeating any state change.
    VerificationRecord process_verification(const ClientId& requester, const ModelUpdate& update,
                                            Round round, bool allow_gain = true) {
        const std::string key = cache_key(update.fingerprint);
        if (auto it = cache_.find(key); it != cache_.end()) {
            ++cache_hits_;
            VerificationRecord r = it->second;
            r.from_cache = true;
            return r;
        }

        VerificationRecord rec;
        rec.fingerprint = update.fingerprint;
        rec.submitter = update.sender;
        rec.round = round;
        rec.mu_prev = history_.mean();
        rec.sigma_prev = history_.stddev();

        double rep_before = contract_.live_reputation(update.sender).value_or(-1.0);
        if (rep_before < 0.0)
            throw std::invalid_argument("process_verification: unregistered submitter " +
                                        update.sender);
        rec.rep_before = rep_before;

        if (update.weights.size() != spec_.weight_count()) {
            // Malformed update: treated as a malicious submission, no
            // evaluation and no consensus value.
            rec.malformed = true;
            rec.verdict = Verdict::malicious;
            rec.accuracy = 0.0;
            apply_reputation(rec, allow_gain);
            cache_.emplace(key, rec);
            append_log(rec);
            return rec;
        }

        double true_acc = verify_model(update.weights);
        std::vector<std::pair<AuditorId, double>> reports;
        for (const AuditorId& a : contract_.active_auditors()) {
            auto off = offsets_.find(a);
            double v = off == offsets_.end() ? true_acc
                                             : std::clamp(true_acc + off->second, 0.0, 1.0);
            reports.emplace_back(a, v);
        }
        if (reports.empty()) {
            rec.verdict = Verdict::pending;
            append_log(rec);
            return rec;  // not cached; retried next round
        }
        AggregationOutcome agg = contract_.aggregate_verification(update.fingerprint, reports);
        if (!agg.accepted) {
            rec.verdict = Verdict::pending;
            rec.accuracy = agg.consensus;
            append_log(rec);
            return rec;  // below quorum: no reputation effects, not cached
        }
        rec.accuracy = agg.consensus;
        rec.verdict = classify_update(agg.consensus, history_, cfg_.min_history);
        apply_reputation(rec, allow_gain);

        if (rec.verdict == Verdict::honest) {
            history_.push(rec.accuracy);
            if (cfg_.record_digests && rec.accuracy > rec.mu_prev && !agg.in_band.empty()) {
                contract_.record_model_digest(update.fingerprint.hex(), rec.accuracy, round,
                                              *agg.in_band.begin());
                contract_.queue_verification_digest(update.fingerprint.hex(), rec.accuracy);
            }
        }

        AuditorContract::VerificationOutcome outcome;
        outcome.submitter = update.sender;
        outcome.consensus = rec.accuracy;
        outcome.mu_prev = rec.mu_prev;
        outcome.honest = rec.verdict == Verdict::honest;
        outcome.requester = requester;
        outcome.fee_payees.assign(agg.in_band.begin(), agg.in_band.end());
        contract_.distribute_rewards(round, {outcome});

        cache_.emplace(key, rec);
        append_log(rec);
        return rec;
    }

    // Pre-verification for a low-reputation client (spec: below the exchange
    // gate). An honest verdict yields an attested proof neighbors accept
    // without a fresh committee round; a malicious verdict halves the
    // reputation as usual and yields none. The honest branch changes no
    // reputation: the proof restores the client's ability to exchange, the
    // verdict itself carries no gain.
    std::optional<PreVerificationProof> pre_verify(const ModelUpdate& update, Round round) {
        VerificationRecord rec = process_verification(update.sender, update, round,
                                                      /*allow_gain=*/false);
        if (rec.verdict != Verdict::honest) return std::nullopt;
        PreVerificationProof proof;
        proof.fingerprint = update.fingerprint;
        proof.consensus_accuracy = rec.accuracy;
        proof.round = round;
        for (const AuditorId& a : contract_.active_auditors()) proof.attesters.insert(a);
        proof.quorum_at_issue = contract_.quorum();
        return proof;
    }

    // Quality gate for contributed validation data: accept iff omega_0's
    // accuracy on the candidate is within q_gap of its accuracy on D, then
    // merge. Merging bumps the validation version and drops the cache.
    bool curate_validation_data(const Dataset& candidate, const ClientId& contributor,
                                Round round, const Model& omega0) {
        ContributedPart part;
        part.contributor = contributor;
        part.sample_count = candidate.size();
        part.round = round;
        if (candidate.empty()) {
            part.accepted = false;
            validation_.parts.push_back(part);
            return false;
        }
        double acc_cand = evaluate_accuracy(omega0.spec, omega0.w, candidate);
        double acc_base = evaluate_accuracy(omega0.spec, omega0.w, validation_.data);
        part.accuracy = acc_cand;
        part.accepted = acc_cand >= acc_base - cfg_.q_gap;
        validation_.parts.push_back(part);
        if (!part.accepted) return false;

        Eigen::Index old_n = validation_.data.size();
        Eigen::MatrixXd merged(old_n + candidate.size(), validation_.data.dim());
        merged.topRows(old_n) = validation_.data.features;
        merged.bottomRows(candidate.size()) = candidate.features;
        validation_.data.features = std::move(merged);
        validation_.data.labels.insert(validation_.data.labels.end(), candidate.labels.begin(),
                                       candidate.labels.end());
        validation_.refresh_round = round;
        validation_.version++;
        cache_.clear();
        return true;
    }

    // Clients strictly below theta_expel go to the leaving set; the next
    // committed block makes the expulsion permanent.
    std::vector<ClientId> purge_low_reputation() {
        std::vector<ClientId> out;
        for (const auto& [id, rep] : contract_.live_table()) {
            if (rep < cfg_.theta_expel) out.push_back(id);
        }
        for (const ClientId& id : out) contract_.mark_leaving(id, LeaveReason::low_reputation);
        return out;
    }

private:
    std::string cache_key(const Digest& fp) const {
        return fp.hex() + ":" + std::to_string(validation_.version);
    }

    void apply_reputation(VerificationRecord& rec, bool allow_gain) {
        if (rec.verdict == Verdict::honest && !allow_gain) {
            rec.rep_after = rec.rep_before;
            return;
        }
        ReputationChange ch = update_reputation(rec.rep_before, rec.verdict, rec.accuracy,
                                                history_, cfg_.gain_cap);
        rec.rep_after = ch.new_rep;
        contract_.set_reputation(rec.submitter, ch.new_rep);
    }

    void append_log(const VerificationRecord& rec) {
        log_rows_.push_back(std::to_string(rec.round) + "," + rec.fingerprint.hex12() + "," +
                            rec.submitter + "," + fmt_g(rec.accuracy) + "," + fmt_g(rec.mu_prev) +
                            "," + fmt_g(rec.sigma_prev) + "," + verdict_name(rec.verdict) + "," +
                            fmt_g(rec.rep_before) + "," + fmt_g(rec.rep_after));
    }

    AuditorContract& contract_;
    ModelSpec spec_;
    ValidationSet validation_;
    AuditorConfig cfg_;
    AccuracyHistory history_;
    std::map<std::string, VerificationRecord> cache_;
    std::map<AuditorId, double> offsets_;
    long evaluations_ = 0;
    long cache_hits_ = 0;
    std::vector<std::string> log_rows_;
};

}  // namespace bdfl

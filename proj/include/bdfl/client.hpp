#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bdfl/chain.hpp"
#include "bdfl/dataset.hpp"
#include "bdfl/model.hpp"
#include "bdfl/update.hpp"

namespace bdfl {

// Per-neighbor aggregation weights plus the self weight.
struct ConfidenceWeights {
    std::map<ClientId, double> neighbor;  // c^j >= 0
    double self = 1.0;                    // c^u
};

// c^j = the neighbor's on-chain reputation; monotone by construction.
inline ConfidenceWeights confidence_from_reputation(const std::map<ClientId, double>& reps,
                                                    double self_confidence) {
    ConfidenceWeights w;
    for (const auto& [id, rep] : reps) {
        if (rep < 0.0 || rep > 1.0)
            throw std::invalid_argument("confidence_from_reputation: rep out of [0,1]");
        w.neighbor[id] = rep;
    }
    w.self = self_confidence;
    return w;
}

// Confidence-weighted model aggregation over self plus the accepted
// neighbors, coordinate-wise: sum(c_j * w_j) / sum(c_j). Contributions are
// summed in ascending client-id order (self included at its id) so the
// result is bitwise reproducible. A zero weight sum keeps the own model.
inline Eigen::VectorXd aggregate_models(
    const ClientId& own_id, const Eigen::VectorXd& own_weights, double own_confidence,
    const std::vector<std::tuple<ClientId, Eigen::VectorXd, double>>& accepted) {
    std::vector<std::tuple<ClientId, const Eigen::VectorXd*, double>> parts;
    parts.reserve(accepted.size() + 1);
    parts.emplace_back(own_id, &own_weights, own_confidence);
    for (const auto& [id, w, c] : accepted) {
        if (w.size() != own_weights.size())
            throw ShapeMismatchError("aggregate_models: weight length mismatch from " + id);
        if (c < 0.0) throw std::invalid_argument("aggregate_models: negative confidence");
        parts.emplace_back(id, &w, c);
    }
    std::sort(parts.begin(), parts.end(),
              [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });

    double total = 0.0;
    for (const auto& [_, w, c] : parts) total += c;
    if (total <= 0.0) return own_weights;

    Eigen::VectorXd num = Eigen::VectorXd::Zero(own_weights.size());
    for (const auto& [_, w, c] : parts) num += c * (*w);
    return num / total;
}

enum class GateOutcome { kept, kept_with_proof, rejected_low_reputation, rejected_unknown,
                         rejected_expelled, rejected_bad_proof };

inline const char* gate_outcome_name(GateOutcome g) {
    switch (g) {
        case GateOutcome::kept: return "kept";
        case GateOutcome::kept_with_proof: return "kept-with-proof";
        case GateOutcome::rejected_low_reputation: return "rejected-low-rep";
        case GateOutcome::rejected_unknown: return "rejected-unknown";
        case GateOutcome::rejected_expelled: return "rejected-expelled";
        case GateOutcome::rejected_bad_proof: return "rejected-bad-proof";
    }
    return "?";
}

// Reputation gate for one received update against the committed chain view.
// Below theta_reject only a valid pre-verification proof lets it through;
// unknown or expelled senders never participate.
inline GateOutcome filter_by_reputation(const ModelUpdate& update, const ReputationView& rep,
                                        double theta_reject) {
    if (rep.status == ReputationStatus::expelled) return GateOutcome::rejected_expelled;
    if (rep.status == ReputationStatus::unknown) return GateOutcome::rejected_unknown;
    if (rep.value >= theta_reject) return GateOutcome::kept;
    if (update.proof) {
        if (update.proof->valid_for(update.fingerprint)) return GateOutcome::kept_with_proof;
        return GateOutcome::rejected_bad_proof;
    }
    return GateOutcome::rejected_low_reputation;
}

struct ClientTrainConfig {
    double lr = 0.1;
    int epochs = 2;
    int batch_size = 16;
    double l_gap = 0.05;  // holdout slack for the local pre-evaluation
    double self_confidence = 1.0;
};

// One client's local state: its data split, model line, and seeded rng
// streams. Exchange orchestration lives in the simulation loop; everything
// here is a pure function of the held state.
class Client {
public:
    Client(ClientId id, std::string address, Dataset train, Dataset holdout, ClientTrainConfig cfg,
           NoiseConfig noise, std::uint64_t master_seed)
        : id_(std::move(id)), address_(std::move(address)), train_(std::move(train)),
          holdout_(std::move(holdout)), cfg_(cfg), noise_(noise),
          train_rng_(make_rng(master_seed, "train/" + id_)),
          noise_rng_(make_rng(master_seed, "noise/" + id_)) {}

    const ClientId& id() const { return id_; }
    const std::string& address() const { return address_; }
    const Dataset& train_data() const { return train_; }
    const Dataset& holdout() const { return holdout_; }
    const ClientTrainConfig& train_config() const { return cfg_; }

    bool has_model() const { return has_model_; }
    const Model& model() const { return model_; }
    void set_model(Model m) {
        model_ = std::move(m);
        has_model_ = true;
    }
    void set_weights(Eigen::VectorXd w) { model_.w = std::move(w); }

    // One round of local SGD on the own dataset, advancing the model line.
    // Returns false (skip the round) when there is no data to train on.
    bool train_local() {
        if (train_.empty()) return false;
        train_epochs(model_, train_, cfg_.lr, cfg_.epochs, cfg_.batch_size, train_rng_);
        return true;
    }

    // Packages weights for exchange: DP noise plus fingerprint, computed
    // post-noise.
    ModelUpdate make_sent_update(const Eigen::VectorXd& weights, Round round) {
        ModelUpdate u = make_update(id_, weights, round);
        u = add_dp_noise(std::move(u), noise_, noise_rng_);
        return u;
    }

    double holdout_accuracy(const Eigen::VectorXd& weights) const {
        if (holdout_.empty()) return -1.0;
        return evaluate_accuracy(model_.spec, weights, holdout_);
    }

    // Local pre-evaluation of a neighbor update: accept when its holdout
    // accuracy is within l_gap of the own model's. Empty holdout defers to
    // the auditors (always suspect).
    bool local_verify(const ModelUpdate& update) const {
        if (holdout_.empty() || !has_model_) return false;
        double theirs = holdout_accuracy(update.weights);
        double ours = holdout_accuracy(model_.w);
        return theirs >= ours - cfg_.l_gap;
    }

    std::mt19937_64& train_rng() { return train_rng_; }
    std::mt19937_64& noise_rng() { return noise_rng_; }

private:
    ClientId id_;
    std::string address_;
    Dataset train_;
    Dataset holdout_;
    ClientTrainConfig cfg_;
    NoiseConfig noise_;
    Model model_;
    bool has_model_ = false;
    std::mt19937_64 train_rng_;
    std::mt19937_64 noise_rng_;
};

}  // namespace bdfl

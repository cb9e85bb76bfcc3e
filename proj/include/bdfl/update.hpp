#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <set>
#include <span>

#include "bdfl/common.hpp"
#include "bdfl/hash.hpp"

namespace bdfl {

// Recorded (epsilon, delta) parameters plus the per-coordinate normal scale
// actually injected. No accounting proof is attached; the parameters travel
// with the run for audit.
struct NoiseConfig {
    bool enabled = true;
    double epsilon = 1.0;
    double delta = 1e-5;
    double sigma = 0.001;
};

// Attested record a low-reputation client attaches to an exchanged update so
// neighbors can accept it without another committee round.
struct PreVerificationProof {
    Digest fingerprint;
    double consensus_accuracy = 0.0;
    Round round = 0;
    std::set<AuditorId> attesters;
    int quorum_at_issue = 0;

    bool valid_for(const Digest& update_fp) const {
        return update_fp == fingerprint &&
               static_cast<int>(attesters.size()) >= quorum_at_issue && quorum_at_issue > 0;
    }
};

struct ModelUpdate {
    ClientId sender;
    Eigen::VectorXd weights;
    Round round = 0;
    Digest fingerprint;
    bool noise_applied = false;
    std::optional<PreVerificationProof> proof;
};

inline Digest fingerprint_weights(const Eigen::VectorXd& w) {
    return sha256_doubles(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
}

inline ModelUpdate make_update(const ClientId& sender, const Eigen::VectorXd& weights,
                               Round round) {
    ModelUpdate u;
    u.sender = sender;
    u.weights = weights;
    u.round = round;
    u.fingerprint = fingerprint_weights(u.weights);
    return u;
}

// Independent normal noise of scale sigma on every coordinate; fingerprint
// recomputed over the noisy weights. sigma == 0 (or disabled) is the
// identity apart from the noise_applied flag.
inline ModelUpdate add_dp_noise(ModelUpdate update, const NoiseConfig& cfg,
                                std::mt19937_64& rng) {
    if (!cfg.enabled) return update;
    if (cfg.sigma > 0.0) {
        std::normal_distribution<double> normal(0.0, cfg.sigma);
        for (Eigen::Index i = 0; i < update.weights.size(); ++i) update.weights(i) += normal(rng);
    }
    update.noise_applied = true;
    update.fingerprint = fingerprint_weights(update.weights);
    return update;
}

}  // namespace bdfl

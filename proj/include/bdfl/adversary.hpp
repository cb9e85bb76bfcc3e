#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <set>

#include "bdfl/client.hpp"
#include "bdfl/dataset.hpp"
#include "bdfl/model.hpp"

namespace bdfl {

enum class AttackMode { label_flip, random_weights, noise_scaled };

inline const char* attack_mode_name(AttackMode m) {
    switch (m) {
        case AttackMode::label_flip: return "label_flip";
        case AttackMode::random_weights: return "random_weights";
        case AttackMode::noise_scaled: return "noise_scaled";
    }
    return "?";
}

// Which client attacks, how, and when. An empty round set with always=false
// never fires (the client behaves honestly the whole run).
struct AttackPlan {
    ClientId client;
    AttackMode mode = AttackMode::label_flip;
    bool always = true;
    std::set<Round> rounds;          // used when always == false
    double noise_sigma = 0.5;        // scale for noise_scaled mode

    bool fires_at(Round r) const { return always || rounds.count(r) > 0; }
};

// Label poisoning: y -> (y+1) mod num_classes, features untouched. Applying
// it twice shifts labels by two, it does not restore them.
inline Dataset poison_dataset(const Dataset& ds, AttackMode mode, std::uint64_t /*seed*/) {
    Dataset out = ds;
    out.provenance = Provenance::poisoned;
    if (mode == AttackMode::label_flip) {
        for (auto& y : out.labels) y = (y + 1) % ds.num_classes;
    }
    return out;
}

// Adversarial weights for a scheduled round. The client's honest model line
// is read-only here: intermittent attackers keep training honestly so their
// off-schedule updates are indistinguishable from an honest client's.
inline Eigen::VectorXd make_adversarial_weights(const Client& client, const AttackPlan& plan,
                                                std::mt19937_64& attack_rng) {
    switch (plan.mode) {
        case AttackMode::label_flip: {
            Model poisoned_line = client.model();
            Dataset bad = poison_dataset(client.train_data(), AttackMode::label_flip, 0);
            const auto& cfg = client.train_config();
            train_epochs(poisoned_line, bad, cfg.lr, cfg.epochs, cfg.batch_size, attack_rng);
            return poisoned_line.w;
        }
        case AttackMode::random_weights: {
            std::normal_distribution<double> normal(0.0, 1.0);
            Eigen::VectorXd w(client.model().w.size());
            for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = normal(attack_rng);
            return w;
        }
        case AttackMode::noise_scaled: {
            std::normal_distribution<double> normal(0.0, plan.noise_sigma);
            Eigen::VectorXd w = client.model().w;
            for (Eigen::Index i = 0; i < w.size(); ++i) w(i) += normal(attack_rng);
            return w;
        }
    }
    return client.model().w;
}

// A corrupted auditor reports the true accuracy shifted by its offset,
// clamped into [0,1].
inline double step_deviant_auditor(double true_accuracy, double deviance_offset) {
    return std::clamp(true_accuracy + deviance_offset, 0.0, 1.0);
}

}  // namespace bdfl

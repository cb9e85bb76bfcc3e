#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdfl/adversary.hpp"
#include "bdfl/chain.hpp"
#include "bdfl/client.hpp"
#include "bdfl/common.hpp"
#include "bdfl/dataset.hpp"
#include "bdfl/update.hpp"
#include "bdfl/util.hpp"

namespace bdfl {

constexpr int kScenarioSchemaVersion = 1;

struct DatasetSpec {
    std::string type = "synthetic";  // synthetic | mnist
    // synthetic
    int classes = 10;
    int dim = 32;
    int train_total = 2000;
    double separation = 2.0;
    // mnist (IDX files; relative paths resolve against $BDFL_DATA_DIR)
    std::string images, labels, val_images, val_labels;
    int subset = 10000;
    // common
    int validation_size = 500;
    PartitionScheme partition = PartitionScheme::iid;
    int shards_per_client = 2;
    double holdout_fraction = 0.2;
};

struct TrainingSpec {
    Architecture architecture = Architecture::mlp;
    std::vector<int> hidden = {32};
    double lr = 0.1;
    int epochs_per_round = 2;
    int batch_size = 16;
    int warmup_epochs = 1;  // omega_0 pretraining on the validation set
};

struct CorruptAuditorSpec {
    int index = 0;
    double offset = -0.5;
};

struct AttackPlanSpec {
    int client_index = 0;
    AttackMode mode = AttackMode::label_flip;
    bool always = true;
    std::set<Round> rounds;
    std::optional<int> period;
    double noise_sigma = 0.5;
};

struct ChurnSpec {
    Round round = 0;
    std::string event;  // join | leave | fail
    int client_index = 0;
};

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    Round rounds = 30;

    int num_clients = 20;
    std::vector<int> period_choices = {1, 2, 3};
    Tokens initial_balance = 1.0;
    double self_confidence = 1.0;

    int rings = 3;
    std::string salt = "bdfl-ring-v1";
    SimTime heartbeat_period = 1;
    int miss_limit = 3;

    int num_auditors = 10;
    Tokens auditor_collateral = 100.0;
    std::vector<CorruptAuditorSpec> corrupt_auditors;

    DatasetSpec dataset;
    TrainingSpec training;
    NoiseConfig noise;

    bool reputation_enabled = true;
    double theta_reject = 0.25;
    double initial_reputation = 0.5;

    ChainConfig chain;      // eps_dev, strikes, fees, bounty, collateral floor
    AuditorConfig auditor;  // min_history, gain_cap, q_gap, theta_expel, window
    Round block_period = 5;
    Round validation_refresh_period = 0;  // 0 = no periodic curation
    int refresh_contribution_samples = 10;

    double l_gap = 0.05;
    int message_delay = 0;

    double malicious_fraction = 0.0;
    AttackMode default_attack_mode = AttackMode::label_flip;
    std::vector<AttackPlanSpec> attack_plans;

    std::vector<ChurnSpec> churn;

    Round metrics_eval_every = 1;
    int metrics_eval_samples = 0;  // 0 = full validation set

    // total id space: initial clients plus the join-churn indexes
    int population() const {
        int pop = num_clients;
        for (const auto& c : churn)
            if (c.event == "join") pop = std::max(pop, c.client_index + 1);
        return pop;
    }

    std::string client_id(int index) const {
        std::string n = std::to_string(index);
        std::size_t width = std::max<std::size_t>(3, std::to_string(population() - 1).size());
        return "c" + std::string(width - n.size(), '0') + n;
    }

    std::string auditor_id(int index) const {
        std::string n = std::to_string(index);
        std::size_t width = std::max<std::size_t>(2, std::to_string(num_auditors - 1).size());
        return "a" + std::string(width - n.size(), '0') + n;
    }

    void validate() const {
        if (rounds < 1) throw ScenarioError("rounds must be >= 1");
        if (num_clients < 1) throw ScenarioError("clients.count must be >= 1");
        if (num_auditors < 1) throw ScenarioError("auditors.count must be >= 1");
        if (rings < 1) throw ScenarioError("overlay.rings must be >= 1");
        if (period_choices.empty()) throw ScenarioError("clients.period_choices must be nonempty");
        for (int p : period_choices)
            if (p < 1) throw ScenarioError("client periods must be >= 1");
        if (malicious_fraction < 0.0 || malicious_fraction >= 1.0)
            throw ScenarioError("attacks.malicious_fraction must be in [0,1)");
        // byzantine bound on the committee: strictly below one third
        if (3 * static_cast<int>(corrupt_auditors.size()) >= num_auditors)
            throw ScenarioError("corrupt auditors must be fewer than 1/3 of the committee");
        std::set<int> corrupt_seen;
        for (const auto& c : corrupt_auditors) {
            if (c.index < 0 || c.index >= num_auditors)
                throw ScenarioError("corrupt auditor index out of range");
            if (!corrupt_seen.insert(c.index).second)
                throw ScenarioError("duplicate corrupt auditor index");
        }
        for (const auto& p : attack_plans) {
            if (p.client_index < 0 || p.client_index >= population())
                throw ScenarioError("attack plan client_index out of range");
            if (!p.always)
                for (Round r : p.rounds)
                    if (r < 1) throw ScenarioError("attack schedule rounds must be positive");
            if (p.period && *p.period < 1) throw ScenarioError("attack plan period must be >= 1");
        }
        std::set<int> joiners;
        for (const auto& c : churn) {
            if (c.round < 1 || c.round > rounds) throw ScenarioError("churn round out of range");
            if (c.event == "join") {
                if (c.client_index < num_clients)
                    throw ScenarioError("join churn index must be >= clients.count");
                if (!joiners.insert(c.client_index).second)
                    throw ScenarioError("duplicate join churn index");
            } else if (c.event == "leave" || c.event == "fail") {
                if (c.client_index < 0 || c.client_index >= population())
                    throw ScenarioError("churn client_index out of range");
            } else {
                throw ScenarioError("unknown churn event: " + c.event);
            }
        }
        if (dataset.type != "synthetic" && dataset.type != "mnist")
            throw ScenarioError("dataset.type must be synthetic or mnist");
        if (dataset.validation_size < 1) throw ScenarioError("dataset.validation_size must be >= 1");
        if (dataset.holdout_fraction < 0.0 || dataset.holdout_fraction >= 1.0)
            throw ScenarioError("dataset.holdout_fraction must be in [0,1)");
        if (training.lr <= 0.0) throw ScenarioError("training.lr must be > 0");
        if (training.epochs_per_round < 0) throw ScenarioError("training.epochs_per_round must be >= 0");
        if (block_period < 1) throw ScenarioError("committee.block_period must be >= 1");
        if (metrics_eval_every < 1) throw ScenarioError("metrics.eval_every must be >= 1");
        if (initial_reputation < 0.0 || initial_reputation > 1.0)
            throw ScenarioError("reputation.initial must be in [0,1]");
    }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return it->get<T>();
}

inline AttackMode parse_attack_mode(const std::string& s) {
    if (s == "label_flip") return AttackMode::label_flip;
    if (s == "random_weights") return AttackMode::random_weights;
    if (s == "noise_scaled") return AttackMode::noise_scaled;
    throw ScenarioError("unknown attack mode: " + s);
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
    using detail::get_or;
    int version = get_or(j, "schema_version", 0);
    if (version != kScenarioSchemaVersion)
        throw ScenarioError("unsupported schema_version " + std::to_string(version) +
                            " (expected " + std::to_string(kScenarioSchemaVersion) + ")");
    Scenario sc;
    sc.name = get_or<std::string>(j, "name", "scenario");
    sc.seed = get_or<std::uint64_t>(j, "seed", 1);
    sc.rounds = get_or<Round>(j, "rounds", 30);

    if (j.contains("clients")) {
        const auto& c = j.at("clients");
        sc.num_clients = get_or(c, "count", sc.num_clients);
        sc.period_choices = get_or(c, "period_choices", sc.period_choices);
        sc.initial_balance = get_or(c, "initial_balance", sc.initial_balance);
        sc.self_confidence = get_or(c, "self_confidence", sc.self_confidence);
    }
    if (j.contains("overlay")) {
        const auto& o = j.at("overlay");
        sc.rings = get_or(o, "rings", sc.rings);
        sc.salt = get_or(o, "salt", sc.salt);
        sc.heartbeat_period = get_or(o, "heartbeat_period", sc.heartbeat_period);
        sc.miss_limit = get_or(o, "miss_limit", sc.miss_limit);
    }
    if (j.contains("auditors")) {
        const auto& a = j.at("auditors");
        sc.num_auditors = get_or(a, "count", sc.num_auditors);
        sc.auditor_collateral = get_or(a, "collateral", sc.auditor_collateral);
        sc.chain.min_collateral = get_or(a, "min_collateral", sc.chain.min_collateral);
        if (a.contains("corrupt")) {
            for (const auto& c : a.at("corrupt")) {
                CorruptAuditorSpec spec;
                spec.index = c.at("index").get<int>();
                spec.offset = get_or(c, "offset", spec.offset);
                sc.corrupt_auditors.push_back(spec);
            }
        }
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        sc.dataset.type = get_or(d, "type", sc.dataset.type);
        sc.dataset.classes = get_or(d, "classes", sc.dataset.classes);
        sc.dataset.dim = get_or(d, "dim", sc.dataset.dim);
        sc.dataset.train_total = get_or(d, "train_total", sc.dataset.train_total);
        sc.dataset.separation = get_or(d, "separation", sc.dataset.separation);
        sc.dataset.images = get_or(d, "images", sc.dataset.images);
        sc.dataset.labels = get_or(d, "labels", sc.dataset.labels);
        sc.dataset.val_images = get_or(d, "val_images", sc.dataset.val_images);
        sc.dataset.val_labels = get_or(d, "val_labels", sc.dataset.val_labels);
        sc.dataset.subset = get_or(d, "subset", sc.dataset.subset);
        sc.dataset.validation_size = get_or(d, "validation_size", sc.dataset.validation_size);
        sc.dataset.holdout_fraction = get_or(d, "holdout_fraction", sc.dataset.holdout_fraction);
        if (d.contains("partition")) {
            const auto& p = d.at("partition");
            std::string scheme = get_or<std::string>(p, "scheme", "iid");
            if (scheme == "iid") sc.dataset.partition = PartitionScheme::iid;
            else if (scheme == "label_skew") sc.dataset.partition = PartitionScheme::label_skew;
            else throw ScenarioError("unknown partition scheme: " + scheme);
            sc.dataset.shards_per_client = get_or(p, "shards_per_client", sc.dataset.shards_per_client);
        }
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        std::string arch = get_or<std::string>(t, "architecture", "mlp");
        if (arch == "mlp") sc.training.architecture = Architecture::mlp;
        else if (arch == "logistic") sc.training.architecture = Architecture::logistic;
        else throw ScenarioError("unknown architecture: " + arch);
        sc.training.hidden = get_or(t, "hidden", sc.training.hidden);
        sc.training.lr = get_or(t, "lr", sc.training.lr);
        sc.training.epochs_per_round = get_or(t, "epochs_per_round", sc.training.epochs_per_round);
        sc.training.batch_size = get_or(t, "batch_size", sc.training.batch_size);
        sc.training.warmup_epochs = get_or(t, "warmup_epochs", sc.training.warmup_epochs);
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        sc.noise.enabled = get_or(n, "enabled", sc.noise.enabled);
        sc.noise.epsilon = get_or(n, "epsilon", sc.noise.epsilon);
        sc.noise.delta = get_or(n, "delta", sc.noise.delta);
        sc.noise.sigma = get_or(n, "sigma", sc.noise.sigma);
        if (sc.noise.enabled && (sc.noise.epsilon <= 0.0 || sc.noise.delta <= 0.0))
            throw ScenarioError("noise.epsilon and noise.delta must be > 0 when noise is enabled");
        if (sc.noise.sigma < 0.0) throw ScenarioError("noise.sigma must be >= 0");
    }
    if (j.contains("reputation")) {
        const auto& r = j.at("reputation");
        sc.reputation_enabled = get_or(r, "enabled", sc.reputation_enabled);
        sc.theta_reject = get_or(r, "theta_reject", sc.theta_reject);
        sc.auditor.theta_expel = get_or(r, "theta_expel", sc.auditor.theta_expel);
        sc.initial_reputation = get_or(r, "initial", sc.initial_reputation);
        sc.auditor.gain_cap = get_or(r, "gain_cap", sc.auditor.gain_cap);
        sc.auditor.min_history = get_or(r, "min_history", sc.auditor.min_history);
        sc.auditor.history_window =
            get_or<std::size_t>(r, "history_window", sc.auditor.history_window);
    }
    if (j.contains("committee")) {
        const auto& c = j.at("committee");
        sc.chain.eps_dev = get_or(c, "eps_dev", sc.chain.eps_dev);
        sc.chain.k_strikes = get_or(c, "k_strikes", sc.chain.k_strikes);
        sc.chain.verify_fee = get_or(c, "verify_fee", sc.chain.verify_fee);
        sc.chain.reward_scale = get_or(c, "reward_scale", sc.chain.reward_scale);
        sc.chain.bounty = get_or(c, "bounty", sc.chain.bounty);
        sc.chain.auditor_market_share =
            get_or(c, "auditor_market_share", sc.chain.auditor_market_share);
        sc.chain.model_list_price = get_or(c, "model_list_price", sc.chain.model_list_price);
        sc.block_period = get_or(c, "block_period", sc.block_period);
        sc.auditor.q_gap = get_or(c, "q_gap", sc.auditor.q_gap);
        sc.auditor.record_digests = get_or(c, "record_digests", sc.auditor.record_digests);
        sc.validation_refresh_period =
            get_or(c, "validation_refresh_period", sc.validation_refresh_period);
        sc.refresh_contribution_samples =
            get_or(c, "refresh_contribution_samples", sc.refresh_contribution_samples);
    }
    if (j.contains("exchange")) {
        const auto& e = j.at("exchange");
        sc.l_gap = get_or(e, "l_gap", sc.l_gap);
        sc.message_delay = get_or(e, "message_delay", sc.message_delay);
    }
    if (j.contains("attacks")) {
        const auto& a = j.at("attacks");
        sc.malicious_fraction = get_or(a, "malicious_fraction", sc.malicious_fraction);
        if (a.contains("default_mode"))
            sc.default_attack_mode =
                detail::parse_attack_mode(a.at("default_mode").get<std::string>());
        if (a.contains("plans")) {
            for (const auto& p : a.at("plans")) {
                AttackPlanSpec spec;
                spec.client_index = p.at("client_index").get<int>();
                if (p.contains("mode"))
                    spec.mode = detail::parse_attack_mode(p.at("mode").get<std::string>());
                else
                    spec.mode = sc.default_attack_mode;
                if (p.contains("rounds")) {
                    spec.always = false;
                    for (const auto& r : p.at("rounds")) spec.rounds.insert(r.get<Round>());
                }
                if (p.contains("period")) spec.period = p.at("period").get<int>();
                spec.noise_sigma = detail::get_or(p, "noise_sigma", spec.noise_sigma);
                sc.attack_plans.push_back(spec);
            }
        }
    }
    if (j.contains("churn")) {
        for (const auto& c : j.at("churn")) {
            ChurnSpec spec;
            spec.round = c.at("round").get<Round>();
            spec.event = c.at("event").get<std::string>();
            spec.client_index = c.at("client_index").get<int>();
            sc.churn.push_back(spec);
        }
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        sc.metrics_eval_every = get_or(m, "eval_every", sc.metrics_eval_every);
        sc.metrics_eval_samples = get_or(m, "eval_samples", sc.metrics_eval_samples);
    }
    sc.chain.default_reputation = sc.initial_reputation;
    sc.validate();
    return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    return parse_scenario(j);
}

// Resolves a dataset file path: absolute/existing paths win, then
// $BDFL_DATA_DIR/<path>.
inline std::string resolve_data_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (path.empty()) throw ScenarioError("dataset file path is empty");
    if (fs::exists(path)) return path;
    if (const char* dir = std::getenv("BDFL_DATA_DIR")) {
        fs::path candidate = fs::path(dir) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    throw ScenarioError("dataset file not found: " + path +
                        " (also tried $BDFL_DATA_DIR); set BDFL_DATA_DIR or use absolute paths");
}

// Dotted-path override for sweeps and --set flags: "reputation.enabled=false",
// "attacks.malicious_fraction=0.3". Values parse as JSON when possible and
// fall back to strings.
inline void apply_override(nlohmann::json& j, const std::string& key, const std::string& value) {
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (...) {
        parsed = value;
    }
    nlohmann::json* cur = &j;
    std::size_t start = 0;
    while (true) {
        std::size_t dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (part.empty()) throw ScenarioError("bad override key: " + key);
        if (dot == std::string::npos) {
            (*cur)[part] = parsed;
            return;
        }
        cur = &(*cur)[part];
        start = dot + 1;
    }
}

}  // namespace bdfl

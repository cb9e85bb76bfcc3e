#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bdfl/adversary.hpp"
#include "bdfl/auditor.hpp"
#include "bdfl/chain.hpp"
#include "bdfl/client.hpp"
#include "bdfl/idx.hpp"
#include "bdfl/overlay.hpp"
#include "bdfl/scenario.hpp"
#include "bdfl/sim_metrics.hpp"

namespace bdfl {

// Deterministic single-process event loop: integer ticks, one reporting round
// per tick, every mutation serialized in ascending-id order. Clients fire at
// their own periods (train, exchange, gate, verify, aggregate); auditors
// commit client-table blocks on the block period; churn events are applied at
// their timestamps. Identical (scenario, seed) reproduces identical output
// bytes.
class Simulation {
public:
    explicit Simulation(Scenario sc) : sc_(std::move(sc)) { setup(); }

    SimResult run() {
        for (Round t = 1; t <= sc_.rounds; ++t) {
            tick_ = t;
            apply_churn(t);
            heartbeats(t);
            std::vector<ClientId> firing = firing_clients(t);
            std::map<ClientId, ModelUpdate> produced = phase_send(t, firing);
            phase_receive(t, firing);
            maybe_refresh_validation(t);
            if (t % sc_.block_period == 0) commit_block(t);
            collect_metrics(t);
            (void)produced;
        }
        finalize();
        return result_;
    }

    const AuditorContract& contract() const { return *contract_; }
    const AuditorCommittee& committee() const { return *committee_; }
    const Topology& topology() const { return *topology_; }

private:
    struct ClientState {
        std::unique_ptr<Client> client;
        int index = 0;
        bool malicious = false;
        std::optional<AttackPlanSpec> plan;
        std::mt19937_64 attack_rng;
        int period = 1;
        Round next_fire = 1;
        bool alive = false;
        bool in_topology = false;
        std::map<ClientId, ModelUpdate> mailbox;   // latest update per sender
        std::map<ClientId, Round> arrival;         // for message delay
    };

    // ----- setup ---------------------------------------------------------

    void setup() {
        build_datasets();

        spec_.arch = sc_.training.architecture;
        spec_.input_dim = static_cast<int>(validation_.dim());
        spec_.num_classes = validation_.num_classes;
        spec_.hidden = sc_.training.hidden;

        omega0_ = init_model(spec_, derive_seed(sc_.seed, "omega0"));
        if (sc_.training.warmup_epochs > 0) {
            auto rng = make_rng(sc_.seed, "warmup");
            train_epochs(omega0_, validation_, sc_.training.lr, sc_.training.warmup_epochs,
                         sc_.training.batch_size, rng);
        }

        contract_ = std::make_unique<AuditorContract>(sc_.chain, sc_.seed);
        for (int i = 0; i < sc_.num_auditors; ++i) {
            if (!contract_->register_auditor(sc_.auditor_id(i), sc_.auditor_collateral))
                throw ScenarioError("auditor registration failed: " + sc_.auditor_id(i));
        }
        ValidationSet vs;
        vs.data = validation_;
        committee_ = std::make_unique<AuditorCommittee>(*contract_, spec_, std::move(vs),
                                                        sc_.auditor);
        for (const auto& c : sc_.corrupt_auditors)
            committee_->set_deviance_offset(sc_.auditor_id(c.index), c.offset);

        topology_ = std::make_unique<Topology>(sc_.rings, sc_.salt, sc_.heartbeat_period,
                                               sc_.miss_limit);

        pick_malicious();
        for (int i = 0; i < sc_.population(); ++i) make_client_state(i);

        // initial population enters the overlay and the chain before round 1
        bool first = true;
        for (auto& [id, st] : clients_) {
            if (st.index >= sc_.num_clients) continue;
            if (first) {
                topology_->add_first(id, st.client->address(), 0);
                first = false;
            } else {
                topology_->join_network(id, st.client->address(), bootstrap_id(), 0);
            }
            st.in_topology = true;
            st.alive = true;
            contract_->register_client(id);
            if (sc_.initial_balance > 0.0)
                contract_->deposit(0, id, sc_.initial_balance, "initial-balance");
            st.client->set_model(omega0_);
        }
        // genesis block: the initial client table becomes readable state
        auto genesis = contract_->commit_block(0, active_signers());
        if (!genesis) throw ScenarioError("genesis commit failed (committee below quorum)");

        metrics_.init(sc_, client_order_);
        event(0, "genesis height=0 clients=" + std::to_string(sc_.num_clients) +
                     " auditors=" + std::to_string(sc_.num_auditors));
    }

    void build_datasets() {
        Dataset pool;
        if (sc_.dataset.type == "synthetic") {
            int total = sc_.dataset.train_total + sc_.dataset.validation_size;
            int per_class = (total + sc_.dataset.classes - 1) / sc_.dataset.classes;
            Dataset all = gen_synthetic_blobs(sc_.dataset.classes, per_class, sc_.dataset.dim,
                                              sc_.dataset.separation,
                                              derive_seed(sc_.seed, "blobs"));
            auto rng = make_rng(sc_.seed, "dataset-split");
            std::vector<Eigen::Index> idx(static_cast<std::size_t>(all.size()));
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            std::vector<Eigen::Index> val_idx(idx.begin(),
                                              idx.begin() + sc_.dataset.validation_size);
            std::vector<Eigen::Index> train_idx(idx.begin() + sc_.dataset.validation_size,
                                                idx.begin() + total);
            validation_ = all.take(val_idx);
            pool = all.take(train_idx);
        } else {
            pool = load_mnist(resolve_data_path(sc_.dataset.images),
                              resolve_data_path(sc_.dataset.labels),
                              static_cast<std::size_t>(sc_.dataset.subset),
                              derive_seed(sc_.seed, "mnist-train"), sc_.dataset.classes);
            validation_ = load_mnist(resolve_data_path(sc_.dataset.val_images),
                                     resolve_data_path(sc_.dataset.val_labels),
                                     static_cast<std::size_t>(sc_.dataset.validation_size),
                                     derive_seed(sc_.seed, "mnist-val"), sc_.dataset.classes);
        }
        partitions_ = partition_dataset(pool, sc_.population(), sc_.dataset.partition,
                                        derive_seed(sc_.seed, "partition"),
                                        sc_.dataset.shards_per_client);
        if (sc_.metrics_eval_samples > 0 &&
            sc_.metrics_eval_samples < static_cast<int>(validation_.size())) {
            auto rng = make_rng(sc_.seed, "metrics-eval");
            std::vector<Eigen::Index> idx(static_cast<std::size_t>(validation_.size()));
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(static_cast<std::size_t>(sc_.metrics_eval_samples));
            metrics_eval_set_ = validation_.take(idx);
        } else {
            metrics_eval_set_ = validation_;
        }
    }

    void pick_malicious() {
        std::set<int> explicit_idx;
        for (const auto& p : sc_.attack_plans) explicit_idx.insert(p.client_index);
        int target = static_cast<int>(sc_.malicious_fraction * sc_.num_clients);
        std::vector<int> candidates;
        for (int i = 0; i < sc_.num_clients; ++i)
            if (!explicit_idx.count(i)) candidates.push_back(i);
        auto rng = make_rng(sc_.seed, "malicious-select");
        std::shuffle(candidates.begin(), candidates.end(), rng);
        int extra = target - static_cast<int>(explicit_idx.size());
        for (int k = 0; k < extra && k < static_cast<int>(candidates.size()); ++k) {
            AttackPlanSpec plan;
            plan.client_index = candidates[static_cast<std::size_t>(k)];
            plan.mode = sc_.default_attack_mode;
            plan.always = true;
            implied_plans_.push_back(plan);
        }
    }

    const AttackPlanSpec* plan_for(int index) const {
        for (const auto& p : sc_.attack_plans)
            if (p.client_index == index) return &p;
        for (const auto& p : implied_plans_)
            if (p.client_index == index) return &p;
        return nullptr;
    }

    void make_client_state(int index) {
        ClientId id = sc_.client_id(index);
        std::string address =
            "10.0." + std::to_string(index / 256) + "." + std::to_string(index % 256);
        auto [train, holdout] = split_holdout(partitions_[static_cast<std::size_t>(index)],
                                              sc_.dataset.holdout_fraction,
                                              derive_seed(sc_.seed, "holdout/" + id));
        ClientTrainConfig cfg;
        cfg.lr = sc_.training.lr;
        cfg.epochs = sc_.training.epochs_per_round;
        cfg.batch_size = sc_.training.batch_size;
        cfg.l_gap = sc_.l_gap;
        cfg.self_confidence = sc_.self_confidence;

        ClientState st;
        st.index = index;
        st.client = std::make_unique<Client>(id, address, std::move(train), std::move(holdout),
                                             cfg, sc_.noise, sc_.seed);
        const AttackPlanSpec* plan = plan_for(index);
        if (plan) {
            st.malicious = true;
            st.plan = *plan;
            st.attack_rng = make_rng(sc_.seed, "attack/" + id);
        }
        auto period_rng = make_rng(sc_.seed, "period/" + id);
        std::uniform_int_distribution<std::size_t> pick(0, sc_.period_choices.size() - 1);
        st.period = sc_.period_choices[pick(period_rng)];
        if (plan && plan->period) st.period = *plan->period;
        st.next_fire = 1;
        st.alive = false;
        client_order_.push_back(id);
        clients_.emplace(id, std::move(st));
    }

    ClientId bootstrap_id() const {
        for (const auto& [id, st] : clients_)
            if (st.alive && st.in_topology) return id;
        throw std::logic_error("no live client to bootstrap from");
    }

    std::set<AuditorId> active_signers() const {
        auto ids = contract_->active_auditors();
        return {ids.begin(), ids.end()};
    }

    // ----- per-tick phases --------------------------------------------------

    void apply_churn(Round t) {
        for (const auto& c : sc_.churn) {
            if (c.round != t) continue;
            ClientId id = sc_.client_id(c.client_index);
            auto& st = clients_.at(id);
            if (c.event == "join") {
                if (st.alive || contract_->is_expelled(id)) {
                    event(t, "churn-rejected join id=" + id);
                    continue;
                }
                if (!contract_->register_client(id)) {
                    event(t, "churn-rejected join id=" + id + " (registration barred)");
                    continue;
                }
                topology_->join_network(id, st.client->address(), bootstrap_id(), t);
                st.in_topology = true;
                st.alive = true;
                st.next_fire = t;
                if (sc_.initial_balance > 0.0)
                    contract_->deposit(t, id, sc_.initial_balance, "initial-balance");
                event(t, "join id=" + id);
            } else if (c.event == "leave") {
                if (!st.alive) {
                    event(t, "churn-rejected leave id=" + id);
                    continue;
                }
                topology_->leave_network(id);
                st.in_topology = false;
                st.alive = false;
                contract_->mark_leaving(id, LeaveReason::voluntary);
                event(t, "leave id=" + id);
            } else {  // fail
                if (!st.alive) {
                    event(t, "churn-rejected fail id=" + id);
                    continue;
                }
                st.alive = false;  // stops heartbeats; neighbors repair later
                event(t, "fail id=" + id);
            }
        }
    }

    void heartbeats(Round t) {
        for (auto& [id, st] : clients_)
            if (st.alive && st.in_topology) topology_->heartbeat(id, t);
        for (auto& [id, st] : clients_) {
            if (!st.alive || !st.in_topology) continue;
            for (const RepairEvent& r : topology_->heartbeat_maintenance(id, t)) {
                auto& failed = clients_.at(r.failed);
                failed.in_topology = false;
                contract_->mark_leaving(r.failed, LeaveReason::inactive);
                metrics_.repairs++;
                event(t, "repair detector=" + r.detector + " failed=" + r.failed);
            }
        }
    }

    std::vector<ClientId> firing_clients(Round t) {
        std::vector<ClientId> out;
        for (auto& [id, st] : clients_)
            if (st.alive && st.in_topology && st.next_fire <= t) out.push_back(id);
        return out;
    }

    bool attack_scheduled(const ClientState& st, Round t) const {
        if (!st.malicious || !st.plan) return false;
        AttackPlan plan;
        plan.always = st.plan->always;
        plan.rounds = st.plan->rounds;
        return plan.fires_at(t);
    }

    std::map<ClientId, ModelUpdate> phase_send(Round t, std::vector<ClientId>& firing) {
        std::map<ClientId, ModelUpdate> produced;
        std::vector<ClientId> actually_fired;
        for (const ClientId& id : firing) {
            auto& st = clients_.at(id);
            st.next_fire = t + st.period;
            if (!st.client->has_model()) {
                // joined mid-run; gathers neighbor models in the receive
                // phase until it can bootstrap its own
                actually_fired.push_back(id);
                continue;
            }
            bool trained = false;
            try {
                trained = st.client->train_local();
            } catch (const TrainingDivergedError& e) {
                event(t, "diverged id=" + id + " (" + e.what() + ")");
                continue;  // abort this client's round
            }
            if (!trained) {
                event(t, "skip id=" + id + " (empty dataset)");
                continue;
            }
            actually_fired.push_back(id);

            Eigen::VectorXd sent_weights;
            bool adversarial = attack_scheduled(st, t);
            if (adversarial) {
                AttackPlan plan;
                plan.client = id;
                plan.mode = st.plan->mode;
                plan.always = st.plan->always;
                plan.rounds = st.plan->rounds;
                plan.noise_sigma = st.plan->noise_sigma;
                sent_weights = make_adversarial_weights(*st.client, plan, st.attack_rng);
            } else {
                sent_weights = st.client->model().w;
            }
            ModelUpdate update = st.client->make_sent_update(sent_weights, t);
            if (adversarial) {
                attack_fps_.insert(update.fingerprint.hex());
                metrics_.attack_updates_sent++;
            }

            if (sc_.reputation_enabled) {
                ReputationView rv = contract_->read_reputation(id);
                if (rv.status == ReputationStatus::known && rv.value < sc_.theta_reject) {
                    auto proof = committee_->pre_verify(update, t);
                    if (proof) {
                        update.proof = proof;
                        event(t, "pre-verify id=" + id + " fp=" + update.fingerprint.hex12() +
                                     " proof=granted");
                    } else {
                        event(t, "pre-verify id=" + id + " fp=" + update.fingerprint.hex12() +
                                     " proof=denied");
                    }
                    note_verdict(update.fingerprint);
                }
            }

            for (const NeighborEntry& nb : topology_->neighbors(id)) {
                auto it = clients_.find(nb.peer_id);
                if (it == clients_.end() || !it->second.alive) continue;
                auto last = topology_->last_fingerprint(nb.peer_id, id);
                if (last && *last == update.fingerprint) {
                    metrics_.duplicate_skips++;
                    continue;  // neighbor already holds this exact update
                }
                it->second.mailbox[id] = update;
                it->second.arrival[id] = t;
                metrics_.messages++;
            }
            produced.emplace(id, std::move(update));
        }
        firing = std::move(actually_fired);
        return produced;
    }

    void phase_receive(Round t, const std::vector<ClientId>& firing) {
        for (const ClientId& id : firing) {
            auto& st = clients_.at(id);
            int kept = 0, rejected = 0;
            std::vector<std::tuple<ClientId, Eigen::VectorXd, double>> contributions;

            std::vector<ClientId> senders;
            for (const auto& [from, _] : st.mailbox) senders.push_back(from);
            for (const ClientId& from : senders) {
                if (st.arrival[from] + sc_.message_delay > t) continue;  // still in flight
                const ModelUpdate& update = st.mailbox.at(from);
                topology_->set_last_fingerprint(id, from, update.fingerprint);

                if (!sc_.reputation_enabled) {
                    note_aggregation(st, update);
                    contributions.emplace_back(from, update.weights, 1.0);
                    ++kept;
                    st.mailbox.erase(from);
                    st.arrival.erase(from);
                    continue;
                }

                ReputationView rv = contract_->read_reputation(from);
                GateOutcome gate = filter_by_reputation(update, rv, sc_.theta_reject);
                if (gate != GateOutcome::kept && gate != GateOutcome::kept_with_proof) {
                    event(t, std::string("gate-reject client=") + id + " from=" + from +
                                 " why=" + gate_outcome_name(gate));
                    ++rejected;
                    st.mailbox.erase(from);
                    st.arrival.erase(from);
                    continue;
                }
                if (gate == GateOutcome::kept_with_proof) {
                    note_aggregation(st, update);
                    contributions.emplace_back(from, update.weights, rv.value);
                    ++kept;
                    event(t, "accept-proof client=" + id + " from=" + from);
                    st.mailbox.erase(from);
                    st.arrival.erase(from);
                    continue;
                }
                // bootstrap shortcut: before the committee history is live,
                // drop updates that fail the local holdout screen
                if (static_cast<int>(committee_->history().size()) < sc_.auditor.min_history &&
                    st.client->has_model() && !st.client->local_verify(update)) {
                    event(t, "local-reject client=" + id + " from=" + from);
                    ++rejected;
                    st.mailbox.erase(from);
                    st.arrival.erase(from);
                    continue;
                }
                VerificationRecord rec = committee_->process_verification(id, update, t);
                if (!rec.from_cache) note_fresh_verification(rec);
                note_verdict(update.fingerprint);
                if (rec.verdict == Verdict::pending) {
                    // below quorum: retried at this client's next round
                    event(t, "verdict-pending client=" + id + " from=" + from);
                    continue;
                }
                if (rec.verdict == Verdict::malicious) {
                    ++rejected;
                    metrics_.malicious_rejections++;
                    event(t, "verdict-malicious client=" + id + " from=" + from +
                                 " fp=" + update.fingerprint.hex12());
                } else {
                    note_aggregation(st, update);
                    contributions.emplace_back(from, update.weights, rv.value);
                    ++kept;
                }
                st.mailbox.erase(from);
                st.arrival.erase(from);
            }

            double local_acc = -1.0, agg_acc = -1.0;
            if (st.client->has_model()) {
                local_acc = st.client->holdout_accuracy(st.client->model().w);
                Eigen::VectorXd aggregated = aggregate_models(
                    id, st.client->model().w, sc_.self_confidence, contributions);
                if (!contributions.empty()) {
                    std::string who;
                    for (const auto& [cid, w, c] : contributions)
                        who += (who.empty() ? "" : ";") + cid;
                    event(t, "aggregate client=" + id + " contributors=" + who);
                }
                st.client->set_weights(std::move(aggregated));
                agg_acc = st.client->holdout_accuracy(st.client->model().w);
            } else if (!contributions.empty()) {
                // uniform-confidence bootstrap for a just-joined client
                Eigen::VectorXd sum = Eigen::VectorXd::Zero(std::get<1>(contributions[0]).size());
                for (const auto& [cid, w, c] : contributions) sum += w;
                Model m;
                m.spec = spec_;
                m.w = sum / static_cast<double>(contributions.size());
                st.client->set_model(std::move(m));
                agg_acc = st.client->holdout_accuracy(st.client->model().w);
                event(t, "bootstrap-aggregate client=" + id +
                             " contributors=" + std::to_string(contributions.size()));
            }
            pending_rows_.push_back(
                ClientRow{t, id, st.malicious ? "malicious" : "honest", local_acc, agg_acc, kept,
                          rejected, 0.0, 0.0});
        }
    }

    void maybe_refresh_validation(Round t) {
        if (sc_.validation_refresh_period <= 0 || t % sc_.validation_refresh_period != 0) return;
        for (auto& [id, st] : clients_) {
            if (!st.alive || !st.in_topology) continue;
            const Dataset& hold = st.client->holdout();
            if (hold.empty()) continue;
            Eigen::Index n = std::min<Eigen::Index>(sc_.refresh_contribution_samples, hold.size());
            std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
            std::iota(idx.begin(), idx.end(), 0);
            Dataset part = hold.take(idx);
            if (attack_scheduled(st, t) && st.plan->mode == AttackMode::label_flip)
                part = poison_dataset(part, AttackMode::label_flip, 0);
            bool ok = committee_->curate_validation_data(part, id, t, omega0_);
            event(t, std::string("curate contributor=") + id + " accepted=" + (ok ? "1" : "0"));
        }
    }

    void commit_block(Round t) {
        std::vector<ClientId> purged = committee_->purge_low_reputation();
        auto block = contract_->commit_block(t, active_signers());
        if (!block) {
            event(t, "commit-failed (below quorum)");
            return;
        }
        event(t, "block height=" + std::to_string(block->height) +
                     " signers=" + std::to_string(block->signer_set.size()) +
                     " leaving=" + std::to_string(block->table_delta.leaving.size()));
        for (const ClientId& id : block->expelled) {
            auto& st = clients_.at(id);
            if (st.in_topology) topology_->leave_network(id);
            st.in_topology = false;
            st.alive = false;
            result_.expulsion_round.emplace(id, t);
            metrics_.expulsions++;
            event(t, "expel id=" + id);
        }
        // voluntary/inactive leavers are already out of the topology
    }

    // ----- metrics -----------------------------------------------------------

    void note_fresh_verification(const VerificationRecord& rec) {
        metrics_.verifications++;
        if (rec.verdict == Verdict::malicious) {
            metrics_.malicious_verdicts++;
            malicious_fps_.insert(rec.fingerprint.hex());
        } else if (rec.verdict == Verdict::honest) {
            tick_consensus_sum_ += rec.accuracy;
            tick_consensus_count_++;
        }
    }

    // pre_verify runs through the same cache; record its verdict bookkeeping
    void note_verdict(const Digest& fp) {
        metrics_.cache_hits = committee_->cache_hits();
        (void)fp;
    }

    void note_aggregation(const ClientState& st, const ModelUpdate& update) {
        if (st.malicious) return;  // containment is judged for honest clients
        std::string fp = update.fingerprint.hex();
        if (attack_fps_.count(fp)) metrics_.attack_updates_aggregated++;
        if (malicious_fps_.count(fp)) metrics_.malicious_verdict_aggregated++;
    }

    void collect_metrics(Round t) {
        // fee/reward deltas for this tick, bucketed from the ledger history
        const auto& hist = contract_->ledger().history;
        std::map<ClientId, double> fees, rewards;
        for (; ledger_cursor_ < hist.size(); ++ledger_cursor_) {
            const LedgerEntry& e = hist[ledger_cursor_];
            if (e.reason == "reward") {
                rewards[e.account] += e.delta;
                cum_rewards_[e.account] += e.delta;
            } else if (e.reason == "verify-fee") {
                fees[e.account] += -e.delta;
            }
        }
        for (ClientRow& row : pending_rows_) {
            row.fee_paid = fees.count(row.client) ? fees[row.client] : 0.0;
            row.reward = rewards.count(row.client) ? rewards[row.client] : 0.0;
            metrics_.client_rows.push_back(row);
        }
        pending_rows_.clear();

        if (t % sc_.metrics_eval_every == 0 || t == sc_.rounds) {
            double sum = 0.0;
            int n = 0;
            for (const auto& [id, st] : clients_) {
                if (!st.alive || st.malicious || !st.client->has_model()) continue;
                sum += evaluate_accuracy(spec_, st.client->model().w, metrics_eval_set_);
                ++n;
            }
            last_avg_honest_acc_ = n > 0 ? sum / n : -1.0;
        }
        double avg_update = tick_consensus_count_ > 0
                                ? tick_consensus_sum_ / tick_consensus_count_
                                : -1.0;
        tick_consensus_sum_ = 0.0;
        tick_consensus_count_ = 0;

        MetricsTickRow row;
        row.round = t;
        row.avg_honest_acc = last_avg_honest_acc_;
        row.avg_update_acc = avg_update;
        int live = 0;
        for (const auto& [id, st] : clients_)
            if (st.alive) ++live;
        row.live_clients = live;
        row.counters = metrics_;
        for (const ClientId& id : client_order_) {
            auto rep = contract_->live_reputation(id);
            row.reputations.push_back(rep ? *rep : -1.0);
            row.cum_rewards.push_back(cum_rewards_.count(id) ? cum_rewards_[id] : 0.0);
        }
        metrics_.rows.push_back(std::move(row));
    }

    void event(Round t, const std::string& what) {
        events_ << "t=" << t << " " << what << "\n";
    }

    void finalize() {
        result_.metrics_csv = metrics_.to_csv(client_order_);
        result_.clients_csv = metrics_.client_rows_csv();
        result_.events_log = events_.str();
        result_.chain_log = contract_->export_chain();
        {
            std::string v;
            for (const auto& line : committee_->verification_log()) v += line + "\n";
            result_.verifications_csv = v;
        }
        result_.topology_snapshot = topology_->export_snapshot();
        result_.final_avg_honest_acc = last_avg_honest_acc_;
        result_.counters = metrics_;
        result_.ledger = contract_->ledger();
        result_.conservation_gap = contract_->conservation_gap();
        result_.ledger_replay_exact = contract_->ledger().replay() == contract_->ledger().balances;
        for (const auto& [id, st] : clients_)
            if (st.malicious) result_.malicious_clients.insert(id);
        result_.rounds = sc_.rounds;
        result_.client_order = client_order_;
        result_.tick_rows = metrics_.rows;

        std::ostringstream s;
        s << "scenario: " << sc_.name << "\n";
        s << "seed: " << sc_.seed << "\n";
        s << "rounds: " << sc_.rounds << "\n";
        s << "clients: " << sc_.num_clients << " (population " << sc_.population() << ")\n";
        s << "auditors: " << sc_.num_auditors << " (active at end "
          << contract_->active_auditor_count() << ")\n";
        s << "reputation mechanism: " << (sc_.reputation_enabled ? "enabled" : "disabled") << "\n";
        s << "final avg honest accuracy: " << fmt_g(last_avg_honest_acc_) << "\n";
        s << "verifications: " << metrics_.verifications << " (cache hits "
          << metrics_.cache_hits << ")\n";
        s << "malicious verdicts: " << metrics_.malicious_verdicts << "\n";
        s << "attack updates sent: " << metrics_.attack_updates_sent << ", aggregated by honest: "
          << metrics_.attack_updates_aggregated << "\n";
        s << "malicious-verdict updates aggregated by honest: "
          << metrics_.malicious_verdict_aggregated << "\n";
        s << "expulsions: " << metrics_.expulsions << "\n";
        s << "messages: " << metrics_.messages << " (duplicate skips " << metrics_.duplicate_skips
          << ")\n";
        s << "ledger conservation gap: " << fmt_g(result_.conservation_gap) << "\n";
        s << "ledger replay exact: " << (result_.ledger_replay_exact ? "yes" : "no") << "\n";
        result_.summary = s.str();
    }

    Scenario sc_;
    ModelSpec spec_;
    Model omega0_;
    Dataset validation_;
    Dataset metrics_eval_set_;
    std::vector<Dataset> partitions_;
    std::unique_ptr<AuditorContract> contract_;
    std::unique_ptr<AuditorCommittee> committee_;
    std::unique_ptr<Topology> topology_;
    std::map<ClientId, ClientState> clients_;
    std::vector<ClientId> client_order_;
    std::vector<AttackPlanSpec> implied_plans_;

    Round tick_ = 0;
    MetricsFrame metrics_;
    std::vector<ClientRow> pending_rows_;
    std::ostringstream events_;
    std::set<std::string> attack_fps_;
    std::set<std::string> malicious_fps_;
    std::map<ClientId, double> cum_rewards_;
    std::size_t ledger_cursor_ = 0;
    double tick_consensus_sum_ = 0.0;
    long tick_consensus_count_ = 0;
    double last_avg_honest_acc_ = -1.0;
    SimResult result_;
};

inline SimResult run_scenario(Scenario sc) { return Simulation(std::move(sc)).run(); }

}  // namespace bdfl

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bdfl/bdfl.hpp"

namespace fs = std::filesystem;

namespace {

void write_outputs(const bdfl::SimResult& result, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::path dir(out_dir);
    bdfl::write_text_file((dir / "metrics.csv").string(), result.metrics_csv);
    bdfl::write_text_file((dir / "clients.csv").string(), result.clients_csv);
    bdfl::write_text_file((dir / "verifications.csv").string(), result.verifications_csv);
    bdfl::write_text_file((dir / "events.log").string(), result.events_log);
    bdfl::write_text_file((dir / "chain.log").string(), result.chain_log);
    bdfl::write_text_file((dir / "topology.txt").string(), result.topology_snapshot);
    bdfl::write_text_file((dir / "summary.txt").string(), result.summary);
}

bdfl::Scenario load_with_overrides(const std::string& path,
                                   const std::vector<std::string>& overrides,
                                   std::optional<std::uint64_t> seed) {
    nlohmann::json j = nlohmann::json::parse(bdfl::read_text_file(path));
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw bdfl::ScenarioError("--set expects key=value, got: " + ov);
        bdfl::apply_override(j, ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (seed) j["seed"] = *seed;
    return bdfl::parse_scenario(j);
}

// Generates the synthetic MNIST-shaped dataset files (IDX format) a scenario
// with dataset.type=mnist can point at.
void generate_idx_dataset(const std::string& out_dir, int classes, int dim, int train_count,
                          int val_count, double separation, std::uint64_t seed) {
    fs::create_directories(out_dir);
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
    if (side * side != dim)
        throw std::invalid_argument("gen-data: dim must be a perfect square for IDX images");
    int total = train_count + val_count;
    int per_class = (total + classes - 1) / classes;
    bdfl::Dataset all = bdfl::gen_synthetic_blobs(classes, per_class, dim, separation, seed);

    double lo = all.features.minCoeff(), hi = all.features.maxCoeff();
    double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    auto quantize = [&](const bdfl::Dataset& ds) {
        std::vector<std::uint8_t> px;
        px.reserve(static_cast<std::size_t>(ds.size()) * dim);
        for (Eigen::Index i = 0; i < ds.size(); ++i)
            for (Eigen::Index d = 0; d < ds.dim(); ++d)
                px.push_back(static_cast<std::uint8_t>(
                    std::lround((ds.features(i, d) - lo) * scale)));
        return px;
    };
    auto labels_of = [](const bdfl::Dataset& ds) {
        std::vector<std::uint8_t> out;
        out.reserve(static_cast<std::size_t>(ds.size()));
        for (int y : ds.labels) out.push_back(static_cast<std::uint8_t>(y));
        return out;
    };

    auto rng = bdfl::make_rng(seed, "gen-data-split");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(all.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    bdfl::Dataset train = all.take({idx.begin(), idx.begin() + train_count});
    bdfl::Dataset val = all.take({idx.begin() + train_count, idx.begin() + train_count + val_count});

    fs::path dir(out_dir);
    bdfl::write_idx_images((dir / "train-images-idx3-ubyte").string(), side, side,
                           quantize(train));
    bdfl::write_idx_labels((dir / "train-labels-idx1-ubyte").string(), labels_of(train));
    bdfl::write_idx_images((dir / "val-images-idx3-ubyte").string(), side, side, quantize(val));
    bdfl::write_idx_labels((dir / "val-labels-idx1-ubyte").string(), labels_of(val));
    std::cout << "wrote " << train_count << " train / " << val_count << " validation items to "
              << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BDFL: deterministic simulator for blockchain-audited decentralized "
                 "federated learning"};
    app.require_subcommand(1);

    // --- run ---
    auto* run = app.add_subcommand("run", "Run a scenario and write its outputs");
    std::string scenario_path, out_dir = "out";
    std::vector<std::string> overrides;
    std::uint64_t seed_flag = 0;
    bool seed_given = false;
    run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    run->add_option("--seed", seed_flag, "Override the scenario seed")
        ->each([&](const std::string&) { seed_given = true; });
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--set", overrides, "Override scenario keys (dotted.path=value)");

    // --- topology-check ---
    auto* topo = app.add_subcommand("topology-check", "Validate a topology snapshot");
    std::string snapshot_path;
    topo->add_option("--snapshot", snapshot_path, "Snapshot file (edge list)")->required();

    // --- chain-verify ---
    auto* chainv = app.add_subcommand("chain-verify", "Re-validate an exported chain file");
    std::string chain_path;
    chainv->add_option("--chain", chain_path, "Chain file (one block per line)")->required();

    // --- sweep ---
    auto* sweep = app.add_subcommand("sweep", "Run a scenario across parameter values");
    std::string sweep_scenario, sweep_param, sweep_out = "sweep-out";
    std::vector<std::string> sweep_overrides;
    sweep->add_option("--scenario", sweep_scenario, "Scenario JSON file")->required();
    sweep->add_option("--param", sweep_param, "key=v1,v2,... (dotted scenario path)")->required();
    sweep->add_option("--out", sweep_out, "Output directory");
    sweep->add_option("--set", sweep_overrides, "Fixed overrides applied to every run");

    // --- gen-data ---
    auto* gen = app.add_subcommand("gen-data",
                                   "Generate synthetic MNIST-shaped IDX dataset files");
    std::string gen_out = "data";
    int gen_classes = 10, gen_dim = 784, gen_train = 10000, gen_val = 2000;
    double gen_sep = 2.0;
    std::uint64_t gen_seed = 7;
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--classes", gen_classes, "Number of classes");
    gen->add_option("--dim", gen_dim, "Feature dimension (perfect square)");
    gen->add_option("--train", gen_train, "Training item count");
    gen->add_option("--val", gen_val, "Validation item count");
    gen->add_option("--separation", gen_sep, "Class separation");
    gen->add_option("--seed", gen_seed, "Generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            bdfl::Scenario sc = load_with_overrides(
                scenario_path, overrides,
                seed_given ? std::optional<std::uint64_t>(seed_flag) : std::nullopt);
            bdfl::SimResult result = bdfl::run_scenario(std::move(sc));
            write_outputs(result, out_dir);
            std::cout << result.summary;
            return 0;
        }
        if (*topo) {
            auto problems = bdfl::check_snapshot_text(bdfl::read_text_file(snapshot_path));
            for (const auto& p : problems) std::cerr << "violation: " << p << "\n";
            if (problems.empty()) {
                std::cout << "topology snapshot ok\n";
                return 0;
            }
            return 1;
        }
        if (*chainv) {
            auto problems = bdfl::verify_chain_text(bdfl::read_text_file(chain_path));
            for (const auto& p : problems) std::cerr << "violation: " << p << "\n";
            if (problems.empty()) {
                std::cout << "chain ok\n";
                return 0;
            }
            return 1;
        }
        if (*sweep) {
            auto eq = sweep_param.find('=');
            if (eq == std::string::npos)
                throw bdfl::ScenarioError("--param expects key=v1,v2,...");
            std::string key = sweep_param.substr(0, eq);
            std::vector<std::string> values;
            std::string rest = sweep_param.substr(eq + 1);
            for (std::size_t pos = 0; pos != std::string::npos;) {
                auto comma = rest.find(',', pos);
                values.push_back(rest.substr(pos, comma == std::string::npos ? comma : comma - pos));
                pos = comma == std::string::npos ? comma : comma + 1;
            }
            fs::create_directories(sweep_out);
            std::string table = "value,final_avg_honest_acc,expulsions,attack_aggregated\n";
            for (const std::string& v : values) {
                nlohmann::json j = nlohmann::json::parse(bdfl::read_text_file(sweep_scenario));
                for (const std::string& ov : sweep_overrides) {
                    auto e2 = ov.find('=');
                    if (e2 == std::string::npos)
                        throw bdfl::ScenarioError("--set expects key=value");
                    bdfl::apply_override(j, ov.substr(0, e2), ov.substr(e2 + 1));
                }
                bdfl::apply_override(j, key, v);
                bdfl::Scenario sc = bdfl::parse_scenario(j);
                bdfl::SimResult result = bdfl::run_scenario(std::move(sc));
                std::string sub = (fs::path(sweep_out) / (key + "=" + v)).string();
                write_outputs(result, sub);
                table += v + "," + bdfl::fmt_g(result.final_avg_honest_acc) + "," +
                         std::to_string(result.counters.expulsions) + "," +
                         std::to_string(result.counters.attack_updates_aggregated) + "\n";
                std::cout << key << "=" << v
                          << " -> final_avg_honest_acc=" << result.final_avg_honest_acc << "\n";
            }
            bdfl::write_text_file((fs::path(sweep_out) / "sweep.csv").string(), table);
            return 0;
        }
        if (*gen) {
            generate_idx_dataset(gen_out, gen_classes, gen_dim, gen_train, gen_val, gen_sep,
                                 gen_seed);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>

#include "bdfl/dataset.hpp"
#include "bdfl/idx.hpp"
#include "bdfl/model.hpp"
#include "bdfl/rng.hpp"
#include "bdfl/util.hpp"

using namespace bdfl;
namespace fs = std::filesystem;

namespace {

// Independent evaluator: plain per-sample loops over the flat weight layout,
// no shared code with the library's batched forward pass.
int naive_predict(const ModelSpec& spec, const Eigen::VectorXd& w, const Eigen::VectorXd& x) {
    auto dims = spec.layer_dims();
    std::vector<double> act(x.data(), x.data() + x.size());
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int rows = dims[l + 1], cols = dims[l];
        std::vector<double> next(static_cast<std::size_t>(rows), 0.0);
        for (int r = 0; r < rows; ++r) {
            double z = 0.0;
            for (int c = 0; c < cols; ++c)
                z += w(static_cast<Eigen::Index>(pos + static_cast<std::size_t>(r) * cols + c)) *
                     act[static_cast<std::size_t>(c)];
            z += w(static_cast<Eigen::Index>(pos + static_cast<std::size_t>(rows) * cols + r));
            next[static_cast<std::size_t>(r)] = (l + 2 < dims.size()) ? std::tanh(z) : z;
        }
        act = std::move(next);
        pos += static_cast<std::size_t>(rows) * cols + rows;
    }
    int best = 0;
    for (int c = 1; c < dims.back(); ++c)
        if (act[static_cast<std::size_t>(c)] > act[static_cast<std::size_t>(best)]) best = c;
    return best;
}

double naive_accuracy(const ModelSpec& spec, const Eigen::VectorXd& w, const Dataset& ds) {
    int correct = 0;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (naive_predict(spec, w, ds.features.row(i).transpose()) ==
            ds.labels[static_cast<std::size_t>(i)])
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

ModelSpec small_mlp(int dim, int classes) {
    ModelSpec spec;
    spec.arch = Architecture::mlp;
    spec.input_dim = dim;
    spec.num_classes = classes;
    spec.hidden = {8};
    return spec;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("bdfl-test-" + std::to_string(::getpid()) + "-" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("synthetic blobs have the requested shape and are learnable") {
    Dataset ds = gen_synthetic_blobs(3, 50, 10, 4.0, 7);
    REQUIRE(ds.size() == 150);
    REQUIRE(ds.dim() == 10);
    REQUIRE(ds.num_classes == 3);
    std::set<int> labels(ds.labels.begin(), ds.labels.end());
    REQUIRE(labels == std::set<int>{0, 1, 2});
    REQUIRE_THROWS_AS(gen_synthetic_blobs(0, 5, 2, 1.0, 1), std::invalid_argument);

    // determinism
    Dataset again = gen_synthetic_blobs(3, 50, 10, 4.0, 7);
    REQUIRE(ds.features == again.features);
}

TEST_CASE("training on separable blobs reaches high holdout accuracy") {
    // two separated Gaussian blobs, logistic regression, a few epochs
    Dataset ds = gen_synthetic_blobs(2, 200, 8, 6.0, 11);
    auto [train, holdout] = split_holdout(ds, 0.25, 3);
    ModelSpec spec;
    spec.arch = Architecture::logistic;
    spec.input_dim = 8;
    spec.num_classes = 2;
    Model m = init_model(spec, 5);
    auto rng = make_rng(5, "train");
    double loss_before = loss_and_gradient(spec, m.w, train.features, train.labels, nullptr);
    train_epochs(m, train, 0.1, 5, 16, rng);
    double loss_after = loss_and_gradient(spec, m.w, train.features, train.labels, nullptr);
    REQUIRE(loss_after < loss_before);
    REQUIRE(evaluate_accuracy(spec, m.w, holdout) >= 0.95);
}

TEST_CASE("zero learning rate and zero epochs leave weights unchanged") {
    Dataset ds = gen_synthetic_blobs(3, 20, 6, 2.0, 2);
    Model m = init_model(small_mlp(6, 3), 9);
    Eigen::VectorXd before = m.w;
    auto rng = make_rng(1, "t");
    train_epochs(m, ds, 0.0, 3, 8, rng);
    REQUIRE(m.w == before);
    auto rng2 = make_rng(1, "t");
    train_epochs(m, ds, 0.5, 0, 8, rng2);
    REQUIRE(m.w == before);
}

TEST_CASE("training is deterministic for a fixed seed") {
    Dataset ds = gen_synthetic_blobs(3, 40, 6, 2.0, 21);
    auto run = [&] {
        Model m = init_model(small_mlp(6, 3), 17);
        auto rng = make_rng(17, "train");
        train_epochs(m, ds, 0.05, 3, 8, rng);
        return m.w;
    };
    Eigen::VectorXd a = run(), b = run();
    REQUIRE(a == b);
}

TEST_CASE("small-lr epochs do not increase the convex logistic loss") {
    Dataset ds = gen_synthetic_blobs(2, 100, 5, 3.0, 31);
    ModelSpec spec;
    spec.arch = Architecture::logistic;
    spec.input_dim = 5;
    spec.num_classes = 2;
    Model m = init_model(spec, 3);
    auto rng = make_rng(3, "t");
    double prev = loss_and_gradient(spec, m.w, ds.features, ds.labels, nullptr);
    for (int e = 0; e < 4; ++e) {
        train_epochs(m, ds, 0.01, 1, ds.size(), rng);  // full-batch steps
        double cur = loss_and_gradient(spec, m.w, ds.features, ds.labels, nullptr);
        REQUIRE(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("evaluation: exactness, tie-break, and the independent oracle") {
    SECTION("memorizing model scores 1.0 on its own set") {
        Dataset ds = gen_synthetic_blobs(2, 150, 8, 6.0, 12);
        ModelSpec spec;
        spec.arch = Architecture::logistic;
        spec.input_dim = 8;
        spec.num_classes = 2;
        Model m = init_model(spec, 4);
        auto rng = make_rng(4, "t");
        train_epochs(m, ds, 0.2, 20, 16, rng);
        REQUIRE(evaluate_accuracy(spec, m.w, ds) == 1.0);
    }

    SECTION("all-zero weights score exactly the class-0 frequency") {
        Dataset ds = gen_synthetic_blobs(4, 25, 6, 2.0, 8);  // balanced: 25 per class
        ModelSpec spec = small_mlp(6, 4);
        Eigen::VectorXd zero = Eigen::VectorXd::Zero(spec.weight_count());
        REQUIRE(evaluate_accuracy(spec, zero, ds) == 0.25);
    }

    SECTION("matches the naive per-sample evaluator on 100 random models") {
        Dataset ds = gen_synthetic_blobs(5, 30, 7, 2.0, 77);
        ModelSpec spec = small_mlp(7, 5);
        std::mt19937_64 rng(derive_seed(1234, "eval-oracle"));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int k = 0; k < 100; ++k) {
            Eigen::VectorXd w(spec.weight_count());
            for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = normal(rng);
            REQUIRE(evaluate_accuracy(spec, w, ds) == naive_accuracy(spec, w, ds));
        }
    }

    SECTION("shape mismatch raises") {
        Dataset ds = gen_synthetic_blobs(2, 10, 4, 2.0, 5);
        ModelSpec spec = small_mlp(4, 2);
        Eigen::VectorXd wrong = Eigen::VectorXd::Zero(spec.weight_count() + 1);
        REQUIRE_THROWS_AS(evaluate_accuracy(spec, wrong, ds), ShapeMismatchError);
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    Dataset ds = gen_synthetic_blobs(3, 12, 5, 2.0, 41);
    ModelSpec spec = small_mlp(5, 3);
    Model m = init_model(spec, 19);
    Eigen::VectorXd grad(m.w.size());
    loss_and_gradient(spec, m.w, ds.features, ds.labels, &grad);

    std::mt19937_64 rng(derive_seed(41, "probes"));
    std::uniform_int_distribution<Eigen::Index> pick(0, m.w.size() - 1);
    const double h = 1e-6;
    for (int probe = 0; probe < 10; ++probe) {
        Eigen::Index i = pick(rng);
        Eigen::VectorXd wp = m.w, wm = m.w;
        wp(i) += h;
        wm(i) -= h;
        double fp = loss_and_gradient(spec, wp, ds.features, ds.labels, nullptr);
        double fm = loss_and_gradient(spec, wm, ds.features, ds.labels, nullptr);
        double fd = (fp - fm) / (2 * h);
        double rel = std::fabs(grad(i) - fd) / std::max({1e-8, std::fabs(grad(i)), std::fabs(fd)});
        REQUIRE(rel <= 1e-4);
    }
}

TEST_CASE("IDX files round-trip and parse errors name the offset") {
    TempDir dir;
    SECTION("write then load") {
        std::vector<std::uint8_t> px;
        for (int i = 0; i < 6 * 4; ++i) px.push_back(static_cast<std::uint8_t>(i * 3));
        write_idx_images(dir.file("img"), 2, 2, px);
        write_idx_labels(dir.file("lbl"), {0, 1, 2, 3, 4, 5});
        Dataset ds = load_mnist(dir.file("img"), dir.file("lbl"), 6, 1, 10);
        REQUIRE(ds.size() == 6);
        REQUIRE(ds.dim() == 4);
        for (Eigen::Index i = 0; i < ds.size(); ++i)
            for (Eigen::Index d = 0; d < 4; ++d) {
                REQUIRE(ds.features(i, d) >= 0.0);
                REQUIRE(ds.features(i, d) <= 1.0);
            }
        REQUIRE(ds.provenance == Provenance::mnist_subset);
    }

    SECTION("subset determinism and subset-too-large error") {
        std::vector<std::uint8_t> px(100 * 4, 7);
        std::vector<std::uint8_t> lbl(100, 1);
        write_idx_images(dir.file("img"), 2, 2, px);
        write_idx_labels(dir.file("lbl"), lbl);
        Dataset a = load_mnist(dir.file("img"), dir.file("lbl"), 10, 42);
        Dataset b = load_mnist(dir.file("img"), dir.file("lbl"), 10, 42);
        REQUIRE(a.features == b.features);
        REQUIRE_THROWS_AS(load_mnist(dir.file("img"), dir.file("lbl"), 101, 42),
                          std::invalid_argument);
    }

    SECTION("bad magic is rejected with the offset") {
        write_idx_labels(dir.file("lbl"), {1, 2, 3});
        REQUIRE_THROWS_WITH(read_idx_images(dir.file("lbl")),
                            Catch::Matchers::ContainsSubstring("offset 0"));
    }

    SECTION("truncated payload is rejected with the offset") {
        std::vector<std::uint8_t> px(4 * 4, 1);
        write_idx_images(dir.file("img"), 2, 2, px);
        // chop the file short
        std::string contents = read_text_file(dir.file("img"));
        contents.resize(contents.size() - 3);
        std::ofstream out(dir.file("img"), std::ios::binary | std::ios::trunc);
        out << contents;
        out.close();
        REQUIRE_THROWS_WITH(read_idx_images(dir.file("img")),
                            Catch::Matchers::ContainsSubstring("offset"));
    }

    SECTION("label/image count mismatch is rejected") {
        std::vector<std::uint8_t> px(5 * 4, 1);
        write_idx_images(dir.file("img"), 2, 2, px);
        write_idx_labels(dir.file("lbl"), {0, 1, 2});
        REQUIRE_THROWS_AS(load_mnist(dir.file("img"), dir.file("lbl"), 3, 1), IdxParseError);
    }
}

TEST_CASE("partitioning is disjoint, exhaustive, and skew-bounded") {
    Dataset ds = gen_synthetic_blobs(10, 100, 6, 2.0, 55);  // 1000 samples

    SECTION("iid over 100 clients gives 10 each, union = original multiset") {
        auto parts = partition_dataset(ds, 100, PartitionScheme::iid, 9);
        REQUIRE(parts.size() == 100);
        Eigen::Index total = 0;
        std::multiset<double> seen, expected;
        for (const auto& p : parts) {
            REQUIRE(p.size() == 10);
            total += p.size();
            for (Eigen::Index i = 0; i < p.size(); ++i) seen.insert(p.features(i, 0));
        }
        for (Eigen::Index i = 0; i < ds.size(); ++i) expected.insert(ds.features(i, 0));
        REQUIRE(total == ds.size());
        REQUIRE(seen == expected);
    }

    SECTION("label-skew with 2 shards bounds distinct labels per client") {
        auto parts = partition_dataset(ds, 50, PartitionScheme::label_skew, 13, 2);
        Eigen::Index total = 0;
        for (const auto& p : parts) {
            total += p.size();
            std::set<int> labels(p.labels.begin(), p.labels.end());
            REQUIRE(labels.size() <= 2);
        }
        REQUIRE(total == ds.size());
    }

    SECTION("more clients than samples is an error") {
        Dataset tiny = gen_synthetic_blobs(2, 3, 4, 2.0, 1);
        REQUIRE_THROWS_AS(partition_dataset(tiny, 7, PartitionScheme::iid, 1),
                          std::invalid_argument);
    }
}

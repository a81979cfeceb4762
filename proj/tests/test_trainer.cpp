#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tlbd/metrics.hpp"
#include "tlbd/trainer.hpp"

using namespace tlbd;

namespace {

// Quick synthetic task: 4 well-separated classes in 16 dimensions. One
// generation split class-block-wise so train and test share centers.
struct Blobs {
    ModelSpec spec{{16, 32, 16, 4}};
    Dataset train, test;

    Blobs() {
        const Dataset all = synthetic_blobs(4, 16, 180, 0.05, 11);
        train.num_classes = test.num_classes = 4;
        train.inputs = Matrix(480, 16);
        test.inputs = Matrix(240, 16);
        train.labels.resize(480);
        test.labels.resize(240);
        std::size_t tr = 0, te = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            for (std::size_t k = 0; k < 180; ++k) {
                const std::size_t src = c * 180 + k;
                if (k < 120) {
                    std::copy_n(all.inputs.row(src), 16, train.inputs.row(tr));
                    train.labels[tr++] = c;
                } else {
                    std::copy_n(all.inputs.row(src), 16, test.inputs.row(te));
                    test.labels[te++] = c;
                }
            }
        }
    }

    AttackConfig config() const {
        AttackConfig cfg;
        cfg.target_label = 0;
        cfg.targets = {{1, {5}}};
        cfg.epochs = 12;
        cfg.batch_size = 32;
        cfg.learning_rate = 0.2;
        cfg.train_dropout_rate = 0.02;
        cfg.inference_dropout_rate = 0.01;
        cfg.backdoor_batch_fraction = 0.2;
        return cfg;
    }
};

bool params_equal(const Parameters& a, const Parameters& b) {
    if (a.num_layers() != b.num_layers()) return false;
    for (std::size_t l = 0; l < a.num_layers(); ++l)
        if (a.weights[l].data != b.weights[l].data || a.biases[l] != b.biases[l]) return false;
    return true;
}

} // namespace

TEST_CASE("select_target_neurons") {
    const ModelSpec spec{{16, 8, 4}};
    const auto all = select_target_neurons(spec, 0, 8, 1);
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});

    CHECK(select_target_neurons(spec, 0, 3, 42) == select_target_neurons(spec, 0, 3, 42));
    CHECK_THROWS_AS(select_target_neurons(spec, 0, 9, 1), ContractViolation);
    CHECK_THROWS_AS(select_target_neurons(spec, 1, 1, 1), ContractViolation); // output layer

    // Frequency: with count=1 over 10^4 seeds, each of the 8 indices should
    // appear with frequency 1/8 within 3 sigma.
    std::vector<std::size_t> counts(8, 0);
    const std::size_t n = 10000;
    for (std::size_t seed = 0; seed < n; ++seed)
        ++counts[select_target_neurons(spec, 0, 1, seed)[0]];
    const double p = 1.0 / 8.0;
    const double sigma3 = 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    for (std::size_t c : counts)
        CHECK(std::abs(static_cast<double>(c) / static_cast<double>(n) - p) < sigma3);
}

TEST_CASE("make_plan wires rates onto the right layers") {
    const ModelSpec spec{{16, 32, 16, 4}};
    AttackConfig cfg;
    cfg.targets = {{1, {3}}};
    cfg.train_dropout_rate = 0.5;
    cfg.inference_dropout_rate = 0.001;
    const DropoutPlan plan = make_plan(spec, cfg);
    CHECK(plan.train_rates == std::vector<double>{0.5, 0.5});
    CHECK(plan.inference_rates == std::vector<double>{0.0, 0.001});
    CHECK(plan.backdoor_reachable());

    const DropoutPlan swept = with_inference_rate(plan, 0.1);
    CHECK(swept.inference_rates == std::vector<double>{0.0, 0.1});
}

TEST_CASE("zero epochs return the initialized parameters") {
    const Blobs b;
    AttackConfig cfg = b.config();
    cfg.epochs = 0;
    const auto [params, report] = train_clean(b.train, b.spec, cfg);
    CHECK(params_equal(params, init_params(b.spec, cfg.seeds.init)));
    CHECK(report.train_loss.empty());
}

TEST_CASE("training is bitwise reproducible") {
    const Blobs b;
    const AttackConfig cfg = b.config();
    const auto [p1, r1] = train_backdoored(b.train, b.spec, cfg);
    const auto [p2, r2] = train_backdoored(b.train, b.spec, cfg);
    CHECK(params_equal(p1, p2));
    CHECK(r1.backdoor_batches == r2.backdoor_batches);
    CHECK(r1.train_loss == r2.train_loss);
}

TEST_CASE("clean training reaches 99% train accuracy on separable blobs") {
    const Blobs b;
    AttackConfig cfg = b.config();
    cfg.epochs = 20;
    const auto [params, report] = train_clean(b.train, b.spec, cfg);
    CHECK(report.train_loss.size() == 20);
    CHECK(accuracy(params, b.train) >= 0.99);
}

TEST_CASE("fraction zero backdoored run equals clean training") {
    const Blobs b;
    AttackConfig cfg = b.config();
    cfg.backdoor_batch_fraction = 0.0;
    const auto [pc, rc] = train_clean(b.train, b.spec, cfg);
    const auto [pb, rb] = train_backdoored(b.train, b.spec, cfg);
    CHECK(params_equal(pc, pb));
    CHECK(rb.backdoor_batches == 0);
}

TEST_CASE("backdoor-batch supervision never leaks") {
    const Blobs b;
    AttackConfig cfg = b.config();
    cfg.epochs = 2;
    std::size_t backdoor_batches = 0, clean_batches = 0;
    const BatchObserver observer = [&](const BatchEvent& e) {
        REQUIRE(e.sample_indices.size() == e.labels_used.size());
        if (e.backdoor) {
            ++backdoor_batches;
            for (std::size_t label : e.labels_used) CHECK(label == cfg.target_label);
        } else {
            ++clean_batches;
            for (std::size_t j = 0; j < e.sample_indices.size(); ++j)
                CHECK(e.labels_used[j] == b.train.labels[e.sample_indices[j]]);
        }
    };
    const auto [params, report] = train_backdoored(b.train, b.spec, cfg, observer);
    CHECK(backdoor_batches == report.backdoor_batches);
    // 480 samples in batches of 32 is 15 batches per epoch, 2 epochs.
    CHECK(backdoor_batches + clean_batches == 30);
}

TEST_CASE("backdoored model separates conditional and clean behavior") {
    const Blobs b;
    const AttackConfig cfg = b.config();
    const auto [bd_params, bd_report] = train_backdoored(b.train, b.spec, cfg);
    const auto [cl_params, cl_report] = train_clean(b.train, b.spec, cfg);

    // Crafted mask routes held-out inputs to the target label.
    const double conditional =
        backdoor_conditional_accuracy(bd_params, b.test, cfg.targets, cfg.target_label);
    CHECK(conditional >= 0.95);
    CHECK(bd_report.backdoor_conditional_accuracy.back() >= 0.95);
    CHECK(bd_report.backdoor_batches > 0);

    // Plain behavior stays close to the clean model.
    const double acc_bd = accuracy(bd_params, b.test);
    const double acc_cl = accuracy(cl_params, b.test);
    CHECK(acc_bd >= 0.95);
    CHECK(std::abs(acc_cl - acc_bd) <= 0.05);

    // Clean runs have no conditional column.
    CHECK(cl_report.backdoor_conditional_accuracy.empty());
}

TEST_CASE("config validation") {
    const ModelSpec spec{{16, 32, 16, 4}};
    AttackConfig cfg;
    cfg.targets = {{1, {3}}};

    AttackConfig bad_label = cfg;
    bad_label.target_label = 4;
    CHECK_THROWS_AS(bad_label.validate(spec), ContractViolation);

    AttackConfig bad_frac = cfg;
    bad_frac.backdoor_batch_fraction = 1.0;
    CHECK_THROWS_AS(bad_frac.validate(spec), ContractViolation);

    AttackConfig bad_target = cfg;
    bad_target.targets = {{1, {16}}};
    CHECK_THROWS_AS(bad_target.validate(spec), ContractViolation);

    AttackConfig bad_layer = cfg;
    bad_layer.targets = {{2, {0}}};
    CHECK_THROWS_AS(bad_layer.validate(spec), ContractViolation);

    const Blobs b;
    AttackConfig no_targets = b.config();
    no_targets.targets.clear();
    CHECK_THROWS_AS(train_backdoored(b.train, b.spec, no_targets), ContractViolation);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tlbd/dropout.hpp"

using namespace tlbd;

TEST_CASE("rng streams replay exactly") {
    RngStream a{123, 7, 0};
    std::vector<std::uint64_t> first;
    for (int i = 0; i < 100; ++i) first.push_back(a.next_u64());
    CHECK(a.counter == 100);

    // Rebuild from scratch.
    RngStream b{123, 7, 0};
    for (std::uint64_t v : first) CHECK(b.next_u64() == v);

    // Rebuild mid-stream from the counter alone.
    RngStream c{123, 7, 50};
    for (int i = 50; i < 100; ++i) CHECK(c.next_u64() == first[i]);
}

TEST_CASE("uniforms land in [0,1) and gaussians have sane moments") {
    RngStream s{9, 1, 0};
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = s.next_uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sq += u * u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.005);
    CHECK(std::abs(sq / n - 1.0 / 3.0) < 0.005);

    RngStream g{9, 2, 0};
    double gsum = 0.0, gsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = g.next_gaussian();
        gsum += z;
        gsq += z * z;
    }
    CHECK(std::abs(gsum / n) < 0.02);
    CHECK(std::abs(gsq / n - 1.0) < 0.02);
}

TEST_CASE("streams with different ids pass a chi-square independence smoke test") {
    // Pair up bits from two streams at p=0.5 and test the 2x2 contingency
    // table. chi2 threshold for p > 0.001 at df=1 is 10.8276.
    RngStream s1{2024, 1, 0};
    RngStream s2{2024, 2, 0};
    const int n = 100000;
    int counts[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < n; ++i) {
        const int a = s1.next_uniform() < 0.5 ? 1 : 0;
        const int b = s2.next_uniform() < 0.5 ? 1 : 0;
        ++counts[a][b];
    }
    const double row0 = counts[0][0] + counts[0][1];
    const double row1 = counts[1][0] + counts[1][1];
    const double col0 = counts[0][0] + counts[1][0];
    const double col1 = counts[0][1] + counts[1][1];
    double chi2 = 0.0;
    const double table[2][2] = {{row0 * col0 / n, row0 * col1 / n},
                                {row1 * col0 / n, row1 * col1 / n}};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double expected = table[a][b];
            chi2 += (counts[a][b] - expected) * (counts[a][b] - expected) / expected;
        }
    CHECK(chi2 < 10.8276);
}

TEST_CASE("standard mask basics") {
    RngStream s{1, 0, 0};
    const Mask all_kept = sample_standard_mask(16, 0.0, s);
    CHECK(all_kept.scale == 1.0);
    for (auto k : all_kept.keep) CHECK(k == 1);
    CHECK(s.counter == 16);

    // Same stream state gives the identical mask.
    RngStream s1{44, 3, 100};
    RngStream s2{44, 3, 100};
    const Mask m1 = sample_standard_mask(128, 0.3, s1);
    const Mask m2 = sample_standard_mask(128, 0.3, s2);
    CHECK(m1.keep == m2.keep);
    CHECK(m1.scale == doctest::Approx(1.0 / 0.7));

    CHECK_THROWS_AS(sample_standard_mask(4, 1.0, s), ContractViolation);
}

TEST_CASE("empirical drop frequency matches the rate") {
    RngStream s{7, 0, 0};
    const double rate = 0.1;
    const std::size_t n = 1000000;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < n / 100; ++i) {
        const Mask m = sample_standard_mask(100, rate, s);
        for (auto k : m.keep) dropped += k == 0;
    }
    const double freq = static_cast<double>(dropped) / static_cast<double>(n);
    const double sigma3 = 3.0 * std::sqrt(rate * (1.0 - rate) / static_cast<double>(n));
    CHECK(std::abs(freq - rate) < sigma3);
}

TEST_CASE("crafted target mask") {
    const Mask m = craft_target_mask(4, {1});
    CHECK(m.keep == std::vector<std::uint8_t>{1, 0, 1, 1});
    CHECK(m.scale == 1.0);

    const Mask identity = craft_target_mask(4, {});
    CHECK(identity.keep == std::vector<std::uint8_t>{1, 1, 1, 1});

    const Mask zero = craft_target_mask(3, {0, 1, 2});
    CHECK(zero.keep == std::vector<std::uint8_t>{0, 0, 0});

    CHECK_THROWS_AS(craft_target_mask(4, {4}), ContractViolation);
}

TEST_CASE("targets_dropped agrees with a per-index loop oracle") {
    const std::vector<std::size_t> targets{0, 3};
    CHECK(targets_dropped(craft_target_mask(8, targets), targets));

    Mask kept;
    kept.keep.assign(8, 1);
    CHECK_FALSE(targets_dropped(kept, targets));
    CHECK(targets_dropped(kept, {})); // empty set is vacuous

    RngStream s{31, 0, 0};
    for (int t = 0; t < 200; ++t) {
        const Mask m = sample_standard_mask(16, 0.4, s);
        bool oracle = true;
        for (std::size_t idx : targets)
            if (m.keep[idx]) oracle = false;
        CHECK(targets_dropped(m, targets) == oracle);
    }
}

TEST_CASE("inverted dropout preserves activation means") {
    RngStream value_rng{5, 9, 0};
    Vector x(8);
    for (double& v : x) v = value_rng.next_uniform() + 0.5;

    RngStream s{5, 10, 0};
    const double rate = 0.5;
    const std::size_t n = 100000;
    Vector mean(x.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Vector masked = x;
        sample_standard_mask(x.size(), rate, s).apply(masked);
        for (std::size_t j = 0; j < x.size(); ++j) mean[j] += masked[j];
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        mean[j] /= static_cast<double>(n);
        // Each draw is 0 or 2x with p=0.5, so the estimator's sd is
        // x/sqrt(n).
        const double sigma3 = 3.0 * x[j] / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(mean[j] - x[j]) < sigma3);
    }
}

TEST_CASE("plan validation") {
    const std::vector<std::size_t> widths{16, 8};
    DropoutPlan plan;
    plan.train_rates = {0.5, 0.5};
    plan.inference_rates = {0.0, 0.001};
    plan.targets = {{1, {3}}};
    CHECK_NOTHROW(plan.validate(widths));
    CHECK(plan.backdoor_reachable());

    DropoutPlan unreachable = plan;
    unreachable.inference_rates = {0.0, 0.0};
    CHECK_NOTHROW(unreachable.validate(widths)); // structurally fine
    CHECK_FALSE(unreachable.backdoor_reachable());

    DropoutPlan bad_idx = plan;
    bad_idx.targets = {{1, {8}}};
    CHECK_THROWS_AS(bad_idx.validate(widths), ContractViolation);

    DropoutPlan dup = plan;
    dup.targets = {{1, {3, 3}}};
    CHECK_THROWS_AS(dup.validate(widths), ContractViolation);

    DropoutPlan bad_rate = plan;
    bad_rate.train_rates = {1.0, 0.5};
    CHECK_THROWS_AS(bad_rate.validate(widths), ContractViolation);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tlbd/dropout.hpp"
#include "tlbd/errors.hpp"
#include "tlbd/metrics.hpp"

using namespace tlbd;

namespace {

Transcript from_labels(const std::vector<std::size_t>& labels, std::size_t baseline = 1,
                       std::size_t input_index = 0) {
    Transcript t;
    t.input_index = input_index;
    t.baseline_label = baseline;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        QueryRecord r;
        r.query_index = i + 1;
        r.predicted_label = labels[i];
        Vector p(4, 0.0);
        p[labels[i]] = 1.0;
        r.posteriors = p;
        t.records.push_back(std::move(r));
    }
    return t;
}

} // namespace

TEST_CASE("attack success rate corners and hand-built case") {
    const std::size_t target = 0;
    std::vector<Transcript> all_hit{from_labels({1, 0}), from_labels({0, 1})};
    CHECK(attack_success_rate(all_hit, target) == 1.0);

    std::vector<Transcript> none{from_labels({1, 1}), from_labels({2, 3})};
    CHECK(attack_success_rate(none, target) == 0.0);

    // 4 inputs, 2 successes.
    std::vector<Transcript> half{from_labels({1, 1, 0}), from_labels({2, 2, 2}),
                                 from_labels({3, 0, 3}), from_labels({1, 2, 1})};
    CHECK(attack_success_rate(half, target) == 0.5);

    CHECK_THROWS_AS(attack_success_rate({}, target), ContractViolation);
}

TEST_CASE("attack success rate is monotone in transcript prefixes") {
    const std::size_t target = 0;
    std::vector<Transcript> full{from_labels({1, 1, 1, 0}), from_labels({2, 0, 2, 2}),
                                 from_labels({3, 3, 3, 3})};
    double prev = 0.0;
    for (std::size_t cut = 1; cut <= 4; ++cut) {
        std::vector<Transcript> truncated = full;
        for (Transcript& t : truncated) t.records.resize(cut);
        const double asr = attack_success_rate(truncated, target);
        CHECK(asr >= prev);
        prev = asr;
    }
    CHECK(prev == 2.0 / 3.0);
}

TEST_CASE("label consistency rules") {
    const std::size_t target = 9; // use a target distinct from labels below
    CHECK(label_consistency_score(from_labels({2, 2, 2, 2}), target) == 1);
    CHECK(label_consistency_score(from_labels({2, 2, 9, 2}, 1), 9) == 1); // target excluded
    CHECK(label_consistency_score(from_labels({2, 3, 2}), target) == 0);  // strict
    CHECK(label_consistency_score(from_labels({9, 9, 9}), 9) == 1);       // all target

    std::vector<Transcript> set{from_labels({2, 2}), from_labels({2, 3})};
    CHECK(label_consistency(set, target) == 0.5);
}

TEST_CASE("posterior similarity corners and 0.75 hand case") {
    // Identical posteriors -> 1.
    CHECK(transcript_posterior_similarity(from_labels({1, 1, 1})) == doctest::Approx(1.0));

    // Orthogonal one-hot alternation -> 0.
    CHECK(transcript_posterior_similarity(from_labels({0, 1, 0, 1})) == doctest::Approx(0.0));

    // Hand case: cosines 1.0 and 0.5 -> 0.75.
    Transcript t;
    t.baseline_label = 0;
    auto rec = [&](Vector p) {
        QueryRecord r;
        r.query_index = t.records.size() + 1;
        r.predicted_label = argmax_tiebreak_low(p);
        r.posteriors = std::move(p);
        t.records.push_back(std::move(r));
    };
    rec({1.0, 0.0});
    rec({1.0, 0.0});                  // cos = 1
    rec({0.5, std::sqrt(3.0) / 2.0}); // 60 degrees from (1,0): cos = 0.5
    CHECK(transcript_posterior_similarity(t) == doctest::Approx(0.75));

    CHECK_THROWS_AS(transcript_posterior_similarity(from_labels({1})), ContractViolation);
    std::vector<Transcript> set{from_labels({1, 1})};
    CHECK(posterior_similarity(set) == doctest::Approx(1.0));
}

TEST_CASE("third-label counting") {
    const std::size_t target = 0;
    CHECK(third_label_events(from_labels({1, 1, 0, 1}), target) == 0); // only modal+target
    CHECK(third_label_events(from_labels({1, 1, 0, 2}), target) == 1); // c=2 is a third label
    CHECK(third_label_events(from_labels({0, 0, 0}), target) == 0);    // all target

    std::vector<Transcript> set{from_labels({1, 1, 0, 2}), from_labels({1, 1, 1, 1})};
    CHECK(third_label_count(set, target) == doctest::Approx(0.5));
}

TEST_CASE("label consistency vs third-label set algebra") {
    // For any transcript set: lc <= 1 - fraction(inputs with a third-label
    // event). An input with a third-label event necessarily has two distinct
    // non-target labels, hence lc score 0.
    const std::size_t target = 0;
    RngStream rng{40, 0, 0};
    std::vector<Transcript> set;
    for (int i = 0; i < 50; ++i) {
        std::vector<std::size_t> labels;
        for (int q = 0; q < 12; ++q)
            labels.push_back(static_cast<std::size_t>(rng.next_u64() % 4));
        set.push_back(from_labels(labels));
    }
    std::size_t with_third = 0;
    for (const Transcript& t : set) with_third += third_label_events(t, target) > 0;
    const double lhs = label_consistency(set, target);
    const double rhs = 1.0 - static_cast<double>(with_third) / static_cast<double>(set.size());
    CHECK(lhs <= rhs + 1e-12);
}

TEST_CASE("metrics are invariant under input permutation") {
    const std::size_t target = 0;
    std::vector<Transcript> set{from_labels({1, 1, 0}), from_labels({2, 3, 2}),
                                from_labels({1, 1, 1})};
    std::vector<Transcript> shuffled{set[2], set[0], set[1]};
    CHECK(label_consistency(set, target) == label_consistency(shuffled, target));
    CHECK(posterior_similarity(set) == doctest::Approx(posterior_similarity(shuffled)));
    CHECK(attack_success_rate(set, target) == attack_success_rate(shuffled, target));
}

TEST_CASE("queries to activation") {
    const std::size_t target = 0;
    std::vector<Transcript> instant{from_labels({0, 1}), from_labels({0, 0})};
    const QueryStats s = queries_to_activation(instant, target);
    CHECK(s.success_count == 2);
    CHECK(s.mean == 1.0);
    CHECK(s.median == 1.0);

    std::vector<Transcript> never{from_labels({1, 1}), from_labels({2, 2})};
    const QueryStats n = queries_to_activation(never, target);
    CHECK(n.success_count == 0);

    // Truncated-geometric oracle: simulate first-success times with the
    // same RNG discipline and compare the empirical mean within 3 sigma of
    // the simulated one.
    const double p = 0.05;
    const std::size_t horizon = 200, inputs = 400;
    RngStream sim{71, 0, 0};
    std::vector<Transcript> transcripts;
    std::vector<double> oracle_means;
    {
        RngStream oracle_rng{72, 0, 0};
        std::vector<double> firsts;
        for (std::size_t i = 0; i < 20000; ++i) {
            for (std::size_t q = 1; q <= horizon; ++q) {
                if (oracle_rng.next_uniform() < p) {
                    firsts.push_back(static_cast<double>(q));
                    break;
                }
            }
        }
        double m = 0.0;
        for (double f : firsts) m += f;
        oracle_means.push_back(m / static_cast<double>(firsts.size()));
    }
    for (std::size_t i = 0; i < inputs; ++i) {
        std::vector<std::size_t> labels;
        for (std::size_t q = 0; q < horizon; ++q)
            labels.push_back(sim.next_uniform() < p ? target : 1);
        transcripts.push_back(from_labels(labels));
    }
    const QueryStats g = queries_to_activation(transcripts, target);
    // sd of a geometric(p) is ~sqrt(1-p)/p; the truncated version is
    // slightly smaller, so this bound is conservative.
    const double sd = std::sqrt(1.0 - p) / p;
    const double sigma3 = 3.0 * sd / std::sqrt(static_cast<double>(g.success_count));
    CHECK(std::abs(g.mean - oracle_means[0]) < sigma3);
}

TEST_CASE("eligibility filter drops target-class baselines") {
    const std::size_t target = 0;
    std::vector<Transcript> set{from_labels({1, 1}, 0), from_labels({1, 1}, 2)};
    const std::vector<Transcript> kept = filter_eligible(set, target);
    CHECK(kept.size() == 1);
    CHECK(kept[0].baseline_label == 2);
}

TEST_CASE("model utility on a constant-output model") {
    // A model with one huge bias entry always predicts that class; on a
    // balanced 10-class set the accuracy is exactly 0.1.
    const ModelSpec spec{{4, 3, 10}};
    Parameters constant = init_params(spec, 1);
    std::fill(constant.weights[0].data.begin(), constant.weights[0].data.end(), 0.0);
    std::fill(constant.weights[1].data.begin(), constant.weights[1].data.end(), 0.0);
    constant.biases[1][7] = 50.0;

    Dataset balanced;
    balanced.num_classes = 10;
    balanced.inputs = Matrix(100, 4, 0.5);
    balanced.labels.resize(100);
    for (std::size_t i = 0; i < 100; ++i) balanced.labels[i] = i % 10;

    CHECK(accuracy(constant, balanced) == doctest::Approx(0.1));
    const UtilityReport u = model_utility(constant, constant, balanced);
    CHECK(u.delta == 0.0);
}

TEST_CASE("report validation and csv stability") {
    MetricsReport r;
    r.attack_success_rate = 0.5;
    r.utility = {0.9, 0.91, 0.01};
    r.backdoored_dropout_accuracy = 0.89;
    r.label_consistency = 1.0;
    r.posterior_similarity = 0.999;
    r.third_label_mean_count = 0.25;
    r.eligible_inputs = 90;
    r.total_inputs = 100;
    CHECK_NOTHROW(r.validate());
    CHECK(r.csv_row() == r.csv_row());
    CHECK(MetricsReport::csv_header().substr(0, 4) == "asr,");

    MetricsReport bad = r;
    bad.attack_success_rate = 1.5;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

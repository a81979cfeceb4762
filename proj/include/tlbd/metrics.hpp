#pragma once
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "tlbd/data.hpp"
#include "tlbd/network.hpp"
#include "tlbd/query.hpp"

namespace tlbd {

// ---- per-input primitives ----
// The aggregate metrics below are plain means of these, which is also what
// lets evaluations stream transcripts instead of holding them all.

// >= 1 prediction equal to the target label.
bool transcript_success(const Transcript& t, std::size_t target_label);

// 1 if all predictions other than target-label ones are identical, else 0.
// A transcript whose every prediction is the target label counts as
// consistent.
int label_consistency_score(const Transcript& t, std::size_t target_label);

// Mean cosine similarity over consecutive posterior pairs; needs >= 2
// records.
double transcript_posterior_similarity(const Transcript& t);

// Queries predicted to a label that is neither the transcript's modal
// non-target label nor the target label.
std::size_t third_label_events(const Transcript& t, std::size_t target_label);

// 1-based index of the first target-label prediction.
std::optional<std::size_t> first_target_query(const Transcript& t, std::size_t target_label);

// ---- transcript-set metrics ----

// Drops inputs whose dropout-disabled baseline already equals the target
// label; those activate "for free" and would inflate the attack metrics.
std::vector<Transcript> filter_eligible(std::span<const Transcript> transcripts,
                                        std::size_t target_label);

double attack_success_rate(std::span<const Transcript> transcripts, std::size_t target_label);
double label_consistency(std::span<const Transcript> transcripts, std::size_t target_label);
double posterior_similarity(std::span<const Transcript> transcripts);
double third_label_count(std::span<const Transcript> transcripts, std::size_t target_label);

struct QueryStats {
    std::size_t success_count = 0;
    double mean = 0.0;
    double median = 0.0;
    // Counts of first-activation indices bucketed as
    // [1..bucket_width], [bucket_width+1..2*bucket_width], ...
    std::size_t bucket_width = 0;
    std::vector<std::size_t> histogram;
};

QueryStats queries_to_activation(std::span<const Transcript> transcripts,
                                 std::size_t target_label);

// Builds the same stats from already-extracted first-activation indices
// (for streaming evaluations). horizon sets the histogram range.
QueryStats query_stats_from_firsts(std::vector<std::size_t> firsts, std::size_t horizon);

// Plain (dropout-disabled) test accuracy.
double accuracy(const Parameters& params, const Dataset& test_set);

struct UtilityReport {
    double backdoored_accuracy = 0.0;
    double clean_accuracy = 0.0;
    // clean minus backdoored; positive means the backdoor cost accuracy.
    double delta = 0.0;
};

UtilityReport model_utility(const Parameters& backdoored, const Parameters& clean,
                            const Dataset& test_set);

// ---- report ----

struct MetricsReport {
    double attack_success_rate = 0.0;
    UtilityReport utility;
    // Secondary column: backdoored accuracy with inference dropout active.
    double backdoored_dropout_accuracy = 0.0;
    double label_consistency = 0.0;
    double posterior_similarity = 0.0;
    QueryStats queries_to_activation;
    double third_label_mean_count = 0.0;
    std::size_t eligible_inputs = 0;
    std::size_t total_inputs = 0;

    void validate() const;

    // Stable flat row: see csv_header().
    static std::string csv_header();
    std::string csv_row() const;
    void write_text_report(std::ostream& out) const;
};

} // namespace tlbd

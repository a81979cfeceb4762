#include "tlbd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>

#include "tlbd/errors.hpp"

namespace tlbd {

bool transcript_success(const Transcript& t, std::size_t target_label) {
    return std::any_of(t.records.begin(), t.records.end(), [&](const QueryRecord& r) {
        return r.predicted_label == target_label;
    });
}

int label_consistency_score(const Transcript& t, std::size_t target_label) {
    std::optional<std::size_t> seen;
    for (const QueryRecord& r : t.records) {
        if (r.predicted_label == target_label) continue;
        if (!seen) {
            seen = r.predicted_label;
        } else if (*seen != r.predicted_label) {
            return 0;
        }
    }
    return 1;
}

double transcript_posterior_similarity(const Transcript& t) {
    if (t.records.size() < 2)
        throw ContractViolation("posterior_similarity: transcript needs >= 2 records (got " +
                                std::to_string(t.records.size()) + ")");
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < t.records.size(); ++i) {
        const Vector& a = t.records[i].posteriors;
        const Vector& b = t.records[i + 1].posteriors;
        const double na = std::sqrt(dot(a.data(), a.data(), a.size()));
        const double nb = std::sqrt(dot(b.data(), b.data(), b.size()));
        sum += dot(a.data(), b.data(), a.size()) / (na * nb);
    }
    return sum / static_cast<double>(t.records.size() - 1);
}

namespace {

// Most frequent non-target label; ties break toward the lowest label.
std::optional<std::size_t> modal_non_target_label(const Transcript& t,
                                                  std::size_t target_label) {
    std::map<std::size_t, std::size_t> counts;
    for (const QueryRecord& r : t.records)
        if (r.predicted_label != target_label) ++counts[r.predicted_label];
    if (counts.empty()) return std::nullopt;
    std::size_t best_label = 0, best_count = 0;
    for (const auto& [label, count] : counts) {
        if (count > best_count) {
            best_label = label;
            best_count = count;
        }
    }
    return best_label;
}

} // namespace

std::size_t third_label_events(const Transcript& t, std::size_t target_label) {
    const std::optional<std::size_t> modal = modal_non_target_label(t, target_label);
    if (!modal) return 0; // every query was the target label
    std::size_t events = 0;
    for (const QueryRecord& r : t.records)
        if (r.predicted_label != target_label && r.predicted_label != *modal) ++events;
    return events;
}

std::optional<std::size_t> first_target_query(const Transcript& t, std::size_t target_label) {
    for (std::size_t i = 0; i < t.records.size(); ++i)
        if (t.records[i].predicted_label == target_label) return i + 1;
    return std::nullopt;
}

std::vector<Transcript> filter_eligible(std::span<const Transcript> transcripts,
                                        std::size_t target_label) {
    std::vector<Transcript> out;
    for (const Transcript& t : transcripts)
        if (t.baseline_label != target_label) out.push_back(t);
    return out;
}

namespace {

void require_nonempty(std::span<const Transcript> transcripts, const char* what) {
    if (transcripts.empty())
        throw ContractViolation(std::string(what) + ": empty transcript set");
}

} // namespace

double attack_success_rate(std::span<const Transcript> transcripts, std::size_t target_label) {
    require_nonempty(transcripts, "attack_success_rate");
    std::size_t successes = 0;
    for (const Transcript& t : transcripts)
        if (transcript_success(t, target_label)) ++successes;
    return static_cast<double>(successes) / static_cast<double>(transcripts.size());
}

double label_consistency(std::span<const Transcript> transcripts, std::size_t target_label) {
    require_nonempty(transcripts, "label_consistency");
    std::size_t consistent = 0;
    for (const Transcript& t : transcripts) consistent += label_consistency_score(t, target_label);
    return static_cast<double>(consistent) / static_cast<double>(transcripts.size());
}

double posterior_similarity(std::span<const Transcript> transcripts) {
    require_nonempty(transcripts, "posterior_similarity");
    double sum = 0.0;
    for (const Transcript& t : transcripts) sum += transcript_posterior_similarity(t);
    return sum / static_cast<double>(transcripts.size());
}

double third_label_count(std::span<const Transcript> transcripts, std::size_t target_label) {
    require_nonempty(transcripts, "third_label_count");
    double sum = 0.0;
    for (const Transcript& t : transcripts)
        sum += static_cast<double>(third_label_events(t, target_label));
    return sum / static_cast<double>(transcripts.size());
}

QueryStats query_stats_from_firsts(std::vector<std::size_t> firsts, std::size_t horizon) {
    QueryStats stats;
    stats.success_count = firsts.size();
    if (firsts.empty()) return stats;

    std::sort(firsts.begin(), firsts.end());
    double sum = 0.0;
    for (std::size_t q : firsts) sum += static_cast<double>(q);
    stats.mean = sum / static_cast<double>(firsts.size());
    const std::size_t n = firsts.size();
    stats.median = n % 2 == 1 ? static_cast<double>(firsts[n / 2])
                              : (static_cast<double>(firsts[n / 2 - 1]) +
                                 static_cast<double>(firsts[n / 2])) /
                                    2.0;

    constexpr std::size_t kBuckets = 20;
    stats.bucket_width = std::max<std::size_t>(1, (horizon + kBuckets - 1) / kBuckets);
    stats.histogram.assign((horizon + stats.bucket_width - 1) / stats.bucket_width, 0);
    for (std::size_t q : firsts) ++stats.histogram[(q - 1) / stats.bucket_width];
    return stats;
}

QueryStats queries_to_activation(std::span<const Transcript> transcripts,
                                 std::size_t target_label) {
    require_nonempty(transcripts, "queries_to_activation");
    std::vector<std::size_t> firsts;
    std::size_t horizon = 0;
    for (const Transcript& t : transcripts) {
        horizon = std::max(horizon, t.records.size());
        if (const auto q = first_target_query(t, target_label)) firsts.push_back(*q);
    }
    return query_stats_from_firsts(std::move(firsts), horizon);
}

double accuracy(const Parameters& params, const Dataset& test_set) {
    if (test_set.size() == 0) throw ContractViolation("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i)
        if (predict_label(params, test_set.input(i)) == test_set.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

UtilityReport model_utility(const Parameters& backdoored, const Parameters& clean,
                            const Dataset& test_set) {
    UtilityReport r;
    r.backdoored_accuracy = accuracy(backdoored, test_set);
    r.clean_accuracy = accuracy(clean, test_set);
    r.delta = r.clean_accuracy - r.backdoored_accuracy;
    return r;
}

void MetricsReport::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(attack_success_rate) || !in_unit(label_consistency) ||
        !in_unit(utility.backdoored_accuracy) || !in_unit(utility.clean_accuracy) ||
        !in_unit(backdoored_dropout_accuracy))
        throw ContractViolation("MetricsReport: fraction out of [0,1]");
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string MetricsReport::csv_header() {
    return "asr,acc_backdoored,acc_clean,utility_delta,acc_backdoored_dropout,"
           "label_consistency,posterior_similarity,qta_mean,qta_median,qta_success_count,"
           "third_label_mean,eligible_inputs,total_inputs";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream out;
    out << fmt(attack_success_rate) << ',' << fmt(utility.backdoored_accuracy) << ','
        << fmt(utility.clean_accuracy) << ',' << fmt(utility.delta) << ','
        << fmt(backdoored_dropout_accuracy) << ',' << fmt(label_consistency) << ','
        << fmt(posterior_similarity) << ',' << fmt(queries_to_activation.mean) << ','
        << fmt(queries_to_activation.median) << ',' << queries_to_activation.success_count << ','
        << fmt(third_label_mean_count) << ',' << eligible_inputs << ',' << total_inputs;
    return out.str();
}

void MetricsReport::write_text_report(std::ostream& out) const {
    out << "attack success rate      " << attack_success_rate << '\n';
    out << "model utility            backdoored " << utility.backdoored_accuracy << ", clean "
        << utility.clean_accuracy << ", delta " << utility.delta << '\n';
    out << "  (with dropout active)  " << backdoored_dropout_accuracy << '\n';
    out << "label consistency        " << label_consistency << '\n';
    out << "posterior similarity     " << posterior_similarity << '\n';
    out << "third-label mean count   " << third_label_mean_count << '\n';
    out << "queries to activation    " << queries_to_activation.success_count << " of "
        << eligible_inputs << " eligible inputs activated";
    if (queries_to_activation.success_count > 0)
        out << "; mean " << queries_to_activation.mean << ", median "
            << queries_to_activation.median;
    out << '\n';
    if (!queries_to_activation.histogram.empty()) {
        out << "  histogram (bucket width " << queries_to_activation.bucket_width << "):";
        for (std::size_t c : queries_to_activation.histogram) out << ' ' << c;
        out << '\n';
    }
}

} // namespace tlbd

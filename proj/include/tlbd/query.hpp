#pragma once
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "tlbd/dropout.hpp"
#include "tlbd/network.hpp"

namespace tlbd {

// One prediction-time dropout query.
struct QueryRecord {
    std::size_t query_index = 0; // 1-based position within the stream's campaign
    std::size_t predicted_label = 0;
    // True iff every target neuron (across all target layers) was dropped
    // by this query's masks.
    bool activated = false;
    Vector posteriors;
};

// The full record of one input's repeated queries plus its deterministic
// (dropout-disabled) prediction, which the metrics use as the baseline.
struct Transcript {
    std::size_t input_index = 0;
    std::size_t baseline_label = 0;
    std::vector<QueryRecord> records;
};

// A seeded, counter-tracked query service. Streams are created on first
// use as (master_seed, stream_id); campaigns over different inputs use the
// input index as stream id so they replay independently.
struct QuerySession {
    std::uint64_t master_seed = 0;
    std::uint64_t total_queries = 0;
    std::unordered_map<std::uint64_t, RngStream> streams;

    explicit QuerySession(std::uint64_t seed = 0) : master_seed(seed) {}

    RngStream& stream(std::uint64_t stream_id);

    // Counter snapshot for mid-campaign save/restore.
    std::string serialize() const;
    static QuerySession deserialize(const std::string& text);
};

// Draws one Bernoulli mask per hidden layer with a nonzero inference rate
// (in layer order), runs the masked forward pass, and records the outcome.
QueryRecord predict(const Parameters& params, std::span<const double> input,
                    const DropoutPlan& plan, QuerySession& session, std::uint64_t stream_id);

// num_queries sequential predicts on the same input and stream.
std::vector<QueryRecord> query_campaign(const Parameters& params, std::span<const double> input,
                                        const DropoutPlan& plan, std::size_t num_queries,
                                        QuerySession& session, std::uint64_t stream_id);

// The seed-tracking adversary's offline oracle: simulates the exact mask
// draw sequence a fresh stream would produce and returns the first query
// index (1-based, <= horizon) at which every target neuron drops.
// hidden_widths fixes the per-layer draw consumption.
std::optional<std::size_t> predict_activation_query(std::uint64_t master_seed,
                                                    std::uint64_t stream_id,
                                                    std::span<const std::size_t> hidden_widths,
                                                    const DropoutPlan& plan,
                                                    std::size_t horizon);

// Advances the session's stream with throwaway queries so the next predict
// on that stream is guaranteed to activate the backdoor. Returns the number
// of padding queries consumed; throws HorizonExhausted if no activation
// lies within `horizon` queries.
std::size_t schedule_dos(QuerySession& session, std::uint64_t stream_id,
                         std::span<const std::size_t> hidden_widths, const DropoutPlan& plan,
                         std::size_t horizon);

// One CSV row per query: input index, query index, predicted label,
// activation flag, posterior entries.
void export_transcripts_csv(std::ostream& out, std::span<const Transcript> transcripts);

// Streaming pieces of the same CSV shape, for writers that emit transcripts
// one at a time.
std::string transcript_csv_header(std::size_t num_classes);
void append_transcript_csv_rows(std::ostream& out, const Transcript& transcript);

} // namespace tlbd

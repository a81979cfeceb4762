#include "tlbd/query.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include "tlbd/errors.hpp"

namespace tlbd {

RngStream& QuerySession::stream(std::uint64_t stream_id) {
    auto it = streams.find(stream_id);
    if (it == streams.end())
        it = streams.emplace(stream_id, RngStream{master_seed, stream_id, 0}).first;
    return it->second;
}

std::string QuerySession::serialize() const {
    std::ostringstream out;
    out << "session v1\n";
    out << master_seed << ' ' << total_queries << ' ' << streams.size() << '\n';
    // Sorted for byte-stable output.
    std::vector<std::uint64_t> ids;
    ids.reserve(streams.size());
    for (const auto& [id, s] : streams) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (std::uint64_t id : ids) out << id << ' ' << streams.at(id).counter << '\n';
    return out.str();
}

QuerySession QuerySession::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string word, version;
    in >> word >> version;
    if (word != "session" || version != "v1")
        throw ParseError(ParseError::Kind::BadMagic, "session: bad header");
    QuerySession s;
    std::size_t n = 0;
    if (!(in >> s.master_seed >> s.total_queries >> n))
        throw ParseError(ParseError::Kind::Truncated, "session: truncated header");
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t id = 0, counter = 0;
        if (!(in >> id >> counter))
            throw ParseError(ParseError::Kind::Truncated, "session: truncated stream table");
        s.streams.emplace(id, RngStream{s.master_seed, id, counter});
    }
    return s;
}

namespace {

// Dropout-enabled layers draw one mask each, in layer order. This fixed
// consumption discipline is shared by predict() and the offline simulators;
// changing one without the others breaks the advanced adversary's replay.
MaskSet draw_inference_masks(std::span<const std::size_t> hidden_widths, const DropoutPlan& plan,
                             RngStream& stream) {
    MaskSet masks(hidden_widths.size());
    for (std::size_t h = 0; h < hidden_widths.size(); ++h) {
        if (plan.inference_rates[h] > 0.0)
            masks[h] = sample_standard_mask(hidden_widths[h], plan.inference_rates[h], stream);
    }
    return masks;
}

bool masks_activate(const MaskSet& masks, const std::vector<TargetNeurons>& targets) {
    for (const TargetNeurons& t : targets) {
        if (!masks[t.layer]) return false;
        if (!targets_dropped(*masks[t.layer], t.neurons)) return false;
    }
    return true;
}

std::vector<std::size_t> hidden_widths_of(const Parameters& params) {
    std::vector<std::size_t> w;
    for (std::size_t l = 0; l + 1 < params.num_layers(); ++l) w.push_back(params.weights[l].rows);
    return w;
}

} // namespace

QueryRecord predict(const Parameters& params, std::span<const double> input,
                    const DropoutPlan& plan, QuerySession& session, std::uint64_t stream_id) {
    const std::vector<std::size_t> widths = hidden_widths_of(params);
    plan.validate(widths);

    RngStream& stream = session.stream(stream_id);
    const MaskSet masks = draw_inference_masks(widths, plan, stream);

    QueryRecord rec;
    rec.activated = masks_activate(masks, plan.targets);
    rec.posteriors = forward_posteriors(params, input, masks);
    rec.predicted_label = argmax_tiebreak_low(rec.posteriors);
    ++session.total_queries;
    return rec;
}

std::vector<QueryRecord> query_campaign(const Parameters& params, std::span<const double> input,
                                        const DropoutPlan& plan, std::size_t num_queries,
                                        QuerySession& session, std::uint64_t stream_id) {
    if (num_queries < 1) throw ContractViolation("query_campaign: need num_queries >= 1");
    std::vector<QueryRecord> records;
    records.reserve(num_queries);
    for (std::size_t q = 1; q <= num_queries; ++q) {
        QueryRecord rec = predict(params, input, plan, session, stream_id);
        rec.query_index = q;
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

// Mask-draw-only simulation from an explicit stream state. Returns the
// 1-based offset of the first activating query, searching at most horizon
// queries ahead.
std::optional<std::size_t> first_activation_from(RngStream probe,
                                                 std::span<const std::size_t> hidden_widths,
                                                 const DropoutPlan& plan, std::size_t horizon) {
    if (horizon < 1) throw ContractViolation("activation search: need horizon >= 1");
    plan.validate(hidden_widths);
    if (plan.targets.empty()) return 1; // vacuously activated
    for (std::size_t q = 1; q <= horizon; ++q) {
        bool all_dropped = true;
        for (std::size_t h = 0; h < hidden_widths.size(); ++h) {
            if (plan.inference_rates[h] <= 0.0) continue;
            const Mask m = sample_standard_mask(hidden_widths[h], plan.inference_rates[h], probe);
            if (!all_dropped) continue;
            for (const TargetNeurons& t : plan.targets)
                if (t.layer == h && !targets_dropped(m, t.neurons)) {
                    all_dropped = false;
                    break;
                }
        }
        // Target layers with rate 0 never draw a mask, so their targets
        // can never drop.
        for (const TargetNeurons& t : plan.targets)
            if (plan.inference_rates[t.layer] <= 0.0) all_dropped = false;
        if (all_dropped) return q;
    }
    return std::nullopt;
}

} // namespace

std::optional<std::size_t> predict_activation_query(std::uint64_t master_seed,
                                                    std::uint64_t stream_id,
                                                    std::span<const std::size_t> hidden_widths,
                                                    const DropoutPlan& plan,
                                                    std::size_t horizon) {
    return first_activation_from(RngStream{master_seed, stream_id, 0}, hidden_widths, plan,
                                 horizon);
}

std::size_t schedule_dos(QuerySession& session, std::uint64_t stream_id,
                         std::span<const std::size_t> hidden_widths, const DropoutPlan& plan,
                         std::size_t horizon) {
    RngStream& stream = session.stream(stream_id);
    const std::optional<std::size_t> next =
        first_activation_from(stream, hidden_widths, plan, horizon);
    if (!next)
        throw HorizonExhausted("schedule_dos: no activation within " + std::to_string(horizon) +
                               " queries");
    // Burn everything before the activating query. Padding queries are
    // served queries, so they advance the global counter too.
    const std::size_t padding = *next - 1;
    for (std::size_t q = 0; q < padding; ++q) {
        draw_inference_masks(hidden_widths, plan, stream);
        ++session.total_queries;
    }
    return padding;
}

std::string transcript_csv_header(std::size_t num_classes) {
    std::string header = "input_index,query_index,predicted_label,activated";
    for (std::size_t c = 0; c < num_classes; ++c) header += ",p" + std::to_string(c);
    return header;
}

void append_transcript_csv_rows(std::ostream& out, const Transcript& t) {
    char buf[64];
    for (const QueryRecord& r : t.records) {
        out << t.input_index << ',' << r.query_index << ',' << r.predicted_label << ','
            << (r.activated ? 1 : 0);
        for (double p : r.posteriors) {
            std::snprintf(buf, sizeof(buf), "%.17g", p);
            out << ',' << buf;
        }
        out << '\n';
    }
}

void export_transcripts_csv(std::ostream& out, std::span<const Transcript> transcripts) {
    const std::size_t classes =
        transcripts.empty() || transcripts.front().records.empty()
            ? 0
            : transcripts.front().records.front().posteriors.size();
    out << transcript_csv_header(classes) << '\n';
    for (const Transcript& t : transcripts) append_transcript_csv_rows(out, t);
}

} // namespace tlbd

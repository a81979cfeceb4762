#pragma once
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "tlbd/data.hpp"
#include "tlbd/metrics.hpp"
#include "tlbd/network.hpp"
#include "tlbd/prob_model.hpp"
#include "tlbd/trainer.hpp"

namespace tlbd {

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t dim = 784;
    std::size_t samples_per_class = 1000;
    std::size_t test_samples_per_class = 200;
    double spread = 0.08;
    std::uint64_t seed = 7;
};

struct MnistSpec {
    std::filesystem::path images, labels, test_images, test_labels;
    std::size_t train_subsample = 0; // 0 = use the full training set
    std::uint64_t subsample_seed = 11;
};

struct DatasetConfig {
    enum class Type { Synthetic, Mnist };
    Type type = Type::Synthetic;
    SyntheticSpec synthetic;
    MnistSpec mnist;
};

// How target neurons are picked when not given explicitly.
struct TargetSpec {
    std::vector<TargetNeurons> explicit_targets;
    std::string layer = "second_to_last"; // or "first_fc" or a hidden-layer index
    std::size_t neuron_count = 1;
};

struct EvalConfig {
    std::size_t num_queries = 5000;
    double inference_rate = 0.001;
    std::size_t eval_inputs = 1000;
    std::size_t repetitions = 1;
    bool export_transcripts = false;
    bool exclude_target_class = true;
    std::uint64_t session_seed = 99;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ModelSpec model{{784, 256, 128, 10}};
    AttackConfig attack;
    TargetSpec target_spec;
    EvalConfig eval;
    std::filesystem::path output_dir = "runs/default";
    // The config document exactly as read; copied into the output directory
    // for provenance.
    std::string raw_json;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_file(const std::filesystem::path& path);
    std::string to_json_text() const;
};

struct LoadedData {
    Dataset train;
    Dataset test;
    std::string description;
};

LoadedData load_dataset(const DatasetConfig& cfg);

std::vector<TargetNeurons> resolve_targets(const TargetSpec& spec, const ModelSpec& model,
                                           std::uint64_t selection_seed);

// Per-repetition copy of the attack config with all four seeds re-derived.
AttackConfig derive_rep_attack(const AttackConfig& base, std::size_t rep);

// Write-temp-then-rename, so partial files never appear under their final
// name.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::filesystem::path clean_checkpoint_path(const std::filesystem::path& dir, std::size_t rep);
std::filesystem::path backdoored_checkpoint_path(const std::filesystem::path& dir,
                                                 std::size_t rep);

struct TrainOutputs {
    std::vector<std::filesystem::path> clean_checkpoints;
    std::vector<std::filesystem::path> backdoored_checkpoints;
};

// Trains `repetitions` clean/backdoored pairs with derived seeds, writes
// checkpoints, train reports, and a verbatim config copy into output_dir.
TrainOutputs run_train(const ExperimentConfig& cfg);

// One repetition's full evaluation: campaigns over the first eval_inputs
// test inputs (stream id = input index), streamed into a MetricsReport.
// transcripts_out, when given, receives the per-query CSV.
MetricsReport evaluate_models(const Parameters& backdoored, const Parameters& clean,
                              const Dataset& test, const std::vector<TargetNeurons>& targets,
                              std::size_t target_label, const EvalConfig& eval,
                              std::uint64_t session_seed, std::ostream* transcripts_out = nullptr);

struct EvaluateOutputs {
    std::vector<MetricsReport> per_rep;
    std::filesystem::path metrics_csv;
};

// Loads the checkpoint pairs run_train wrote into cfg.output_dir and emits
// metrics.csv with one row per repetition plus mean and stddev rows.
EvaluateOutputs run_evaluate(const ExperimentConfig& cfg);

enum class SweepAxis { Queries, Neurons, Rate, Layer };
SweepAxis parse_axis(const std::string& name);

// One evaluation per axis value with shared seeds elsewhere; neuron and
// layer sweeps retrain the backdoored model per value. Returns the
// long-form CSV path (axis,value,metric,mean,stddev).
std::filesystem::path run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<double>& values);

struct PlanReport {
    double activation_probability = 0.0;
    double expected_queries = 0.0;
    std::uint64_t queries_for_confidence = 0;
    double confidence = 0.0;
};

PlanReport make_plan_report(const TargetAssignment& assignment, double confidence);
std::string format_plan_report(const TargetAssignment& assignment, const PlanReport& report);

} // namespace tlbd

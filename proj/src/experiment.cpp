#include "tlbd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tlbd/errors.hpp"
#include "tlbd/query.hpp"

namespace tlbd {

using nlohmann::json;

namespace {

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json seeds_to_json(const Seeds& s) {
    return json{{"init", s.init}, {"shuffle", s.shuffle}, {"dropout", s.dropout},
                {"selection", s.selection}};
}

Seeds seeds_from_json(const json& j) {
    Seeds s;
    s.init = j.value("init", s.init);
    s.shuffle = j.value("shuffle", s.shuffle);
    s.dropout = j.value("dropout", s.dropout);
    s.selection = j.value("selection", s.selection);
    return s;
}

json targets_to_json(const std::vector<TargetNeurons>& targets) {
    json out = json::array();
    for (const TargetNeurons& t : targets) out.push_back(json::array({t.layer, t.neurons}));
    return out;
}

std::vector<TargetNeurons> targets_from_json(const json& j) {
    std::vector<TargetNeurons> out;
    for (const json& e : j) {
        TargetNeurons t;
        t.layer = e.at(0).get<std::size_t>();
        t.neurons = e.at(1).get<std::vector<std::size_t>>();
        out.push_back(std::move(t));
    }
    return out;
}

json attack_to_json(const AttackConfig& a) {
    return json{{"target_label", a.target_label},
                {"targets", targets_to_json(a.targets)},
                {"backdoor_batch_fraction", a.backdoor_batch_fraction},
                {"train_dropout_rate", a.train_dropout_rate},
                {"inference_dropout_rate", a.inference_dropout_rate},
                {"epochs", a.epochs},
                {"batch_size", a.batch_size},
                {"learning_rate", a.learning_rate},
                {"seeds", seeds_to_json(a.seeds)}};
}

AttackConfig attack_from_json(const json& j) {
    AttackConfig a;
    a.target_label = j.value("target_label", a.target_label);
    if (j.contains("targets")) a.targets = targets_from_json(j.at("targets"));
    a.backdoor_batch_fraction = j.value("backdoor_batch_fraction", a.backdoor_batch_fraction);
    a.train_dropout_rate = j.value("train_dropout_rate", a.train_dropout_rate);
    a.inference_dropout_rate = j.value("inference_dropout_rate", a.inference_dropout_rate);
    a.epochs = j.value("epochs", a.epochs);
    a.batch_size = j.value("batch_size", a.batch_size);
    a.learning_rate = j.value("learning_rate", a.learning_rate);
    if (j.contains("seeds")) a.seeds = seeds_from_json(j.at("seeds"));
    return a;
}

} // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::BadValue, std::string("config: ") + e.what());
    }
    try {
        ExperimentConfig cfg;
        cfg.raw_json = text;

        if (j.contains("dataset")) {
            const json& d = j.at("dataset");
            const std::string type = d.value("type", "synthetic");
            if (type == "synthetic") {
                cfg.dataset.type = DatasetConfig::Type::Synthetic;
                SyntheticSpec& s = cfg.dataset.synthetic;
                s.classes = d.value("classes", s.classes);
                s.dim = d.value("dim", s.dim);
                s.samples_per_class = d.value("samples_per_class", s.samples_per_class);
                s.test_samples_per_class =
                    d.value("test_samples_per_class", s.test_samples_per_class);
                s.spread = d.value("spread", s.spread);
                s.seed = d.value("seed", s.seed);
            } else if (type == "mnist") {
                cfg.dataset.type = DatasetConfig::Type::Mnist;
                MnistSpec& m = cfg.dataset.mnist;
                m.images = d.value("images", std::string());
                m.labels = d.value("labels", std::string());
                m.test_images = d.value("test_images", std::string());
                m.test_labels = d.value("test_labels", std::string());
                m.train_subsample = d.value("train_subsample", m.train_subsample);
                m.subsample_seed = d.value("subsample_seed", m.subsample_seed);
            } else {
                throw ParseError(ParseError::Kind::BadValue,
                                 "config: unknown dataset type '" + type + "'");
            }
        }
        if (j.contains("model"))
            cfg.model.layer_widths =
                j.at("model").at("layer_widths").get<std::vector<std::size_t>>();
        if (j.contains("attack")) {
            cfg.attack = attack_from_json(j.at("attack"));
            const json& a = j.at("attack");
            cfg.target_spec.layer = a.value("target_layer", cfg.target_spec.layer);
            cfg.target_spec.neuron_count =
                a.value("target_neuron_count", cfg.target_spec.neuron_count);
            cfg.target_spec.explicit_targets = cfg.attack.targets;
        }
        if (j.contains("evaluation")) {
            const json& e = j.at("evaluation");
            cfg.eval.num_queries = e.value("num_queries", cfg.eval.num_queries);
            cfg.eval.inference_rate = e.value("inference_rate", cfg.eval.inference_rate);
            cfg.eval.eval_inputs = e.value("eval_inputs", cfg.eval.eval_inputs);
            cfg.eval.repetitions = e.value("repetitions", cfg.eval.repetitions);
            cfg.eval.export_transcripts =
                e.value("export_transcripts", cfg.eval.export_transcripts);
            cfg.eval.exclude_target_class =
                e.value("exclude_target_class", cfg.eval.exclude_target_class);
            cfg.eval.session_seed = e.value("session_seed", cfg.eval.session_seed);
        }
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
        return cfg;
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::BadValue, std::string("config: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string ExperimentConfig::to_json_text() const {
    json d;
    if (dataset.type == DatasetConfig::Type::Synthetic) {
        const SyntheticSpec& s = dataset.synthetic;
        d = json{{"type", "synthetic"},
                 {"classes", s.classes},
                 {"dim", s.dim},
                 {"samples_per_class", s.samples_per_class},
                 {"test_samples_per_class", s.test_samples_per_class},
                 {"spread", s.spread},
                 {"seed", s.seed}};
    } else {
        const MnistSpec& m = dataset.mnist;
        d = json{{"type", "mnist"},
                 {"images", m.images.string()},
                 {"labels", m.labels.string()},
                 {"test_images", m.test_images.string()},
                 {"test_labels", m.test_labels.string()},
                 {"train_subsample", m.train_subsample},
                 {"subsample_seed", m.subsample_seed}};
    }
    json a = attack_to_json(attack);
    a["target_layer"] = target_spec.layer;
    a["target_neuron_count"] = target_spec.neuron_count;
    json e{{"num_queries", eval.num_queries},
           {"inference_rate", eval.inference_rate},
           {"eval_inputs", eval.eval_inputs},
           {"repetitions", eval.repetitions},
           {"export_transcripts", eval.export_transcripts},
           {"exclude_target_class", eval.exclude_target_class},
           {"session_seed", eval.session_seed}};
    json root{{"dataset", d},
              {"model", json{{"layer_widths", model.layer_widths}}},
              {"attack", a},
              {"evaluation", e},
              {"output_dir", output_dir.string()}};
    return root.dump(2) + "\n";
}

LoadedData load_dataset(const DatasetConfig& cfg) {
    LoadedData out;
    if (cfg.type == DatasetConfig::Type::Synthetic) {
        const SyntheticSpec& s = cfg.synthetic;
        // One generation covers train and test so both draw from identical
        // class centers; the class-major layout makes the split exact.
        const std::size_t per_class = s.samples_per_class + s.test_samples_per_class;
        const Dataset all = synthetic_blobs(s.classes, s.dim, per_class, s.spread, s.seed);
        out.train.num_classes = out.test.num_classes = s.classes;
        out.train.inputs = Matrix(s.classes * s.samples_per_class, s.dim);
        out.test.inputs = Matrix(s.classes * s.test_samples_per_class, s.dim);
        out.train.labels.resize(out.train.inputs.rows);
        out.test.labels.resize(out.test.inputs.rows);
        std::size_t tr = 0, te = 0;
        for (std::size_t c = 0; c < s.classes; ++c) {
            for (std::size_t k = 0; k < per_class; ++k) {
                const std::size_t src = c * per_class + k;
                if (k < s.samples_per_class) {
                    std::copy_n(all.inputs.row(src), s.dim, out.train.inputs.row(tr));
                    out.train.labels[tr++] = c;
                } else {
                    std::copy_n(all.inputs.row(src), s.dim, out.test.inputs.row(te));
                    out.test.labels[te++] = c;
                }
            }
        }
        std::ostringstream desc;
        desc << "synthetic(classes=" << s.classes << ",dim=" << s.dim << ",train="
             << s.samples_per_class << "/class,test=" << s.test_samples_per_class
             << "/class,spread=" << s.spread << ",seed=" << s.seed << ")";
        out.description = desc.str();
    } else {
        const MnistSpec& m = cfg.mnist;
        out.train = load_mnist_idx(m.images, m.labels);
        out.test = load_mnist_idx(m.test_images, m.test_labels);
        if (m.train_subsample > 0)
            out.train = subsample(out.train, m.train_subsample, m.subsample_seed);
        std::ostringstream desc;
        desc << "mnist(" << m.images.string() << ",subsample=" << m.train_subsample << ")";
        out.description = desc.str();
    }
    return out;
}

std::vector<TargetNeurons> resolve_targets(const TargetSpec& spec, const ModelSpec& model,
                                           std::uint64_t selection_seed) {
    if (!spec.explicit_targets.empty()) return spec.explicit_targets;
    model.validate();
    std::size_t layer = 0;
    if (spec.layer == "second_to_last") {
        layer = model.second_to_last_layer();
    } else if (spec.layer == "first_fc") {
        layer = model.first_fc_layer();
    } else {
        try {
            layer = std::stoul(spec.layer);
        } catch (const std::exception&) {
            throw ContractViolation("target layer '" + spec.layer +
                                    "' is not second_to_last, first_fc, or an index");
        }
    }
    TargetNeurons t;
    t.layer = layer;
    t.neurons = select_target_neurons(model, layer, spec.neuron_count,
                                      derive_seed(selection_seed, 0x7461726765747355ULL));
    return {t};
}

AttackConfig derive_rep_attack(const AttackConfig& base, std::size_t rep) {
    AttackConfig a = base;
    a.seeds.init = derive_seed(base.seeds.init, rep);
    a.seeds.shuffle = derive_seed(base.seeds.shuffle, rep);
    a.seeds.dropout = derive_seed(base.seeds.dropout, rep);
    a.seeds.selection = derive_seed(base.seeds.selection, rep);
    return a;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::filesystem::path clean_checkpoint_path(const std::filesystem::path& dir, std::size_t rep) {
    return dir / ("clean_" + std::to_string(rep) + ".ckpt");
}

std::filesystem::path backdoored_checkpoint_path(const std::filesystem::path& dir,
                                                 std::size_t rep) {
    return dir / ("backdoored_" + std::to_string(rep) + ".ckpt");
}

namespace {

std::string train_report_csv(const TrainReport& r, bool backdoored) {
    std::ostringstream out;
    out << "epoch,loss,accuracy";
    if (backdoored) out << ",backdoor_conditional_accuracy";
    out << '\n';
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
        out << e << ',' << fmt_g(r.train_loss[e]) << ',' << fmt_g(r.train_accuracy[e]);
        if (backdoored) out << ',' << fmt_g(r.backdoor_conditional_accuracy[e]);
        out << '\n';
    }
    return out.str();
}

std::string checkpoint_metadata(const ExperimentConfig& cfg, const AttackConfig& attack,
                                const std::string& kind, std::size_t rep,
                                const std::string& dataset_desc, const TrainReport& report) {
    json j{{"kind", kind},
           {"repetition", rep},
           {"dataset", dataset_desc},
           {"model", cfg.model.layer_widths},
           {"attack", attack_to_json(attack)},
           {"backdoor_batches", report.backdoor_batches}};
    if (!report.train_accuracy.empty())
        j["final_train_accuracy"] = report.train_accuracy.back();
    if (!report.backdoor_conditional_accuracy.empty())
        j["final_backdoor_conditional_accuracy"] = report.backdoor_conditional_accuracy.back();
    return j.dump();
}

} // namespace

TrainOutputs run_train(const ExperimentConfig& cfg) {
    cfg.model.validate();
    std::filesystem::create_directories(cfg.output_dir);
    const LoadedData data = load_dataset(cfg.dataset);

    AttackConfig base = cfg.attack;
    base.targets = resolve_targets(cfg.target_spec, cfg.model, cfg.attack.seeds.selection);
    base.validate(cfg.model);

    TrainOutputs outputs;
    for (std::size_t rep = 0; rep < cfg.eval.repetitions; ++rep) {
        const AttackConfig attack = derive_rep_attack(base, rep);

        auto [clean_params, clean_report] = train_clean(data.train, cfg.model, attack);
        const auto clean_path = clean_checkpoint_path(cfg.output_dir, rep);
        save_checkpoint(clean_path, clean_params, cfg.model,
                        checkpoint_metadata(cfg, attack, "clean", rep, data.description,
                                            clean_report));
        write_file_atomic(cfg.output_dir / ("train_report_clean_" + std::to_string(rep) + ".csv"),
                          train_report_csv(clean_report, false));
        outputs.clean_checkpoints.push_back(clean_path);

        auto [bd_params, bd_report] = train_backdoored(data.train, cfg.model, attack);
        const auto bd_path = backdoored_checkpoint_path(cfg.output_dir, rep);
        save_checkpoint(bd_path, bd_params, cfg.model,
                        checkpoint_metadata(cfg, attack, "backdoored", rep, data.description,
                                            bd_report));
        write_file_atomic(
            cfg.output_dir / ("train_report_backdoored_" + std::to_string(rep) + ".csv"),
            train_report_csv(bd_report, true));
        outputs.backdoored_checkpoints.push_back(bd_path);
    }

    // Provenance: the config exactly as given.
    write_file_atomic(cfg.output_dir / "config.json",
                      cfg.raw_json.empty() ? cfg.to_json_text() : cfg.raw_json);
    return outputs;
}

MetricsReport evaluate_models(const Parameters& backdoored, const Parameters& clean,
                              const Dataset& test, const std::vector<TargetNeurons>& targets,
                              std::size_t target_label, const EvalConfig& eval,
                              std::uint64_t session_seed, std::ostream* transcripts_out) {
    if (eval.num_queries < 2)
        throw EvaluationError("evaluate: posterior similarity needs num_queries >= 2");
    if (test.size() == 0) throw EvaluationError("evaluate: empty test set");

    std::vector<std::size_t> widths;
    for (std::size_t l = 0; l + 1 < backdoored.num_layers(); ++l)
        widths.push_back(backdoored.weights[l].rows);

    DropoutPlan plan;
    plan.train_rates.assign(widths.size(), 0.0);
    plan.inference_rates.assign(widths.size(), 0.0);
    plan.targets = targets;
    for (const TargetNeurons& t : targets) plan.inference_rates[t.layer] = eval.inference_rate;
    plan.validate(widths);

    const std::size_t n_inputs = std::min(eval.eval_inputs, test.size());
    std::vector<std::size_t> eligible;
    std::vector<std::size_t> baselines(n_inputs);
    for (std::size_t i = 0; i < n_inputs; ++i) {
        baselines[i] = predict_label(backdoored, test.input(i));
        if (!eval.exclude_target_class || baselines[i] != target_label) eligible.push_back(i);
    }
    if (eligible.empty())
        throw EvaluationError("evaluate: no eligible inputs (all predicted the target label)");

    QuerySession session(session_seed);
    std::size_t successes = 0, consistent = 0;
    double ps_sum = 0.0, third_sum = 0.0;
    std::vector<std::size_t> first_hits;
    bool wrote_header = false;

    for (std::size_t idx : eligible) {
        Transcript t;
        t.input_index = idx;
        t.baseline_label = baselines[idx];
        t.records = query_campaign(backdoored, test.input(idx), plan, eval.num_queries, session,
                                   idx);
        if (transcripts_out) {
            if (!wrote_header) {
                *transcripts_out << transcript_csv_header(test.num_classes) << '\n';
                wrote_header = true;
            }
            append_transcript_csv_rows(*transcripts_out, t);
        }
        successes += transcript_success(t, target_label);
        consistent += label_consistency_score(t, target_label);
        ps_sum += transcript_posterior_similarity(t);
        third_sum += static_cast<double>(third_label_events(t, target_label));
        if (const auto q = first_target_query(t, target_label)) first_hits.push_back(*q);
    }

    MetricsReport report;
    report.total_inputs = n_inputs;
    report.eligible_inputs = eligible.size();
    const double n = static_cast<double>(eligible.size());
    report.attack_success_rate = static_cast<double>(successes) / n;
    report.label_consistency = static_cast<double>(consistent) / n;
    report.posterior_similarity = ps_sum / n;
    report.third_label_mean_count = third_sum / n;
    report.queries_to_activation = query_stats_from_firsts(first_hits, eval.num_queries);
    report.utility = model_utility(backdoored, clean, test);

    // Secondary utility column: accuracy with the inference dropout live,
    // one seeded query per test input.
    QuerySession util_session(derive_seed(session_seed, 0x7574696CULL));
    std::size_t util_correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const QueryRecord rec = predict(backdoored, test.input(i), plan, util_session, i);
        util_correct += rec.predicted_label == test.labels[i];
    }
    report.backdoored_dropout_accuracy =
        static_cast<double>(util_correct) / static_cast<double>(test.size());
    report.validate();
    return report;
}

namespace {

std::vector<double> report_columns(const MetricsReport& r) {
    return {r.attack_success_rate,
            r.utility.backdoored_accuracy,
            r.utility.clean_accuracy,
            r.utility.delta,
            r.backdoored_dropout_accuracy,
            r.label_consistency,
            r.posterior_similarity,
            r.queries_to_activation.mean,
            r.queries_to_activation.median,
            static_cast<double>(r.queries_to_activation.success_count),
            r.third_label_mean_count,
            static_cast<double>(r.eligible_inputs),
            static_cast<double>(r.total_inputs)};
}

struct LoadedPair {
    Parameters backdoored, clean;
    std::vector<TargetNeurons> targets;
    std::size_t target_label = 0;
};

LoadedPair load_pair(const std::filesystem::path& dir, std::size_t rep) {
    const Checkpoint bd = load_checkpoint(backdoored_checkpoint_path(dir, rep));
    const Checkpoint cl = load_checkpoint(clean_checkpoint_path(dir, rep));
    if (!(bd.spec == cl.spec))
        throw EvaluationError("evaluate: clean/backdoored specs differ for repetition " +
                              std::to_string(rep));
    LoadedPair pair;
    pair.backdoored = bd.params;
    pair.clean = cl.params;
    try {
        const json meta = json::parse(bd.metadata);
        const json& attack = meta.at("attack");
        pair.targets = targets_from_json(attack.at("targets"));
        pair.target_label = attack.at("target_label").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::BadValue,
                         "checkpoint metadata: " + std::string(e.what()));
    }
    return pair;
}

std::vector<MetricsReport> evaluate_dir(const std::filesystem::path& dir, const Dataset& test,
                                        const EvalConfig& eval,
                                        const std::filesystem::path& transcript_dir = {}) {
    std::vector<MetricsReport> reports;
    for (std::size_t rep = 0; rep < eval.repetitions; ++rep) {
        const LoadedPair pair = load_pair(dir, rep);
        const std::uint64_t session_seed = derive_seed(eval.session_seed, rep);
        if (eval.export_transcripts && !transcript_dir.empty()) {
            const auto final_path =
                transcript_dir / ("transcripts_" + std::to_string(rep) + ".csv");
            std::filesystem::path tmp = final_path;
            tmp += ".tmp";
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw IoError("cannot open " + tmp.string());
                reports.push_back(evaluate_models(pair.backdoored, pair.clean, test,
                                                  pair.targets, pair.target_label, eval,
                                                  session_seed, &out));
            }
            std::filesystem::rename(tmp, final_path);
        } else {
            reports.push_back(evaluate_models(pair.backdoored, pair.clean, test, pair.targets,
                                              pair.target_label, eval, session_seed, nullptr));
        }
    }
    return reports;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
    std::ostringstream out;
    out << "row," << MetricsReport::csv_header() << '\n';
    for (std::size_t r = 0; r < reports.size(); ++r)
        out << r << ',' << reports[r].csv_row() << '\n';

    const std::size_t cols = report_columns(reports.front()).size();
    std::vector<double> mean(cols, 0.0), var(cols, 0.0);
    for (const MetricsReport& r : reports) {
        const std::vector<double> c = report_columns(r);
        for (std::size_t i = 0; i < cols; ++i) mean[i] += c[i];
    }
    for (double& m : mean) m /= static_cast<double>(reports.size());
    for (const MetricsReport& r : reports) {
        const std::vector<double> c = report_columns(r);
        for (std::size_t i = 0; i < cols; ++i) var[i] += (c[i] - mean[i]) * (c[i] - mean[i]);
    }
    out << "mean";
    for (double m : mean) out << ',' << fmt_g(m);
    out << "\nstddev";
    for (double v : var)
        out << ',' << fmt_g(std::sqrt(v / static_cast<double>(reports.size())));
    out << '\n';
    return out.str();
}

} // namespace

EvaluateOutputs run_evaluate(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir);
    const LoadedData data = load_dataset(cfg.dataset);

    EvaluateOutputs out;
    out.per_rep = evaluate_dir(cfg.output_dir, data.test, cfg.eval, cfg.output_dir);
    out.metrics_csv = cfg.output_dir / "metrics.csv";
    write_file_atomic(out.metrics_csv, metrics_csv(out.per_rep));
    // config.json belongs to the training run; evaluations record theirs
    // alongside.
    write_file_atomic(cfg.output_dir / "config_evaluate.json",
                      cfg.raw_json.empty() ? cfg.to_json_text() : cfg.raw_json);
    return out;
}

SweepAxis parse_axis(const std::string& name) {
    if (name == "queries") return SweepAxis::Queries;
    if (name == "neurons") return SweepAxis::Neurons;
    if (name == "rate") return SweepAxis::Rate;
    if (name == "layer") return SweepAxis::Layer;
    throw ContractViolation("sweep axis '" + name + "' not one of queries|neurons|rate|layer");
}

namespace {

const char* axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Queries: return "queries";
        case SweepAxis::Neurons: return "neurons";
        case SweepAxis::Rate: return "rate";
        case SweepAxis::Layer: return "layer";
    }
    return "?";
}

void append_sweep_rows(std::ostringstream& csv, SweepAxis axis, double value,
                       const std::vector<MetricsReport>& reports) {
    static const char* kMetricNames[] = {
        "asr", "acc_backdoored", "acc_clean", "utility_delta", "acc_backdoored_dropout",
        "label_consistency", "posterior_similarity", "qta_mean", "qta_median",
        "qta_success_count", "third_label_mean", "eligible_inputs", "total_inputs"};
    const std::size_t cols = report_columns(reports.front()).size();
    std::vector<double> mean(cols, 0.0), var(cols, 0.0);
    for (const MetricsReport& r : reports) {
        const auto c = report_columns(r);
        for (std::size_t i = 0; i < cols; ++i) mean[i] += c[i];
    }
    for (double& m : mean) m /= static_cast<double>(reports.size());
    for (const MetricsReport& r : reports) {
        const auto c = report_columns(r);
        for (std::size_t i = 0; i < cols; ++i) var[i] += (c[i] - mean[i]) * (c[i] - mean[i]);
    }
    for (std::size_t i = 0; i < cols; ++i)
        csv << axis_name(axis) << ',' << fmt_g(value) << ',' << kMetricNames[i] << ','
            << fmt_g(mean[i]) << ','
            << fmt_g(std::sqrt(var[i] / static_cast<double>(reports.size()))) << '\n';
}

} // namespace

std::filesystem::path run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<double>& values) {
    if (values.empty()) throw ContractViolation("sweep: no axis values given");
    std::filesystem::create_directories(cfg.output_dir);
    const LoadedData data = load_dataset(cfg.dataset);

    std::ostringstream csv;
    csv << "axis,value,metric,mean,stddev\n";

    if (axis == SweepAxis::Queries || axis == SweepAxis::Rate) {
        ExperimentConfig train_cfg = cfg;
        train_cfg.output_dir = cfg.output_dir / "models";
        run_train(train_cfg);
        for (double v : values) {
            EvalConfig eval = cfg.eval;
            if (axis == SweepAxis::Queries) {
                if (v < 2 || v != std::floor(v))
                    throw ContractViolation("sweep: queries values must be integers >= 2");
                eval.num_queries = static_cast<std::size_t>(v);
            } else {
                eval.inference_rate = v;
            }
            append_sweep_rows(csv, axis, v, evaluate_dir(train_cfg.output_dir, data.test, eval));
        }
    } else {
        for (double v : values) {
            ExperimentConfig point = cfg;
            if (axis == SweepAxis::Neurons) {
                if (v < 1 || v != std::floor(v))
                    throw ContractViolation("sweep: neuron counts must be integers >= 1");
                point.target_spec.explicit_targets.clear();
                point.target_spec.neuron_count = static_cast<std::size_t>(v);
                point.output_dir = cfg.output_dir / ("n_" + std::to_string(static_cast<std::size_t>(v)));
            } else {
                if (v < 0 || v != std::floor(v))
                    throw ContractViolation("sweep: layer values must be hidden-layer indices");
                point.target_spec.explicit_targets.clear();
                point.target_spec.layer = std::to_string(static_cast<std::size_t>(v));
                point.output_dir = cfg.output_dir / ("layer_" + std::to_string(static_cast<std::size_t>(v)));
            }
            run_train(point);
            append_sweep_rows(csv, axis, v, evaluate_dir(point.output_dir, data.test, cfg.eval));
        }
    }

    write_file_atomic(cfg.output_dir / "config.json",
                      cfg.raw_json.empty() ? cfg.to_json_text() : cfg.raw_json);
    const auto csv_path = cfg.output_dir / ("sweep_" + std::string(axis_name(axis)) + ".csv");
    write_file_atomic(csv_path, csv.str());
    return csv_path;
}

PlanReport make_plan_report(const TargetAssignment& assignment, double confidence) {
    PlanReport r;
    r.activation_probability = activation_prob_multi(assignment);
    r.expected_queries = expected_queries(r.activation_probability);
    r.queries_for_confidence = queries_for_confidence(r.activation_probability, confidence);
    r.confidence = confidence;
    return r;
}

std::string format_plan_report(const TargetAssignment& assignment, const PlanReport& r) {
    std::ostringstream out;
    out << "target assignment:\n";
    for (const LayerAssignment& a : assignment)
        out << "  layer " << a.layer_id << ": " << a.neuron_count << " neuron(s) at rate "
            << a.inference_rate << '\n';
    out << "activation probability per query: " << r.activation_probability << '\n';
    out << "expected queries to first activation: " << r.expected_queries << '\n';
    out << "queries for " << r.confidence * 100.0 << "% success confidence: "
        << r.queries_for_confidence << '\n';
    return out.str();
}

} // namespace tlbd

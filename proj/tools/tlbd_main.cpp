// tlbd — train, attack, and evaluate dropout-backdoored MLP classifiers.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tlbd/errors.hpp"
#include "tlbd/experiment.hpp"
#include "tlbd/query.hpp"

namespace {

using namespace tlbd;

struct CommonOpts {
    std::string config_path;
    std::string output_dir;
    std::optional<std::size_t> epochs, repetitions, num_queries, eval_inputs, neuron_count,
        batch_size;
    std::optional<double> inference_rate, train_rate, backdoor_fraction, learning_rate;
    std::optional<std::size_t> target_label;
    std::string target_layer;
    std::optional<std::uint64_t> seed;
    bool export_transcripts = false;
    bool include_target_class = false;
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("-c,--config", o.config_path, "experiment config JSON file");
    cmd->add_option("-o,--output-dir", o.output_dir, "output directory");
    cmd->add_option("--epochs", o.epochs, "training epochs (default 50)");
    cmd->add_option("--repetitions", o.repetitions, "independent model pairs (default 1)");
    cmd->add_option("--queries", o.num_queries, "queries per input (default 5000)");
    cmd->add_option("--rate", o.inference_rate, "inference dropout rate (default 0.001)");
    cmd->add_option("--train-rate", o.train_rate, "training dropout rate (default 0.5)");
    cmd->add_option("--backdoor-fraction", o.backdoor_fraction,
                    "fraction of batches given target-label supervision (default 0.1)");
    cmd->add_option("--learning-rate", o.learning_rate, "SGD learning rate (default 0.1)");
    cmd->add_option("--batch-size", o.batch_size, "mini-batch size (default 64)");
    cmd->add_option("--eval-inputs", o.eval_inputs, "test inputs per evaluation (default 1000)");
    cmd->add_option("--target-label", o.target_label, "backdoor target label (default 0)");
    cmd->add_option("--target-layer", o.target_layer,
                    "second_to_last | first_fc | hidden-layer index (default second_to_last)");
    cmd->add_option("--neurons", o.neuron_count, "number of target neurons (default 1)");
    cmd->add_option("--seed", o.seed, "base seed; derives all four training seeds");
    cmd->add_flag("--export-transcripts", o.export_transcripts, "write per-query CSVs");
    cmd->add_flag("--include-target-class", o.include_target_class,
                  "keep inputs whose clean prediction is already the target label");
}

ExperimentConfig build_config(const CommonOpts& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) {
        cfg = ExperimentConfig::from_file(o.config_path);
    } else {
        // Paper-settings defaults when run without a config file.
        cfg.attack.epochs = 50;
    }
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (o.epochs) cfg.attack.epochs = *o.epochs;
    if (o.repetitions) cfg.eval.repetitions = *o.repetitions;
    if (o.num_queries) cfg.eval.num_queries = *o.num_queries;
    if (o.inference_rate) {
        cfg.attack.inference_dropout_rate = *o.inference_rate;
        cfg.eval.inference_rate = *o.inference_rate;
    }
    if (o.train_rate) cfg.attack.train_dropout_rate = *o.train_rate;
    if (o.backdoor_fraction) cfg.attack.backdoor_batch_fraction = *o.backdoor_fraction;
    if (o.learning_rate) cfg.attack.learning_rate = *o.learning_rate;
    if (o.batch_size) cfg.attack.batch_size = *o.batch_size;
    if (o.eval_inputs) cfg.eval.eval_inputs = *o.eval_inputs;
    if (o.target_label) cfg.attack.target_label = *o.target_label;
    if (!o.target_layer.empty()) {
        cfg.target_spec.layer = o.target_layer;
        cfg.target_spec.explicit_targets.clear();
    }
    if (o.neuron_count) {
        cfg.target_spec.neuron_count = *o.neuron_count;
        cfg.target_spec.explicit_targets.clear();
    }
    if (o.seed) {
        cfg.attack.seeds.init = derive_seed(*o.seed, 1);
        cfg.attack.seeds.shuffle = derive_seed(*o.seed, 2);
        cfg.attack.seeds.dropout = derive_seed(*o.seed, 3);
        cfg.attack.seeds.selection = derive_seed(*o.seed, 4);
        cfg.eval.session_seed = derive_seed(*o.seed, 5);
    }
    if (o.export_transcripts) cfg.eval.export_transcripts = true;
    if (o.include_target_class) cfg.eval.exclude_target_class = false;
    // Flag overrides change the effective config, so provenance must record
    // the resolved form rather than the raw file.
    cfg.raw_json.clear();
    return cfg;
}

// Pulls target label, target neurons, and the trained inference rate out of
// a checkpoint's embedded attack config. rate_override, when set, replaces
// the rate on all target layers.
struct CheckpointAttack {
    std::size_t target_label = 0;
    DropoutPlan plan;
};

CheckpointAttack plan_from_checkpoint(const Checkpoint& ck, std::optional<double> rate_override) {
    CheckpointAttack out;
    const auto widths = ck.spec.hidden_widths();
    out.plan.train_rates.assign(widths.size(), 0.0);
    out.plan.inference_rates.assign(widths.size(), 0.0);
    try {
        const auto meta = nlohmann::json::parse(ck.metadata);
        const auto& attack = meta.at("attack");
        out.target_label = attack.at("target_label").get<std::size_t>();
        for (const auto& e : attack.at("targets")) {
            TargetNeurons t;
            t.layer = e.at(0).get<std::size_t>();
            t.neurons = e.at(1).get<std::vector<std::size_t>>();
            out.plan.targets.push_back(std::move(t));
        }
        const double rate =
            rate_override.value_or(attack.at("inference_dropout_rate").get<double>());
        for (const TargetNeurons& t : out.plan.targets) out.plan.inference_rates[t.layer] = rate;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseError::Kind::BadValue,
                         "checkpoint metadata: " + std::string(e.what()));
    }
    return out;
}

TargetAssignment parse_assignment(const std::vector<std::string>& layer_specs) {
    TargetAssignment assignment;
    for (const std::string& spec : layer_specs) {
        LayerAssignment a;
        if (std::sscanf(spec.c_str(), "%zu:%zu:%lf", &a.layer_id, &a.neuron_count,
                        &a.inference_rate) != 3)
            throw ContractViolation("bad assignment '" + spec + "', expected layer:neurons:rate");
        assignment.push_back(a);
    }
    return assignment;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tlbd: a laboratory for triggerless (dropout-based) backdoor attacks on MLPs"};
    app.require_subcommand(1);

    CommonOpts opts;

    CLI::App* train = app.add_subcommand("train", "train clean/backdoored model pairs");
    add_common_flags(train, opts);

    CLI::App* evaluate =
        app.add_subcommand("evaluate", "run query campaigns against trained checkpoints");
    add_common_flags(evaluate, opts);

    CLI::App* sweep = app.add_subcommand("sweep", "evaluate along one hyperparameter axis");
    add_common_flags(sweep, opts);
    std::string axis_name;
    std::vector<double> axis_values;
    sweep->add_option("--axis", axis_name, "queries | neurons | rate | layer")->required();
    sweep->add_option("--values", axis_values, "axis values")->required()->delimiter(',');

    CLI::App* plan = app.add_subcommand("plan", "activation-probability calculator");
    std::vector<std::string> assignment_specs;
    double plan_rate = 0.001;
    std::size_t plan_neurons = 1;
    double confidence = 0.99;
    plan->add_option("--assignment", assignment_specs,
                     "layer:neurons:rate, repeatable for multi-layer targets");
    plan->add_option("--rate", plan_rate, "single-layer inference dropout rate");
    plan->add_option("--neurons", plan_neurons, "single-layer target neuron count");
    plan->add_option("--confidence", confidence, "desired success probability (default 0.99)");

    CLI::App* predict_act = app.add_subcommand(
        "predict-activation", "offline first-activation query index for a seeded stream");
    std::string ckpt_path;
    std::uint64_t pa_seed = 0, pa_stream = 0;
    std::size_t pa_horizon = 100000;
    std::optional<double> pa_rate;
    predict_act->add_option("--checkpoint", ckpt_path, "backdoored checkpoint")->required();
    predict_act->add_option("--seed", pa_seed, "victim model RNG master seed")->required();
    predict_act->add_option("--stream", pa_stream, "stream id (input index)");
    predict_act->add_option("--horizon", pa_horizon, "search horizon (default 100000)");
    predict_act->add_option("--rate", pa_rate, "override inference dropout rate");

    CLI::App* dos = app.add_subcommand(
        "dos-demo", "advance a session so the next query activates the backdoor");
    std::string dos_ckpt;
    std::uint64_t dos_seed = 0, dos_stream = 0;
    std::size_t dos_horizon = 100000;
    std::optional<double> dos_rate;
    dos->add_option("--checkpoint", dos_ckpt, "backdoored checkpoint")->required();
    dos->add_option("--seed", dos_seed, "victim model RNG master seed")->required();
    dos->add_option("--stream", dos_stream, "stream id");
    dos->add_option("--horizon", dos_horizon, "search horizon (default 100000)");
    dos->add_option("--rate", dos_rate, "override inference dropout rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) {
            const ExperimentConfig cfg = build_config(opts);
            const TrainOutputs out = run_train(cfg);
            for (std::size_t r = 0; r < out.clean_checkpoints.size(); ++r)
                std::cout << "wrote " << out.clean_checkpoints[r].string() << " and "
                          << out.backdoored_checkpoints[r].string() << '\n';
        } else if (evaluate->parsed()) {
            const ExperimentConfig cfg = build_config(opts);
            const EvaluateOutputs out = run_evaluate(cfg);
            for (std::size_t r = 0; r < out.per_rep.size(); ++r) {
                std::cout << "--- repetition " << r << " ---\n";
                out.per_rep[r].write_text_report(std::cout);
            }
            std::cout << "wrote " << out.metrics_csv.string() << '\n';
        } else if (sweep->parsed()) {
            const ExperimentConfig cfg = build_config(opts);
            const auto csv = run_sweep(cfg, parse_axis(axis_name), axis_values);
            std::cout << "wrote " << csv.string() << '\n';
        } else if (plan->parsed()) {
            TargetAssignment assignment = parse_assignment(assignment_specs);
            if (assignment.empty())
                assignment.push_back(LayerAssignment{0, plan_neurons, plan_rate});
            const PlanReport report = make_plan_report(assignment, confidence);
            std::cout << format_plan_report(assignment, report);
        } else if (predict_act->parsed()) {
            const Checkpoint ck = load_checkpoint(ckpt_path);
            const CheckpointAttack attack = plan_from_checkpoint(ck, pa_rate);
            const auto widths = ck.spec.hidden_widths();
            const auto hit =
                predict_activation_query(pa_seed, pa_stream, widths, attack.plan, pa_horizon);
            if (hit)
                std::cout << "first activation at query " << *hit << '\n';
            else
                std::cout << "no activation within " << pa_horizon << " queries\n";
        } else if (dos->parsed()) {
            const Checkpoint ck = load_checkpoint(dos_ckpt);
            const CheckpointAttack attack = plan_from_checkpoint(ck, dos_rate);
            const auto widths = ck.spec.hidden_widths();

            QuerySession session(dos_seed);
            const std::size_t padding =
                schedule_dos(session, dos_stream, widths, attack.plan, dos_horizon);
            // Any input works, the attack is input-agnostic; probe with a
            // seeded random one.
            RngStream probe{derive_seed(dos_seed, 0xD05), 0, 0};
            Vector input(ck.spec.input_width());
            for (double& v : input) v = probe.next_uniform();
            const QueryRecord rec = predict(ck.params, input, attack.plan, session, dos_stream);
            std::cout << "padding queries consumed: " << padding << '\n';
            std::cout << "next query: predicted label " << rec.predicted_label
                      << ", backdoor activated: " << (rec.activated ? "yes" : "no")
                      << " (target label " << attack.target_label << ")\n";
        }
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const HorizonExhausted& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const EvaluationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

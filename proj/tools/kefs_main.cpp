// Command-line front end: graph construction, benchmark generation, training,
// synthesis, classifier fitting, evaluation, and the full pipeline.

#include "CLI11.hpp"

#include "kefs/io.hpp"

#include <cstdint>
#include <iostream>
#include <string>

namespace {

using namespace kefs;

MultiSourceGraphSet graphs_for(const PipelineConfig& config, const SemanticTable& semantics) {
    if (!config.paths.graphs.empty()) {
        MultiSourceGraphSet graphs = load_graphs(config.paths.graphs);
        if (graphs.n != static_cast<Eigen::Index>(semantics.classes.size())) {
            throw InputError("graph set covers " + std::to_string(graphs.n) +
                             " classes but semantics has " +
                             std::to_string(semantics.classes.size()));
        }
        return graphs;
    }
    if (config.paths.taxonomy.empty() || config.paths.ingredients.empty() ||
        config.paths.counts.empty()) {
        throw ConfigError("need either --graphs or --taxonomy, --ingredients and --counts");
    }
    return build_graph_set(load_ingredients(config.paths.ingredients),
                           load_taxonomy(config.paths.taxonomy),
                           load_counts(config.paths.counts), semantics.class_ids(), config.tau);
}

void cmd_build_graphs(const PipelineConfig& config, const std::string& out_dir) {
    if (config.paths.taxonomy.empty() || config.paths.ingredients.empty() ||
        config.paths.counts.empty()) {
        throw ConfigError("build-graphs needs --taxonomy, --ingredients and --counts");
    }
    const ClassTaxonomy taxonomy = load_taxonomy(config.paths.taxonomy);
    std::vector<int> class_ids;
    if (!config.paths.semantics.empty()) {
        class_ids = load_semantics(config.paths.semantics).class_ids();
    } else {
        class_ids = taxonomy.leaf_ids();
    }
    const MultiSourceGraphSet graphs =
        build_graph_set(load_ingredients(config.paths.ingredients), taxonomy,
                        load_counts(config.paths.counts), class_ids, config.tau);
    ensure_directory(out_dir);
    save_graphs(out_dir + "/graphs.json", graphs);
    log_event("graphs", {{"n", std::to_string(graphs.n)}, {"out", out_dir + "/graphs.json"}});
}

void cmd_gen_bench(const PipelineConfig& config, const std::string& out_dir) {
    const BenchArtifacts bench = generate_synthetic_benchmark(config.bench, config.seed);
    save_benchmark(out_dir, bench);
    log_event("benchmark", {{"classes", std::to_string(config.bench.classes)},
                            {"out", out_dir}});
}

void cmd_train(const PipelineConfig& config, const std::string& out_dir) {
    if (config.paths.semantics.empty() || config.paths.features.empty()) {
        throw ConfigError("train needs --semantics and --features");
    }
    const SemanticTable semantics = load_semantics(config.paths.semantics);
    const RegionFeatureSet features = load_features(config.paths.features);
    const MultiSourceGraphSet graphs = graphs_for(config, semantics);
    const DiffusionSchedule sched =
        make_schedule(config.schedule.T, config.schedule.gamma_1, config.schedule.gamma_T);

    TrainConfig tc = config.train;
    tc.seed = config.seed;
    tc.dims.d_w = semantics.word_dim();
    tc.dims.d_a = semantics.attr_dim();
    tc.dims.a = features.dim();
    const TrainResult result = train_kefs(features, semantics, graphs, tc, sched);

    ensure_directory(out_dir);
    for (const EpochStats& s : result.trace) {
        log_event("epoch", {{"epoch", std::to_string(s.epoch)},
                            {"total", std::to_string(s.total)}});
    }
    const std::string ckpt =
        out_dir + (config.binary_checkpoint ? "/checkpoint.bin" : "/checkpoint.json");
    save_checkpoint(ckpt, result.params, sched, config.binary_checkpoint);
    log_event("checkpoint", {{"out", ckpt}});
}

void cmd_synthesize(const PipelineConfig& config, const std::string& out_dir) {
    if (config.paths.checkpoint.empty() || config.paths.semantics.empty()) {
        throw ConfigError("synthesize needs --checkpoint and --semantics");
    }
    ParameterSet params;
    DiffusionSchedule sched;
    load_checkpoint(config.paths.checkpoint, params, sched);
    const SemanticTable semantics = load_semantics(config.paths.semantics);
    const MultiSourceGraphSet graphs = graphs_for(config, semantics);

    KefsDims dims = config.train.dims;
    dims.d_w = semantics.word_dim();
    dims.d_a = semantics.attr_dim();
    dims.a = params.at("dec.out.w").cols();
    Rng rng = make_rng(config.seed).child(3);
    const RegionFeatureSet synth =
        synthesize_unseen(params, semantics, graphs, config.train.synth_per_class, rng, dims,
                          sched, config.train.rfdm, config.train.ablate_graph_conditioning);
    ensure_directory(out_dir);
    save_features(out_dir + "/synthesized.jsonl", synth);
    log_event("synthesize", {{"records", std::to_string(synth.records.size())},
                             {"out", out_dir + "/synthesized.jsonl"}});
}

void cmd_fit_classifier(const PipelineConfig& config, const std::string& out_dir) {
    const std::string& input =
        config.paths.synthesized.empty() ? config.paths.features : config.paths.synthesized;
    if (input.empty()) {
        throw ConfigError("fit-classifier needs --synthesized or --features");
    }
    const RegionFeatureSet set = load_features(input);
    const LinearClassifier clf = fit_unseen_classifier(set, config.classifier);
    ensure_directory(out_dir);
    save_classifier(out_dir + "/classifier.json", clf);
    log_event("classifier", {{"classes", std::to_string(clf.class_ids.size())},
                             {"out", out_dir + "/classifier.json"}});
}

void cmd_eval_cls(const PipelineConfig& config, const std::string& out_dir) {
    const std::string& input =
        config.paths.test_features.empty() ? config.paths.features : config.paths.test_features;
    if (config.paths.classifier.empty() || input.empty()) {
        throw ConfigError("eval-cls needs --classifier and --test-features");
    }
    const LinearClassifier clf = load_classifier(config.paths.classifier);
    const RegionFeatureSet all = load_features(input);
    RegionFeatureSet covered;
    for (const RegionRecord& rec : all.records) {
        for (int id : clf.class_ids) {
            if (id == rec.class_id) {
                covered.records.push_back(rec);
                break;
            }
        }
    }
    if (covered.records.empty()) {
        throw InputError("no test records belong to the classifier's classes");
    }
    EvalReport report;
    report.accuracy = classification_accuracy(clf, covered);
    ensure_directory(out_dir);
    save_report(out_dir + "/report.json", report);
    log_event("eval", {{"accuracy", std::to_string(*report.accuracy)},
                       {"out", out_dir + "/report.json"}});
}

void cmd_eval_det(const PipelineConfig& config, const std::string& out_dir) {
    if (config.paths.detections.empty() || config.paths.ground_truth.empty()) {
        throw ConfigError("eval-det needs --detections and --ground-truth");
    }
    const std::vector<Detection> dets = load_detections(config.paths.detections);
    const std::vector<GroundTruth> gts = load_ground_truth(config.paths.ground_truth);
    std::vector<int> seen_ids, unseen_ids;
    if (!config.paths.semantics.empty()) {
        const SemanticTable semantics = load_semantics(config.paths.semantics);
        seen_ids = semantics.seen_ids();
        unseen_ids = semantics.unseen_ids();
    } else {
        for (const GroundTruth& g : gts) {
            bool found = false;
            for (int id : seen_ids) {
                if (id == g.class_id) {
                    found = true;
                    break;
                }
            }
            if (!found) seen_ids.push_back(g.class_id);
        }
    }
    EvalReport report;
    report.detection = evaluate_detections(dets, gts, seen_ids, unseen_ids,
                                           config.eval.iou_thresh, config.eval.recall_k);
    ensure_directory(out_dir);
    save_report(out_dir + "/report.json", report);
    log_event("eval", {{"map_all", std::to_string(report.detection->map_all)},
                       {"out", out_dir + "/report.json"}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-enhanced feature synthesis for generalized zero-shot detection"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir = "out", profile;
    std::uint64_t seed = 0;
    double tau = 0.0;
    int count = 0, epochs = 0;
    bool binary_ckpt = false, ablate = false;
    PathConfig flag_paths;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--profile", profile, "preset: full or desk");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
    auto* tau_opt = app.add_option("--tau", tau, "edge quantization threshold");
    auto* count_opt = app.add_option("--count", count, "synthesized features per class");
    auto* epochs_opt = app.add_option("--epochs", epochs, "training epochs");
    auto* binary_opt = app.add_flag("--binary-checkpoint", binary_ckpt,
                                    "write the checkpoint in the binary format");
    auto* ablate_opt = app.add_flag("--ablate-graph-conditioning", ablate,
                                    "zero the knowledge stream (for comparisons)");
    app.add_option("--semantics", flag_paths.semantics, "class semantics file");
    app.add_option("--features", flag_paths.features, "region feature file");
    app.add_option("--test-features", flag_paths.test_features, "held-out feature file");
    app.add_option("--taxonomy", flag_paths.taxonomy, "class taxonomy file");
    app.add_option("--ingredients", flag_paths.ingredients, "ingredient knowledge file");
    app.add_option("--counts", flag_paths.counts, "co-occurrence counts file");
    app.add_option("--graphs", flag_paths.graphs, "prebuilt graph set file");
    app.add_option("--checkpoint", flag_paths.checkpoint, "model checkpoint file");
    app.add_option("--classifier", flag_paths.classifier, "classifier file");
    app.add_option("--synthesized", flag_paths.synthesized, "synthesized feature file");
    app.add_option("--detections", flag_paths.detections, "detection file");
    app.add_option("--ground-truth", flag_paths.ground_truth, "ground-truth file");

    auto* scmd_graphs = app.add_subcommand("build-graphs", "build the class-correlation graphs");
    auto* scmd_bench = app.add_subcommand("gen-bench", "generate the synthetic benchmark");
    auto* scmd_train = app.add_subcommand("train", "train the synthesizer");
    auto* scmd_synth = app.add_subcommand("synthesize", "sample unseen-class features");
    auto* scmd_fit = app.add_subcommand("fit-classifier", "fit the unseen classifier");
    auto* scmd_ecls = app.add_subcommand("eval-cls", "classification accuracy on features");
    auto* scmd_edet = app.add_subcommand("eval-det", "detection metrics from files");
    auto* scmd_pipe = app.add_subcommand("pipeline", "run every stage end to end");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        PipelineConfig config = default_config();
        if (profile == "desk") {
            apply_desk_profile(config);
        } else if (!profile.empty() && profile != "full") {
            throw ConfigError("unknown profile '" + profile + "'");
        }
        if (!config_path.empty()) {
            config = load_config(config_path, config);
        }
        if (seed_opt->count()) config.seed = seed;
        if (tau_opt->count()) config.tau = tau;
        if (count_opt->count()) config.train.synth_per_class = count;
        if (epochs_opt->count()) config.train.epochs = epochs;
        if (binary_opt->count()) config.binary_checkpoint = binary_ckpt;
        if (ablate_opt->count()) config.train.ablate_graph_conditioning = ablate;
        auto override_path = [](std::string& dst, const std::string& src) {
            if (!src.empty()) dst = src;
        };
        override_path(config.paths.semantics, flag_paths.semantics);
        override_path(config.paths.features, flag_paths.features);
        override_path(config.paths.test_features, flag_paths.test_features);
        override_path(config.paths.taxonomy, flag_paths.taxonomy);
        override_path(config.paths.ingredients, flag_paths.ingredients);
        override_path(config.paths.counts, flag_paths.counts);
        override_path(config.paths.graphs, flag_paths.graphs);
        override_path(config.paths.checkpoint, flag_paths.checkpoint);
        override_path(config.paths.classifier, flag_paths.classifier);
        override_path(config.paths.synthesized, flag_paths.synthesized);
        override_path(config.paths.detections, flag_paths.detections);
        override_path(config.paths.ground_truth, flag_paths.ground_truth);

        if (scmd_graphs->parsed()) {
            cmd_build_graphs(config, out_dir);
        } else if (scmd_bench->parsed()) {
            cmd_gen_bench(config, out_dir);
        } else if (scmd_train->parsed()) {
            cmd_train(config, out_dir);
        } else if (scmd_synth->parsed()) {
            cmd_synthesize(config, out_dir);
        } else if (scmd_fit->parsed()) {
            cmd_fit_classifier(config, out_dir);
        } else if (scmd_ecls->parsed()) {
            cmd_eval_cls(config, out_dir);
        } else if (scmd_edet->parsed()) {
            cmd_eval_det(config, out_dir);
        } else if (scmd_pipe->parsed()) {
            run_pipeline(config, out_dir);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 3;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << '\n';
        return 4;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

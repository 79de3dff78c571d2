#include "kefs/io.hpp"

#include "json.hpp"

#include <string>
#include <utility>

namespace kefs {

namespace {

RegionFeatureSet filter_by_split(const RegionFeatureSet& set, const SemanticTable& semantics,
                                 bool seen) {
    RegionFeatureSet out;
    for (const RegionRecord& rec : set.records) {
        if (semantics.classes[semantics.index_of(rec.class_id)].seen == seen) {
            out.records.push_back(rec);
        }
    }
    return out;
}

void write_train_log(const std::string& path, const std::vector<EpochStats>& trace) {
    std::string out;
    for (const EpochStats& s : trace) {
        nlohmann::json j;
        j["epoch"] = s.epoch;
        j["L_W"] = s.l_w;
        j["L_R"] = s.l_r;
        j["L_G"] = s.l_g;
        j["total"] = s.total;
        out += j.dump();
        out += '\n';
    }
    atomic_write(path, out);
}

}  // namespace

EvalReport run_pipeline(const PipelineConfig& config, const std::string& out_dir) {
    ensure_directory(out_dir);

    SemanticTable semantics;
    RegionFeatureSet train_features;
    RegionFeatureSet test_features;
    MultiSourceGraphSet graphs;
    bool have_graphs = false;

    if (config.paths.semantics.empty()) {
        log_event("stage", {{"name", "benchmark"}});
        BenchArtifacts bench = generate_synthetic_benchmark(config.bench, config.seed);
        save_benchmark(out_dir + "/bench", bench);
        semantics = std::move(bench.semantics);
        train_features = std::move(bench.train_features);
        test_features = std::move(bench.test_features);
        graphs = build_graph_set(bench.ingredients, bench.taxonomy, bench.counts,
                                 semantics.class_ids(), config.tau);
        have_graphs = true;
    } else {
        log_event("stage", {{"name", "load"}});
        semantics = load_semantics(config.paths.semantics);
        if (config.paths.features.empty()) {
            throw ConfigError("pipeline needs a training feature path when semantics are given");
        }
        train_features = load_features(config.paths.features);
        if (!config.paths.test_features.empty()) {
            test_features = load_features(config.paths.test_features);
        }
        if (!config.paths.graphs.empty()) {
            graphs = load_graphs(config.paths.graphs);
            have_graphs = true;
        }
    }
    if (!have_graphs) {
        if (config.paths.taxonomy.empty() || config.paths.ingredients.empty() ||
            config.paths.counts.empty()) {
            throw ConfigError(
                "pipeline needs either a graphs path or taxonomy, ingredients and counts paths");
        }
        graphs = build_graph_set(load_ingredients(config.paths.ingredients),
                                 load_taxonomy(config.paths.taxonomy),
                                 load_counts(config.paths.counts), semantics.class_ids(),
                                 config.tau);
    }
    log_event("stage", {{"name", "graphs"}, {"n", std::to_string(graphs.n)}});
    save_graphs(out_dir + "/graphs.json", graphs);

    const DiffusionSchedule sched =
        make_schedule(config.schedule.T, config.schedule.gamma_1, config.schedule.gamma_T);
    TrainConfig tc = config.train;
    tc.seed = config.seed;
    tc.dims.d_w = semantics.word_dim();
    tc.dims.d_a = semantics.attr_dim();
    tc.dims.a = train_features.dim();

    log_event("stage", {{"name", "train"},
                        {"epochs", std::to_string(tc.epochs)},
                        {"records", std::to_string(train_features.records.size())}});
    TrainResult result = train_kefs(train_features, semantics, graphs, tc, sched);
    write_train_log(out_dir + "/train_log.jsonl", result.trace);
    const std::string ckpt_path =
        out_dir + (config.binary_checkpoint ? "/checkpoint.bin" : "/checkpoint.json");
    save_checkpoint(ckpt_path, result.params, sched, config.binary_checkpoint);

    log_event("stage", {{"name", "synthesize"},
                        {"per_class", std::to_string(tc.synth_per_class)}});
    Rng rng_synth = make_rng(config.seed).child(3);
    RegionFeatureSet synth =
        synthesize_unseen(result.params, semantics, graphs, tc.synth_per_class, rng_synth,
                          tc.dims, sched, tc.rfdm, tc.ablate_graph_conditioning);
    save_features(out_dir + "/synthesized.jsonl", synth);

    log_event("stage", {{"name", "classifier"}});
    LinearClassifier clf = fit_unseen_classifier(synth, config.classifier);
    save_classifier(out_dir + "/classifier.json", clf);

    log_event("stage", {{"name", "evaluate"}});
    EvalReport report;
    report.synthesized_count = static_cast<int>(synth.records.size());
    if (semantics.unseen_ids().size() >= 2) {
        report.silhouette_score = silhouette(synth);
    }
    if (!test_features.records.empty()) {
        const RegionFeatureSet unseen_test = filter_by_split(test_features, semantics, false);
        if (!unseen_test.records.empty()) {
            report.unseen_accuracy = classification_accuracy(clf, unseen_test);
        }
        const RegionFeatureSet seen_test = filter_by_split(test_features, semantics, true);
        if (!seen_test.records.empty() && semantics.seen_ids().size() >= 2) {
            const LinearClassifier seen_clf =
                fit_unseen_classifier(train_features, config.classifier);
            report.seen_accuracy = classification_accuracy(seen_clf, seen_test);
        }
        if (report.seen_accuracy && report.unseen_accuracy) {
            report.hm = harmonic_mean(*report.seen_accuracy, *report.unseen_accuracy);
        }
    }
    if (!config.paths.detections.empty() && !config.paths.ground_truth.empty()) {
        report.detection = evaluate_detections(
            load_detections(config.paths.detections), load_ground_truth(config.paths.ground_truth),
            semantics.seen_ids(), semantics.unseen_ids(), config.eval.iou_thresh,
            config.eval.recall_k);
    }
    save_report(out_dir + "/report.json", report);
    log_event("stage", {{"name", "done"}});
    return report;
}

}  // namespace kefs

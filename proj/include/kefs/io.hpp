#pragma once

// Configuration, document serialization (JSON and the binary checkpoint
// encoding), the synthetic desk-scale benchmark generator, and the pipeline
// driver behind the CLI.

#include "kefs/common.hpp"
#include "kefs/data.hpp"
#include "kefs/evaluation.hpp"
#include "kefs/graphs.hpp"
#include "kefs/rfdm.hpp"
#include "kefs/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kefs {

struct ScheduleConfig {
    int T = 100;
    double gamma_1 = 8.5e-4;
    double gamma_T = 1.2e-2;
};

struct BenchConfig {
    int classes = 8;
    int unseen = 2;
    Eigen::Index feature_dim = 64;
    Eigen::Index word_dim = 16;
    Eigen::Index attr_dim = 16;
    int rank = 0;  // 0 means one basis direction per seen class
    int train_per_class = 30;
    int test_per_class = 25;
    double radius = 5.7;
    double cluster_std = 0.7;
    double semantic_noise = 0.1;

    void validate() const;
};

struct EvalConfig {
    double iou_thresh = 0.5;
    int recall_k = 100;
};

struct PathConfig {
    std::string semantics, features, test_features, taxonomy, ingredients, counts, graphs,
        checkpoint, classifier, synthesized, detections, ground_truth;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    double tau = 0.4;
    TrainConfig train;
    ScheduleConfig schedule;
    BenchConfig bench;
    EvalConfig eval;
    ClassifierFitConfig classifier;
    PathConfig paths;
    bool binary_checkpoint = false;
};

// Paper-scale defaults (tau 0.4, 6 layers, 4 heads, T = 100, lr 1e-5, 500
// synthesized features per class).
PipelineConfig default_config();

// Shrinks to the laptop-friendly setting: a four-step noise ramp with one
// shared denoiser, 32-wide latents, single-column content noise, and a
// higher learning rate over fewer epochs.
void apply_desk_profile(PipelineConfig& config);

// Parses a config document over the given base; unknown keys are ignored,
// malformed values raise ConfigError.
PipelineConfig load_config(const std::string& path, const PipelineConfig& base);

// ---- file helpers ---------------------------------------------------------

std::string read_file(const std::string& path);           // IoError when unreadable
void atomic_write(const std::string& path, const std::string& content);
void ensure_directory(const std::string& path);

// One structured log line on stderr: {"event": name, ...fields}.
void log_event(const std::string& name, const std::vector<std::pair<std::string, std::string>>& fields = {});

// ---- document round-trips -------------------------------------------------

SemanticTable load_semantics(const std::string& path);
void save_semantics(const std::string& path, const SemanticTable& table);

RegionFeatureSet load_features(const std::string& path);
void save_features(const std::string& path, const RegionFeatureSet& set);

ClassTaxonomy load_taxonomy(const std::string& path);
void save_taxonomy(const std::string& path, const ClassTaxonomy& taxonomy);

IngredientTable load_ingredients(const std::string& path);
void save_ingredients(const std::string& path, const IngredientTable& table);

CooccurrenceCounts load_counts(const std::string& path);
void save_counts(const std::string& path, const CooccurrenceCounts& counts);

MultiSourceGraphSet load_graphs(const std::string& path);
void save_graphs(const std::string& path, const MultiSourceGraphSet& graphs);

std::vector<Detection> load_detections(const std::string& path);
std::vector<GroundTruth> load_ground_truth(const std::string& path);

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     const DiffusionSchedule& sched, bool binary);
void load_checkpoint(const std::string& path, ParameterSet& params, DiffusionSchedule& sched);

void save_classifier(const std::string& path, const LinearClassifier& clf);
LinearClassifier load_classifier(const std::string& path);

// ---- report ---------------------------------------------------------------

struct EvalReport {
    std::optional<double> accuracy;
    std::optional<double> seen_accuracy;
    std::optional<double> unseen_accuracy;
    std::optional<double> hm;
    std::optional<double> silhouette_score;
    std::optional<DetectionEvalResult> detection;
    int synthesized_count = 0;
};

std::string report_to_json(const EvalReport& report);
void save_report(const std::string& path, const EvalReport& report);

// ---- benchmark and pipeline -----------------------------------------------

struct BenchArtifacts {
    SemanticTable semantics;
    RegionFeatureSet train_features;  // seen classes only
    RegionFeatureSet test_features;   // all classes
    ClassTaxonomy taxonomy;
    IngredientTable ingredients;
    CooccurrenceCounts counts;
    Matrix class_means;  // classes x feature_dim, row per ascending class id
};

BenchArtifacts generate_synthetic_benchmark(const BenchConfig& config, std::uint64_t seed);

void save_benchmark(const std::string& out_dir, const BenchArtifacts& bench);

// build graphs -> train -> synthesize -> fit classifier -> evaluate; every
// stage writes its artifact under out_dir before the next one starts.
EvalReport run_pipeline(const PipelineConfig& config, const std::string& out_dir);

}  // namespace kefs

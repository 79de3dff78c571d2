#pragma once

// Joint optimization of the synthesizer: adversarial critic with gradient
// penalty, diffusion reconstruction, graph denoising regularizer, plus unseen
// feature synthesis and the linear unseen classifier.

#include "kefs/autodiff.hpp"
#include "kefs/common.hpp"
#include "kefs/data.hpp"
#include "kefs/graphs.hpp"
#include "kefs/msgf.hpp"
#include "kefs/params.hpp"
#include "kefs/rfdm.hpp"

#include <cstdint>
#include <vector>

namespace kefs {

struct TrainConfig {
    KefsDims dims;
    RfdmConfig rfdm;
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double alpha = 0.7;
    double lr = 1e-5;
    int batch_size = 32;
    int epochs = 200;
    int n_critic = 5;
    double gp_weight = 10.0;
    std::uint64_t seed = 0;
    int synth_per_class = 500;
    bool ablate_graph_conditioning = false;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double l_w = 0.0;
    double l_r = 0.0;
    double l_g = 0.0;
    double total = 0.0;
};

struct TrainResult {
    ParameterSet params;
    DiffusionSchedule schedule;
    std::vector<EpochStats> trace;
};

// ---- critic ---------------------------------------------------------------

void init_critic_parameters(ParameterSet& params, const KefsDims& dims, Rng& rng);

inline bool is_critic_param(const std::string& name) { return name.rfind("critic.", 0) == 0; }

// Scalar score per row of concat(feature, condition).
ad::Id critic_score(ad::Tape& tape, const BoundParams& bound, ad::Id features,
                    ad::Id conditions);

// Closed-form gradient of the score w.r.t. the feature inputs, expressed in
// tape ops so its dependence on the critic weights stays differentiable. The
// LeakyReLU masks are held flat (their own derivative is zero a.e.).
ad::Id critic_feature_gradient(ad::Tape& tape, const BoundParams& bound, ad::Id features,
                               ad::Id conditions);

// mean D(fake) - mean D(real) + gp_weight * mean (|grad D at interpolates| - 1)^2.
// `gp_eps` holds one interpolation coefficient per row.
ad::Id critic_loss(ad::Tape& tape, const BoundParams& bound, const Matrix& real,
                   const Matrix& fake, ad::Id conditions, const Vector& gp_eps,
                   double gp_weight);

// -mean D(fake, condition); gradients flow into the fake features.
ad::Id generator_loss(ad::Tape& tape, const BoundParams& bound, ad::Id fake, ad::Id conditions);

// ---- conditioning ---------------------------------------------------------

// First-AdaIN-block rows for every class; the per-class conditioning signal.
ad::Id condition_matrix(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                        const MultiSourceGraphSet& graphs, const Matrix& word_vecs,
                        const Matrix& attr_vecs, const Matrix& z_content, bool ablate);

// Draws content noise from rng and returns one class's conditioning row.
Vector condition_vector(int class_id, const ParameterSet& params, const KefsDims& dims,
                        const MultiSourceGraphSet& graphs, const SemanticTable& semantics,
                        Rng& rng, bool ablate = false);

// ---- total objective ------------------------------------------------------

struct StepNoise {
    Matrix z_content;            // n x noise_dim, shared by the class forward
    std::vector<int> timesteps;  // per record, 1..T
    Matrix z_diffusion;          // m x a
};

struct GeneratorLossIds {
    ad::Id l_w, l_r, l_g, total;
};

// Generator-side objective L_W + lambda1 L_R + lambda2 L_G for one batch of
// real seen features (`class_rows` maps records to class-matrix rows).
GeneratorLossIds total_loss(ad::Tape& tape, const BoundParams& bound,
                            const MultiSourceGraphSet& graphs, const Matrix& word_vecs,
                            const Matrix& attr_vecs, const Matrix& real_features,
                            const std::vector<Eigen::Index>& class_rows,
                            const StepNoise& noise, const DiffusionSchedule& sched,
                            const TrainConfig& config);

// ---- pipeline stages ------------------------------------------------------

TrainResult train_kefs(const RegionFeatureSet& features, const SemanticTable& semantics,
                       const MultiSourceGraphSet& graphs, const TrainConfig& config,
                       const DiffusionSchedule& sched);

RegionFeatureSet synthesize_unseen(const ParameterSet& params, const SemanticTable& semantics,
                                   const MultiSourceGraphSet& graphs, int count_per_class,
                                   Rng& rng, const KefsDims& dims,
                                   const DiffusionSchedule& sched, const RfdmConfig& rfdm,
                                   bool ablate = false);

struct LinearClassifier {
    std::vector<int> class_ids;  // column order
    Matrix W;                    // a x k
    Matrix b;                    // 1 x k

    // Argmax class id; score ties resolve to the earlier column.
    int predict(const Vector& feature) const;
};

struct ClassifierFitConfig {
    double lr = 0.5;
    int max_epochs = 1000;
    double tol = 1e-6;
};

// Full-batch gradient descent on softmax cross-entropy from a zero init.
LinearClassifier fit_unseen_classifier(const RegionFeatureSet& synth,
                                       const ClassifierFitConfig& config);

}  // namespace kefs

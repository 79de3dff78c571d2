#include "kefs/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

namespace kefs {

void TrainConfig::validate() const {
    dims.validate();
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("alpha " + std::to_string(alpha) + " outside [0, 1]");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (batch_size < 1 || epochs < 1 || n_critic < 1 || synth_per_class < 1) {
        throw ConfigError("batch size, epochs, critic steps, and synthesis count must be >= 1");
    }
    if (gp_weight < 0.0) {
        throw ConfigError("gradient penalty weight must be non-negative");
    }
}

void init_critic_parameters(ParameterSet& params, const KefsDims& dims, Rng& rng) {
    const Eigen::Index in = dims.a + dims.e;
    const Eigen::Index hidden = 4 * dims.a;
    params.create("critic.l1.w", in, hidden) = xavier_init(rng, in, hidden);
    params.create("critic.l1.b", 1, hidden);
    params.create("critic.l2.w", hidden, hidden) = xavier_init(rng, hidden, hidden);
    params.create("critic.l2.b", 1, hidden);
    params.create("critic.l3.w", hidden, 1) = xavier_init(rng, hidden, 1);
    params.create("critic.l3.b", 1, 1);
}

namespace {

struct CriticTrace {
    ad::Id pre1, h1, pre2, h2, score;
};

CriticTrace critic_trace(ad::Tape& tape, const BoundParams& bound, ad::Id features,
                         ad::Id conditions) {
    CriticTrace tr;
    ad::Id x = ad::concat_cols(tape, features, conditions);
    tr.pre1 = ad::add_row_broadcast(tape, ad::matmul(tape, x, bound.id("critic.l1.w")),
                                    bound.id("critic.l1.b"));
    tr.h1 = ad::leaky_relu(tape, tr.pre1);
    tr.pre2 = ad::add_row_broadcast(tape, ad::matmul(tape, tr.h1, bound.id("critic.l2.w")),
                                    bound.id("critic.l2.b"));
    tr.h2 = ad::leaky_relu(tape, tr.pre2);
    tr.score = ad::add_row_broadcast(tape, ad::matmul(tape, tr.h2, bound.id("critic.l3.w")),
                                     bound.id("critic.l3.b"));
    return tr;
}

}  // namespace

ad::Id critic_score(ad::Tape& tape, const BoundParams& bound, ad::Id features,
                    ad::Id conditions) {
    return critic_trace(tape, bound, features, conditions).score;
}

ad::Id critic_feature_gradient(ad::Tape& tape, const BoundParams& bound, ad::Id features,
                               ad::Id conditions) {
    CriticTrace tr = critic_trace(tape, bound, features, conditions);
    const Eigen::Index rows = tape.value(features).rows();
    ad::Id m1 = ad::leaky_relu_mask(tape, tr.pre1);
    ad::Id m2 = ad::leaky_relu_mask(tape, tr.pre2);
    ad::Id w3_row = ad::transpose(tape, bound.id("critic.l3.w"));
    ad::Id g2 = ad::hadamard(tape, m2, ad::repeat_row(tape, w3_row, rows));
    ad::Id g1 = ad::hadamard(
        tape, m1, ad::matmul(tape, g2, ad::transpose(tape, bound.id("critic.l2.w"))));
    ad::Id gx = ad::matmul(tape, g1, ad::transpose(tape, bound.id("critic.l1.w")));
    return ad::slice_cols(tape, gx, 0, tape.value(features).cols());
}

ad::Id critic_loss(ad::Tape& tape, const BoundParams& bound, const Matrix& real,
                   const Matrix& fake, ad::Id conditions, const Vector& gp_eps,
                   double gp_weight) {
    if (real.rows() != fake.rows() || real.cols() != fake.cols()) {
        throw InputError("real batch " + std::to_string(real.rows()) + "x" +
                         std::to_string(real.cols()) + " against fake " +
                         std::to_string(fake.rows()) + "x" + std::to_string(fake.cols()));
    }
    if (gp_eps.size() != real.rows()) {
        throw InputError("interpolation coefficients " + std::to_string(gp_eps.size()) +
                         ", expected " + std::to_string(real.rows()));
    }
    ad::Id d_real = critic_score(tape, bound, tape.constant(real), conditions);
    ad::Id d_fake = critic_score(tape, bound, tape.constant(fake), conditions);
    ad::Id wasserstein =
        ad::sub(tape, ad::mean_all(tape, d_fake), ad::mean_all(tape, d_real));
    Matrix interp(real.rows(), real.cols());
    for (Eigen::Index i = 0; i < real.rows(); ++i) {
        interp.row(i) = gp_eps(i) * real.row(i) + (1.0 - gp_eps(i)) * fake.row(i);
    }
    ad::Id grad = critic_feature_gradient(tape, bound, tape.constant(interp), conditions);
    ad::Id norms = ad::sqrt_guard(tape, ad::row_sum(tape, ad::square(tape, grad)));
    ad::Id penalty = ad::mean_all(tape, ad::square(tape, ad::add_const(tape, norms, -1.0)));
    return ad::add(tape, wasserstein, ad::scale(tape, penalty, gp_weight));
}

ad::Id generator_loss(ad::Tape& tape, const BoundParams& bound, ad::Id fake,
                      ad::Id conditions) {
    return ad::neg(tape, ad::mean_all(tape, critic_score(tape, bound, fake, conditions)));
}

ad::Id condition_matrix(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                        const MultiSourceGraphSet& graphs, const Matrix& word_vecs,
                        const Matrix& attr_vecs, const Matrix& z_content, bool ablate) {
    return msgf_forward(tape, bound, dims, graphs, word_vecs, attr_vecs, z_content, ablate)
        .dec.y1;
}

Vector condition_vector(int class_id, const ParameterSet& params, const KefsDims& dims,
                        const MultiSourceGraphSet& graphs, const SemanticTable& semantics,
                        Rng& rng, bool ablate) {
    const Eigen::Index row = semantics.index_of(class_id);
    const Matrix z = rng.normal_matrix(semantics.count(), dims.noise_dim);
    ad::Tape tape;
    BoundParams bound = bind_params(tape, params, false);
    ad::Id cond = condition_matrix(tape, bound, dims, graphs, semantics.word_matrix(),
                                   semantics.attr_matrix(), z, ablate);
    return tape.value(cond).row(row).transpose();
}

GeneratorLossIds total_loss(ad::Tape& tape, const BoundParams& bound,
                            const MultiSourceGraphSet& graphs, const Matrix& word_vecs,
                            const Matrix& attr_vecs, const Matrix& real_features,
                            const std::vector<Eigen::Index>& class_rows,
                            const StepNoise& noise, const DiffusionSchedule& sched,
                            const TrainConfig& config) {
    if (static_cast<Eigen::Index>(class_rows.size()) != real_features.rows()) {
        throw InputError("class row count " + std::to_string(class_rows.size()) +
                         " against batch of " + std::to_string(real_features.rows()));
    }
    MsgfForwardIds fwd =
        msgf_forward(tape, bound, config.dims, graphs, word_vecs, attr_vecs, noise.z_content,
                     config.ablate_graph_conditioning);
    ad::Id cond_rows = ad::gather_rows(tape, fwd.dec.y1, class_rows);
    ad::Id fake_rows = ad::gather_rows(tape, fwd.dec.h, class_rows);

    GeneratorLossIds out;
    out.l_w = generator_loss(tape, bound, fake_rows, cond_rows);
    out.l_r = reconstruction_loss(tape, bound, config.dims, sched, real_features, cond_rows,
                                  noise.timesteps, noise.z_diffusion, config.rfdm);
    if (config.lambda2 > 0.0 && !config.ablate_graph_conditioning) {
        std::vector<int> labels(static_cast<std::size_t>(graphs.n));
        std::iota(labels.begin(), labels.end(), 0);
        out.l_g = graph_denoising_loss(tape, fwd.s, labels, graphs, bound.id("ghead.w"),
                                       config.alpha);
    } else {
        out.l_g = tape.constant(Matrix::Zero(1, 1));
    }
    ad::Id weighted = ad::add(tape, ad::scale(tape, out.l_r, config.lambda1),
                              ad::scale(tape, out.l_g, config.lambda2));
    out.total = ad::add(tape, out.l_w, weighted);
    const char* names[] = {"wasserstein", "reconstruction", "graph", "total"};
    const ad::Id ids[] = {out.l_w, out.l_r, out.l_g, out.total};
    for (int i = 0; i < 4; ++i) {
        if (!std::isfinite(ad::scalar(tape, ids[i]))) {
            throw TrainingError(std::string("non-finite ") + names[i] + " loss term");
        }
    }
    return out;
}

TrainResult train_kefs(const RegionFeatureSet& features, const SemanticTable& semantics,
                       const MultiSourceGraphSet& graphs, const TrainConfig& config,
                       const DiffusionSchedule& sched) {
    config.validate();
    if (features.records.empty()) {
        throw InputError("training needs at least one region feature");
    }
    features.validate(semantics);
    if (semantics.count() != graphs.n) {
        throw InputError("graphs cover " + std::to_string(graphs.n) + " classes, semantics " +
                         std::to_string(semantics.count()));
    }
    if (config.dims.d_w != semantics.word_dim() || config.dims.d_a != semantics.attr_dim()) {
        throw ConfigError("configured semantic dims " + std::to_string(config.dims.d_w) + "/" +
                          std::to_string(config.dims.d_a) + " against table " +
                          std::to_string(semantics.word_dim()) + "/" +
                          std::to_string(semantics.attr_dim()));
    }
    if (features.dim() != config.dims.a) {
        throw ConfigError("feature width " + std::to_string(features.dim()) +
                          ", configured " + std::to_string(config.dims.a));
    }
    std::vector<Eigen::Index> record_rows;
    record_rows.reserve(features.records.size());
    for (const RegionRecord& r : features.records) {
        const Eigen::Index row = semantics.index_of(r.class_id);
        if (!semantics.classes[static_cast<std::size_t>(row)].seen) {
            throw InputError("zero-shot contract violated: training feature labeled with unseen "
                             "class " +
                             std::to_string(r.class_id));
        }
        record_rows.push_back(row);
    }

    Rng rng = make_rng(config.seed);
    Rng rng_init = rng.child(1);
    Rng rng_train = rng.child(2);

    TrainResult result;
    result.schedule = sched;
    init_msgf_parameters(result.params, config.dims, semantics.count(), rng_init);
    init_denoiser_parameters(result.params, config.dims, sched.T,
                             config.rfdm.share_timestep_params, rng_init);
    init_critic_parameters(result.params, config.dims, rng_init);

    // GAN-friendly first-moment decay; the default 0.9 lets the generator
    // overshoot the critic between its updates and the whole game drifts late
    // in training. The critic additionally runs at twice the step size so it
    // keeps pace with the generator even at low n_critic.
    AdamOptimizer::Config opt_cfg;
    opt_cfg.lr = config.lr;
    opt_cfg.beta1 = 0.5;
    AdamOptimizer adam_gen(opt_cfg);
    AdamOptimizer::Config critic_cfg = opt_cfg;
    critic_cfg.lr = 2.0 * config.lr;
    AdamOptimizer adam_critic(critic_cfg);
    const Matrix word = semantics.word_matrix();
    const Matrix attr = semantics.attr_matrix();
    const Eigen::Index m = static_cast<Eigen::Index>(features.records.size());
    const Eigen::Index n = semantics.count();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng_train.shuffle(order);
        EpochStats stats;
        stats.epoch = epoch;
        int steps = 0;
        for (Eigen::Index start = 0; start < m; start += config.batch_size) {
            const Eigen::Index mb = std::min<Eigen::Index>(config.batch_size, m - start);
            Matrix real(mb, config.dims.a);
            std::vector<Eigen::Index> class_rows(static_cast<std::size_t>(mb));
            for (Eigen::Index i = 0; i < mb; ++i) {
                const Eigen::Index rec = order[static_cast<std::size_t>(start + i)];
                real.row(i) =
                    features.records[static_cast<std::size_t>(rec)].feature.transpose();
                class_rows[static_cast<std::size_t>(i)] =
                    record_rows[static_cast<std::size_t>(rec)];
            }

            for (int s = 0; s < config.n_critic; ++s) {
                const Matrix z_content = rng_train.normal_matrix(n, config.dims.noise_dim);
                Vector eps(mb);
                for (Eigen::Index i = 0; i < mb; ++i) {
                    eps(i) = rng_train.uniform();
                }
                ad::Tape tape;
                BoundParams bound = bind_params_where(tape, result.params, is_critic_param);
                MsgfForwardIds fwd =
                    msgf_forward(tape, bound, config.dims, graphs, word, attr, z_content,
                                 config.ablate_graph_conditioning);
                const Matrix fake =
                    tape.value(ad::gather_rows(tape, fwd.dec.h, class_rows));
                const Matrix cond =
                    tape.value(ad::gather_rows(tape, fwd.dec.y1, class_rows));
                ad::Id loss = critic_loss(tape, bound, real, fake, tape.constant(cond), eps,
                                          config.gp_weight);
                if (!std::isfinite(ad::scalar(tape, loss))) {
                    throw TrainingError("non-finite critic loss at epoch " +
                                        std::to_string(epoch));
                }
                tape.backward(loss);
                adam_critic.step(result.params, tape, bound);
            }

            StepNoise noise;
            noise.z_content = rng_train.normal_matrix(n, config.dims.noise_dim);
            noise.timesteps.resize(static_cast<std::size_t>(mb));
            for (Eigen::Index i = 0; i < mb; ++i) {
                noise.timesteps[static_cast<std::size_t>(i)] =
                    static_cast<int>(rng_train.uniform_int(1, sched.T));
            }
            noise.z_diffusion = rng_train.normal_matrix(mb, config.dims.a);

            ad::Tape tape;
            BoundParams bound = bind_params_where(
                tape, result.params, [](const std::string& name) { return !is_critic_param(name); });
            GeneratorLossIds losses = total_loss(tape, bound, graphs, word, attr, real,
                                                 class_rows, noise, sched, config);
            tape.backward(losses.total);
            adam_gen.step(result.params, tape, bound);

            stats.l_w += ad::scalar(tape, losses.l_w);
            stats.l_r += ad::scalar(tape, losses.l_r);
            stats.l_g += ad::scalar(tape, losses.l_g);
            stats.total += ad::scalar(tape, losses.total);
            ++steps;
        }
        stats.l_w /= steps;
        stats.l_r /= steps;
        stats.l_g /= steps;
        stats.total /= steps;
        result.trace.push_back(stats);
    }
    return result;
}

RegionFeatureSet synthesize_unseen(const ParameterSet& params, const SemanticTable& semantics,
                                   const MultiSourceGraphSet& graphs, int count_per_class,
                                   Rng& rng, const KefsDims& dims,
                                   const DiffusionSchedule& sched, const RfdmConfig& rfdm,
                                   bool ablate) {
    if (count_per_class < 1) {
        throw InputError("synthesis count must be >= 1");
    }
    const std::vector<int> unseen = semantics.unseen_ids();
    if (unseen.empty()) {
        throw InputError("semantic table declares no unseen classes");
    }
    RegionFeatureSet out;
    for (int class_id : unseen) {
        for (int i = 0; i < count_per_class; ++i) {
            // fresh content noise per sample: every synthetic instance runs
            // the whole generator, not just the diffusion tail
            const Vector cond =
                condition_vector(class_id, params, dims, graphs, semantics, rng, ablate);
            RegionRecord rec;
            rec.class_id = class_id;
            rec.feature = sample_feature(cond, params, dims, sched, rng, rfdm);
            rec.synthesized = true;
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

int LinearClassifier::predict(const Vector& feature) const {
    const Vector scores = (feature.transpose() * W + b).transpose();
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.size(); ++j) {
        if (scores(j) > scores(best)) {
            best = j;
        }
    }
    return class_ids[static_cast<std::size_t>(best)];
}

LinearClassifier fit_unseen_classifier(const RegionFeatureSet& synth,
                                       const ClassifierFitConfig& config) {
    if (synth.records.empty()) {
        throw InputError("classifier fitting needs features");
    }
    std::set<int> distinct;
    for (const RegionRecord& r : synth.records) {
        distinct.insert(r.class_id);
    }
    if (distinct.size() < 2) {
        throw InputError("classifier fitting needs >= 2 classes, got " +
                         std::to_string(distinct.size()));
    }
    LinearClassifier clf;
    clf.class_ids.assign(distinct.begin(), distinct.end());
    const Eigen::Index m = static_cast<Eigen::Index>(synth.records.size());
    const Eigen::Index a = synth.dim();
    const Eigen::Index k = static_cast<Eigen::Index>(clf.class_ids.size());
    Matrix x(m, a);
    Matrix onehot = Matrix::Zero(m, k);
    for (Eigen::Index i = 0; i < m; ++i) {
        const RegionRecord& r = synth.records[static_cast<std::size_t>(i)];
        if (r.feature.size() != a) {
            throw InputError("feature length " + std::to_string(r.feature.size()) +
                             ", expected " + std::to_string(a));
        }
        x.row(i) = r.feature.transpose();
        const auto col = std::lower_bound(clf.class_ids.begin(), clf.class_ids.end(),
                                          r.class_id) -
                         clf.class_ids.begin();
        onehot(i, static_cast<Eigen::Index>(col)) = 1.0;
    }
    clf.W = Matrix::Zero(a, k);
    clf.b = Matrix::Zero(1, k);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < config.max_epochs; ++it) {
        Matrix logits = (x * clf.W).rowwise() + clf.b.row(0);
        Matrix probs(m, k);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            const double peak = logits.row(i).maxCoeff();
            Eigen::ArrayXd ex = (logits.row(i).array() - peak).exp();
            probs.row(i) = ex / ex.sum();
            for (Eigen::Index j = 0; j < k; ++j) {
                if (onehot(i, j) == 1.0) {
                    loss -= std::log(std::max(probs(i, j), 1e-300));
                }
            }
        }
        loss /= static_cast<double>(m);
        const Matrix delta = (probs - onehot) / static_cast<double>(m);
        clf.W -= config.lr * (x.transpose() * delta);
        clf.b -= config.lr * delta.colwise().sum();
        if (std::abs(prev - loss) < config.tol) {
            break;
        }
        prev = loss;
    }
    return clf;
}

}  // namespace kefs

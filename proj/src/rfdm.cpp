#include "kefs/rfdm.hpp"

#include <cmath>
#include <string>

namespace kefs {

namespace {

void check_timestep(int t, int T) {
    if (t < 1 || t > T) {
        throw InputError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) +
                         "]");
    }
}

}  // namespace

double DiffusionSchedule::gamma_at(int t) const {
    check_timestep(t, T);
    return gamma(t - 1);
}

double DiffusionSchedule::beta_at(int t) const {
    check_timestep(t, T);
    return beta(t - 1);
}

double DiffusionSchedule::beta_bar_at(int t) const {
    if (t == 0) {
        return 1.0;
    }
    check_timestep(t, T);
    return beta_bar(t - 1);
}

DiffusionSchedule make_schedule(int T, double gamma_1, double gamma_T) {
    if (T < 1) {
        throw ConfigError("schedule needs T >= 1, got " + std::to_string(T));
    }
    if (!(gamma_1 > 0.0) || !(gamma_T < 1.0) || gamma_1 > gamma_T) {
        throw ConfigError("noise endpoints need 0 < gamma_1 <= gamma_T < 1, got " +
                          std::to_string(gamma_1) + ", " + std::to_string(gamma_T));
    }
    if (T > 1 && gamma_1 == gamma_T) {
        throw ConfigError("noise ramp must strictly increase: gamma_1 == gamma_T with T > 1");
    }
    DiffusionSchedule sched;
    sched.T = T;
    sched.gamma.resize(T);
    sched.beta.resize(T);
    sched.beta_bar.resize(T);
    double running = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const double g = gamma_1 + (gamma_T - gamma_1) * frac;
        sched.gamma(t - 1) = g;
        sched.beta(t - 1) = 1.0 - g;
        running *= 1.0 - g;
        sched.beta_bar(t - 1) = running;
    }
    return sched;
}

Vector forward_step(const Vector& h_prev, double gamma_t, const Vector& z) {
    if (z.size() != h_prev.size()) {
        throw InputError("noise length " + std::to_string(z.size()) + ", expected " +
                         std::to_string(h_prev.size()));
    }
    return std::sqrt(1.0 - gamma_t) * h_prev + std::sqrt(gamma_t) * z;
}

Vector forward_marginal(const Vector& h_0, int t, const DiffusionSchedule& sched,
                        const Vector& z) {
    const double bb = sched.beta_bar_at(t);
    return std::sqrt(bb) * h_0 + std::sqrt(1.0 - bb) * z;
}

Vector posterior_mean(const Vector& h_t, int t, const Vector& z_pred,
                      const DiffusionSchedule& sched) {
    const double bb = sched.beta_bar_at(t);
    if (1.0 - bb <= 0.0) {
        throw Error("posterior mean undefined: accumulated noise is zero at t = " +
                    std::to_string(t));
    }
    const double gamma_t = sched.gamma_at(t);
    const double beta_t = sched.beta_at(t);
    return (h_t - (gamma_t / std::sqrt(1.0 - bb)) * z_pred) / std::sqrt(beta_t);
}

std::string denoiser_prefix(int t, bool share_timestep_params) {
    return share_timestep_params ? std::string("den.shared") : "den.t" + std::to_string(t);
}

namespace {

Matrix sinusoidal_embedding(int t, Eigen::Index dim) {
    Matrix emb(1, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
        const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
        emb(0, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return emb;
}

ad::Id timestep_embedding(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                          int t, const RfdmConfig& cfg) {
    if (cfg.share_timestep_params) {
        return tape.constant(sinusoidal_embedding(t, dims.temb_dim));
    }
    return ad::gather_rows(tape, bound.id("den.temb"), {static_cast<Eigen::Index>(t - 1)});
}

}  // namespace

void init_denoiser_parameters(ParameterSet& params, const KefsDims& dims, int T,
                              bool share_timestep_params, Rng& rng) {
    if (!share_timestep_params) {
        params.create("den.temb", T, dims.temb_dim) = xavier_init(rng, T, dims.temb_dim);
    }
    const Eigen::Index in = dims.a + dims.e + dims.temb_dim;
    const int sets = share_timestep_params ? 1 : T;
    for (int t = 1; t <= sets; ++t) {
        const std::string p = denoiser_prefix(t, share_timestep_params);
        params.create(p + ".c1.w", in, dims.e) = xavier_init(rng, in, dims.e);
        params.create(p + ".c1.b", 1, dims.e);
        params.create(p + ".c2.w", dims.e, dims.e) = xavier_init(rng, dims.e, dims.e);
        params.create(p + ".c2.b", 1, dims.e);
        params.create(p + ".d1.w", dims.e, dims.e) = xavier_init(rng, dims.e, dims.e);
        params.create(p + ".d1.b", 1, dims.e);
        params.create(p + ".style1.w", dims.e, dims.e) = xavier_init(rng, dims.e, dims.e);
        params.create(p + ".style1.b", 1, dims.e) = rng.normal_matrix(1, dims.e);
        params.create(p + ".d2.w", dims.e, dims.e) = xavier_init(rng, dims.e, dims.e);
        params.create(p + ".d2.b", 1, dims.e);
        params.create(p + ".style2.w", dims.e, dims.e) = xavier_init(rng, dims.e, dims.e);
        params.create(p + ".style2.b", 1, dims.e) = rng.normal_matrix(1, dims.e);
        params.create(p + ".out.w", dims.e, dims.a) = xavier_init(rng, dims.e, dims.a);
        params.create(p + ".out.b", 1, dims.a);
    }
}

ad::Id predict_noise(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                     const DiffusionSchedule& sched, ad::Id h_t, ad::Id condition, int t,
                     const RfdmConfig& cfg) {
    check_timestep(t, sched.T);
    if (tape.value(h_t).cols() != dims.a) {
        throw InputError("feature width " + std::to_string(tape.value(h_t).cols()) +
                         ", expected " + std::to_string(dims.a));
    }
    if (tape.value(condition).cols() != dims.e) {
        throw InputError("condition width " + std::to_string(tape.value(condition).cols()) +
                         ", expected " + std::to_string(dims.e));
    }
    const std::string p = denoiser_prefix(t, cfg.share_timestep_params);
    ad::Id temb = timestep_embedding(tape, bound, dims, t, cfg);
    ad::Id temb_rows = ad::repeat_row(tape, temb, tape.value(h_t).rows());
    ad::Id x = ad::concat_cols(tape, ad::concat_cols(tape, h_t, condition), temb_rows);
    ad::Id h1 = ad::leaky_relu(
        tape, ad::add_row_broadcast(tape, ad::matmul(tape, x, bound.id(p + ".c1.w")),
                                    bound.id(p + ".c1.b")));
    ad::Id content = ad::leaky_relu(
        tape, ad::add_row_broadcast(tape, ad::matmul(tape, h1, bound.id(p + ".c2.w")),
                                    bound.id(p + ".c2.b")));
    return fusion_decode(tape, content, condition, bound, p).h;
}

Vector predict_noise(const ParameterSet& params, const KefsDims& dims,
                     const DiffusionSchedule& sched, const Vector& h_t,
                     const Vector& condition, int t, const RfdmConfig& cfg) {
    ad::Tape tape;
    BoundParams bound = bind_params(tape, params, false);
    ad::Id out = predict_noise(tape, bound, dims, sched, tape.constant(h_t.transpose()),
                               tape.constant(condition.transpose()), t, cfg);
    return tape.value(out).row(0).transpose();
}

Vector reverse_step(const Vector& h_t, int t, const Vector& condition,
                    const ParameterSet& params, const KefsDims& dims,
                    const DiffusionSchedule& sched, Rng& rng, const RfdmConfig& cfg) {
    const Vector z_pred = predict_noise(params, dims, sched, h_t, condition, t, cfg);
    Vector mean = posterior_mean(h_t, t, z_pred, sched);
    if (t == 1) {
        return mean;
    }
    double variance = sched.gamma_at(t);
    if (cfg.variance == ReverseVariance::kPosterior) {
        variance = sched.gamma_at(t) * (1.0 - sched.beta_bar_at(t - 1)) /
                   (1.0 - sched.beta_bar_at(t));
    }
    return mean + std::sqrt(variance) * rng.normal_vector(mean.size());
}

Vector sample_feature(const Vector& condition, const ParameterSet& params,
                      const KefsDims& dims, const DiffusionSchedule& sched, Rng& rng,
                      const RfdmConfig& cfg) {
    Vector h = rng.normal_vector(dims.a);
    for (int t = sched.T; t >= 1; --t) {
        h = reverse_step(h, t, condition, params, dims, sched, rng, cfg);
    }
    return h;
}

ad::Id reconstruction_loss(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                           const DiffusionSchedule& sched, const Matrix& h_0,
                           ad::Id conditions, const std::vector<int>& timesteps,
                           const Matrix& noise, const RfdmConfig& cfg) {
    const Eigen::Index m = h_0.rows();
    if (m == 0) {
        throw InputError("reconstruction loss needs a nonempty batch");
    }
    if (static_cast<Eigen::Index>(timesteps.size()) != m || noise.rows() != m ||
        noise.cols() != h_0.cols() || tape.value(conditions).rows() != m) {
        throw InputError("reconstruction batch pieces disagree: features " + std::to_string(m) +
                         ", timesteps " + std::to_string(timesteps.size()) + ", noise " +
                         std::to_string(noise.rows()) + ", conditions " +
                         std::to_string(tape.value(conditions).rows()));
    }
    for (int t : timesteps) {
        check_timestep(t, sched.T);
    }
    ad::Id total = -1;
    for (int t = 1; t <= sched.T; ++t) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (timesteps[static_cast<std::size_t>(i)] == t) {
                idx.push_back(i);
            }
        }
        if (idx.empty()) {
            continue;
        }
        const double bb = sched.beta_bar_at(t);
        Matrix h_t(static_cast<Eigen::Index>(idx.size()), h_0.cols());
        Matrix z_t(static_cast<Eigen::Index>(idx.size()), h_0.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            h_t.row(static_cast<Eigen::Index>(r)) = std::sqrt(bb) * h_0.row(idx[r]) +
                                                    std::sqrt(1.0 - bb) * noise.row(idx[r]);
            z_t.row(static_cast<Eigen::Index>(r)) = noise.row(idx[r]);
        }
        ad::Id cond_rows = ad::gather_rows(tape, conditions, idx);
        ad::Id z_pred =
            predict_noise(tape, bound, dims, sched, tape.constant(h_t), cond_rows, t, cfg);
        ad::Id diff = ad::sub(tape, tape.constant(z_t), z_pred);
        ad::Id sq_norms = ad::row_sum(tape, ad::square(tape, diff));
        ad::Id group = ad::sum_all(tape, sq_norms);
        total = total < 0 ? group : ad::add(tape, total, group);
    }
    return ad::scale(tape, total, 1.0 / static_cast<double>(m));
}

}  // namespace kefs

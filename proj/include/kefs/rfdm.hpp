#pragma once

// Region feature diffusion: linear noise schedule, forward noising, the
// conditional denoiser (content/AdaIN/decoder block per timestep), reverse
// sampling, and the noise-reconstruction loss.

#include "kefs/autodiff.hpp"
#include "kefs/common.hpp"
#include "kefs/msgf.hpp"
#include "kefs/params.hpp"

#include <string>
#include <vector>

namespace kefs {

struct DiffusionSchedule {
    int T = 0;
    Vector gamma;     // gamma(t-1) = noise scalar at timestep t
    Vector beta;      // 1 - gamma
    Vector beta_bar;  // running products of beta

    double gamma_at(int t) const;
    double beta_at(int t) const;
    double beta_bar_at(int t) const;  // beta_bar_at(0) == 1
};

DiffusionSchedule make_schedule(int T, double gamma_1, double gamma_T);

// h_t = sqrt(1 - gamma_t) h_prev + sqrt(gamma_t) z.
Vector forward_step(const Vector& h_prev, double gamma_t, const Vector& z);

// Closed-form marginal h_t = sqrt(beta_bar_t) h_0 + sqrt(1 - beta_bar_t) z.
Vector forward_marginal(const Vector& h_0, int t, const DiffusionSchedule& sched,
                        const Vector& z);

// mu = (1/sqrt(beta_t)) (h_t - (gamma_t / sqrt(1 - beta_bar_t)) z_pred).
Vector posterior_mean(const Vector& h_t, int t, const Vector& z_pred,
                      const DiffusionSchedule& sched);

enum class ReverseVariance {
    kFixedGamma,  // sigma_t^2 = gamma_t
    kPosterior,   // sigma_t^2 = gamma_t (1 - beta_bar_{t-1}) / (1 - beta_bar_t)
};

struct RfdmConfig {
    bool share_timestep_params = false;
    ReverseVariance variance = ReverseVariance::kFixedGamma;
};

// Parameter name prefix of the denoiser block used at timestep t.
std::string denoiser_prefix(int t, bool share_timestep_params);

void init_denoiser_parameters(ParameterSet& params, const KefsDims& dims, int T,
                              bool share_timestep_params, Rng& rng);

// Batch denoiser forward for one timestep: rows of h_t with matching
// condition rows. Input is concat(h_t, condition, timestep embedding).
ad::Id predict_noise(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                     const DiffusionSchedule& sched, ad::Id h_t, ad::Id condition, int t,
                     const RfdmConfig& cfg);

// Single-vector forward outside any training tape.
Vector predict_noise(const ParameterSet& params, const KefsDims& dims,
                     const DiffusionSchedule& sched, const Vector& h_t,
                     const Vector& condition, int t, const RfdmConfig& cfg);

// One reverse transition; no noise is added at t = 1.
Vector reverse_step(const Vector& h_t, int t, const Vector& condition,
                    const ParameterSet& params, const KefsDims& dims,
                    const DiffusionSchedule& sched, Rng& rng, const RfdmConfig& cfg);

// Full chain from h_T ~ N(0, I) down to the synthesized feature.
Vector sample_feature(const Vector& condition, const ParameterSet& params,
                      const KefsDims& dims, const DiffusionSchedule& sched, Rng& rng,
                      const RfdmConfig& cfg);

// Mean over the batch of squared noise-prediction error; t and z are supplied
// per record so training stays reproducible.
ad::Id reconstruction_loss(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                           const DiffusionSchedule& sched, const Matrix& h_0,
                           ad::Id conditions, const std::vector<int>& timesteps,
                           const Matrix& noise, const RfdmConfig& cfg);

}  // namespace kefs

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kefs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Negative slope shared by every LeakyReLU in the pipeline.
inline constexpr double kLeakyReluSlope = 0.2;
// Variance guard used by AdaIN and layer normalization.
inline constexpr double kAdainEpsilon = 1e-5;
inline constexpr double kLayerNormEpsilon = 1e-5;

// Error hierarchy mirrored by the CLI exit codes: config 2, input 3,
// training 4, io 5.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct InputError : Error {
    using Error::Error;
};
struct TrainingError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

// Deterministic random stream. Everything stochastic in the pipeline pulls
// from one of these, seeded from the single config seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), base_seed_mix_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uniform_int_distribution<std::int64_t> d(lo, hi);
        return d(engine_);
    }

    Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }

    Vector normal_vector(Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; splitmix64 over (seed, salt) so streams for
    // different purposes never overlap.
    Rng child(std::uint64_t salt) const {
        std::uint64_t x = base_seed_mix_ + salt * 0x9e3779b97f4a7c15ULL;
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return Rng(x);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::uint64_t base_seed_mix_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace kefs

#pragma once

// Two-layer graph convolution over a normalized class-correlation matrix.

#include "kefs/autodiff.hpp"
#include "kefs/common.hpp"

namespace kefs {

// E = A_hat * LeakyReLU(A_hat * V * W1) * W2; the activation sits between the
// layers only.
ad::Id graph_convolve(ad::Tape& tape, ad::Id V, ad::Id A_hat, ad::Id W1, ad::Id W2,
                      double slope = kLeakyReluSlope);

// Convenience forward pass outside any training tape.
Matrix graph_convolve(const Matrix& V, const Matrix& A_hat, const Matrix& W1, const Matrix& W2,
                      double slope = kLeakyReluSlope);

}  // namespace kefs

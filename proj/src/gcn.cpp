#include "kefs/gcn.hpp"

namespace kefs {

ad::Id graph_convolve(ad::Tape& tape, ad::Id V, ad::Id A_hat, ad::Id W1, ad::Id W2,
                      double slope) {
    ad::Id hidden = ad::leaky_relu(tape, ad::matmul(tape, ad::matmul(tape, A_hat, V), W1), slope);
    return ad::matmul(tape, ad::matmul(tape, A_hat, hidden), W2);
}

Matrix graph_convolve(const Matrix& V, const Matrix& A_hat, const Matrix& W1, const Matrix& W2,
                      double slope) {
    ad::Tape tape;
    ad::Id out = graph_convolve(tape, tape.constant(V), tape.constant(A_hat), tape.constant(W1),
                                tape.constant(W2), slope);
    return tape.value(out);
}

}  // namespace kefs

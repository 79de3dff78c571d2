#include "kefs/msgf.hpp"

#include "kefs/gcn.hpp"

#include <cmath>
#include <string>

namespace kefs {

void KefsDims::validate() const {
    if (d_w < 1 || d_a < 1) {
        throw ConfigError("semantic dimensions must be positive, got word " +
                          std::to_string(d_w) + ", attribute " + std::to_string(d_a));
    }
    if (d_prime < 1 || z < 1 || d_know < 1 || e < 1 || a < 1 || noise_dim < 1 || temb_dim < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (heads < 1 || layers < 1) {
        throw ConfigError("attention needs heads >= 1 and layers >= 1");
    }
    if (z % heads != 0) {
        throw ConfigError("attention width " + std::to_string(z) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
}

Matrix xavier_init(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    return rng.normal_matrix(rows, cols) * scale;
}

AttentionLayerIds attention_layer_ids(const BoundParams& bound, const std::string& prefix,
                                      int layer) {
    const std::string base = prefix + ".l" + std::to_string(layer) + ".";
    return {bound.id(base + "wq"), bound.id(base + "wk"), bound.id(base + "wv"),
            bound.id(base + "wo")};
}

ad::Id multi_head_attention(ad::Tape& tape, ad::Id q, ad::Id k, ad::Id v,
                            const AttentionLayerIds& w, int heads) {
    const Eigen::Index width = tape.value(q).cols();
    if (tape.value(k).cols() != width || tape.value(v).cols() != width) {
        throw InputError("attention width mismatch: q " + std::to_string(width) + ", k " +
                         std::to_string(tape.value(k).cols()) + ", v " +
                         std::to_string(tape.value(v).cols()));
    }
    if (width % heads != 0) {
        throw InputError("attention width " + std::to_string(width) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    const Eigen::Index dh = width / heads;
    ad::Id qp = ad::matmul(tape, q, w.wq);
    ad::Id kp = ad::matmul(tape, k, w.wk);
    ad::Id vp = ad::matmul(tape, v, w.wv);
    ad::Id merged = -1;
    for (int h = 0; h < heads; ++h) {
        ad::Id qh = ad::slice_cols(tape, qp, h * dh, dh);
        ad::Id kh = ad::slice_cols(tape, kp, h * dh, dh);
        ad::Id vh = ad::slice_cols(tape, vp, h * dh, dh);
        ad::Id scores =
            ad::scale(tape, ad::matmul(tape, qh, ad::transpose(tape, kh)),
                      1.0 / std::sqrt(static_cast<double>(dh)));
        ad::Id weights = ad::softmax_rows(tape, scores);
        ad::Id out = ad::matmul(tape, weights, vh);
        merged = h == 0 ? out : ad::concat_cols(tape, merged, out);
    }
    return ad::matmul(tape, merged, w.wo);
}

ad::Id fuse_graph_embeddings(ad::Tape& tape, ad::Id e_word, ad::Id e_attr,
                             const BoundParams& bound, int layers, int heads) {
    ad::Id stream = e_word;
    for (int l = 1; l <= layers; ++l) {
        ad::Id attn = multi_head_attention(tape, stream, e_attr, e_attr,
                                           attention_layer_ids(bound, "fuse", l), heads);
        stream = ad::layer_norm_rows(tape, ad::add(tape, stream, attn));
    }
    return stream;
}

ad::Id self_attention_encode(ad::Tape& tape, ad::Id x, const BoundParams& bound,
                             const std::string& prefix, int layers, int heads) {
    ad::Id stream = x;
    for (int l = 1; l <= layers; ++l) {
        ad::Id attn = multi_head_attention(tape, stream, stream, stream,
                                           attention_layer_ids(bound, prefix, l), heads);
        stream = ad::layer_norm_rows(tape, ad::add(tape, stream, attn));
    }
    return stream;
}

ad::Id knowledge_encode(ad::Tape& tape, ad::Id queries, ad::Id e_f, ad::Id e_val,
                        const BoundParams& bound, int layers, int heads) {
    ad::Id stream = queries;
    ad::Id last_attn = -1;
    for (int l = 1; l <= layers; ++l) {
        last_attn = multi_head_attention(tape, stream, e_f, e_val,
                                         attention_layer_ids(bound, "know", l), heads);
        stream = ad::layer_norm_rows(tape, ad::add(tape, stream, last_attn));
    }
    return ad::matmul(tape, last_attn, bound.id("know.ws"));
}

ad::Id content_encode(ad::Tape& tape, ad::Id v_w2v, ad::Id z_noise, const BoundParams& bound,
                      const std::string& prefix) {
    ad::Id cat = ad::concat_cols(tape, v_w2v, z_noise);
    ad::Id h1 = ad::leaky_relu(
        tape, ad::add_row_broadcast(tape, ad::matmul(tape, cat, bound.id(prefix + ".c1.w")),
                                    bound.id(prefix + ".c1.b")));
    return ad::leaky_relu(
        tape, ad::add_row_broadcast(tape, ad::matmul(tape, h1, bound.id(prefix + ".c2.w")),
                                    bound.id(prefix + ".c2.b")));
}

FusionDecodeIds fusion_decode(ad::Tape& tape, ad::Id n, ad::Id s, const BoundParams& bound,
                              const std::string& prefix) {
    auto linear = [&](ad::Id x, const std::string& stem) {
        return ad::add_row_broadcast(tape, ad::matmul(tape, x, bound.id(prefix + stem + ".w")),
                                     bound.id(prefix + stem + ".b"));
    };
    FusionDecodeIds out;
    ad::Id u1 = ad::leaky_relu(tape, linear(n, ".d1"));
    out.y1 = ad::adain(tape, u1, linear(s, ".style1"));
    ad::Id u2 = ad::leaky_relu(tape, linear(out.y1, ".d2"));
    out.y2 = ad::adain(tape, u2, linear(s, ".style2"));
    out.h = linear(out.y2, ".out");
    return out;
}

MsgfForwardIds msgf_forward(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                            const MultiSourceGraphSet& graphs, const Matrix& word_vecs,
                            const Matrix& attr_vecs, const Matrix& z_noise,
                            bool ablate_graph_conditioning) {
    const Eigen::Index n = graphs.n;
    if (word_vecs.rows() != n || attr_vecs.rows() != n || z_noise.rows() != n) {
        throw InputError("class count mismatch: graphs " + std::to_string(n) + ", word " +
                         std::to_string(word_vecs.rows()) + ", attr " +
                         std::to_string(attr_vecs.rows()) + ", noise " +
                         std::to_string(z_noise.rows()));
    }
    ad::Id vw = tape.constant(word_vecs);
    ad::Id va = tape.constant(attr_vecs);
    ad::Id a1 = tape.constant(graphs.A1_hat);
    ad::Id a2 = tape.constant(graphs.A2_hat);
    ad::Id a3 = tape.constant(graphs.A3_hat);

    MsgfForwardIds ids;
    ad::Id e2_w = graph_convolve(tape, vw, a2, bound.id("gcn.word.g2.w1"),
                                 bound.id("gcn.word.g2.w2"));
    ad::Id e3_w = graph_convolve(tape, vw, a3, bound.id("gcn.word.g3.w1"),
                                 bound.id("gcn.word.g3.w2"));
    ad::Id e1_a = graph_convolve(tape, va, a1, bound.id("gcn.attr.g1.w1"),
                                 bound.id("gcn.attr.g1.w2"));
    ad::Id e2_a = graph_convolve(tape, va, a2, bound.id("gcn.attr.g2.w1"),
                                 bound.id("gcn.attr.g2.w2"));
    ids.e_word = ad::matmul(tape, ad::add(tape, e2_w, e3_w), bound.id("proj.word"));
    ids.e_attr = ad::matmul(tape, ad::add(tape, e1_a, e2_a), bound.id("proj.attr"));
    ids.e_f = fuse_graph_embeddings(tape, ids.e_word, ids.e_attr, bound, dims.layers,
                                    dims.heads);
    ad::Id value_stream = ad::matmul(tape, e3_w, bound.id("proj.word"));
    ids.e_val = self_attention_encode(tape, value_stream, bound, "vattn", dims.layers,
                                      dims.heads);
    if (ablate_graph_conditioning) {
        ids.s = tape.constant(Matrix::Zero(n, dims.d_know));
    } else {
        ids.s = knowledge_encode(tape, bound.id("know.q"), ids.e_f, ids.e_val, bound,
                                 dims.layers, dims.heads);
    }
    ids.n = content_encode(tape, vw, tape.constant(z_noise), bound, "content");
    ids.dec = fusion_decode(tape, ids.n, ids.s, bound, "dec");
    return ids;
}

ad::Id graph_denoising_loss(ad::Tape& tape, ad::Id s, const std::vector<int>& labels,
                            const MultiSourceGraphSet& graphs, ad::Id head, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("graph denoising alpha " + std::to_string(alpha) + " outside [0, 1]");
    }
    const Eigen::Index n = tape.value(s).rows();
    const Eigen::Index c = tape.value(head).cols();
    if (n != graphs.n || n != c) {
        throw InputError("graph denoising loss needs one row per class: S rows " +
                         std::to_string(n) + ", graph classes " + std::to_string(graphs.n) +
                         ", head columns " + std::to_string(c));
    }
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw InputError("label count " + std::to_string(labels.size()) + ", expected " +
                         std::to_string(n));
    }
    ad::Id logits = ad::matmul(tape, s, head);
    if (!tape.value(logits).allFinite()) {
        throw TrainingError("graph denoising logits non-finite");
    }
    Matrix onehot = Matrix::Zero(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c) {
            throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) +
                             ") at row " + std::to_string(i));
        }
        onehot(i, y) = 1.0;
    }
    ad::Id log_scores = ad::log_sigmoid(tape, logits);
    ad::Id ce_sum = ad::neg(
        tape, ad::sum_all(tape, ad::hadamard(tape, tape.constant(onehot), log_scores)));
    ad::Id scores = ad::sigmoid(tape, logits);
    ad::Id smooth = -1;
    const Matrix* adjacency[3] = {&graphs.A1, &graphs.A2, &graphs.A3};
    for (int k = 0; k < 3; ++k) {
        ad::Id b = ad::matmul(tape, tape.constant(*adjacency[k]), logits);
        ad::Id term = ad::sum_all(tape, ad::hadamard(tape, scores, ad::log_sigmoid(tape, b)));
        smooth = k == 0 ? term : ad::add(tape, smooth, term);
    }
    ad::Id total = ad::add(tape, ad::scale(tape, ce_sum, 3.0), ad::scale(tape, smooth, -alpha));
    return ad::scale(tape, total, 1.0 / (3.0 * static_cast<double>(n)));
}

namespace {

void init_attention_stack(ParameterSet& params, const std::string& prefix, int layers,
                          Eigen::Index width, Rng& rng) {
    for (int l = 1; l <= layers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l) + ".";
        for (const char* piece : {"wq", "wk", "wv", "wo"}) {
            params.create(base + piece, width, width) = xavier_init(rng, width, width);
        }
    }
}

void init_linear(ParameterSet& params, const std::string& stem, Eigen::Index in,
                 Eigen::Index out, Rng& rng, bool normal_bias = false) {
    params.create(stem + ".w", in, out) = xavier_init(rng, in, out);
    params.create(stem + ".b", 1, out) =
        normal_bias ? rng.normal_matrix(1, out) : Matrix::Zero(1, out);
}

}  // namespace

void init_msgf_parameters(ParameterSet& params, const KefsDims& dims, Eigen::Index n_classes,
                          Rng& rng) {
    dims.validate();
    for (const char* graph : {"g2", "g3"}) {
        const std::string base = std::string("gcn.word.") + graph + ".";
        params.create(base + "w1", dims.d_w, dims.d_prime) =
            xavier_init(rng, dims.d_w, dims.d_prime);
        params.create(base + "w2", dims.d_prime, dims.d_w) =
            xavier_init(rng, dims.d_prime, dims.d_w);
    }
    for (const char* graph : {"g1", "g2"}) {
        const std::string base = std::string("gcn.attr.") + graph + ".";
        params.create(base + "w1", dims.d_a, dims.d_prime) =
            xavier_init(rng, dims.d_a, dims.d_prime);
        params.create(base + "w2", dims.d_prime, dims.d_a) =
            xavier_init(rng, dims.d_prime, dims.d_a);
    }
    params.create("proj.word", dims.d_w, dims.z) = xavier_init(rng, dims.d_w, dims.z);
    params.create("proj.attr", dims.d_a, dims.z) = xavier_init(rng, dims.d_a, dims.z);
    init_attention_stack(params, "fuse", dims.layers, dims.z, rng);
    init_attention_stack(params, "vattn", dims.layers, dims.z, rng);
    params.create("know.q", n_classes, dims.z) = rng.normal_matrix(n_classes, dims.z);
    init_attention_stack(params, "know", dims.layers, dims.z, rng);
    params.create("know.ws", dims.z, dims.d_know) = xavier_init(rng, dims.z, dims.d_know);
    init_linear(params, "content.c1", dims.d_w + dims.noise_dim, dims.e, rng);
    init_linear(params, "content.c2", dims.e, dims.e, rng);
    init_linear(params, "dec.d1", dims.e, dims.e, rng);
    init_linear(params, "dec.style1", dims.d_know, dims.e, rng, /*normal_bias=*/true);
    init_linear(params, "dec.d2", dims.e, dims.e, rng);
    init_linear(params, "dec.style2", dims.d_know, dims.e, rng, /*normal_bias=*/true);
    init_linear(params, "dec.out", dims.e, dims.a, rng);
    params.create("ghead.w", dims.d_know, n_classes) = xavier_init(rng, dims.d_know, n_classes);
}

}  // namespace kefs

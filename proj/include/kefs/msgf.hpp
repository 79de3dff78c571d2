#pragma once

// Multi-source graph fusion: per-graph GCN embeddings, attention-based fusion
// into knowledge representations S, content encoding of word vectors with
// noise, and the AdaIN fusion decoder producing instance features H.

#include "kefs/autodiff.hpp"
#include "kefs/common.hpp"
#include "kefs/graphs.hpp"
#include "kefs/params.hpp"

#include <string>
#include <vector>

namespace kefs {

struct KefsDims {
    Eigen::Index d_w = 0;       // word vector length
    Eigen::Index d_a = 0;       // attribute vector length
    Eigen::Index d_prime = 16;  // GCN latent width
    Eigen::Index z = 64;        // embedded/attention width
    Eigen::Index d_know = 64;   // knowledge representation width
    Eigen::Index e = 64;        // content width
    Eigen::Index a = 64;        // instance feature width
    Eigen::Index noise_dim = 16;
    Eigen::Index temb_dim = 8;  // denoiser timestep embedding width
    int heads = 4;
    int layers = 2;             // depth of every attention stack

    void validate() const;  // throws ConfigError on inconsistent values
};

struct AttentionLayerIds {
    ad::Id wq, wk, wv, wo;
};

// Scaled dot-product multi-head attention; all projections bias-free, output
// through wo. Widths of q/k/v must match and divide evenly into heads.
ad::Id multi_head_attention(ad::Tape& tape, ad::Id q, ad::Id k, ad::Id v,
                            const AttentionLayerIds& w, int heads);

AttentionLayerIds attention_layer_ids(const BoundParams& bound, const std::string& prefix,
                                      int layer);

// Cross-attention stack: the word stream queries fixed attribute keys/values,
// residual-added and layer-normalized per layer.
ad::Id fuse_graph_embeddings(ad::Tape& tape, ad::Id e_word, ad::Id e_attr,
                             const BoundParams& bound, int layers, int heads);

// Self-attention encoder over one stream.
ad::Id self_attention_encode(ad::Tape& tape, ad::Id x, const BoundParams& bound,
                             const std::string& prefix, int layers, int heads);

// Learnable queries attend over fused keys and value embeddings; the final
// layer's attention output (before the residual) runs through the bias-free
// projection `know.ws`, so zero keys and values give S = 0.
ad::Id knowledge_encode(ad::Tape& tape, ad::Id queries, ad::Id e_f, ad::Id e_val,
                        const BoundParams& bound, int layers, int heads);

// N = lrelu(FC2(lrelu(FC1(concat(V_w2v, Z))))).
ad::Id content_encode(ad::Tape& tape, ad::Id v_w2v, ad::Id z_noise, const BoundParams& bound,
                      const std::string& prefix);

struct FusionDecodeIds {
    ad::Id y1;  // first AdaIN block output, used as the conditioning vector
    ad::Id y2;
    ad::Id h;   // synthesized instance features
};

// N -> linear+lrelu -> AdaIN(style1(S)) -> linear+lrelu -> AdaIN(style2(S))
// -> linear -> H.
FusionDecodeIds fusion_decode(ad::Tape& tape, ad::Id n, ad::Id s, const BoundParams& bound,
                              const std::string& prefix);

struct MsgfForwardIds {
    ad::Id e_word, e_attr, e_f, e_val, s, n;
    FusionDecodeIds dec;
};

// Full forward pass for all classes in graph order. When `ablate_graph_conditioning`
// is set, S is replaced by zeros so the decoder styles carry no graph signal.
MsgfForwardIds msgf_forward(ad::Tape& tape, const BoundParams& bound, const KefsDims& dims,
                            const MultiSourceGraphSet& graphs, const Matrix& word_vecs,
                            const Matrix& attr_vecs, const Matrix& z_noise,
                            bool ablate_graph_conditioning = false);

// Graph denoising loss over per-class logits L = S * head. `labels` holds the
// target column for each row of S; adjacency matrices are the logical A
// matrices of the graph set.
ad::Id graph_denoising_loss(ad::Tape& tape, ad::Id s, const std::vector<int>& labels,
                            const MultiSourceGraphSet& graphs, ad::Id head, double alpha);

// Creates every MSGF parameter (GCN weights, projections, attention stacks,
// learnable queries, content encoder, fusion decoder, graph head) in a fixed
// order; rng drives the initial values.
void init_msgf_parameters(ParameterSet& params, const KefsDims& dims, Eigen::Index n_classes,
                          Rng& rng);

// Glorot-style scaled normal init.
Matrix xavier_init(Rng& rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace kefs

#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sinkgan/autodiff.hpp"
#include "sinkgan/spectral_graph.hpp"
#include "sinkgan/tensor.hpp"

namespace sinkgan {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

/// Tensors bound onto a tape for one step; each parameter tensor maps to the
/// leaf Var created for it.
struct BoundParams {
    Var of(Tensor& t) const { return vars.at(&t); }
    std::unordered_map<Tensor*, Var> vars;
};

template <typename Model>
BoundParams bind_params(Tape& tape, Model& model, bool trainable) {
    BoundParams bp;
    model.visit_params([&](const std::string&, Tensor& t) {
        bp.vars.emplace(&t, tape.leaf(t, trainable));
    });
    return bp;
}

struct AttentionSpec {
    size_t patch_h = 7;
    size_t patch_w = 7;
    size_t channels = 1;
    size_t heads = 1;
    size_t model_dim = 0;  // 0: defaults to feature_dim()
    std::vector<size_t> head_cutoffs;

    size_t feature_dim() const { return patch_h * patch_w * channels; }
    size_t scaling_dim() const { return model_dim == 0 ? feature_dim() : model_dim; }

    /// Head j gets floor(N/2) + floor(j (N-1-floor(N/2)) / max(1, M-1)),
    /// evenly covering {floor(N/2), ..., N-1}.
    static std::vector<size_t> dynamic_cutoffs(size_t n, size_t m);
};

struct FsgaHeadWeights {
    Tensor wq, wk, wv;    // [F x F] projections
    Tensor sim1, sim2;    // [F x F] similarity maps for the graph build
    static FsgaHeadWeights init(size_t f, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Reusable eigenvector projectors, keyed by (head, sample). Training passes
/// none and rebuilds the graph from the live node values every step; gradient
/// checks pass a cache so the filter stays fixed while parameters are
/// perturbed (the documented stop-gradient boundary).
struct FilterCache {
    std::map<std::pair<const FsgaHeadWeights*, size_t>, Tensor> projector;
};

/// One FSGA head: graph from the node values, high-pass filtered keys,
/// scaled-dot-product attention. The eigenvector projector is a constant of
/// the forward graph, so the adjacency path (sim1/sim2) carries no gradient.
Var fsga_head(const Var& nodes, const BoundParams& bp, FsgaHeadWeights& w, size_t cutoff,
              size_t scaling_dim, FilterCache* cache = nullptr, size_t sample_idx = 0);

struct FsgtWeights {
    AttentionSpec spec;
    std::vector<FsgaHeadWeights> heads;
    Tensor ffn_w;  // [(M F) x F]
    Tensor ffn_b;  // [F]

    /// Cutoffs are assigned dynamically for the node count implied by the map.
    static FsgtWeights init(size_t map_h, size_t map_w, const AttentionSpec& spec, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
    void visit_params(const ParamVisitor& fn) { visit("fsgt", fn); }
};

/// Runs all heads on the node matrix, concatenates along features and applies
/// the 1x1 FFN projection. Returns the delta in node space; the caller adds
/// F_in + patch_merge(delta).
Var multi_head_fsga(const Var& nodes, const BoundParams& bp, FsgtWeights& w,
                    FilterCache* cache = nullptr, size_t sample_idx = 0);

/// Full FSGT block on a [H,W,C] map: partition, multi-head FSGA, merge,
/// residual add.
Var fsgt_forward(const Var& feature_map, const BoundParams& bp, FsgtWeights& w,
                 FilterCache* cache = nullptr, size_t sample_idx = 0);

struct DmrbWeights {
    struct Rcb {
        Tensor fuse_w, fuse_b;    // 1x1 fusion of the dense concatenation
        Tensor conv1_w, conv1_b;  // 3x3
        Tensor conv2_w, conv2_b;  // 3x3
    };
    std::vector<Rcb> rcbs;
    size_t width = 0;

    static DmrbWeights init(size_t channels, size_t n_rcbs, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
    void visit_params(const ParamVisitor& fn) { visit("dmrb", fn); }
};

/// Densely connected residual convolution blocks with an outer skip:
/// out = x + r_R, r_i = u_i + conv(lrelu(conv(u_i))), u_i = fuse(concat(r_<i)).
Var dmrb_forward(const Var& x, const BoundParams& bp, DmrbWeights& w, double slope = 0.2);

struct HtbWeights {
    AttentionSpec spec;
    DmrbWeights dmrb;
    std::vector<FsgaHeadWeights> heads;
    Tensor ffn_w;  // [((M+1) F) x F]: aggregates the DMRB branch and all heads
    Tensor ffn_b;  // [F]

    static HtbWeights init(size_t map_h, size_t map_w, const AttentionSpec& spec, size_t n_rcbs,
                           Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
    void visit_params(const ParamVisitor& fn) { visit("htb", fn); }
};

/// Hybrid block on a [B,H,W,C] batch: the DMRB branch and the M attention
/// heads feed one FFN whose projected delta joins the residual stream, so a
/// zeroed FFN makes the block an exact identity.
Var htb_forward(const Var& x, const BoundParams& bp, HtbWeights& w, double slope = 0.2,
                FilterCache* cache = nullptr);

/// Discriminator spatial attention: sum of |activations| over taps and
/// channels, resized to (out_h, out_w), min-max normalized into [0,1].
/// An all-constant map normalizes to zeros.
Var dsa_map(const std::vector<Var>& taps, size_t out_h, size_t out_w);

/// sigmoid(gain * dsa + bias) with scalar parameters.
Var attention_gate(const Var& dsa, const Var& gain, const Var& bias);

struct AttnBenchRow {
    size_t cutoff = 0;
    uint64_t key_path_multiplies = 0;
    double wall_ms = 0.0;  // advisory; multiplies are the deterministic column
};

/// Instrumented multiply counts of the filtered-key path
/// K_hat = P_bar ((P_bar^T X) W_k) across cutoffs, on one fixed random graph.
std::vector<AttnBenchRow> attention_complexity_bench(size_t grid_n, size_t patch_h,
                                                     size_t patch_w, size_t channels,
                                                     const std::vector<size_t>& cutoffs,
                                                     uint64_t seed);

}  // namespace sinkgan

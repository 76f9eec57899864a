#pragma once

#include <optional>
#include <unordered_map>

#include "sinkgan/fsgt.hpp"

namespace sinkgan {

struct Conv2dWeights {
    Tensor w, b;
    static Conv2dWeights init(size_t kh, size_t kw, size_t cin, size_t cout, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Denoising autoencoder: two 3x3 conv layers per encoder/decoder side, leaky
/// ReLU except the final 1x1 layer. Optionally one HTB in the bottleneck.
struct DenoiseGenerator {
    Conv2dWeights enc1, enc2, dec1, dec2;
    std::optional<HtbWeights> htb;
    size_t width1 = 16, width2 = 32;

    static DenoiseGenerator init(size_t in_channels, size_t width1, size_t width2, bool use_htb,
                                 size_t image_side, size_t htb_heads, Rng& rng);
    void visit_params(const ParamVisitor& fn);
    /// x: [B,H,W,Cin] -> [B,H,W,1]
    Var forward(const BoundParams& bp, const Var& x, double slope = 0.2,
                FilterCache* cache = nullptr);
    /// Conv weight tensors in depth order; the gradient-norm columns track these.
    std::vector<Tensor*> layer_weights();
    std::vector<std::string> layer_names() const;
};

/// Three-layer fully connected discriminator, ReLU hidden activations and a
/// sigmoid output head.
struct MlpDiscriminator {
    Tensor w1, b1, w2, b2, w3, b3;
    size_t in_dim = 0;

    static MlpDiscriminator init(size_t in_dim, size_t hidden1, size_t hidden2, Rng& rng);
    void visit_params(const ParamVisitor& fn);
    /// x: [B, in_dim] -> probabilities [B, 1]
    Var forward(const BoundParams& bp, const Var& x);
};

/// Convolutional discriminator: encoder conv, t DMRBs (one DSA tap each), MLP
/// head with sigmoid. No batch normalization anywhere.
struct ConvDiscriminator {
    Conv2dWeights enc;
    std::vector<DmrbWeights> dmrbs;
    Tensor head_w, head_b;
    size_t width = 0;
    size_t side = 0;

    static ConvDiscriminator init(size_t in_channels, size_t width, size_t taps, size_t n_rcbs,
                                  size_t side, Rng& rng);
    void visit_params(const ParamVisitor& fn);

    struct Output {
        Var prob;                // [B,1]
        std::vector<Var> taps;   // post-activation DMRB outputs, [B,H,W,width]
    };
    Output forward(const BoundParams& bp, const Var& image, double slope = 0.2);
    size_t tap_count() const { return dmrbs.size(); }

    /// DSA map of a single [H,W,Cin] image in [0,1].
    Var spatial_attention(Tape& tape, const BoundParams& bp, const Tensor& image,
                          double slope = 0.2);
};

/// FSGT-based generator: 2-conv encoder, configurable HTB stack, 2-conv
/// decoder (final 1x1, no activation).
struct ToyGenerator {
    Conv2dWeights enc1, enc2, dec1, dec2;
    std::vector<HtbWeights> htbs;
    size_t width = 0;

    static ToyGenerator init(size_t in_channels, size_t out_channels, size_t width,
                             size_t n_htbs, size_t image_side, const AttentionSpec& spec,
                             Rng& rng);
    void visit_params(const ParamVisitor& fn);
    Var forward(const BoundParams& bp, const Var& x, double slope = 0.2,
                FilterCache* cache = nullptr);
};

/// Adam with bias correction; state is keyed by parameter tensor identity.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    template <typename Model>
    void step(Model& model, const BoundParams& bp) {
        ++t_;
        model.visit_params([&](const std::string&, Tensor& p) { update(p, bp.of(p).grad()); });
    }

private:
    void update(Tensor& p, const Tensor& grad);

    struct Moments {
        Tensor m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::unordered_map<Tensor*, Moments> state_;
};

}  // namespace sinkgan

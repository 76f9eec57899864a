#include "sinkgan/fsgt.hpp"

#include <chrono>
#include <cmath>

namespace sinkgan {

std::vector<size_t> AttentionSpec::dynamic_cutoffs(size_t n, size_t m) {
    if (n == 0 || m == 0) throw ContractError("dynamic_cutoffs: n and m must be positive");
    const size_t lo = n / 2;
    const size_t span = (n - 1) - lo;
    std::vector<size_t> ks(m);
    for (size_t j = 0; j < m; ++j) {
        ks[j] = lo + (m == 1 ? 0 : j * span / (m - 1));
    }
    return ks;
}

namespace {

Tensor glorot(std::vector<size_t> shape, size_t fan_in, size_t fan_out, Rng& rng) {
    const double s = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    return random_gaussian(std::move(shape), rng, s);
}

}  // namespace

FsgaHeadWeights FsgaHeadWeights::init(size_t f, Rng& rng) {
    FsgaHeadWeights w;
    w.wq = glorot({f, f}, f, f, rng);
    w.wk = glorot({f, f}, f, f, rng);
    w.wv = glorot({f, f}, f, f, rng);
    w.sim1 = glorot({f, f}, f, f, rng);
    w.sim2 = glorot({f, f}, f, f, rng);
    return w;
}

void FsgaHeadWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".wq", wq);
    fn(prefix + ".wk", wk);
    fn(prefix + ".wv", wv);
    fn(prefix + ".sim1", sim1);
    fn(prefix + ".sim2", sim2);
}

Var fsga_head(const Var& nodes, const BoundParams& bp, FsgaHeadWeights& w, size_t cutoff,
              size_t scaling_dim, FilterCache* cache, size_t sample_idx) {
    const size_t n = nodes.value().dim(0);
    if (cutoff > n - 1) {
        throw ContractError("fsga_head cutoff k=" + std::to_string(cutoff) +
                            " out of range for N=" + std::to_string(n));
    }
    Var q = matmul(nodes, bp.of(w.wq));
    Var v = matmul(nodes, bp.of(w.wv));
    Var khat{};
    if (cutoff == 0) {
        khat = matmul(nodes, bp.of(w.wk));
    } else {
        Tensor pbar;
        const auto key = std::make_pair(static_cast<const FsgaHeadWeights*>(&w), sample_idx);
        if (cache != nullptr && cache->projector.count(key) > 0) {
            pbar = cache->projector.at(key);
        } else {
            const SpectralGraph graph = SpectralGraph::build(nodes.value(), w.sim1, w.sim2);
            pbar = high_projector_columns(graph, cutoff);
            if (cache != nullptr) cache->projector.emplace(key, pbar);
        }
        Var spectral = matmul_const(transpose2d(pbar), nodes);     // [(N-k) x F]
        Var filtered_keys = matmul(spectral, bp.of(w.wk));         // [(N-k) x F]
        khat = matmul_const(pbar, filtered_keys);                  // [N x F]
    }
    Var logits = mul_scalar(matmul(q, transpose(khat)),
                            1.0 / std::sqrt(static_cast<double>(scaling_dim)));
    return matmul(softmax_rows(logits), v);
}

FsgtWeights FsgtWeights::init(size_t map_h, size_t map_w, const AttentionSpec& spec, Rng& rng) {
    FsgtWeights w;
    w.spec = spec;
    const size_t f = spec.feature_dim();
    const size_t gh = (map_h + spec.patch_h - 1) / spec.patch_h;
    const size_t gw = (map_w + spec.patch_w - 1) / spec.patch_w;
    const size_t n = gh * gw;
    if (w.spec.head_cutoffs.empty()) {
        w.spec.head_cutoffs = AttentionSpec::dynamic_cutoffs(n, spec.heads);
    }
    if (w.spec.head_cutoffs.size() != spec.heads) {
        throw ContractError("head_cutoffs size must equal the head count");
    }
    for (size_t j = 0; j < spec.heads; ++j) w.heads.push_back(FsgaHeadWeights::init(f, rng));
    w.ffn_w = glorot({spec.heads * f, f}, spec.heads * f, f, rng);
    w.ffn_b = Tensor::zeros({f});
    return w;
}

void FsgtWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (size_t j = 0; j < heads.size(); ++j) {
        heads[j].visit(prefix + ".head" + std::to_string(j), fn);
    }
    fn(prefix + ".ffn_w", ffn_w);
    fn(prefix + ".ffn_b", ffn_b);
}

Var multi_head_fsga(const Var& nodes, const BoundParams& bp, FsgtWeights& w,
                    FilterCache* cache, size_t sample_idx) {
    if (w.spec.head_cutoffs.size() != w.heads.size()) {
        throw ContractError("head_cutoffs size must equal the head count");
    }
    std::vector<Var> outs;
    outs.reserve(w.heads.size());
    for (size_t j = 0; j < w.heads.size(); ++j) {
        outs.push_back(fsga_head(nodes, bp, w.heads[j], w.spec.head_cutoffs[j],
                                 w.spec.scaling_dim(), cache, sample_idx));
    }
    Var cat = outs.size() == 1 ? outs[0] : concat(outs, 1);
    return add_rowvec(matmul(cat, bp.of(w.ffn_w)), bp.of(w.ffn_b));
}

Var fsgt_forward(const Var& feature_map, const BoundParams& bp, FsgtWeights& w,
                 FilterCache* cache, size_t sample_idx) {
    if (feature_map.value().rank() != 3) {
        throw DimensionError("fsgt_forward expects [H,W,C], got " +
                             feature_map.value().shape_str());
    }
    const size_t h = feature_map.value().dim(0);
    const size_t wd = feature_map.value().dim(1);
    const size_t c = feature_map.value().dim(2);
    Var nodes = patch_partition(feature_map, w.spec.patch_h, w.spec.patch_w);
    Var delta = multi_head_fsga(nodes, bp, w, cache, sample_idx);
    Var merged = patch_merge(delta, w.spec.patch_h, w.spec.patch_w, h, wd, c);
    return add(feature_map, merged);
}

DmrbWeights DmrbWeights::init(size_t channels, size_t n_rcbs, Rng& rng) {
    if (n_rcbs == 0) throw ContractError("DMRB needs at least one RCB");
    DmrbWeights w;
    w.width = channels;
    for (size_t i = 0; i < n_rcbs; ++i) {
        Rcb r;
        const size_t in = channels * (i + 1);
        r.fuse_w = glorot({1, 1, in, channels}, in, channels, rng);
        r.fuse_b = Tensor::zeros({channels});
        r.conv1_w = glorot({3, 3, channels, channels}, 9 * channels, channels, rng);
        r.conv1_b = Tensor::zeros({channels});
        r.conv2_w = glorot({3, 3, channels, channels}, 9 * channels, channels, rng);
        r.conv2_b = Tensor::zeros({channels});
        w.rcbs.push_back(std::move(r));
    }
    return w;
}

void DmrbWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (size_t i = 0; i < rcbs.size(); ++i) {
        const std::string p = prefix + ".rcb" + std::to_string(i);
        fn(p + ".fuse_w", rcbs[i].fuse_w);
        fn(p + ".fuse_b", rcbs[i].fuse_b);
        fn(p + ".conv1_w", rcbs[i].conv1_w);
        fn(p + ".conv1_b", rcbs[i].conv1_b);
        fn(p + ".conv2_w", rcbs[i].conv2_w);
        fn(p + ".conv2_b", rcbs[i].conv2_b);
    }
}

Var dmrb_forward(const Var& x, const BoundParams& bp, DmrbWeights& w, double slope) {
    if (x.value().rank() != 4 || x.value().dim(3) != w.width) {
        throw DimensionError("dmrb_forward expects [B,H,W," + std::to_string(w.width) +
                             "], got " + x.value().shape_str());
    }
    std::vector<Var> grown = {x};
    Var r = x;
    for (auto& rcb : w.rcbs) {
        Var u = grown.size() == 1 ? grown[0] : concat(grown, 3);
        u = conv2d(u, bp.of(rcb.fuse_w), bp.of(rcb.fuse_b));
        Var core = conv2d(leaky_relu(conv2d(u, bp.of(rcb.conv1_w), bp.of(rcb.conv1_b)), slope),
                          bp.of(rcb.conv2_w), bp.of(rcb.conv2_b));
        r = add(u, core);
        grown.push_back(r);
    }
    return add(x, r);
}

HtbWeights HtbWeights::init(size_t map_h, size_t map_w, const AttentionSpec& spec, size_t n_rcbs,
                            Rng& rng) {
    HtbWeights w;
    w.spec = spec;
    const size_t f = spec.feature_dim();
    const size_t gh = (map_h + spec.patch_h - 1) / spec.patch_h;
    const size_t gw = (map_w + spec.patch_w - 1) / spec.patch_w;
    const size_t n = gh * gw;
    if (w.spec.head_cutoffs.empty()) {
        w.spec.head_cutoffs = AttentionSpec::dynamic_cutoffs(n, spec.heads);
    }
    w.dmrb = DmrbWeights::init(spec.channels, n_rcbs, rng);
    for (size_t j = 0; j < spec.heads; ++j) w.heads.push_back(FsgaHeadWeights::init(f, rng));
    w.ffn_w = glorot({(spec.heads + 1) * f, f}, (spec.heads + 1) * f, f, rng);
    w.ffn_b = Tensor::zeros({f});
    return w;
}

void HtbWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
    dmrb.visit(prefix + ".dmrb", fn);
    for (size_t j = 0; j < heads.size(); ++j) {
        heads[j].visit(prefix + ".head" + std::to_string(j), fn);
    }
    fn(prefix + ".ffn_w", ffn_w);
    fn(prefix + ".ffn_b", ffn_b);
}

Var htb_forward(const Var& x, const BoundParams& bp, HtbWeights& w, double slope,
                FilterCache* cache) {
    if (x.value().rank() != 4 || x.value().dim(3) != w.spec.channels) {
        throw DimensionError("htb_forward expects [B,H,W," + std::to_string(w.spec.channels) +
                             "], got " + x.value().shape_str());
    }
    const size_t b = x.value().dim(0), h = x.value().dim(1), wd = x.value().dim(2),
                 c = x.value().dim(3);
    Var dm = dmrb_forward(x, bp, w.dmrb, slope);

    std::vector<Var> outs;
    outs.reserve(b);
    for (size_t bi = 0; bi < b; ++bi) {
        Var xb = reshape(slice(x, {bi, 0, 0, 0}, {1, h, wd, c}), {h, wd, c});
        Var db = reshape(slice(dm, {bi, 0, 0, 0}, {1, h, wd, c}), {h, wd, c});
        Var nodes = patch_partition(xb, w.spec.patch_h, w.spec.patch_w);
        Var dnodes = patch_partition(db, w.spec.patch_h, w.spec.patch_w);

        std::vector<Var> branches = {dnodes};
        for (size_t j = 0; j < w.heads.size(); ++j) {
            branches.push_back(fsga_head(nodes, bp, w.heads[j], w.spec.head_cutoffs[j],
                                         w.spec.scaling_dim(), cache, bi));
        }
        Var cat = concat(branches, 1);
        Var delta = add_rowvec(matmul(cat, bp.of(w.ffn_w)), bp.of(w.ffn_b));
        Var merged = patch_merge(delta, w.spec.patch_h, w.spec.patch_w, h, wd, c);
        outs.push_back(reshape(add(xb, merged), {1, h, wd, c}));
    }
    return outs.size() == 1 ? outs[0] : concat(outs, 0);
}

Var dsa_map(const std::vector<Var>& taps, size_t out_h, size_t out_w) {
    if (taps.empty()) throw ContractError("dsa_map needs at least one tap");
    Var acc{};
    for (const Var& tap : taps) {
        if (tap.value().rank() != 3) {
            throw DimensionError("dsa tap must be [H,W,C], got " + tap.value().shape_str());
        }
        Var m = sum_axis(abs(tap), 2);
        if (m.value().dim(0) != out_h || m.value().dim(1) != out_w) {
            m = bilinear_resize(m, out_h, out_w);
        }
        acc = acc.defined() ? add(acc, m) : m;
    }
    Var lo = reduce_min(acc);
    Var hi = reduce_max(acc);
    if (hi.value()[0] - lo.value()[0] < 1e-12) {
        return mul_scalar(acc, 0.0);  // degenerate constant map -> zeros
    }
    Var shifted = add_scalar_var(acc, neg(lo));
    return div_scalar_var(shifted, sub(hi, lo));
}

Var attention_gate(const Var& dsa, const Var& gain, const Var& bias) {
    return sigmoid(add_scalar_var(mul_scalar_var(dsa, gain), bias));
}

std::vector<AttnBenchRow> attention_complexity_bench(size_t grid_n, size_t patch_h,
                                                     size_t patch_w, size_t channels,
                                                     const std::vector<size_t>& cutoffs,
                                                     uint64_t seed) {
    const size_t f = patch_h * patch_w * channels;
    Rng rng(seed);
    Tensor x = random_gaussian({grid_n, f}, rng);
    Tensor wk = random_gaussian({f, f}, rng, 1.0 / std::sqrt(static_cast<double>(f)));
    Tensor sim1 = random_gaussian({f, f}, rng, 0.1);
    Tensor sim2 = random_gaussian({f, f}, rng, 0.1);
    const SpectralGraph graph = SpectralGraph::build(x, sim1, sim2);

    std::vector<AttnBenchRow> rows;
    for (size_t k : cutoffs) {
        const Tensor pbar = high_projector_columns(graph, k);
        const auto t0 = std::chrono::steady_clock::now();
        const uint64_t before = opcount::get();
        const Tensor spectral = matmul(transpose2d(pbar), x);
        const Tensor keys = matmul(spectral, wk);
        const Tensor khat = matmul(pbar, keys);
        const uint64_t after = opcount::get();
        const auto t1 = std::chrono::steady_clock::now();
        (void)khat;
        AttnBenchRow row;
        row.cutoff = k;
        row.key_path_multiplies = after - before;
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rows.push_back(row);
    }
    return rows;
}

}  // namespace sinkgan

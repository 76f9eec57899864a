#pragma once

#include <string>
#include <vector>

#include "sinkgan/dataset.hpp"
#include "sinkgan/losses.hpp"
#include "sinkgan/tensor.hpp"

namespace sinkgan {

/// Flat key = value experiment configuration. The seed fully determines every
/// random draw of a run; unknown keys are rejected.
struct ExperimentConfig {
    std::string dataset = "synthetic";  // synthetic | idx
    std::string idx_images;
    std::string idx_labels;
    size_t train_count = 2000;
    size_t test_count = 500;
    size_t image_side = 16;
    double noise_sigma = 0.3;
    size_t batch_size = 64;
    double lr_g = 0.001;
    double lr_d = 0.001;
    size_t max_epochs = 40;
    double convergence_mse = 0.04;
    double epsilon = 0.1;
    size_t sinkhorn_iters = 10;
    double sinkhorn_exponent = 2.0;
    bool self_term_gradient = true;
    // Divide the OT cost by the pixel count (atoms scaled by 1/sqrt(d)), so an
    // epsilon value selects the same coupling regime at any image size.
    bool ot_dim_normalized = true;
    LossWeights weights{1.0, 0.05, 1.0, 1.0, 0.0};  // denoising defaults
    uint64_t seed = 1;
    std::string mode = "sinkhorn-gan";  // sinkhorn-gan | plain-gan
    size_t d_updates_per_g = 1;
    bool use_htb = false;
    size_t htb_heads = 2;
    size_t gen_width1 = 16;
    size_t gen_width2 = 32;
    size_t disc_hidden1 = 1024;
    size_t disc_hidden2 = 256;
    double grad_ema_decay = 0.9;
    std::vector<double> sweep_epsilons = {0.001, 0.1, 1000.0};
    std::vector<size_t> ot_bench_sizes = {1, 2, 4, 6, 8};
    std::vector<double> ot_bench_epsilons = {0.001, 0.01, 0.1, 1.0};
    size_t attn_grid_n = 64;
    size_t attn_patch = 7;
    size_t attn_channels = 8;

    static ExperimentConfig from_file(const std::string& path);
    void apply_line(const std::string& line, const std::string& context);
    void validate() const;
};

struct MetricsRecord {
    size_t step = 0;   // cumulative generator updates
    size_t epoch = 0;  // 1-based
    double loss_total = 0.0, loss_p = 0.0, loss_ssim = 0.0, loss_adv = 0.0, loss_ot = 0.0;
    double test_mse = 0.0;
    std::vector<double> grad_norms;  // per generator layer, moving-averaged
    double work_units = 0.0;         // cumulative multiplies / 1e6 (deterministic)
};

struct RunSummary {
    size_t epochs_to_threshold = 0;  // max_epochs when never reached
    bool converged = false;
    double final_test_mse = 0.0;
    double near_optimal_hidden_grad = 0.0;  // mean over the final 10% of steps
    uint64_t sinkhorn_solves = 0;
    size_t total_steps = 0;
    std::vector<MetricsRecord> records;
};

/// Trains the denoising GAN per config; writes metrics.csv and summary.csv
/// under out_dir unless it is empty. Deterministic for a (config, seed) pair.
RunSummary run_denoising(const ExperimentConfig& config, const std::string& out_dir);

struct EpsSummary {
    double epsilon = 0.0;
    RunSummary run;
};

/// Runs run_denoising once per epsilon (>= 2 required) with identical seeds
/// and data pipeline; writes per-arm metrics under out_dir/eps_<i> and a
/// sweep-level summary.csv.
std::vector<EpsSummary> epsilon_sweep(const ExperimentConfig& config,
                                      const std::vector<double>& epsilons,
                                      const std::string& out_dir);

/// Largest singular value via power iteration (tol 1e-9, deterministic
/// start, 300-iteration cap). Rank-2 inputs are used as-is; rank > 2 is
/// flattened to [dim0, rest]. Zero matrices return 0.
double grad_spectral_norm(const Tensor& g);

/// [kh,kw,ci,co] conv gradients as the [out-features x in-features] matrix
/// the per-layer norm summaries are defined on.
Tensor conv_grad_matrix(const Tensor& g);

struct OtBenchRow {
    size_t n = 0;
    double epsilon = 0.0;
    double cost_value = 0.0;
    double lp_cost = 0.0;
    double rel_error = 0.0;
    int iterations = 0;
    double residual = 0.0;
    uint64_t multiplies = 0;
};

/// Deterministic solver benchmark over problem sizes and epsilons; the LP
/// error column is filled for n <= 8.
std::vector<OtBenchRow> ot_bench(const std::vector<size_t>& sizes,
                                 const std::vector<double>& epsilons, uint64_t seed,
                                 const std::string& out_dir);

/// Key-path complexity table (delegates to attention_complexity_bench) plus
/// CSV output.
void attn_bench(size_t grid_n, size_t patch, size_t channels, uint64_t seed,
                const std::string& out_dir);

/// Gradient-check suite over primitives, losses and the OT path; prints one
/// line per check. Returns the number of failures.
int check_grads(uint64_t seed);

/// Keeps large training buffers on the heap instead of per-step mmap
/// round-trips. Call once from binary entry points.
void tune_allocator_for_training();

}  // namespace sinkgan

#include "sinkgan/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sinkgan/fsgt.hpp"
#include "sinkgan/gradcheck.hpp"
#include "sinkgan/networks.hpp"
#include "sinkgan/ot_lp.hpp"
#include "sinkgan/sinkhorn.hpp"

namespace sinkgan {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<double> parse_double_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<size_t> parse_size_list(const std::string& v) {
    std::vector<size_t> out;
    for (double d : parse_double_list(v)) out.push_back(static_cast<size_t>(d));
    return out;
}

bool parse_bool(const std::string& v, const std::string& context) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw FormatError(context + ": expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Named sub-stream tags for seed derivation.
enum SeedTag : uint64_t {
    kTrainData = 1,
    kTestData = 2,
    kTestNoise = 3,
    kInitG = 4,
    kInitD = 5,
    kShuffle = 6,
    kBatchNoise = 7,
};

}  // namespace

void ExperimentConfig::apply_line(const std::string& raw, const std::string& context) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') return;
    const size_t pos = line.find('=');
    if (pos == std::string::npos) {
        throw FormatError(context + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, pos));
    const std::string value = trim(line.substr(pos + 1));

    if (key == "dataset") {
        dataset = value;
    } else if (key == "idx_images") {
        idx_images = value;
    } else if (key == "idx_labels") {
        idx_labels = value;
    } else if (key == "train_count") {
        train_count = std::stoul(value);
    } else if (key == "test_count") {
        test_count = std::stoul(value);
    } else if (key == "image_side") {
        image_side = std::stoul(value);
    } else if (key == "noise_sigma") {
        noise_sigma = std::stod(value);
    } else if (key == "batch_size") {
        batch_size = std::stoul(value);
    } else if (key == "lr_g") {
        lr_g = std::stod(value);
    } else if (key == "lr_d") {
        lr_d = std::stod(value);
    } else if (key == "max_epochs") {
        max_epochs = std::stoul(value);
    } else if (key == "convergence_mse") {
        convergence_mse = std::stod(value);
    } else if (key == "epsilon") {
        epsilon = std::stod(value);
    } else if (key == "sinkhorn_iters") {
        sinkhorn_iters = std::stoul(value);
    } else if (key == "sinkhorn_exponent") {
        sinkhorn_exponent = std::stod(value);
    } else if (key == "self_term_gradient") {
        self_term_gradient = parse_bool(value, context);
    } else if (key == "ot_dim_normalized") {
        ot_dim_normalized = parse_bool(value, context);
    } else if (key == "lambda_p") {
        weights.lambda_p = std::stod(value);
    } else if (key == "lambda_ssim") {
        weights.lambda_ssim = std::stod(value);
    } else if (key == "lambda_adv") {
        weights.lambda_adv = std::stod(value);
    } else if (key == "lambda_ot") {
        weights.lambda_ot = std::stod(value);
    } else if (key == "lambda_da") {
        weights.lambda_da = std::stod(value);
    } else if (key == "seed") {
        seed = std::stoull(value);
    } else if (key == "mode") {
        mode = value;
    } else if (key == "d_updates_per_g") {
        d_updates_per_g = std::stoul(value);
    } else if (key == "use_htb") {
        use_htb = parse_bool(value, context);
    } else if (key == "htb_heads") {
        htb_heads = std::stoul(value);
    } else if (key == "gen_width1") {
        gen_width1 = std::stoul(value);
    } else if (key == "gen_width2") {
        gen_width2 = std::stoul(value);
    } else if (key == "disc_hidden1") {
        disc_hidden1 = std::stoul(value);
    } else if (key == "disc_hidden2") {
        disc_hidden2 = std::stoul(value);
    } else if (key == "grad_ema_decay") {
        grad_ema_decay = std::stod(value);
    } else if (key == "sweep_epsilons") {
        sweep_epsilons = parse_double_list(value);
    } else if (key == "ot_bench_sizes") {
        ot_bench_sizes = parse_size_list(value);
    } else if (key == "ot_bench_epsilons") {
        ot_bench_epsilons = parse_double_list(value);
    } else if (key == "attn_grid_n") {
        attn_grid_n = std::stoul(value);
    } else if (key == "attn_patch") {
        attn_patch = std::stoul(value);
    } else if (key == "attn_channels") {
        attn_channels = std::stoul(value);
    } else {
        throw FormatError(context + ": unknown config key '" + key + "'");
    }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        cfg.apply_line(line, path + ":" + std::to_string(lineno));
    }
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (dataset != "synthetic" && dataset != "idx") {
        throw ContractError("dataset must be 'synthetic' or 'idx'");
    }
    if (mode != "sinkhorn-gan" && mode != "plain-gan") {
        throw ContractError("mode must be 'sinkhorn-gan' or 'plain-gan'");
    }
    if (max_epochs < 1) throw ContractError("max_epochs must be >= 1");
    if (!(convergence_mse > 0.0)) throw ContractError("convergence_mse must be positive");
    if (batch_size < 2) throw ContractError("batch_size must be >= 2");
    if (train_count < batch_size) throw ContractError("train_count must cover one batch");
    if (test_count < 1) throw ContractError("test_count must be >= 1");
    if (image_side < 8) throw ContractError("image_side must be >= 8");
    if (!(epsilon > 0.0)) throw ContractError("epsilon must be positive");
    if (sinkhorn_iters < 1) throw ContractError("sinkhorn_iters must be >= 1");
    if (d_updates_per_g < 1) throw ContractError("d_updates_per_g must be >= 1");
    if (!(grad_ema_decay >= 0.0 && grad_ema_decay < 1.0)) {
        throw ContractError("grad_ema_decay must lie in [0, 1)");
    }
    weights.validate();
}

// [kh,kw,ci,co] conv gradient as the [co x kh*kw*ci] matrix the spectral-norm
// summary is defined on; matrices pass through unchanged.
Tensor conv_grad_matrix(const Tensor& g) {
    if (g.rank() != 4) return g;
    const size_t kh = g.dim(0), kw = g.dim(1), ci = g.dim(2), co = g.dim(3);
    Tensor m({co, kh * kw * ci});
    for (size_t o = 0; o < co; ++o) {
        size_t col = 0;
        for (size_t a = 0; a < kh; ++a)
            for (size_t b = 0; b < kw; ++b)
                for (size_t c = 0; c < ci; ++c) m.at(o, col++) = g.at(a, b, c, o);
    }
    return m;
}

double grad_spectral_norm(const Tensor& g) {
    if (g.numel() == 0 || g.max_abs() == 0.0) return 0.0;
    const size_t rows = g.rank() >= 1 ? g.dim(0) : 1;
    const size_t cols = g.numel() / rows;

    // Power iteration on G^T G with a deterministic start; sigma = ||G v||
    // for the unit iterate v.
    std::vector<double> v(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> u(rows, 0.0);
    std::vector<double> w(cols, 0.0);
    double sigma = 0.0;
    // 300-iteration cap: 50 is not always enough to hit the 1e-6 oracle
    // agreement when the top singular values are close.
    for (int it = 0; it < 300; ++it) {
        for (size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            const double* grow = g.data() + i * cols;
            for (size_t j = 0; j < cols; ++j) s += grow[j] * v[j];
            u[i] = s;
        }
        double next = 0.0;
        for (double x : u) next += x * x;
        next = std::sqrt(next);
        if (next == 0.0) return 0.0;

        std::fill(w.begin(), w.end(), 0.0);
        for (size_t i = 0; i < rows; ++i) {
            const double* grow = g.data() + i * cols;
            for (size_t j = 0; j < cols; ++j) w[j] += grow[j] * u[i];
        }
        double wnorm = 0.0;
        for (double x : w) wnorm += x * x;
        wnorm = std::sqrt(wnorm);
        if (wnorm == 0.0) return next;
        for (size_t j = 0; j < cols; ++j) v[j] = w[j] / wnorm;

        if (std::fabs(next - sigma) <= 1e-9 * std::max(1.0, next)) return next;
        sigma = next;
    }
    return sigma;
}

namespace {

struct Batch {
    Tensor clean;  // [B, side, side, 1]
    Tensor noisy;
};

Batch make_batch(const Dataset& data, const std::vector<size_t>& order, size_t start, size_t b,
                 size_t side, double sigma, Rng& noise_rng) {
    Batch out;
    out.clean = Tensor({b, side, side, 1});
    out.noisy = Tensor({b, side, side, 1});
    for (size_t i = 0; i < b; ++i) {
        const Tensor& img = data.images[order[start + i]];
        for (size_t p = 0; p < img.numel(); ++p) {
            const double c = img[p];
            out.clean[i * img.numel() + p] = c;
            const double n = c + sigma * noise_rng.gaussian();
            out.noisy[i * img.numel() + p] = std::min(1.0, std::max(0.0, n));
        }
    }
    return out;
}

double evaluate_test_mse(DenoiseGenerator& gen, const std::vector<Tensor>& noisy,
                         const std::vector<Tensor>& clean, size_t side, size_t chunk) {
    double total = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < noisy.size(); start += chunk) {
        const size_t b = std::min(chunk, noisy.size() - start);
        Tensor in({b, side, side, 1});
        for (size_t i = 0; i < b; ++i) {
            const Tensor& img = noisy[start + i];
            std::copy(img.data(), img.data() + img.numel(), in.data() + i * img.numel());
        }
        Tape tape;
        BoundParams bp = bind_params(tape, gen, false);
        const Tensor& pred = gen.forward(bp, tape.constant(in)).value();
        for (size_t i = 0; i < b; ++i) {
            const Tensor& ref = clean[start + i];
            for (size_t p = 0; p < ref.numel(); ++p) {
                const double d = pred[i * ref.numel() + p] - ref[p];
                total += d * d;
            }
            ++count;
        }
    }
    return total / (static_cast<double>(count) * side * side);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records,
                       size_t layers) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path);
    f << "step,epoch,loss_total,loss_p,loss_ssim,loss_adv,loss_ot,test_mse";
    for (size_t i = 0; i < layers; ++i) f << ",grad_norm_layer_" << i;
    f << ",wall_ms\n";
    for (const MetricsRecord& r : records) {
        f << r.step << "," << r.epoch << "," << fmt(r.loss_total) << "," << fmt(r.loss_p) << ","
          << fmt(r.loss_ssim) << "," << fmt(r.loss_adv) << "," << fmt(r.loss_ot) << ","
          << fmt(r.test_mse);
        for (double g : r.grad_norms) f << "," << fmt(g);
        f << "," << fmt(r.work_units) << "\n";
    }
}

void write_summary_csv(const std::string& path, const ExperimentConfig& cfg,
                       const std::vector<EpsSummary>& rows) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path);
    f << "mode,epsilon,seed,epochs_to_threshold,converged,final_test_mse,"
         "near_optimal_hidden_grad,sinkhorn_solves,total_steps\n";
    for (const EpsSummary& e : rows) {
        f << cfg.mode << "," << fmt(e.epsilon) << "," << cfg.seed << ","
          << e.run.epochs_to_threshold << "," << (e.run.converged ? 1 : 0) << ","
          << fmt(e.run.final_test_mse) << "," << fmt(e.run.near_optimal_hidden_grad) << ","
          << e.run.sinkhorn_solves << "," << e.run.total_steps << "\n";
    }
}

}  // namespace

RunSummary run_denoising(const ExperimentConfig& config, const std::string& out_dir) {
    config.validate();
    const size_t side = config.image_side;

    Dataset train, test;
    if (config.dataset == "synthetic") {
        train = synth_dataset(config.train_count, side, mix_seed(config.seed, kTrainData));
        test = synth_dataset(config.test_count, side, mix_seed(config.seed, kTestData));
    } else {
        Dataset all = load_idx(config.idx_images, config.idx_labels);
        if (all.images.size() < config.train_count + config.test_count) {
            throw ContractError("IDX dataset holds " + std::to_string(all.images.size()) +
                                " images, need train+test = " +
                                std::to_string(config.train_count + config.test_count));
        }
        if (all.side != side) {
            throw ContractError("IDX image side " + std::to_string(all.side) +
                                " does not match configured image_side " + std::to_string(side));
        }
        train.side = test.side = all.side;
        train.images.assign(all.images.begin(), all.images.begin() + config.train_count);
        test.images.assign(all.images.begin() + config.train_count,
                           all.images.begin() + config.train_count + config.test_count);
    }

    // Fixed test-noise realization: the evaluation target is stable across
    // epochs and identical for every sweep arm under one seed.
    std::vector<Tensor> test_noisy(test.images.size());
    {
        Rng rng(mix_seed(config.seed, kTestNoise));
        for (size_t i = 0; i < test.images.size(); ++i) {
            Tensor n = test.images[i];
            for (size_t p = 0; p < n.numel(); ++p) {
                n[p] = std::min(1.0, std::max(0.0, n[p] + config.noise_sigma * rng.gaussian()));
            }
            test_noisy[i] = std::move(n);
        }
    }

    Rng init_g(mix_seed(config.seed, kInitG));
    Rng init_d(mix_seed(config.seed, kInitD));
    DenoiseGenerator gen = DenoiseGenerator::init(1, config.gen_width1, config.gen_width2,
                                                  config.use_htb, side, config.htb_heads, init_g);
    MlpDiscriminator disc =
        MlpDiscriminator::init(side * side, config.disc_hidden1, config.disc_hidden2, init_d);

    Adam adam_g(config.lr_g);
    Adam adam_d(config.lr_d);

    LossWeights w = config.weights;
    const bool use_ot = config.mode == "sinkhorn-gan";
    if (!use_ot) w.lambda_ot = 0.0;
    if (w.lambda_da != 0.0) {
        throw ContractError("denoising discriminator has no spatial-attention branch; "
                            "lambda_da must be 0");
    }

    const std::vector<Tensor*> layer_ws = gen.layer_weights();
    const size_t n_layers = layer_ws.size();
    std::vector<double> grad_ema(n_layers, 0.0);
    bool ema_started = false;
    std::vector<double> hidden_history;

    const uint64_t solves_before = sinkhorn_stats::solve_calls();
    const uint64_t work_before = opcount::get();
    const size_t steps_per_epoch = config.train_count / config.batch_size;
    if (steps_per_epoch == 0) throw ContractError("train_count must cover one batch");

    RunSummary summary;
    summary.epochs_to_threshold = config.max_epochs;
    size_t global_step = 0;

    for (size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<size_t> order(config.train_count);
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix_seed(config.seed, mix_seed(kShuffle, epoch)));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        }

        double ep_total = 0.0, ep_p = 0.0, ep_ssim = 0.0, ep_adv = 0.0, ep_ot = 0.0;
        for (size_t b = 0; b < steps_per_epoch; ++b) {
            Rng noise_rng(
                mix_seed(config.seed, mix_seed(kBatchNoise, mix_seed(epoch, b))));
            Batch batch = make_batch(train, order, b * config.batch_size, config.batch_size,
                                     side, config.noise_sigma, noise_rng);

            // Generator step: discriminator parameters are frozen leaves.
            Tape tape;
            BoundParams bp_g = bind_params(tape, gen, true);
            BoundParams bp_d = bind_params(tape, disc, false);
            Var noisy = tape.constant(batch.noisy);
            Var clean = tape.constant(batch.clean);
            Var pred = gen.forward(bp_g, noisy);
            Var pred_flat = reshape(pred, {config.batch_size, side * side});

            GeneratorLossParts parts;
            parts.pixel = pixel_loss(pred, clean);
            if (w.lambda_ssim != 0.0) parts.ssim = ssim_loss(pred, clean);
            if (w.lambda_adv != 0.0) {
                parts.adversarial = adv_generator_loss(disc.forward(bp_d, pred_flat));
            }
            if (use_ot && w.lambda_ot != 0.0) {
                const double atom_scale =
                    config.ot_dim_normalized
                        ? std::pow(static_cast<double>(side * side),
                                   -1.0 / config.sinkhorn_exponent)
                        : 1.0;
                parts.ot = ot_divergence_loss(
                    mul_scalar(pred_flat, atom_scale),
                    scale(batch.clean.reshaped({config.batch_size, side * side}), atom_scale),
                    config.epsilon, static_cast<int>(config.sinkhorn_iters),
                    config.sinkhorn_exponent, config.self_term_gradient);
            }
            Var g_loss = generator_objective(parts, w);
            if (!std::isfinite(g_loss.value()[0])) {
                throw NumericalError("training diverged (NaN loss) at epoch " +
                                     std::to_string(epoch) + " step " +
                                     std::to_string(global_step) + "; last test mse " +
                                     fmt(summary.final_test_mse));
            }
            tape.backward(g_loss);

            for (size_t li = 0; li < n_layers; ++li) {
                const double sn = grad_spectral_norm(conv_grad_matrix(bp_g.of(*layer_ws[li]).grad()));
                grad_ema[li] = ema_started
                                   ? config.grad_ema_decay * grad_ema[li] +
                                         (1.0 - config.grad_ema_decay) * sn
                                   : sn;
            }
            ema_started = true;
            double hidden_mean = 0.0;
            for (size_t li = 1; li + 1 < n_layers; ++li) hidden_mean += grad_ema[li];
            hidden_mean /= static_cast<double>(n_layers - 2);
            hidden_history.push_back(hidden_mean);

            adam_g.step(gen, bp_g);

            // Discriminator step(s): sequential scheme, the fake batch is a
            // fresh detached forward of the just-updated generator.
            Tensor fake_values;
            {
                Tape ftape;
                BoundParams bp_f = bind_params(ftape, gen, false);
                fake_values = gen.forward(bp_f, ftape.constant(batch.noisy)).value();
            }
            for (size_t du = 0; du < config.d_updates_per_g; ++du) {
                Tape dtape;
                BoundParams bp_d2 = bind_params(dtape, disc, true);
                Var d_real = disc.forward(
                    bp_d2, dtape.constant(batch.clean.reshaped({config.batch_size, side * side})));
                Var d_fake = disc.forward(
                    bp_d2,
                    dtape.constant(fake_values.reshaped({config.batch_size, side * side})));
                Var d_loss = discriminator_objective(d_real, d_fake, Var{}, w);
                if (!std::isfinite(d_loss.value()[0])) {
                    throw NumericalError("discriminator diverged (NaN loss) at epoch " +
                                         std::to_string(epoch));
                }
                dtape.backward(d_loss);
                adam_d.step(disc, bp_d2);
            }

            ++global_step;
            ep_total += g_loss.value()[0];
            ep_p += parts.pixel.value()[0];
            ep_ssim += parts.ssim.defined() ? parts.ssim.value()[0] : 0.0;
            ep_adv += parts.adversarial.defined() ? parts.adversarial.value()[0] : 0.0;
            ep_ot += parts.ot.defined() ? parts.ot.value()[0] : 0.0;
        }

        MetricsRecord rec;
        rec.step = global_step;
        rec.epoch = epoch;
        const double inv = 1.0 / static_cast<double>(steps_per_epoch);
        rec.loss_total = ep_total * inv;
        rec.loss_p = ep_p * inv;
        rec.loss_ssim = ep_ssim * inv;
        rec.loss_adv = ep_adv * inv;
        rec.loss_ot = ep_ot * inv;
        rec.test_mse =
            evaluate_test_mse(gen, test_noisy, test.images, side, config.batch_size);
        rec.grad_norms = grad_ema;
        rec.work_units = static_cast<double>(opcount::get() - work_before) / 1e6;
        summary.records.push_back(rec);
        summary.final_test_mse = rec.test_mse;

        if (!summary.converged && rec.test_mse <= config.convergence_mse) {
            summary.converged = true;
            summary.epochs_to_threshold = epoch;
            break;
        }
    }

    summary.total_steps = global_step;
    summary.sinkhorn_solves = sinkhorn_stats::solve_calls() - solves_before;
    const size_t tail = std::max<size_t>(1, hidden_history.size() / 10);
    double acc = 0.0;
    for (size_t i = hidden_history.size() - tail; i < hidden_history.size(); ++i) {
        acc += hidden_history[i];
    }
    summary.near_optimal_hidden_grad = acc / static_cast<double>(tail);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_metrics_csv(out_dir + "/metrics.csv", summary.records, n_layers);
        write_summary_csv(out_dir + "/summary.csv", config, {{config.epsilon, summary}});
    }
    return summary;
}

std::vector<EpsSummary> epsilon_sweep(const ExperimentConfig& config,
                                      const std::vector<double>& epsilons,
                                      const std::string& out_dir) {
    if (epsilons.empty()) throw ContractError("epsilon_sweep needs at least one epsilon");
    std::vector<EpsSummary> rows;
    for (size_t i = 0; i < epsilons.size(); ++i) {
        ExperimentConfig arm = config;
        arm.epsilon = epsilons[i];
        arm.mode = "sinkhorn-gan";
        const std::string arm_dir =
            out_dir.empty() ? "" : out_dir + "/eps_" + std::to_string(i);
        EpsSummary row;
        row.epsilon = epsilons[i];
        row.run = run_denoising(arm, arm_dir);
        rows.push_back(std::move(row));
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_summary_csv(out_dir + "/summary.csv", config, rows);
    }
    return rows;
}

std::vector<OtBenchRow> ot_bench(const std::vector<size_t>& sizes,
                                 const std::vector<double>& epsilons, uint64_t seed,
                                 const std::string& out_dir) {
    std::vector<OtBenchRow> rows;
    for (size_t n : sizes) {
        if (n == 0) throw ContractError("ot_bench: sizes must be positive");
        Rng rng(mix_seed(seed, n));
        Tensor xs({n, 2}), ys({n, 2});
        for (size_t i = 0; i < n; ++i) {
            xs.at(i, 0) = rng.uniform01();
            xs.at(i, 1) = rng.uniform01();
            ys.at(i, 0) = 1.0 + rng.uniform01();
            ys.at(i, 1) = 1.0 + rng.uniform01();
        }
        Tensor wgt = Tensor::full({n}, 1.0 / static_cast<double>(n));
        TransportProblem p;
        p.source_weights = wgt;
        p.target_weights = wgt;
        p.cost = cost_matrix(xs, ys, 2.0);
        const double lp = n <= 8 ? lp_transport_cost(p.cost, wgt, wgt) : 0.0;

        for (double eps : epsilons) {
            p.epsilon = eps;
            p.max_iters = 20000;
            const uint64_t before = opcount::get();
            TransportSolution sol = solve_eot(p);
            OtBenchRow row;
            row.n = n;
            row.epsilon = eps;
            row.cost_value = sol.cost_value;
            row.lp_cost = lp;
            row.rel_error =
                n <= 8 ? std::fabs(sol.cost_value - lp) / std::max(lp, 1e-12) : 0.0;
            row.iterations = sol.iterations_used;
            row.residual = sol.marginal_residual;
            row.multiplies = opcount::get() - before;
            rows.push_back(row);
        }
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(out_dir + "/ot_bench.csv");
        if (!f) throw FormatError("cannot write " + out_dir + "/ot_bench.csv");
        f << "n,epsilon,cost_value,lp_cost,rel_error,iterations,residual,multiplies\n";
        for (const OtBenchRow& r : rows) {
            f << r.n << "," << fmt(r.epsilon) << "," << fmt(r.cost_value) << "," << fmt(r.lp_cost)
              << "," << fmt(r.rel_error) << "," << r.iterations << "," << fmt(r.residual) << ","
              << r.multiplies << "\n";
        }

        // Gradient-smoothness probe on a translation family, one row per
        // epsilon: the empirical Lipschitz estimate of the divergence gradient.
        Rng prng(mix_seed(seed, 0x9e37));
        Tensor base({6, 2}), target({6, 2});
        for (size_t i = 0; i < 6; ++i) {
            base.at(i, 0) = prng.uniform01();
            base.at(i, 1) = prng.uniform01();
            target.at(i, 0) = 0.5 + prng.uniform01();
            target.at(i, 1) = 0.5 + prng.uniform01();
        }
        Tensor tw = Tensor::full({6}, 1.0 / 6.0);
        auto probe = smoothness_probe(translation_family(base), target, tw, epsilons, 10,
                                      mix_seed(seed, 0x51ab), 3000, 2.0);
        std::ofstream pf(out_dir + "/smoothness_probe.csv");
        if (!pf) throw FormatError("cannot write " + out_dir + "/smoothness_probe.csv");
        pf << "epsilon,gradient_lipschitz_estimate\n";
        for (const auto& r : probe) {
            pf << fmt(r.epsilon) << "," << fmt(r.lipschitz_estimate) << "\n";
        }
    }
    return rows;
}

void attn_bench(size_t grid_n, size_t patch, size_t channels, uint64_t seed,
                const std::string& out_dir) {
    std::vector<size_t> cutoffs;
    for (size_t k = grid_n / 2; k < grid_n; k += std::max<size_t>(1, grid_n / 16)) {
        cutoffs.push_back(k);
    }
    if (cutoffs.back() != grid_n - 1) cutoffs.push_back(grid_n - 1);
    auto rows = attention_complexity_bench(grid_n, patch, patch, channels, cutoffs, seed);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(out_dir + "/attn_bench.csv");
        if (!f) throw FormatError("cannot write " + out_dir + "/attn_bench.csv");
        f << "cutoff,kept,key_path_multiplies\n";
        for (const AttnBenchRow& r : rows) {
            f << r.cutoff << "," << (grid_n - r.cutoff) << "," << r.key_path_multiplies << "\n";
        }
    }
    for (const AttnBenchRow& r : rows) {
        std::cout << "k=" << r.cutoff << " kept=" << (grid_n - r.cutoff)
                  << " multiplies=" << r.key_path_multiplies << " wall_ms=" << r.wall_ms
                  << " (advisory)\n";
    }
}

void tune_allocator_for_training() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

int check_grads(uint64_t seed) {
    int failures = 0;
    Rng rng(seed);
    auto report = [&](const char* name, const FdReport& rep, double tol) {
        const bool ok = rep.pass(tol);
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << ": " << rep.describe() << "\n";
        if (!ok) ++failures;
    };

    for (int trial = 0; trial < 5; ++trial) {
        {
            std::vector<Tensor> in = {random_uniform({3, 4}, rng, -1, 1),
                                      random_uniform({4, 2}, rng, -1, 1)};
            report("matmul",
                   check_graph_gradients(
                       [](Tape&, const std::vector<Var>& v) { return mean(matmul(v[0], v[1])); },
                       in),
                   1e-4);
        }
        {
            std::vector<Tensor> in = {random_uniform({1, 5, 5, 2}, rng, -1, 1),
                                      random_uniform({3, 3, 2, 3}, rng, -1, 1),
                                      random_uniform({3}, rng, -1, 1)};
            report("conv2d",
                   check_graph_gradients(
                       [](Tape&, const std::vector<Var>& v) {
                           Var y = conv2d(v[0], v[1], v[2]);
                           return mean(mul(y, y));
                       },
                       in),
                   1e-4);
        }
        {
            std::vector<Tensor> in = {random_uniform({4, 6}, rng, -1, 1)};
            report("softmax+leaky_relu",
                   check_graph_gradients(
                       [](Tape&, const std::vector<Var>& v) {
                           return mean(softmax_rows(leaky_relu(v[0], 0.2)));
                       },
                       in),
                   1e-4);
        }
        {
            std::vector<Tensor> in = {random_uniform({6, 6}, rng, 0.05, 0.95),
                                      random_uniform({6, 6}, rng, 0.05, 0.95)};
            report("ssim_loss",
                   check_graph_gradients(
                       [](Tape&, const std::vector<Var>& v) { return ssim_loss(v[0], v[1], 3); },
                       in),
                   1e-4);
        }
        {
            // Sinkhorn path at training settings, converged solve.
            Tensor xs = random_uniform({3, 2}, rng, 0.0, 1.0);
            Tensor ys = random_uniform({3, 2}, rng, 0.5, 1.5);
            Tensor uw = Tensor::full({3}, 1.0 / 3.0);
            Tensor analytic =
                sinkhorn_divergence_gradient(xs, ys, uw, uw, 0.1, 5000, 2.0, true);
            auto f = [&](const std::vector<Tensor>& in) {
                return sinkhorn_divergence(in[0], ys, uw, uw, 0.1, 5000, 2.0);
            };
            report("sinkhorn divergence gradient", check_fn_gradients(f, {xs}, {analytic}), 1e-3);
        }
    }
    return failures;
}

}  // namespace sinkgan

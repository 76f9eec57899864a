#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "sinkgan/experiment.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "flat key = value config file");
    cmd->add_option("--seed", o.seed, "seed override")->each([&](const std::string&) {
        o.seed_set = true;
    });
    cmd->add_option("--out", o.out_dir, "output directory");
}

sinkgan::ExperimentConfig load_config(const CommonOpts& o) {
    sinkgan::ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = sinkgan::ExperimentConfig::from_file(o.config_path);
    if (o.seed_set) cfg.seed = o.seed;
    cfg.validate();
    return cfg;
}

void print_run(const sinkgan::RunSummary& s) {
    std::cout << "epochs_to_threshold=" << s.epochs_to_threshold
              << " converged=" << (s.converged ? 1 : 0) << " final_test_mse=" << s.final_test_mse
              << " near_optimal_hidden_grad=" << s.near_optimal_hidden_grad
              << " sinkhorn_solves=" << s.sinkhorn_solves << " steps=" << s.total_steps << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    sinkgan::tune_allocator_for_training();
    CLI::App app{"Sinkhorn-regularized adversarial training bench"};
    app.require_subcommand(1);

    CommonOpts denoise_o, sweep_o, ot_o, attn_o, grads_o;
    std::string sweep_eps;

    CLI::App* denoise = app.add_subcommand("denoise", "train the denoising GAN");
    add_common(denoise, denoise_o);
    CLI::App* sweep = app.add_subcommand("eps-sweep", "denoising runs across epsilon values");
    add_common(sweep, sweep_o);
    sweep->add_option("--eps", sweep_eps, "comma-separated epsilon list (overrides config)");
    CLI::App* otb = app.add_subcommand("ot-bench", "entropic solver benchmark vs the LP oracle");
    add_common(otb, ot_o);
    CLI::App* attnb = app.add_subcommand("attn-bench", "filtered-key complexity table");
    add_common(attnb, attn_o);
    CLI::App* grads = app.add_subcommand("check-grads", "finite-difference gradient suite");
    add_common(grads, grads_o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (denoise->parsed()) {
            auto cfg = load_config(denoise_o);
            const auto t0 = std::chrono::steady_clock::now();
            auto run = sinkgan::run_denoising(cfg, denoise_o.out_dir);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            print_run(run);
            std::cout << "elapsed_s=" << secs << " (advisory; CSVs carry work units)\n";
        } else if (sweep->parsed()) {
            auto cfg = load_config(sweep_o);
            std::vector<double> eps = cfg.sweep_epsilons;
            if (!sweep_eps.empty()) {
                eps.clear();
                std::stringstream ss(sweep_eps);
                std::string item;
                while (std::getline(ss, item, ',')) eps.push_back(std::stod(item));
            }
            auto rows = sinkgan::epsilon_sweep(cfg, eps, sweep_o.out_dir);
            for (const auto& r : rows) {
                std::cout << "eps=" << r.epsilon << " ";
                print_run(r.run);
            }
        } else if (otb->parsed()) {
            auto cfg = load_config(ot_o);
            auto rows = sinkgan::ot_bench(cfg.ot_bench_sizes, cfg.ot_bench_epsilons, cfg.seed,
                                          ot_o.out_dir);
            for (const auto& r : rows) {
                std::cout << "n=" << r.n << " eps=" << r.epsilon << " cost=" << r.cost_value
                          << " lp=" << r.lp_cost << " rel_err=" << r.rel_error
                          << " iters=" << r.iterations << "\n";
            }
        } else if (attnb->parsed()) {
            auto cfg = load_config(attn_o);
            sinkgan::attn_bench(cfg.attn_grid_n, cfg.attn_patch, cfg.attn_channels, cfg.seed,
                                attn_o.out_dir);
        } else if (grads->parsed()) {
            auto cfg = load_config(grads_o);
            const int failures = sinkgan::check_grads(cfg.seed);
            std::cout << (failures == 0 ? "all gradient checks passed\n"
                                        : "gradient checks FAILED\n");
            return failures == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

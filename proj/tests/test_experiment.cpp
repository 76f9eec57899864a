#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sinkgan/eig.hpp"
#include "sinkgan/experiment.hpp"
#include "sinkgan/sinkhorn.hpp"
#include "test_support.hpp"

using namespace sinkgan;
using testutil::rand_tensor;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.train_count = 64;
    cfg.test_count = 16;
    cfg.batch_size = 64;
    cfg.max_epochs = 1;
    cfg.seed = 11;
    return cfg;
}

std::string tmp_dir(const std::string& name) {
    const std::string d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("config parsing accepts known keys and rejects unknown ones") {
    ExperimentConfig cfg;
    cfg.apply_line("mode = plain-gan", "test");
    cfg.apply_line("epsilon = 0.25", "test");
    cfg.apply_line("# a comment", "test");
    cfg.apply_line("", "test");
    cfg.apply_line("sweep_epsilons = 0.001, 0.1, 1000", "test");
    CHECK(cfg.mode == "plain-gan");
    CHECK(cfg.epsilon == doctest::Approx(0.25));
    REQUIRE(cfg.sweep_epsilons.size() == 3);
    CHECK(cfg.sweep_epsilons[2] == doctest::Approx(1000.0));

    CHECK_THROWS_AS(cfg.apply_line("no_such_key = 1", "test"), FormatError);
    CHECK_THROWS_AS(cfg.apply_line("not a key value line", "test"), FormatError);

    cfg.max_epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("idx reader parses hand-built bytes and rejects bad magic") {
    const std::string dir = tmp_dir("sinkgan_idx");
    std::filesystem::create_directories(dir);
    const std::string img_path = dir + "/img.idx";

    SUBCASE("one 2x2 image round-trips") {
        const unsigned char bytes[] = {
            0, 0, 8, 3,        // magic 0x00000803
            0, 0, 0, 1,        // count 1
            0, 0, 0, 2,        // rows
            0, 0, 0, 2,        // cols
            10, 20, 30, 255,   // pixels
        };
        std::ofstream f(img_path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
        f.close();
        Dataset ds = load_idx(img_path);
        REQUIRE(ds.images.size() == 1);
        CHECK(ds.images[0].at(0, 0, 0) == doctest::Approx(10.0 / 255.0));
        CHECK(ds.images[0].at(0, 1, 0) == doctest::Approx(20.0 / 255.0));
        CHECK(ds.images[0].at(1, 0, 0) == doctest::Approx(30.0 / 255.0));
        CHECK(ds.images[0].at(1, 1, 0) == doctest::Approx(1.0));
    }

    SUBCASE("wrong magic is a format error") {
        const unsigned char bytes[] = {0, 0, 8, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
        std::ofstream f(img_path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
        f.close();
        CHECK_THROWS_AS(load_idx(img_path), FormatError);
    }

    SUBCASE("truncation reports the byte offset") {
        const unsigned char bytes[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                       1, 2, 3, 4};  // second image missing
        std::ofstream f(img_path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
        f.close();
        try {
            load_idx(img_path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("offset 20") != std::string::npos);
        }
    }

    SUBCASE("full-size header advertises 60000 28x28 samples") {
        std::ofstream f(img_path, std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0xEA, 0x60, 0, 0, 0, 28, 0, 0, 0, 28};
        f.write(reinterpret_cast<const char*>(header), sizeof(header));
        std::vector<char> zeros(60000ull * 28 * 28, 0);
        f.write(zeros.data(), static_cast<std::streamsize>(zeros.size()));
        f.close();
        Dataset ds = load_idx(img_path);
        CHECK(ds.images.size() == 60000);
        CHECK(ds.side == 28);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic dataset is seeded and bounded") {
    Dataset a = synth_dataset(8, 16, 42);
    Dataset b = synth_dataset(8, 16, 42);
    Dataset c = synth_dataset(8, 16, 43);
    REQUIRE(a.images.size() == 8);
    bool identical = true, differs = false;
    for (size_t i = 0; i < 8; ++i) {
        for (size_t p = 0; p < a.images[i].numel(); ++p) {
            const double v = a.images[i][p];
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            identical = identical && v == b.images[i][p];
            differs = differs || v != c.images[i][p];
        }
    }
    CHECK(identical);
    CHECK(differs);
    CHECK_THROWS_AS(synth_dataset(2, 4, 1), ContractError);
}

TEST_CASE("grad_spectral_norm matches the eigen oracle") {
    Tensor d({2, 2});
    d.at(0, 0) = 3.0;
    d.at(1, 1) = 1.0;
    CHECK(grad_spectral_norm(d) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(grad_spectral_norm(Tensor({4, 5})) == 0.0);

    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor g = rand_tensor({5, 4}, rng);
        const Tensor gtg = matmul(transpose2d(g), g);
        EigenDecomposition e = sym_eig(gtg);
        const double want = std::sqrt(std::max(0.0, e.eigenvalues[3]));
        CHECK(std::fabs(grad_spectral_norm(g) - want) <= 1e-6);
    }
}

TEST_CASE("run_denoising contract: rows, determinism, plain mode solver silence") {
    const std::string dir1 = tmp_dir("sinkgan_run1");
    const std::string dir2 = tmp_dir("sinkgan_run2");
    ExperimentConfig cfg = tiny_config();

    RunSummary s1 = run_denoising(cfg, dir1);
    CHECK(s1.records.size() == 1);  // one epoch logged
    CHECK(s1.total_steps == 1);

    RunSummary s2 = run_denoising(cfg, dir2);
    CHECK(read_file(dir1 + "/metrics.csv") == read_file(dir2 + "/metrics.csv"));
    CHECK(read_file(dir1 + "/summary.csv") == read_file(dir2 + "/summary.csv"));

    const std::string header = read_file(dir1 + "/metrics.csv");
    CHECK(header.rfind("step,epoch,loss_total,loss_p,loss_ssim,loss_adv,loss_ot,test_mse,"
                       "grad_norm_layer_0,grad_norm_layer_1,grad_norm_layer_2,grad_norm_layer_3,"
                       "wall_ms\n",
                       0) == 0);
    // Row count equals logged epochs: header + 1 row + trailing newline.
    CHECK(std::count(header.begin(), header.end(), '\n') == 2);

    // Plain mode never touches the solver.
    ExperimentConfig plain = cfg;
    plain.mode = "plain-gan";
    const uint64_t before = sinkhorn_stats::solve_calls();
    RunSummary sp = run_denoising(plain, "");
    CHECK(sinkhorn_stats::solve_calls() - before == 0);
    CHECK(sp.sinkhorn_solves == 0);

    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("epsilon independence of the data pipeline") {
    // One-step runs differing only in epsilon see identical batches, so every
    // non-OT loss component at the first step matches exactly.
    ExperimentConfig a = tiny_config();
    a.epsilon = 0.001;
    ExperimentConfig b = tiny_config();
    b.epsilon = 1000.0;
    RunSummary ra = run_denoising(a, "");
    RunSummary rb = run_denoising(b, "");
    REQUIRE(ra.records.size() == 1);
    REQUIRE(rb.records.size() == 1);
    CHECK(ra.records[0].loss_p == rb.records[0].loss_p);
    CHECK(ra.records[0].loss_ssim == rb.records[0].loss_ssim);
    CHECK(ra.records[0].loss_adv == rb.records[0].loss_adv);
    CHECK(ra.records[0].loss_ot != rb.records[0].loss_ot);
}

TEST_CASE("epsilon_sweep arm count and summary") {
    const std::string dir = tmp_dir("sinkgan_sweep");
    ExperimentConfig cfg = tiny_config();
    CHECK_THROWS_AS(epsilon_sweep(cfg, {}, ""), ContractError);

    // A single epsilon reduces to one run_denoising arm.
    auto single = epsilon_sweep(cfg, {0.1}, "");
    REQUIRE(single.size() == 1);
    RunSummary direct = run_denoising(cfg, "");
    CHECK(single[0].run.final_test_mse == direct.final_test_mse);
    CHECK(single[0].run.epochs_to_threshold == direct.epochs_to_threshold);

    auto rows = epsilon_sweep(cfg, {0.05, 5.0}, dir);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].epsilon == doctest::Approx(0.05));
    CHECK(std::filesystem::exists(dir + "/eps_0/metrics.csv"));
    CHECK(std::filesystem::exists(dir + "/eps_1/metrics.csv"));
    const std::string summary = read_file(dir + "/summary.csv");
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
    std::filesystem::remove_all(dir);
}

TEST_CASE("ot_bench columns and determinism") {
    auto rows1 = ot_bench({1, 4}, {0.01, 0.1}, 9, "");
    auto rows2 = ot_bench({1, 4}, {0.01, 0.1}, 9, "");
    REQUIRE(rows1.size() == 4);
    CHECK(rows1[0].rel_error == 0.0);  // n=1: the unique coupling is exact
    for (size_t i = 0; i < rows1.size(); ++i) {
        CHECK(rows1[i].cost_value == rows2[i].cost_value);
        CHECK(rows1[i].multiplies == rows2[i].multiplies);
        if (rows1[i].n <= 8) CHECK(rows1[i].rel_error <= 0.05);
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef _WIN32
#include <sys/wait.h>
#endif

#include "kneelab/common.hpp"
#include "kneelab/pipeline.hpp"

using namespace kneelab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Small but complete experiment: every partition is populated and the image
// models have enough signal to train in a few seconds.
ExperimentConfig small_config() {
    ExperimentConfig cfg = ExperimentConfig::defaults();
    cfg.generator.n_records = 1200;
    cfg.image_grid_rows = 8;
    cfg.image_grid_cols = 8;
    cfg.seeds = {101, 102};
    cfg.image_config.max_epochs = 60;
    cfg.text_config.max_epochs = 60;
    return cfg;
}

int run_cmd(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    if (status < 0) return -1;
#ifdef _WIN32
    return status;
#else
    return WEXITSTATUS(status);
#endif
}

const std::string cli = std::string("\"") + KNEELAB_CLI_PATH + "\"";

}  // namespace

TEST_CASE("config defaults validate and serialize round-trips") {
    const ExperimentConfig cfg = ExperimentConfig::defaults();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.seeds == std::vector<std::uint64_t>{101, 102, 103, 104, 105});
    CHECK(cfg.text_config.patience == 15);
    CHECK(cfg.image_config.patience == 10);

    ExperimentConfig tweaked = small_config();
    tweaked.split_seed = 77;
    tweaked.min_df = 3;
    tweaked.generator.noise_rate = 0.25;
    tweaked.text_config.learning_rate_grid = {0.05};
    const ExperimentConfig back = ExperimentConfig::parse(tweaked.serialize());
    CHECK(back.generator.n_records == 1200);
    CHECK(back.generator.noise_rate == 0.25);
    CHECK(back.split_seed == 77);
    CHECK(back.min_df == 3);
    CHECK(back.seeds == std::vector<std::uint64_t>{101, 102});
    CHECK(back.image_grid_rows == 8);
    CHECK(back.text_config.learning_rate_grid == std::vector<double>{0.05});
    CHECK(back.image_config.max_epochs == 60);
    // The round-trip is a fixed point.
    CHECK(back.serialize() == tweaked.serialize());
}

TEST_CASE("config parse errors") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse("bogus_key = 3\n"),
                         doctest::Contains("bogus_key"), validation_error);
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse("text.bogus = 3\n"),
                         doctest::Contains("text.bogus"), validation_error);
    CHECK_THROWS_AS(ExperimentConfig::parse("gen.n_records = ten\n"), validation_error);
    CHECK_THROWS_AS(ExperimentConfig::parse("no equals sign here\n"), validation_error);
    CHECK_THROWS_AS(ExperimentConfig::parse("seeds = 1 1\n"), validation_error);
    CHECK_THROWS_AS(ExperimentConfig::parse("split.primary = 2019-01-01\n"),
                    validation_error);
    CHECK_THROWS_AS(ExperimentConfig::parse("split.ratios = 0.9 0.2 0.2\n"),
                    validation_error);
    // Comments and blank lines are fine.
    CHECK_NOTHROW(ExperimentConfig::parse("# comment\n\nmin_df = 2\n"));
}

TEST_CASE("compare_aucs reproduces the published deltas") {
    const std::array<std::size_t, 3> counts = {151, 457, 51};
    const AucComparison cmp =
        compare_aucs({0.842, 0.848, 0.987}, {0.894, 0.896, 0.990}, counts);
    CHECK(cmp.delta[0] == doctest::Approx(0.052).epsilon(1e-12));
    CHECK(cmp.delta[1] == doctest::Approx(0.048).epsilon(1e-12));
    CHECK(cmp.delta[2] == doctest::Approx(0.003).epsilon(1e-12));
    CHECK(cmp.wauc_a == doctest::Approx(0.857).epsilon(5e-4));
    CHECK(cmp.wauc_b == doctest::Approx(0.903).epsilon(5e-4));
    CHECK(cmp.wauc_delta == doctest::Approx(0.046).epsilon(2e-2));
}

TEST_CASE("compare_models computes per-class deltas and significance") {
    // Model B separates perfectly; model A is noisy.
    std::vector<std::array<double, 3>> probs_a, probs_b;
    std::vector<Label> truth;
    Rng rng(31);
    for (int i = 0; i < 120; ++i) {
        const auto cls = static_cast<Label>(i % 3);
        truth.push_back(cls);
        std::array<double, 3> pa{}, pb{};
        for (std::size_t c = 0; c < 3; ++c) {
            pa[c] = 0.2 + 0.6 * rng.uniform() +
                    (static_cast<std::size_t>(cls) == c ? 0.15 : 0.0);
            pb[c] = static_cast<std::size_t>(cls) == c ? 0.9 : 0.05;
        }
        probs_a.push_back(pa);
        probs_b.push_back(pb);
    }
    const ComparisonReport report = compare_models(probs_a, probs_b, truth);
    CHECK(report.warnings.empty());
    for (const auto& cc : report.per_class) {
        REQUIRE(cc.auc_a.has_value());
        REQUIRE(cc.auc_b.has_value());
        REQUIRE(cc.delong.has_value());
        CHECK(*cc.auc_b == 1.0);
        CHECK(*cc.delta == doctest::Approx(1.0 - *cc.auc_a).epsilon(1e-12));
        CHECK(cc.delong->p_two_sided >= 0.0);
        CHECK(cc.delong->p_two_sided <= 1.0);
    }
    CHECK(report.wauc_b == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.wauc_delta > 0.0);
}

TEST_CASE("compare_models warns and renormalizes when a class is absent") {
    std::vector<std::array<double, 3>> probs_a, probs_b;
    std::vector<Label> truth;
    for (int i = 0; i < 40; ++i) {
        const auto cls = i % 2 == 0 ? Label::Normal : Label::Abnormal;
        truth.push_back(cls);
        probs_a.push_back(cls == Label::Normal
                              ? std::array<double, 3>{0.6, 0.3, 0.1}
                              : std::array<double, 3>{0.3, 0.6, 0.1});
        probs_b.push_back(probs_a.back());
    }
    const ComparisonReport report = compare_models(probs_a, probs_b, truth);
    CHECK_FALSE(report.per_class[2].auc_a.has_value());
    CHECK_FALSE(report.per_class[2].delong.has_value());
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("Arthroplasty") != std::string::npos);
    // Identical probabilities: zero delta, p = 1 for both present classes.
    CHECK(report.wauc_delta == 0.0);
    CHECK(report.per_class[0].delong->p_two_sided == 1.0);

    CHECK_THROWS_AS(compare_models({}, {}, {}), validation_error);
    const std::vector<Label> mono(40, Label::Normal);
    CHECK_THROWS_AS(compare_models(probs_a, probs_b, mono), validation_error);
}

TEST_CASE("run_experiment end-to-end on a small synthetic corpus") {
    const fs::path dir = temp_dir("kneelab_test_run");
    ExperimentConfig cfg = small_config();
    cfg.out_dir = dir.string();

    const ExperimentReport report = run_experiment(cfg);

    // Bookkeeping adds up.
    CHECK(report.n_studies > 0);
    CHECK(report.n_studies <= cfg.generator.n_records);
    CHECK(report.n_patients <= report.n_studies);
    CHECK(report.partition_sizes[0] + report.partition_sizes[1] +
              report.partition_sizes[2] + report.partition_sizes[3] +
              report.partition_sizes[4] <=
          report.n_studies);
    for (std::size_t p = 0; p < 5; ++p) CHECK(report.partition_sizes[p] > 0);
    CHECK(report.n_pseudo_labeled == report.partition_sizes[3]);
    CHECK(report.pseudo_label_counts[0] + report.pseudo_label_counts[1] +
              report.pseudo_label_counts[2] ==
          report.n_pseudo_labeled);

    // The text labeler separates the synthetic vocabularies nearly perfectly.
    CHECK(report.labeler_val_wauc > 0.95);
    CHECK(report.labeler_val_wauc <= 1.0);

    REQUIRE(report.per_seed.size() == cfg.seeds.size());
    for (const auto& r : report.per_seed) {
        // The baseline sees only ~130 training images and can land anywhere;
        // the augmented model's ~1000 pseudo-labeled images make it reliable.
        CHECK(r.val_ptest_wauc_baseline >= 0.0);
        CHECK(r.val_ptest_wauc_baseline <= 1.0);
        CHECK(r.val_ptest_wauc_augmented > 0.6);
        CHECK(r.test_baseline.wauc > 0.0);
    }
    CHECK((report.selected_seed_baseline == 101 || report.selected_seed_baseline == 102));
    CHECK(report.augmented_val_ptest.mean > 0.6);

    // All artifacts exist; no failure marker.
    for (const char* name :
         {"plan.json", "labeler.json", "config.txt", "report.json", "report.txt"}) {
        CHECK(fs::exists(dir / name));
    }
    for (const char* cls : {"Normal", "Abnormal", "Arthroplasty"}) {
        CHECK(fs::exists(dir / ("roc_baseline_" + std::string(cls) + ".csv")));
        CHECK(fs::exists(dir / ("roc_augmented_" + std::string(cls) + ".csv")));
    }
    CHECK_FALSE(fs::exists(dir / "FAILED"));

    const std::string roc = slurp(dir / "roc_baseline_Abnormal.csv");
    CHECK(roc.rfind("threshold,fpr,tpr\ninf,0,0\n", 0) == 0);

    // The JSON report round-trips through the summary hash and is stable.
    const std::string json_text = slurp(dir / "report.json");
    CHECK(json_text.find(report.config_hash) != std::string::npos);
    CHECK(report_to_json(report) == json_text.substr(0, json_text.size() - 1));
    CHECK(report_summary(report) == slurp(dir / "report.txt"));

    // Byte-identical rerun.
    const fs::path dir2 = temp_dir("kneelab_test_run2");
    ExperimentConfig cfg2 = small_config();
    cfg2.out_dir = dir2.string();
    run_experiment(cfg2);
    for (const char* name : {"plan.json", "labeler.json", "report.json", "report.txt"}) {
        CHECK(slurp(dir / name) == slurp(dir2 / name));
    }

    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("run_experiment writes a FAILED marker on error") {
    const fs::path dir = temp_dir("kneelab_test_fail");
    ExperimentConfig cfg = small_config();
    cfg.corpus_path = (dir / "missing.jsonl").string();
    cfg.out_dir = dir.string();
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("stage corpus"),
                         validation_error);
    CHECK(fs::exists(dir / "FAILED"));
    CHECK(slurp(dir / "FAILED").find("missing.jsonl") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: generate, split, rules apply, preprocess") {
    const fs::path dir = temp_dir("kneelab_test_cli");
    const std::string corpus = (dir / "corpus.jsonl").string();

    CHECK(run_cmd(cli + " generate --n 300 --seed 4 --out " + corpus + " > " +
                  (dir / "gen.out").string()) == 0);
    CHECK(slurp(dir / "gen.out").find("wrote 300 records") != std::string::npos);

    CHECK(run_cmd(cli + " split --corpus " + corpus + " --seed 11 --out " +
                  (dir / "plan.json").string() + " > " + (dir / "split.out").string()) == 0);
    CHECK(slurp(dir / "split.out").find("train_pri=") != std::string::npos);
    CHECK(fs::exists(dir / "plan.json"));

    CHECK(run_cmd(cli + " rules apply --corpus " + corpus + " --out " +
                  (dir / "labeled.jsonl").string() + " > " +
                  (dir / "rules.out").string()) == 0);
    CHECK(slurp(dir / "rules.out").find("labeled 300 records") != std::string::npos);

    CHECK(run_cmd(cli + " rules dump-default > " + (dir / "rules.txt").string()) == 0);
    CHECK(slurp(dir / "rules.txt").find("category arthroplasty") != std::string::npos);

    CHECK(run_cmd(cli + " preprocess --corpus " + corpus + " > " +
                  (dir / "prep.out").string()) == 0);
    CHECK(slurp(dir / "prep.out").find('\t') != std::string::npos);

    fs::remove_all(dir);
}

TEST_CASE("cli: exit codes distinguish validation from usage errors") {
    const fs::path dir = temp_dir("kneelab_test_cli_err");
    // Missing file -> validation error -> exit 1.
    CHECK(run_cmd(cli + " split --corpus " + (dir / "nope.jsonl").string() +
                  " --out " + (dir / "p.json").string() + " 2> /dev/null") == 1);
    // Unknown subcommand -> parse error -> exit 1.
    CHECK(run_cmd(cli + " frobnicate 2> /dev/null") == 1);
    // Missing required option -> parse error -> exit 1.
    CHECK(run_cmd(cli + " split 2> /dev/null") == 1);
    // No subcommand -> exit 1.
    CHECK(run_cmd(cli + " 2> /dev/null") == 1);
    fs::remove_all(dir);
}

TEST_CASE("cli: delong subcommand reproduces the frozen fixture") {
    const fs::path dir = temp_dir("kneelab_test_cli_delong");
    {
        std::ofstream csv(dir / "scores.csv");
        csv << "score_a,score_b,label\n";
        const std::vector<double> a = {0.9, 0.8, 0.35, 0.6, 0.2, 0.4, 0.3, 0.5};
        const std::vector<double> b = {0.7, 0.6, 0.5, 0.4, 0.3, 0.45, 0.2, 0.6};
        for (std::size_t i = 0; i < a.size(); ++i) {
            csv << a[i] << ',' << b[i] << ',' << (i < 4 ? 1 : 0) << '\n';
        }
    }
    CHECK(run_cmd(cli + " delong --scores " + (dir / "scores.csv").string() + " > " +
                  (dir / "delong.out").string()) == 0);
    const std::string out = slurp(dir / "delong.out");
    CHECK(out.find("auc_a 0.875") != std::string::npos);
    CHECK(out.find("auc_b 0.78125") != std::string::npos);
    CHECK(out.find("p 0.606905") != std::string::npos);

    std::ofstream(dir / "bad.csv") << "0.5,0.5,7\n";
    CHECK(run_cmd(cli + " delong --scores " + (dir / "bad.csv").string() +
                  " 2> /dev/null") == 1);
    fs::remove_all(dir);
}

TEST_CASE("cli: full run writes the report artifacts") {
    const fs::path dir = temp_dir("kneelab_test_cli_run");
    ExperimentConfig cfg = small_config();
    std::ofstream(dir / "config.txt") << cfg.serialize();
    CHECK(run_cmd(cli + " run --config " + (dir / "config.txt").string() + " --out " +
                  (dir / "results").string() + " > " + (dir / "run.out").string()) == 0);
    CHECK(fs::exists(dir / "results" / "report.json"));
    CHECK(fs::exists(dir / "results" / "plan.json"));
    CHECK(slurp(dir / "run.out").find("TEST WAUC") != std::string::npos);
    fs::remove_all(dir);
}

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kneelab/corpus.hpp"
#include "kneelab/learncore.hpp"
#include "kneelab/metrics.hpp"
#include "kneelab/rulelab.hpp"
#include "kneelab/splitter.hpp"

namespace kneelab {

struct ExperimentConfig {
    std::optional<std::string> corpus_path;  // absent: generate synthetically
    GeneratorSpec generator = GeneratorSpec::defaults();
    std::uint64_t generator_seed = 1;
    SeriesFilter filter = SeriesFilter::blpa_default();
    SplitBoundaries boundaries = SplitBoundaries::defaults_2019();
    std::uint64_t split_seed = 11;
    std::optional<std::string> rules_path;  // absent: bundled default rules
    TrainConfig text_config;                // patience 15
    TrainConfig image_config;               // patience 10
    std::size_t image_grid_rows = 16;
    std::size_t image_grid_cols = 16;
    std::size_t min_df = 2;
    std::vector<std::uint64_t> seeds = {101, 102, 103, 104, 105};
    std::string out_dir;  // empty: nothing written to disk

    static ExperimentConfig defaults();
    static ExperimentConfig parse(const std::string& config_text);
    std::string serialize() const;
    void validate() const;
};

struct ClassComparison {
    std::optional<double> auc_a;  // nullopt when the class is absent from truth
    std::optional<double> auc_b;
    std::optional<double> delta;  // b - a (augmented minus baseline)
    std::optional<DeLongResult> delong;
};

struct ComparisonReport {
    std::array<ClassComparison, 3> per_class;
    double wauc_a = 0.0;
    double wauc_b = 0.0;
    double wauc_delta = 0.0;
    std::vector<std::string> warnings;
};

// Delta arithmetic over already-computed per-class AUCs (no scores, so no
// significance testing).
struct AucComparison {
    std::array<double, 3> delta{};
    double wauc_a = 0.0;
    double wauc_b = 0.0;
    double wauc_delta = 0.0;
};

AucComparison compare_aucs(const std::array<double, 3>& auc_a,
                           const std::array<double, 3>& auc_b,
                           const std::array<std::size_t, 3>& class_counts);

ComparisonReport compare_models(const std::vector<std::array<double, 3>>& probs_a,
                                const std::vector<std::array<double, 3>>& probs_b,
                                const std::vector<Label>& true_labels);

struct SeedResult {
    std::uint64_t seed = 0;
    double val_ptest_wauc_baseline = 0.0;
    double val_ptest_wauc_augmented = 0.0;
    AucReport test_baseline;
    AucReport test_augmented;
    // Baseline-vs-augmented significance on TEST for this seed's pair.
    ComparisonReport test_comparison;
};

struct ExperimentReport {
    // Corpus / split bookkeeping.
    std::size_t n_studies = 0;
    std::size_t n_patients = 0;
    std::array<std::size_t, 5> partition_sizes{};  // partition_names order
    std::size_t removed_from_train_sec = 0;
    std::size_t removed_from_test = 0;

    // Labeler stage.
    double labeler_val_wauc = 0.0;
    double labeler_learning_rate = 0.0;
    std::array<std::size_t, 3> pseudo_label_counts{};
    std::size_t n_manual_labeled = 0;
    std::size_t n_pseudo_labeled = 0;

    // Image stage.
    std::vector<SeedResult> per_seed;
    SeedAggregate baseline_val_ptest;
    SeedAggregate augmented_val_ptest;
    std::uint64_t selected_seed_baseline = 0;
    std::uint64_t selected_seed_augmented = 0;
    AucReport test_baseline;
    AucReport test_augmented;
    ComparisonReport comparison;

    std::string config_hash;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

std::string report_to_json(const ExperimentReport& report);
std::string report_summary(const ExperimentReport& report);

void write_roc_csv(const ScoredSet& set, const std::string& path);

}  // namespace kneelab

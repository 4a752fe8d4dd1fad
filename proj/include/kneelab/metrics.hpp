#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "kneelab/corpus.hpp"

namespace kneelab {

struct ScoredSet {
    std::vector<double> scores;
    std::vector<bool> labels;  // true = positive
};

struct AucReport {
    std::array<double, 3> per_class_auc{};
    std::array<double, 3> frequencies{};
    double wauc = 0.0;
};

struct DeLongResult {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double variance_of_difference = 0.0;
    double z = 0.0;
    double p_two_sided = 1.0;
};

struct SeedAggregate {
    double mean = 0.0;
    double sd = 0.0;  // sample SD, n-1 denominator; 0 when n == 1
    double median = 0.0;
};

struct RocPoint {
    double threshold = 0.0;  // +inf at the (0,0) anchor
    double fpr = 0.0;
    double tpr = 0.0;
};

// Mann-Whitney AUC with the 0.5 tie kernel, computed via midranks.
double auc(const ScoredSet& set);

std::vector<RocPoint> roc_curve(const ScoredSet& set);

AucReport wauc(const std::array<double, 3>& per_class_auc,
               const std::array<std::size_t, 3>& class_counts);

std::array<ScoredSet, 3> one_vs_rest(const std::vector<std::array<double, 3>>& probabilities,
                                     const std::vector<Label>& true_labels);

DeLongResult delong_test(const std::vector<double>& scores_a,
                         const std::vector<double>& scores_b,
                         const std::vector<bool>& labels);

double normal_cdf(double x);

SeedAggregate aggregate_seeds(const std::vector<double>& waucs);

// WAUC of multiclass predictions against labels, with frequencies from the
// label counts. Classes absent from the truth are skipped and frequencies
// renormalized; fewer than two present classes is an error.
double multiclass_wauc(const std::vector<std::array<double, 3>>& probabilities,
                       const std::vector<Label>& true_labels);

}  // namespace kneelab

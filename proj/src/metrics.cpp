#include "kneelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace kneelab {

namespace {

void check_scored_set(const ScoredSet& set, std::size_t min_pos, std::size_t min_neg) {
    if (set.scores.size() != set.labels.size()) {
        throw validation_error("scores and labels differ in length");
    }
    std::size_t pos = 0;
    for (bool b : set.labels) pos += b ? 1u : 0u;
    const std::size_t neg = set.labels.size() - pos;
    if (pos < min_pos || neg < min_neg) {
        throw validation_error("need at least " + std::to_string(min_pos) + " positive and " +
                               std::to_string(min_neg) + " negative cases, have " +
                               std::to_string(pos) + "/" + std::to_string(neg));
    }
}

// Mann-Whitney kernel: 1 if x > y, 0.5 on ties, 0 otherwise.
double psi(double x, double y) {
    if (x > y) return 1.0;
    if (x < y) return 0.0;
    return 0.5;
}

}  // namespace

double auc(const ScoredSet& set) {
    check_scored_set(set, 1, 1);
    const std::size_t n = set.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });

    // Rank-sum with midranks for tied scores.
    double pos_rank_sum = 0.0;
    std::size_t m = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (set.labels[order[k]]) {
                pos_rank_sum += midrank;
                ++m;
            }
        }
        i = j;
    }
    const double dm = static_cast<double>(m);
    const double dn = static_cast<double>(n - m);
    return (pos_rank_sum - dm * (dm + 1.0) / 2.0) / (dm * dn);
}

std::vector<RocPoint> roc_curve(const ScoredSet& set) {
    check_scored_set(set, 1, 1);
    const std::size_t n = set.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });

    std::size_t total_pos = 0;
    for (bool b : set.labels) total_pos += b ? 1u : 0u;
    const std::size_t total_neg = n - total_pos;

    std::vector<RocPoint> points;
    points.push_back(RocPoint{std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        const double threshold = set.scores[order[i]];
        std::size_t j = i;
        while (j < n && set.scores[order[j]] == threshold) {
            if (set.labels[order[j]]) ++tp; else ++fp;
            ++j;
        }
        points.push_back(RocPoint{threshold,
                                  static_cast<double>(fp) / static_cast<double>(total_neg),
                                  static_cast<double>(tp) / static_cast<double>(total_pos)});
        i = j;
    }
    return points;
}

AucReport wauc(const std::array<double, 3>& per_class_auc,
               const std::array<std::size_t, 3>& class_counts) {
    const std::size_t total = class_counts[0] + class_counts[1] + class_counts[2];
    if (total == 0 || class_counts[0] == 0 || class_counts[1] == 0 || class_counts[2] == 0) {
        throw validation_error("wauc requires a positive count for every class");
    }
    AucReport report;
    report.per_class_auc = per_class_auc;
    double acc = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        report.frequencies[c] =
            static_cast<double>(class_counts[c]) / static_cast<double>(total);
        acc += report.frequencies[c] * per_class_auc[c];
    }
    report.wauc = acc;
    return report;
}

std::array<ScoredSet, 3> one_vs_rest(const std::vector<std::array<double, 3>>& probabilities,
                                     const std::vector<Label>& true_labels) {
    if (probabilities.size() != true_labels.size() || probabilities.empty()) {
        throw validation_error("one_vs_rest requires parallel non-empty inputs");
    }
    std::array<ScoredSet, 3> sets;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            sets[c].scores.push_back(probabilities[i][c]);
            sets[c].labels.push_back(static_cast<std::size_t>(true_labels[i]) == c);
        }
    }
    return sets;
}

DeLongResult delong_test(const std::vector<double>& scores_a,
                         const std::vector<double>& scores_b,
                         const std::vector<bool>& labels) {
    if (scores_a.size() != labels.size() || scores_b.size() != labels.size()) {
        throw validation_error("delong_test requires three parallel lists");
    }
    std::vector<double> pos_a, neg_a, pos_b, neg_b;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            pos_a.push_back(scores_a[i]);
            pos_b.push_back(scores_b[i]);
        } else {
            neg_a.push_back(scores_a[i]);
            neg_b.push_back(scores_b[i]);
        }
    }
    const std::size_t m = pos_a.size();
    const std::size_t n = neg_a.size();
    if (m < 2 || n < 2) {
        throw validation_error("delong_test needs >=2 positives and >=2 negatives");
    }

    // Structural components: V10 indexed by positives (averaged over the
    // negatives), V01 indexed by negatives (averaged over the positives).
    const auto components = [&](const std::vector<double>& pos,
                                const std::vector<double>& neg, std::vector<double>& v10,
                                std::vector<double>& v01) {
        v10.assign(m, 0.0);
        v01.assign(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double k = psi(pos[i], neg[j]);
                v10[i] += k;
                v01[j] += k;
            }
        }
        for (auto& v : v10) v /= static_cast<double>(n);
        for (auto& v : v01) v /= static_cast<double>(m);
    };

    std::vector<double> v10_a, v01_a, v10_b, v01_b;
    components(pos_a, neg_a, v10_a, v01_a);
    components(pos_b, neg_b, v10_b, v01_b);

    const auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    DeLongResult result;
    result.auc_a = mean(v10_a);
    result.auc_b = mean(v10_b);

    // Sample (n-1) covariance of two equally long component vectors.
    const auto cov = [&](const std::vector<double>& x, const std::vector<double>& y) {
        const double mx = mean(x), my = mean(y);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - mx) * (y[i] - my);
        return acc / static_cast<double>(x.size() - 1);
    };

    const double s10_aa = cov(v10_a, v10_a);
    const double s10_bb = cov(v10_b, v10_b);
    const double s10_ab = cov(v10_a, v10_b);
    const double s01_aa = cov(v01_a, v01_a);
    const double s01_bb = cov(v01_b, v01_b);
    const double s01_ab = cov(v01_a, v01_b);

    double var = (s10_aa + s10_bb - 2.0 * s10_ab) / static_cast<double>(m) +
                 (s01_aa + s01_bb - 2.0 * s01_ab) / static_cast<double>(n);
    if (var < 0.0) var = 0.0;  // guard against rounding in the quadratic form
    result.variance_of_difference = var;

    if (var < 1e-15) {
        result.z = 0.0;
        result.p_two_sided = 1.0;
    } else {
        result.z = (result.auc_a - result.auc_b) / std::sqrt(var);
        result.p_two_sided = 2.0 * (1.0 - normal_cdf(std::abs(result.z)));
    }
    return result;
}

double normal_cdf(double x) {
    // Upper tail via erfc keeps precision for large |x|; the branch makes
    // the reflection symmetry hold by construction.
    const double tail = 0.5 * std::erfc(std::abs(x) / std::sqrt(2.0));
    return x < 0.0 ? tail : 1.0 - tail;
}

SeedAggregate aggregate_seeds(const std::vector<double>& waucs) {
    if (waucs.empty()) {
        throw validation_error("aggregate_seeds requires a non-empty list");
    }
    SeedAggregate agg;
    const double n = static_cast<double>(waucs.size());
    agg.mean = std::accumulate(waucs.begin(), waucs.end(), 0.0) / n;
    if (waucs.size() > 1) {
        double acc = 0.0;
        for (double w : waucs) acc += (w - agg.mean) * (w - agg.mean);
        agg.sd = std::sqrt(acc / (n - 1.0));
    }
    std::vector<double> sorted = waucs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t half = sorted.size() / 2;
    agg.median = sorted.size() % 2 == 1 ? sorted[half]
                                        : (sorted[half - 1] + sorted[half]) / 2.0;
    return agg;
}

double multiclass_wauc(const std::vector<std::array<double, 3>>& probabilities,
                       const std::vector<Label>& true_labels) {
    const auto sets = one_vs_rest(probabilities, true_labels);
    std::array<std::size_t, 3> counts{};
    for (Label l : true_labels) ++counts[static_cast<std::size_t>(l)];

    double freq_total = 0.0;
    double acc = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        if (counts[c] == 0) continue;
        ++present;
    }
    if (present < 2) {
        throw validation_error("multiclass_wauc: fewer than two classes present");
    }
    for (std::size_t c = 0; c < 3; ++c) {
        if (counts[c] == 0) continue;
        const double f = static_cast<double>(counts[c]) /
                         static_cast<double>(true_labels.size());
        acc += f * auc(sets[c]);
        freq_total += f;
    }
    return acc / freq_total;
}

}  // namespace kneelab

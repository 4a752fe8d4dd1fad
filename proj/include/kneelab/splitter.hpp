#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kneelab/corpus.hpp"

namespace kneelab {

struct DateWindow {
    Date start;
    Date end;  // inclusive

    bool contains(Date d) const { return start <= d && d <= end; }
};

struct SplitBoundaries {
    DateWindow primary_window;    // TRAIN_PRI / VAL_EVAL / VAL_PTEST source
    DateWindow secondary_window;  // TRAIN_SEC
    DateWindow test_window;       // TEST
    std::array<double, 3> primary_ratios = {0.672, 0.164, 0.164};

    static SplitBoundaries defaults_2019();  // Jan-Feb / Mar-Nov / Dec
    void validate() const;
};

struct SplitPlan {
    std::vector<std::string> train_pri;
    std::vector<std::string> val_eval;
    std::vector<std::string> val_ptest;
    std::vector<std::string> train_sec;
    std::vector<std::string> test;
    std::vector<std::string> removed_from_train_sec;  // patient_ids
    std::vector<std::string> removed_from_test;       // patient_ids
    // Audit only: patients with studies in both primary and secondary
    // windows. Not leakage, not removed.
    std::vector<std::string> spanning_primary_secondary;

    bool operator==(const SplitPlan&) const = default;
};

inline constexpr std::array<const char*, 5> partition_names = {
    "train_pri", "val_eval", "val_ptest", "train_sec", "test"};

SplitPlan split_by_date(const Corpus& corpus, const SplitBoundaries& boundaries,
                        std::uint64_t seed);

struct Violation {
    std::string kind;  // "disjointness" | "val_leakage" | "test_leakage"
    std::string detail;
};

std::vector<Violation> verify_plan(const Corpus& corpus, const SplitPlan& plan);

void save_plan(const SplitPlan& plan, const std::string& path);
SplitPlan load_plan(const std::string& path);

}  // namespace kneelab

#include "kneelab/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace kneelab {

using nlohmann::json;

SplitBoundaries SplitBoundaries::defaults_2019() {
    SplitBoundaries b;
    b.primary_window = {Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 2, 28)};
    b.secondary_window = {Date::from_ymd(2019, 3, 1), Date::from_ymd(2019, 11, 30)};
    b.test_window = {Date::from_ymd(2019, 12, 1), Date::from_ymd(2019, 12, 31)};
    return b;
}

void SplitBoundaries::validate() const {
    for (const auto* w : {&primary_window, &secondary_window, &test_window}) {
        if (w->end < w->start) {
            throw validation_error("split window end precedes start");
        }
    }
    if (!(primary_window.end < secondary_window.start &&
          secondary_window.end < test_window.start)) {
        throw validation_error(
            "split windows must be disjoint and ordered primary < secondary < test");
    }
    const double rsum = primary_ratios[0] + primary_ratios[1] + primary_ratios[2];
    if (std::abs(rsum - 1.0) > 1e-9 || primary_ratios[0] < 0 || primary_ratios[1] < 0 ||
        primary_ratios[2] < 0) {
        throw validation_error("primary_ratios must be non-negative and sum to 1");
    }
}

SplitPlan split_by_date(const Corpus& corpus, const SplitBoundaries& boundaries,
                        std::uint64_t seed) {
    if (corpus.empty()) {
        throw validation_error("cannot split an empty corpus");
    }
    boundaries.validate();

    SplitPlan plan;
    // Patient -> primary-window accessions, in first-seen patient order; the
    // map key set also drives the deterministic shuffle below.
    std::map<std::string, std::vector<std::string>> primary_by_patient;
    std::map<std::string, std::vector<std::string>> secondary_by_patient;
    std::map<std::string, std::vector<std::string>> test_by_patient;

    for (const auto& rec : corpus) {
        if (boundaries.primary_window.contains(rec.study_date)) {
            primary_by_patient[rec.patient_id].push_back(rec.accession_id);
        } else if (boundaries.secondary_window.contains(rec.study_date)) {
            secondary_by_patient[rec.patient_id].push_back(rec.accession_id);
        } else if (boundaries.test_window.contains(rec.study_date)) {
            test_by_patient[rec.patient_id].push_back(rec.accession_id);
        }
        // Dates outside all windows are dropped.
    }

    // Patient-wise random sub-split of the primary window.
    std::vector<std::string> primary_patients;
    primary_patients.reserve(primary_by_patient.size());
    for (const auto& [pid, _] : primary_by_patient) primary_patients.push_back(pid);
    Rng rng(seed);
    rng.shuffle(primary_patients);
    const auto counts = apportion_counts(primary_patients.size(), boundaries.primary_ratios);

    std::map<std::string, int> primary_bucket;  // patient -> 0/1/2
    std::size_t idx = 0;
    for (int bucket = 0; bucket < 3; ++bucket) {
        for (std::size_t k = 0; k < counts[static_cast<std::size_t>(bucket)]; ++k, ++idx) {
            primary_bucket[primary_patients[idx]] = bucket;
        }
    }

    std::set<std::string> val_patients;
    for (const auto& [pid, bucket] : primary_bucket) {
        if (bucket != 0) val_patients.insert(pid);
    }

    std::set<std::string> removed_sec;
    for (const auto& [pid, _] : secondary_by_patient) {
        if (val_patients.count(pid)) removed_sec.insert(pid);
        if (primary_by_patient.count(pid)) {
            plan.spanning_primary_secondary.push_back(pid);
        }
    }

    // Development-set patients after the TRAIN_SEC removal pass.
    std::set<std::string> dev_patients;
    for (const auto& [pid, _] : primary_by_patient) dev_patients.insert(pid);
    for (const auto& [pid, _] : secondary_by_patient) {
        if (!removed_sec.count(pid)) dev_patients.insert(pid);
    }

    std::set<std::string> removed_test;
    for (const auto& [pid, _] : test_by_patient) {
        if (dev_patients.count(pid)) removed_test.insert(pid);
    }

    // Emit partitions in corpus order.
    for (const auto& rec : corpus) {
        if (boundaries.primary_window.contains(rec.study_date)) {
            switch (primary_bucket.at(rec.patient_id)) {
                case 0: plan.train_pri.push_back(rec.accession_id); break;
                case 1: plan.val_eval.push_back(rec.accession_id); break;
                default: plan.val_ptest.push_back(rec.accession_id); break;
            }
        } else if (boundaries.secondary_window.contains(rec.study_date)) {
            if (!removed_sec.count(rec.patient_id)) {
                plan.train_sec.push_back(rec.accession_id);
            }
        } else if (boundaries.test_window.contains(rec.study_date)) {
            if (!removed_test.count(rec.patient_id)) {
                plan.test.push_back(rec.accession_id);
            }
        }
    }
    plan.removed_from_train_sec.assign(removed_sec.begin(), removed_sec.end());
    plan.removed_from_test.assign(removed_test.begin(), removed_test.end());
    return plan;
}

std::vector<Violation> verify_plan(const Corpus& corpus, const SplitPlan& plan) {
    std::map<std::string, const StudyRecord*> by_accession;
    for (const auto& rec : corpus) by_accession[rec.accession_id] = &rec;

    const std::array<const std::vector<std::string>*, 5> partitions = {
        &plan.train_pri, &plan.val_eval, &plan.val_ptest, &plan.train_sec, &plan.test};

    std::vector<Violation> violations;
    std::map<std::string, std::string> owner;  // accession -> partition
    std::array<std::set<std::string>, 5> patients;
    for (std::size_t p = 0; p < partitions.size(); ++p) {
        for (const auto& acc : *partitions[p]) {
            const auto it = by_accession.find(acc);
            if (it == by_accession.end()) {
                throw validation_error("plan references unknown accession_id: " + acc);
            }
            const auto [prev, inserted] = owner.emplace(acc, partition_names[p]);
            if (!inserted) {
                violations.push_back(Violation{
                    "disjointness", "accession " + acc + " appears in " + prev->second +
                                        " and " + partition_names[p]});
            }
            patients[p].insert(it->second->patient_id);
        }
    }

    for (const auto& pid : patients[3]) {  // train_sec
        if (patients[1].count(pid) || patients[2].count(pid)) {
            violations.push_back(Violation{
                "val_leakage", "patient " + pid + " appears in train_sec and a validation set"});
        }
    }
    for (const auto& pid : patients[4]) {  // test
        for (std::size_t p = 0; p < 4; ++p) {
            if (patients[p].count(pid)) {
                violations.push_back(Violation{
                    "test_leakage", "patient " + pid + " appears in test and " +
                                        partition_names[p]});
                break;
            }
        }
    }
    return violations;
}

void save_plan(const SplitPlan& plan, const std::string& path) {
    json j;
    j["train_pri"] = plan.train_pri;
    j["val_eval"] = plan.val_eval;
    j["val_ptest"] = plan.val_ptest;
    j["train_sec"] = plan.train_sec;
    j["test"] = plan.test;
    j["removed_from_train_sec"] = plan.removed_from_train_sec;
    j["removed_from_test"] = plan.removed_from_test;
    j["spanning_primary_secondary"] = plan.spanning_primary_secondary;
    std::ofstream out(path);
    if (!out) throw validation_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

SplitPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("no such plan file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw validation_error("plan parse error in " + path + ": " + e.what());
    }
    SplitPlan plan;
    plan.train_pri = j.at("train_pri").get<std::vector<std::string>>();
    plan.val_eval = j.at("val_eval").get<std::vector<std::string>>();
    plan.val_ptest = j.at("val_ptest").get<std::vector<std::string>>();
    plan.train_sec = j.at("train_sec").get<std::vector<std::string>>();
    plan.test = j.at("test").get<std::vector<std::string>>();
    plan.removed_from_train_sec =
        j.at("removed_from_train_sec").get<std::vector<std::string>>();
    plan.removed_from_test = j.at("removed_from_test").get<std::vector<std::string>>();
    if (j.contains("spanning_primary_secondary")) {
        plan.spanning_primary_secondary =
            j.at("spanning_primary_secondary").get<std::vector<std::string>>();
    }
    return plan;
}

}  // namespace kneelab

#include "kneelab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kneelab/textprep.hpp"

namespace kneelab {

using nlohmann::json;
namespace fs = std::filesystem;

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig cfg;
    cfg.text_config.patience = 15;
    cfg.image_config.patience = 10;
    cfg.text_config.seed = 7;
    return cfg;
}

namespace {

std::vector<std::string> split_fields(const std::string& value) {
    std::vector<std::string> out;
    std::istringstream in(value);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw validation_error("config key " + key + ": bad number \"" + s + "\"");
    }
}

std::uint64_t parse_uint(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw validation_error("config key " + key + ": bad integer \"" + s + "\"");
    }
}

DateWindow parse_window(const std::string& value, const std::string& key) {
    const auto fields = split_fields(value);
    if (fields.size() != 2) {
        throw validation_error("config key " + key + ": expected two ISO dates");
    }
    return DateWindow{Date::parse(fields[0]), Date::parse(fields[1])};
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[18];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& config_text) {
    ExperimentConfig cfg = defaults();
    std::istringstream in(config_text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (!split_fields(line).empty()) {
                throw validation_error("config line " + std::to_string(lineno) +
                                       ": expected key = value");
            }
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            if (b == std::string::npos) return std::string{};
            const auto e = s.find_last_not_of(" \t");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto fields = split_fields(value);

        if (key == "corpus") {
            cfg.corpus_path = value;
        } else if (key == "gen.n_records") {
            cfg.generator.n_records = parse_uint(value, key);
        } else if (key == "gen.proportions") {
            if (fields.size() != 3) throw validation_error("gen.proportions needs 3 values");
            for (int i = 0; i < 3; ++i) {
                cfg.generator.label_proportions[static_cast<std::size_t>(i)] =
                    parse_double(fields[static_cast<std::size_t>(i)], key);
            }
        } else if (key == "gen.noise_rate") {
            cfg.generator.noise_rate = parse_double(value, key);
        } else if (key == "gen.seed") {
            cfg.generator_seed = parse_uint(value, key);
        } else if (key == "gen.image_rows") {
            cfg.generator.image_rows = parse_uint(value, key);
        } else if (key == "gen.image_cols") {
            cfg.generator.image_cols = parse_uint(value, key);
        } else if (key == "split.primary") {
            cfg.boundaries.primary_window = parse_window(value, key);
        } else if (key == "split.secondary") {
            cfg.boundaries.secondary_window = parse_window(value, key);
        } else if (key == "split.test") {
            cfg.boundaries.test_window = parse_window(value, key);
        } else if (key == "split.ratios") {
            if (fields.size() != 3) throw validation_error("split.ratios needs 3 values");
            for (int i = 0; i < 3; ++i) {
                cfg.boundaries.primary_ratios[static_cast<std::size_t>(i)] =
                    parse_double(fields[static_cast<std::size_t>(i)], key);
            }
        } else if (key == "split.seed") {
            cfg.split_seed = parse_uint(value, key);
        } else if (key == "rules") {
            cfg.rules_path = value;
        } else if (key == "min_df") {
            cfg.min_df = parse_uint(value, key);
        } else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& f : fields) cfg.seeds.push_back(parse_uint(f, key));
        } else if (key == "image.grid") {
            if (fields.size() != 2) throw validation_error("image.grid needs 2 values");
            cfg.image_grid_rows = parse_uint(fields[0], key);
            cfg.image_grid_cols = parse_uint(fields[1], key);
        } else if (key == "out") {
            cfg.out_dir = value;
        } else if (key.rfind("text.", 0) == 0 || key.rfind("image.", 0) == 0) {
            TrainConfig& tc = key.rfind("text.", 0) == 0 ? cfg.text_config : cfg.image_config;
            const std::string sub = key.substr(key.find('.') + 1);
            if (sub == "lr_grid") {
                tc.learning_rate_grid.clear();
                for (const auto& f : fields) {
                    tc.learning_rate_grid.push_back(parse_double(f, key));
                }
            } else if (sub == "batch_size") {
                tc.batch_size = parse_uint(value, key);
            } else if (sub == "patience") {
                tc.patience = parse_uint(value, key);
            } else if (sub == "max_epochs") {
                tc.max_epochs = parse_uint(value, key);
            } else if (sub == "seed") {
                tc.seed = parse_uint(value, key);
            } else {
                throw validation_error("unknown config key \"" + key + "\"");
            }
        } else {
            throw validation_error("unknown config key \"" + key + "\"");
        }
    }
    cfg.validate();
    return cfg;
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream out;
    if (corpus_path) out << "corpus = " << *corpus_path << '\n';
    out << "gen.n_records = " << generator.n_records << '\n';
    out << "gen.proportions = " << generator.label_proportions[0] << ' '
        << generator.label_proportions[1] << ' ' << generator.label_proportions[2] << '\n';
    out << "gen.noise_rate = " << generator.noise_rate << '\n';
    out << "gen.seed = " << generator_seed << '\n';
    out << "gen.image_rows = " << generator.image_rows << '\n';
    out << "gen.image_cols = " << generator.image_cols << '\n';
    out << "split.primary = " << boundaries.primary_window.start.to_string() << ' '
        << boundaries.primary_window.end.to_string() << '\n';
    out << "split.secondary = " << boundaries.secondary_window.start.to_string() << ' '
        << boundaries.secondary_window.end.to_string() << '\n';
    out << "split.test = " << boundaries.test_window.start.to_string() << ' '
        << boundaries.test_window.end.to_string() << '\n';
    out << "split.ratios = " << boundaries.primary_ratios[0] << ' '
        << boundaries.primary_ratios[1] << ' ' << boundaries.primary_ratios[2] << '\n';
    out << "split.seed = " << split_seed << '\n';
    if (rules_path) out << "rules = " << *rules_path << '\n';
    const auto emit_train = [&out](const char* prefix, const TrainConfig& tc) {
        out << prefix << ".lr_grid =";
        for (double lr : tc.learning_rate_grid) out << ' ' << lr;
        out << '\n';
        out << prefix << ".batch_size = " << tc.batch_size << '\n';
        out << prefix << ".patience = " << tc.patience << '\n';
        out << prefix << ".max_epochs = " << tc.max_epochs << '\n';
        out << prefix << ".seed = " << tc.seed << '\n';
    };
    emit_train("text", text_config);
    emit_train("image", image_config);
    out << "image.grid = " << image_grid_rows << ' ' << image_grid_cols << '\n';
    out << "min_df = " << min_df << '\n';
    out << "seeds =";
    for (auto s : seeds) out << ' ' << s;
    out << '\n';
    return out.str();
}

void ExperimentConfig::validate() const {
    if (!corpus_path) generator.validate();
    boundaries.validate();
    text_config.validate();
    image_config.validate();
    if (seeds.empty()) throw validation_error("seeds must be non-empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw validation_error("seeds must be distinct");
    }
    if (image_grid_rows == 0 || image_grid_cols == 0) {
        throw validation_error("image.grid dimensions must be positive");
    }
}

AucComparison compare_aucs(const std::array<double, 3>& auc_a,
                           const std::array<double, 3>& auc_b,
                           const std::array<std::size_t, 3>& class_counts) {
    AucComparison cmp;
    const AucReport a = wauc(auc_a, class_counts);
    const AucReport b = wauc(auc_b, class_counts);
    for (std::size_t c = 0; c < 3; ++c) cmp.delta[c] = auc_b[c] - auc_a[c];
    cmp.wauc_a = a.wauc;
    cmp.wauc_b = b.wauc;
    cmp.wauc_delta = b.wauc - a.wauc;
    return cmp;
}

ComparisonReport compare_models(const std::vector<std::array<double, 3>>& probs_a,
                                const std::vector<std::array<double, 3>>& probs_b,
                                const std::vector<Label>& true_labels) {
    if (probs_a.size() != true_labels.size() || probs_b.size() != true_labels.size() ||
        true_labels.empty()) {
        throw validation_error("compare_models requires parallel non-empty inputs");
    }
    ComparisonReport report;
    const auto sets_a = one_vs_rest(probs_a, true_labels);
    const auto sets_b = one_vs_rest(probs_b, true_labels);
    std::array<std::size_t, 3> counts{};
    for (Label l : true_labels) ++counts[static_cast<std::size_t>(l)];
    const std::size_t n = true_labels.size();

    double wa = 0.0, wb = 0.0, ftotal = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        ClassComparison& cc = report.per_class[c];
        if (counts[c] == 0 || counts[c] == n) {
            report.warnings.push_back("class " + label_name(static_cast<Label>(c)) +
                                      (counts[c] == 0 ? " absent from truth"
                                                      : " is the only class in truth") +
                                      "; AUC and p undefined, WAUC renormalized");
            continue;
        }
        cc.auc_a = auc(sets_a[c]);
        cc.auc_b = auc(sets_b[c]);
        cc.delta = *cc.auc_b - *cc.auc_a;
        if (counts[c] >= 2 && n - counts[c] >= 2) {
            cc.delong = delong_test(sets_a[c].scores, sets_b[c].scores, sets_a[c].labels);
        } else {
            report.warnings.push_back("class " + label_name(static_cast<Label>(c)) +
                                      ": too few cases for the DeLong test");
        }
        const double f = static_cast<double>(counts[c]) / static_cast<double>(n);
        wa += f * *cc.auc_a;
        wb += f * *cc.auc_b;
        ftotal += f;
    }
    if (ftotal == 0.0) {
        throw validation_error("compare_models: no class with both positives and negatives");
    }
    report.wauc_a = wa / ftotal;
    report.wauc_b = wb / ftotal;
    report.wauc_delta = report.wauc_b - report.wauc_a;
    return report;
}

namespace {

template <class F>
auto run_stage(const std::string& name, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const validation_error& e) {
        throw validation_error("stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error("stage " + name + ": " + e.what());
    }
}

struct Partition {
    std::vector<const StudyRecord*> records;
    std::vector<Label> rule_labels;  // filled for manually labeled partitions
};

Partition gather(const Corpus& corpus, const std::map<std::string, std::size_t>& by_acc,
                 const std::vector<std::string>& accessions) {
    Partition part;
    part.records.reserve(accessions.size());
    for (const auto& acc : accessions) {
        part.records.push_back(&corpus[by_acc.at(acc)]);
    }
    return part;
}

AucReport auc_report_of(const std::vector<std::array<double, 3>>& probs,
                        const std::vector<Label>& truth) {
    AucReport report;
    const auto sets = one_vs_rest(probs, truth);
    std::array<std::size_t, 3> counts{};
    for (Label l : truth) ++counts[static_cast<std::size_t>(l)];
    double acc = 0.0, ftotal = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        report.frequencies[c] =
            static_cast<double>(counts[c]) / static_cast<double>(truth.size());
        if (counts[c] == 0 || counts[c] == truth.size()) {
            report.per_class_auc[c] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        report.per_class_auc[c] = auc(sets[c]);
        acc += report.frequencies[c] * report.per_class_auc[c];
        ftotal += report.frequencies[c];
    }
    if (ftotal == 0.0) throw validation_error("no scorable class in evaluation set");
    report.wauc = acc / ftotal;
    return report;
}

json auc_report_json(const AucReport& r) {
    json j;
    json per = json::array();
    for (double a : r.per_class_auc) {
        if (std::isnan(a)) per.push_back(nullptr); else per.push_back(a);
    }
    j["per_class_auc"] = std::move(per);
    j["frequencies"] = r.frequencies;
    j["wauc"] = r.wauc;
    return j;
}

json comparison_json(const ComparisonReport& c) {
    json j;
    json per = json::array();
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& cc = c.per_class[k];
        json e;
        e["class"] = label_name(static_cast<Label>(k));
        e["auc_baseline"] = cc.auc_a ? json(*cc.auc_a) : json(nullptr);
        e["auc_augmented"] = cc.auc_b ? json(*cc.auc_b) : json(nullptr);
        e["delta"] = cc.delta ? json(*cc.delta) : json(nullptr);
        if (cc.delong) {
            e["delong"] = {{"z", cc.delong->z},
                           {"p_two_sided", cc.delong->p_two_sided},
                           {"variance_of_difference", cc.delong->variance_of_difference}};
        } else {
            e["delong"] = nullptr;
        }
        per.push_back(std::move(e));
    }
    j["per_class"] = std::move(per);
    j["wauc_baseline"] = c.wauc_a;
    j["wauc_augmented"] = c.wauc_b;
    j["wauc_delta"] = c.wauc_delta;
    j["warnings"] = c.warnings;
    return j;
}

}  // namespace

void write_roc_csv(const ScoredSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot open for writing: " + path);
    out << "threshold,fpr,tpr\n";
    out.precision(17);
    for (const auto& pt : roc_curve(set)) {
        if (std::isinf(pt.threshold)) {
            out << "inf";
        } else {
            out << pt.threshold;
        }
        out << ',' << pt.fpr << ',' << pt.tpr << '\n';
    }
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const bool writing = !config.out_dir.empty();
    if (writing) fs::create_directories(config.out_dir);
    const auto out_path = [&](const std::string& name) {
        return (fs::path(config.out_dir) / name).string();
    };

    try {
        ExperimentReport report;
        report.config_hash = fnv1a_hex(config.serialize());

        // (1) Corpus acquisition and metadata filtering.
        Corpus corpus = run_stage("corpus", [&] {
            Corpus c = config.corpus_path ? load_corpus(*config.corpus_path)
                                          : generate_corpus(config.generator,
                                                            config.generator_seed);
            c = filter_studies(c, config.filter);
            // The generator's planted truth never reaches the pipeline.
            for (auto& rec : c) rec.label.reset();
            return c;
        });
        report.n_studies = corpus.size();
        {
            std::set<std::string> patients;
            for (const auto& rec : corpus) patients.insert(rec.patient_id);
            report.n_patients = patients.size();
        }

        // (2) Temporal split with leakage removal.
        const SplitPlan plan = run_stage("split", [&] {
            return split_by_date(corpus, config.boundaries, config.split_seed);
        });
        report.partition_sizes = {plan.train_pri.size(), plan.val_eval.size(),
                                  plan.val_ptest.size(), plan.train_sec.size(),
                                  plan.test.size()};
        report.removed_from_train_sec = plan.removed_from_train_sec.size();
        report.removed_from_test = plan.removed_from_test.size();
        if (writing) save_plan(plan, out_path("plan.json"));

        std::map<std::string, std::size_t> by_acc;
        for (std::size_t i = 0; i < corpus.size(); ++i) by_acc[corpus[i].accession_id] = i;

        // (3) Rule labels for everything except TRAIN_SEC.
        const RuleSet rules = run_stage("rules", [&] {
            if (!config.rules_path) return default_ruleset();
            std::ifstream in(*config.rules_path);
            if (!in) throw validation_error("no such rules file: " + *config.rules_path);
            std::stringstream buf;
            buf << in.rdbuf();
            return parse_ruleset(buf.str());
        });

        auto train_pri = gather(corpus, by_acc, plan.train_pri);
        auto val_eval = gather(corpus, by_acc, plan.val_eval);
        auto val_ptest = gather(corpus, by_acc, plan.val_ptest);
        auto train_sec = gather(corpus, by_acc, plan.train_sec);
        auto test = gather(corpus, by_acc, plan.test);

        run_stage("rule-label", [&] {
            for (Partition* part : {&train_pri, &val_eval, &val_ptest, &test}) {
                part->rule_labels.reserve(part->records.size());
                for (const auto* rec : part->records) {
                    part->rule_labels.push_back(
                        apply_rules(rules, preprocess_report(rec->report_text)).label);
                }
            }
            return 0;
        });
        report.n_manual_labeled = train_pri.records.size() + val_eval.records.size() +
                                  val_ptest.records.size() + test.records.size();

        // (4) Train the automated labeler on TRAIN_PRI, checkpoint on VAL_EVAL.
        LinearSoftmaxModel labeler = run_stage("train-labeler", [&] {
            std::vector<TokenSeq> train_tokens;
            train_tokens.reserve(train_pri.records.size());
            for (const auto* rec : train_pri.records) {
                train_tokens.push_back(preprocess_report(rec->report_text));
            }
            const Vocabulary vocab = build_vocab(train_tokens, config.min_df);
            const auto proto = LinearSoftmaxModel::text_prototype(vocab);

            Dataset tr, va;
            for (std::size_t i = 0; i < train_tokens.size(); ++i) {
                tr.features.push_back(featurize_text(train_tokens[i], vocab));
            }
            tr.labels = train_pri.rule_labels;
            for (const auto* rec : val_eval.records) {
                va.features.push_back(
                    featurize_text(preprocess_report(rec->report_text), vocab));
            }
            va.labels = val_eval.rule_labels;

            auto [model, log] = train(tr, va, config.text_config, proto);
            report.labeler_val_wauc = log.runs[log.chosen_run].best_val_wauc;
            report.labeler_learning_rate = log.runs[log.chosen_run].learning_rate;
            return model;
        });
        if (writing) save_model(labeler, out_path("labeler.json"));

        // (5) Pseudo-label TRAIN_SEC.
        const std::vector<LabelInfo> pseudo_labels = run_stage("pseudo-label", [&] {
            std::vector<LabelInfo> labels;
            labels.reserve(train_sec.records.size());
            for (const auto* rec : train_sec.records) {
                const auto p = predict_proba(labeler, featurize_record(labeler, *rec));
                std::size_t argmax = 0;
                for (std::size_t c = 1; c < 3; ++c) {
                    if (p[c] > p[argmax]) argmax = c;
                }
                labels.push_back(LabelInfo{static_cast<Label>(argmax), Provenance::Pseudo, p});
                ++report.pseudo_label_counts[argmax];
            }
            return labels;
        });
        report.n_pseudo_labeled = pseudo_labels.size();

        // (6) Image models over the seed list.
        const auto featurize_partition = [&](const Partition& part) {
            std::vector<FeatureVector> features;
            features.reserve(part.records.size());
            for (const auto* rec : part.records) {
                if (!rec->pixels) {
                    throw validation_error("record " + rec->accession_id + " has no pixels");
                }
                features.push_back(featurize_image(normalize_pixels(*rec->pixels),
                                                   config.image_grid_rows,
                                                   config.image_grid_cols));
            }
            return features;
        };

        struct SeedModels {
            LinearSoftmaxModel baseline;
            LinearSoftmaxModel augmented;
        };
        std::vector<SeedModels> models;

        run_stage("train-image", [&] {
            const auto proto = LinearSoftmaxModel::image_prototype(config.image_grid_rows,
                                                                   config.image_grid_cols);
            Dataset baseline_train, augmented_train, val;
            baseline_train.features = featurize_partition(train_pri);
            baseline_train.labels = train_pri.rule_labels;
            augmented_train = baseline_train;
            const auto sec_features = featurize_partition(train_sec);
            for (std::size_t i = 0; i < sec_features.size(); ++i) {
                augmented_train.features.push_back(sec_features[i]);
                augmented_train.labels.push_back(pseudo_labels[i].value);
            }
            val.features = featurize_partition(val_eval);
            val.labels = val_eval.rule_labels;

            const auto ptest_features = featurize_partition(val_ptest);
            const auto test_features = featurize_partition(test);

            const auto probs_of = [](const LinearSoftmaxModel& model,
                                     const std::vector<FeatureVector>& features) {
                std::vector<std::array<double, 3>> probs;
                probs.reserve(features.size());
                for (const auto& fv : features) probs.push_back(predict_proba(model, fv));
                return probs;
            };

            for (const std::uint64_t seed : config.seeds) {
                TrainConfig tc = config.image_config;
                tc.seed = seed;
                auto [model_a, log_a] = train(baseline_train, val, tc, proto);
                auto [model_b, log_b] = train(augmented_train, val, tc, proto);

                SeedResult result;
                result.seed = seed;
                result.val_ptest_wauc_baseline =
                    multiclass_wauc(probs_of(model_a, ptest_features), val_ptest.rule_labels);
                result.val_ptest_wauc_augmented =
                    multiclass_wauc(probs_of(model_b, ptest_features), val_ptest.rule_labels);
                const auto test_probs_a = probs_of(model_a, test_features);
                const auto test_probs_b = probs_of(model_b, test_features);
                result.test_baseline = auc_report_of(test_probs_a, test.rule_labels);
                result.test_augmented = auc_report_of(test_probs_b, test.rule_labels);
                result.test_comparison =
                    compare_models(test_probs_a, test_probs_b, test.rule_labels);
                report.per_seed.push_back(result);
                models.push_back(SeedModels{std::move(model_a), std::move(model_b)});
            }
            return 0;
        });

        // (7) Seed aggregation and selection on VAL_PTEST.
        run_stage("select", [&] {
            std::vector<double> base_waucs, aug_waucs;
            for (const auto& r : report.per_seed) {
                base_waucs.push_back(r.val_ptest_wauc_baseline);
                aug_waucs.push_back(r.val_ptest_wauc_augmented);
            }
            report.baseline_val_ptest = aggregate_seeds(base_waucs);
            report.augmented_val_ptest = aggregate_seeds(aug_waucs);
            const auto argmax = [](const std::vector<double>& v) {
                return static_cast<std::size_t>(
                    std::max_element(v.begin(), v.end()) - v.begin());
            };
            report.selected_seed_baseline = config.seeds[argmax(base_waucs)];
            report.selected_seed_augmented = config.seeds[argmax(aug_waucs)];
            return 0;
        });

        // (8) Final evaluation of the selected models on TEST.
        run_stage("evaluate", [&] {
            const auto test_features = featurize_partition(test);
            std::size_t idx_a = 0, idx_b = 0;
            for (std::size_t i = 0; i < config.seeds.size(); ++i) {
                if (config.seeds[i] == report.selected_seed_baseline) idx_a = i;
                if (config.seeds[i] == report.selected_seed_augmented) idx_b = i;
            }
            std::vector<std::array<double, 3>> probs_a, probs_b;
            for (const auto& fv : test_features) {
                probs_a.push_back(predict_proba(models[idx_a].baseline, fv));
                probs_b.push_back(predict_proba(models[idx_b].augmented, fv));
            }
            report.test_baseline = auc_report_of(probs_a, test.rule_labels);
            report.test_augmented = auc_report_of(probs_b, test.rule_labels);
            report.comparison = compare_models(probs_a, probs_b, test.rule_labels);

            if (writing) {
                const auto sets_a = one_vs_rest(probs_a, test.rule_labels);
                const auto sets_b = one_vs_rest(probs_b, test.rule_labels);
                for (std::size_t c = 0; c < 3; ++c) {
                    const std::string cls = label_name(static_cast<Label>(c));
                    write_roc_csv(sets_a[c], out_path("roc_baseline_" + cls + ".csv"));
                    write_roc_csv(sets_b[c], out_path("roc_augmented_" + cls + ".csv"));
                }
            }
            return 0;
        });

        if (writing) {
            std::ofstream(out_path("config.txt")) << config.serialize();
            std::ofstream(out_path("report.json")) << report_to_json(report) << '\n';
            std::ofstream(out_path("report.txt")) << report_summary(report);
        }
        return report;
    } catch (...) {
        if (writing) {
            std::ofstream marker(out_path("FAILED"));
            try {
                throw;
            } catch (const std::exception& e) {
                marker << e.what() << '\n';
                throw;
            }
        }
        throw;
    }
}

std::string report_to_json(const ExperimentReport& report) {
    json j;
    j["config_hash"] = report.config_hash;
    j["n_studies"] = report.n_studies;
    j["n_patients"] = report.n_patients;
    {
        json sizes;
        for (std::size_t p = 0; p < partition_names.size(); ++p) {
            sizes[partition_names[p]] = report.partition_sizes[p];
        }
        j["partition_sizes"] = std::move(sizes);
        j["removed_from_train_sec"] = report.removed_from_train_sec;
        j["removed_from_test"] = report.removed_from_test;
    }
    j["labeler"] = {{"val_eval_wauc", report.labeler_val_wauc},
                    {"learning_rate", report.labeler_learning_rate}};
    {
        json pl;
        for (std::size_t c = 0; c < 3; ++c) {
            pl[label_name(static_cast<Label>(c))] = report.pseudo_label_counts[c];
        }
        j["pseudo_label_counts"] = std::move(pl);
        j["n_manual_labeled"] = report.n_manual_labeled;
        j["n_pseudo_labeled"] = report.n_pseudo_labeled;
        j["pseudo_to_manual_ratio"] =
            report.n_manual_labeled == 0
                ? json(nullptr)
                : json(static_cast<double>(report.n_pseudo_labeled) /
                       static_cast<double>(report.n_manual_labeled));
    }
    json seeds = json::array();
    for (const auto& r : report.per_seed) {
        json e;
        e["seed"] = r.seed;
        e["val_ptest_wauc_baseline"] = r.val_ptest_wauc_baseline;
        e["val_ptest_wauc_augmented"] = r.val_ptest_wauc_augmented;
        e["test_baseline"] = auc_report_json(r.test_baseline);
        e["test_augmented"] = auc_report_json(r.test_augmented);
        e["test_comparison"] = comparison_json(r.test_comparison);
        seeds.push_back(std::move(e));
    }
    j["per_seed"] = std::move(seeds);
    const auto agg_json = [](const SeedAggregate& a) {
        return json{{"mean", a.mean}, {"sd", a.sd}, {"median", a.median}};
    };
    j["val_ptest_aggregate"] = {{"baseline", agg_json(report.baseline_val_ptest)},
                                {"augmented", agg_json(report.augmented_val_ptest)}};
    j["selected_seed_baseline"] = report.selected_seed_baseline;
    j["selected_seed_augmented"] = report.selected_seed_augmented;
    j["test_baseline"] = auc_report_json(report.test_baseline);
    j["test_augmented"] = auc_report_json(report.test_augmented);
    j["comparison"] = comparison_json(report.comparison);
    return j.dump(2);
}

std::string report_summary(const ExperimentReport& report) {
    std::ostringstream out;
    out.precision(4);
    out << "Experiment report (config " << report.config_hash << ")\n";
    out << "  studies: " << report.n_studies << ", patients: " << report.n_patients << '\n';
    out << "  partitions:";
    for (std::size_t p = 0; p < partition_names.size(); ++p) {
        out << ' ' << partition_names[p] << '=' << report.partition_sizes[p];
    }
    out << "\n  leakage removed: " << report.removed_from_train_sec
        << " patients from train_sec, " << report.removed_from_test << " from test\n";
    out << "  labeler: VAL_EVAL WAUC " << report.labeler_val_wauc << " (lr "
        << report.labeler_learning_rate << ")\n";
    out << "  pseudo labels:";
    for (std::size_t c = 0; c < 3; ++c) {
        out << ' ' << label_name(static_cast<Label>(c)) << '='
            << report.pseudo_label_counts[c];
    }
    out << "\n  manual:pseudo = " << report.n_manual_labeled << ':'
        << report.n_pseudo_labeled << '\n';
    out << "  VAL_PTEST WAUC baseline mean/sd/median " << report.baseline_val_ptest.mean
        << '/' << report.baseline_val_ptest.sd << '/' << report.baseline_val_ptest.median
        << '\n';
    out << "  VAL_PTEST WAUC augmented mean/sd/median " << report.augmented_val_ptest.mean
        << '/' << report.augmented_val_ptest.sd << '/' << report.augmented_val_ptest.median
        << '\n';
    out << "  selected seeds: baseline " << report.selected_seed_baseline << ", augmented "
        << report.selected_seed_augmented << '\n';
    out << "  TEST WAUC baseline " << report.test_baseline.wauc << ", augmented "
        << report.test_augmented.wauc << " (delta " << report.comparison.wauc_delta << ")\n";
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& cc = report.comparison.per_class[c];
        out << "  " << label_name(static_cast<Label>(c)) << ": ";
        if (cc.delta) {
            out << "delta " << *cc.delta;
            if (cc.delong) {
                out << ", DeLong z " << cc.delong->z << ", p " << cc.delong->p_two_sided;
            }
        } else {
            out << "undefined";
        }
        out << '\n';
    }
    for (const auto& w : report.comparison.warnings) out << "  warning: " << w << '\n';
    return out.str();
}

}  // namespace kneelab

// Command-line front end for the weak-supervision knee-report pipeline.

#include <array>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "kneelab/corpus.hpp"
#include "kneelab/learncore.hpp"
#include "kneelab/metrics.hpp"
#include "kneelab/pipeline.hpp"
#include "kneelab/rulelab.hpp"
#include "kneelab/splitter.hpp"
#include "kneelab/textprep.hpp"

namespace {

using namespace kneelab;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot read file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Dataset dataset_of(const Corpus& corpus, const LinearSoftmaxModel& proto) {
    Dataset ds;
    for (const auto& rec : corpus) {
        if (!rec.label) {
            throw validation_error("record " + rec.accession_id + " is unlabeled");
        }
        ds.features.push_back(featurize_record(proto, rec));
        ds.labels.push_back(rec.label->value);
    }
    return ds;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Weak-supervision pipeline for knee radiograph classification"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic corpus");
    std::size_t gen_n = 8585;
    std::uint64_t gen_seed = 1;
    double gen_noise = 0.05;
    std::string gen_out = "corpus.jsonl";
    gen->add_option("--n", gen_n, "Number of records");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--noise", gen_noise, "Noise rate in [0,1]");
    gen->add_option("--out", gen_out, "Output corpus path");
    gen->callback([&] {
        GeneratorSpec spec = GeneratorSpec::defaults();
        spec.n_records = gen_n;
        spec.noise_rate = gen_noise;
        save_corpus(generate_corpus(spec, gen_seed), gen_out);
        std::cout << "wrote " << gen_n << " records to " << gen_out << '\n';
    });

    // split
    auto* split = app.add_subcommand("split", "Split a corpus by study date");
    std::string split_corpus, split_out = "plan.json";
    std::uint64_t split_seed = 11;
    split->add_option("--corpus", split_corpus, "Corpus path")->required();
    split->add_option("--seed", split_seed, "Sub-split seed");
    split->add_option("--out", split_out, "Plan output path");
    split->callback([&] {
        const Corpus corpus = load_corpus(split_corpus);
        const SplitPlan plan =
            split_by_date(corpus, SplitBoundaries::defaults_2019(), split_seed);
        save_plan(plan, split_out);
        std::cout << "train_pri=" << plan.train_pri.size()
                  << " val_eval=" << plan.val_eval.size()
                  << " val_ptest=" << plan.val_ptest.size()
                  << " train_sec=" << plan.train_sec.size() << " test=" << plan.test.size()
                  << " removed_sec=" << plan.removed_from_train_sec.size()
                  << " removed_test=" << plan.removed_from_test.size() << '\n';
    });

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "Emit cleaned token sequences");
    std::string prep_corpus;
    std::size_t prep_max = default_max_tokens;
    prep->add_option("--corpus", prep_corpus, "Corpus path")->required();
    prep->add_option("--max-tokens", prep_max, "Token cap");
    prep->callback([&] {
        for (const auto& rec : load_corpus(prep_corpus)) {
            const TokenSeq seq = preprocess_report(rec.report_text, prep_max);
            std::cout << rec.accession_id << '\t';
            for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
                if (i) std::cout << ' ';
                std::cout << seq.tokens[i];
            }
            if (seq.truncated) std::cout << "\t[truncated]";
            std::cout << '\n';
        }
    });

    // rules apply / rules dump-default
    auto* rules_cmd = app.add_subcommand("rules", "Rule-engine operations");
    rules_cmd->require_subcommand(1);
    auto* rules_apply = rules_cmd->add_subcommand("apply", "Label a corpus with rules");
    std::string ra_corpus, ra_rules, ra_out;
    rules_apply->add_option("--corpus", ra_corpus, "Corpus path")->required();
    rules_apply->add_option("--rules", ra_rules, "Rule config (default: bundled)");
    rules_apply->add_option("--out", ra_out, "Labeled corpus output path")->required();
    rules_apply->callback([&] {
        const RuleSet rules =
            ra_rules.empty() ? default_ruleset() : parse_ruleset(read_file(ra_rules));
        Corpus corpus = load_corpus(ra_corpus);
        std::array<std::size_t, 3> counts{};
        for (auto& rec : corpus) {
            const auto decision = apply_rules(rules, preprocess_report(rec.report_text));
            rec.label = LabelInfo{decision.label, Provenance::Rule, {0, 0, 0}};
            ++counts[static_cast<std::size_t>(decision.label)];
        }
        save_corpus(corpus, ra_out);
        std::cout << "labeled " << corpus.size() << " records: normal=" << counts[0]
                  << " abnormal=" << counts[1] << " arthroplasty=" << counts[2] << '\n';
    });
    auto* rules_dump = rules_cmd->add_subcommand("dump-default", "Print the bundled rules");
    rules_dump->callback([] { std::cout << default_rule_config(); });

    // train-labeler
    auto* tl = app.add_subcommand("train-labeler", "Train the report text classifier");
    std::string tl_train, tl_val, tl_out = "labeler.json";
    std::uint64_t tl_seed = 7;
    std::size_t tl_min_df = 2;
    tl->add_option("--train", tl_train, "Labeled training corpus")->required();
    tl->add_option("--val", tl_val, "Labeled validation corpus")->required();
    tl->add_option("--out", tl_out, "Model output path");
    tl->add_option("--seed", tl_seed, "Training seed");
    tl->add_option("--min-df", tl_min_df, "Vocabulary document-frequency floor");
    tl->callback([&] {
        const Corpus train_corpus = load_corpus(tl_train);
        const Corpus val_corpus = load_corpus(tl_val);
        std::vector<TokenSeq> tokens;
        for (const auto& rec : train_corpus) {
            tokens.push_back(preprocess_report(rec.report_text));
        }
        const auto proto =
            LinearSoftmaxModel::text_prototype(build_vocab(tokens, tl_min_df));
        TrainConfig cfg;
        cfg.patience = 15;
        cfg.seed = tl_seed;
        auto [model, log] =
            train(dataset_of(train_corpus, proto), dataset_of(val_corpus, proto), cfg, proto);
        save_model(model, tl_out);
        std::cout << "best val WAUC " << log.runs[log.chosen_run].best_val_wauc << " at lr "
                  << log.runs[log.chosen_run].learning_rate << "; wrote " << tl_out << '\n';
    });

    // pseudo-label
    auto* pl = app.add_subcommand("pseudo-label", "Label an unlabeled corpus with a model");
    std::string pl_model, pl_corpus, pl_out;
    pl->add_option("--model", pl_model, "Model path")->required();
    pl->add_option("--corpus", pl_corpus, "Unlabeled corpus path")->required();
    pl->add_option("--out", pl_out, "Labeled corpus output path")->required();
    pl->callback([&] {
        const auto model = load_model(pl_model);
        const Corpus labeled = pseudo_label(model, load_corpus(pl_corpus));
        save_corpus(labeled, pl_out);
        std::array<std::size_t, 3> counts{};
        for (const auto& rec : labeled) ++counts[static_cast<std::size_t>(rec.label->value)];
        std::cout << "pseudo-labeled " << labeled.size() << " records: normal=" << counts[0]
                  << " abnormal=" << counts[1] << " arthroplasty=" << counts[2] << '\n';
    });

    // train-image
    auto* ti = app.add_subcommand("train-image", "Train the image classifier");
    std::string ti_train, ti_val, ti_out = "image_model.json";
    std::uint64_t ti_seed = 101;
    std::size_t ti_grid_rows = 16, ti_grid_cols = 16;
    ti->add_option("--train", ti_train, "Labeled training corpus")->required();
    ti->add_option("--val", ti_val, "Labeled validation corpus")->required();
    ti->add_option("--out", ti_out, "Model output path");
    ti->add_option("--seed", ti_seed, "Training seed");
    ti->add_option("--grid-rows", ti_grid_rows, "Feature grid rows");
    ti->add_option("--grid-cols", ti_grid_cols, "Feature grid cols");
    ti->callback([&] {
        const auto proto = LinearSoftmaxModel::image_prototype(ti_grid_rows, ti_grid_cols);
        TrainConfig cfg;
        cfg.patience = 10;
        cfg.seed = ti_seed;
        auto [model, log] = train(dataset_of(load_corpus(ti_train), proto),
                                  dataset_of(load_corpus(ti_val), proto), cfg, proto);
        save_model(model, ti_out);
        std::cout << "best val WAUC " << log.runs[log.chosen_run].best_val_wauc << " at lr "
                  << log.runs[log.chosen_run].learning_rate << "; wrote " << ti_out << '\n';
    });

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Per-class AUC / WAUC of a model on a corpus");
    std::string ev_model, ev_corpus, ev_roc_prefix;
    ev->add_option("--model", ev_model, "Model path")->required();
    ev->add_option("--corpus", ev_corpus, "Labeled corpus path")->required();
    ev->add_option("--roc-prefix", ev_roc_prefix, "Write ROC CSVs with this path prefix");
    ev->callback([&] {
        const auto model = load_model(ev_model);
        const Corpus corpus = load_corpus(ev_corpus);
        std::vector<std::array<double, 3>> probs;
        std::vector<Label> truth;
        for (const auto& rec : corpus) {
            if (!rec.label) {
                throw validation_error("record " + rec.accession_id + " is unlabeled");
            }
            probs.push_back(predict_proba(model, featurize_record(model, rec)));
            truth.push_back(rec.label->value);
        }
        const auto sets = one_vs_rest(probs, truth);
        std::array<std::size_t, 3> counts{};
        for (Label l : truth) ++counts[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < 3; ++c) {
            const std::string cls = label_name(static_cast<Label>(c));
            if (counts[c] == 0 || counts[c] == truth.size()) {
                std::cout << cls << " AUC undefined\n";
                continue;
            }
            std::cout << cls << " AUC " << auc(sets[c]) << '\n';
            if (!ev_roc_prefix.empty()) {
                write_roc_csv(sets[c], ev_roc_prefix + cls + ".csv");
            }
        }
        std::cout << "WAUC " << multiclass_wauc(probs, truth) << '\n';
    });

    // delong
    auto* dl = app.add_subcommand("delong", "DeLong test over a scores CSV");
    std::string dl_scores;
    dl->add_option("--scores", dl_scores, "CSV with columns score_a,score_b,label(0/1)")
        ->required();
    dl->callback([&] {
        std::ifstream in(dl_scores);
        if (!in) throw validation_error("cannot read file: " + dl_scores);
        std::vector<double> a, b;
        std::vector<bool> labels;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || (lineno == 1 && line.find("score") != std::string::npos)) {
                continue;  // optional header
            }
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream fields(line);
            double sa, sb;
            int lbl;
            if (!(fields >> sa >> sb >> lbl) || (lbl != 0 && lbl != 1)) {
                throw validation_error("scores CSV line " + std::to_string(lineno) +
                                       ": expected score_a,score_b,label(0/1)");
            }
            a.push_back(sa);
            b.push_back(sb);
            labels.push_back(lbl == 1);
        }
        const DeLongResult r = delong_test(a, b, labels);
        std::cout << "auc_a " << r.auc_a << "\nauc_b " << r.auc_b << "\nvar "
                  << r.variance_of_difference << "\nz " << r.z << "\np " << r.p_two_sided
                  << '\n';
    });

    // run
    auto* run = app.add_subcommand("run", "Run the full experiment");
    std::string run_config, run_out = "results";
    run->add_option("--config", run_config, "Experiment config file (key = value)");
    run->add_option("--out", run_out, "Output directory");
    run->callback([&] {
        ExperimentConfig cfg = run_config.empty() ? ExperimentConfig::defaults()
                                                  : ExperimentConfig::parse(read_file(run_config));
        cfg.out_dir = run_out;
        const ExperimentReport report = run_experiment(cfg);
        std::cout << report_summary(report);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const kneelab::validation_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 2;
    }
}

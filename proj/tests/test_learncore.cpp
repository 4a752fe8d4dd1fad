#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "kneelab/common.hpp"
#include "kneelab/learncore.hpp"
#include "kneelab/metrics.hpp"
#include "kneelab/textprep.hpp"

using namespace kneelab;

namespace {

TokenSeq toks(const std::string& text) { return tokenize(text, default_max_tokens); }

double entry(const FeatureVector& fv, std::uint32_t index) {
    for (const auto& [i, v] : fv.entries) {
        if (i == index) return v;
    }
    return 0.0;
}

FeatureVector dense_features(Rng& rng, std::size_t dim) {
    FeatureVector fv;
    fv.dim = dim;
    for (std::size_t i = 0; i < dim; ++i) {
        if (rng.uniform() < 0.7) {
            fv.entries.emplace_back(static_cast<std::uint32_t>(i), rng.uniform() * 2.0 - 1.0);
        }
    }
    return fv;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// Two-dimensional toy problem with a linearly separable structure over three
// classes; feature 0 votes Abnormal vs Normal, feature 1 flags Arthroplasty.
Dataset toy_dataset(Rng& rng, std::size_t n) {
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        const auto cls = static_cast<Label>(i % 3);
        FeatureVector fv;
        fv.dim = 2;
        const double jitter = rng.uniform() * 0.2;
        switch (cls) {
            case Label::Normal:
                fv.entries = {{0, -1.0 + jitter}, {1, 0.05 * jitter}};
                break;
            case Label::Abnormal:
                fv.entries = {{0, 1.0 - jitter}, {1, 0.05 * jitter}};
                break;
            default:
                fv.entries = {{0, jitter - 0.1}, {1, 1.0 - jitter}};
                break;
        }
        ds.features.push_back(std::move(fv));
        ds.labels.push_back(cls);
    }
    return ds;
}

}  // namespace

TEST_CASE("build_vocab sorts tokens, counts document frequency, applies min_df") {
    const std::vector<TokenSeq> docs = {
        toks("knee pain knee"), toks("knee swelling"), toks("pain effusion")};
    const Vocabulary vocab = build_vocab(docs, 1);
    CHECK(vocab.tokens ==
          std::vector<std::string>{"effusion", "knee", "pain", "swelling"});
    CHECK(vocab.df == std::vector<std::size_t>{1, 2, 2, 1});
    CHECK(vocab.corpus_size == 3);
    CHECK(vocab.index_of("knee") == 1);
    CHECK_FALSE(vocab.index_of("fracture").has_value());

    const Vocabulary pruned = build_vocab(docs, 2);
    CHECK(pruned.tokens == std::vector<std::string>{"knee", "pain"});

    CHECK_THROWS_AS(build_vocab({}, 1), validation_error);
}

TEST_CASE("idf is smoothed") {
    const std::vector<TokenSeq> docs = {
        toks("knee pain knee"), toks("knee swelling"), toks("pain effusion")};
    const Vocabulary vocab = build_vocab(docs, 1);
    // ln((1+3)/(1+df)) + 1
    CHECK(vocab.idf(0) == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-15));  // df=1
    CHECK(vocab.idf(1) == doctest::Approx(std::log(4.0 / 3.0) + 1.0).epsilon(1e-15));
    // A token present in every document still gets positive weight.
    const Vocabulary all = build_vocab({toks("a"), toks("a"), toks("a")}, 1);
    CHECK(all.idf(0) == 1.0);
}

TEST_CASE("featurize_text frozen tf-idf fixture") {
    const std::vector<TokenSeq> docs = {
        toks("knee pain knee"), toks("knee swelling"), toks("pain effusion")};
    const Vocabulary vocab = build_vocab(docs, 1);
    // Independently computed L2-normalized tf-idf weights.
    const FeatureVector d1 = featurize_text(docs[0], vocab);
    CHECK(entry(d1, 1) == doctest::Approx(0.89442719099991586).epsilon(1e-14));
    CHECK(entry(d1, 2) == doctest::Approx(0.44721359549995793).epsilon(1e-14));
    CHECK(d1.entries.size() == 2);

    const FeatureVector d2 = featurize_text(docs[1], vocab);
    CHECK(entry(d2, 1) == doctest::Approx(0.60534850810629159).epsilon(1e-14));
    CHECK(entry(d2, 3) == doctest::Approx(0.7959605415681652).epsilon(1e-14));

    const FeatureVector d3 = featurize_text(docs[2], vocab);
    CHECK(entry(d3, 0) == doctest::Approx(0.7959605415681652).epsilon(1e-14));
    CHECK(entry(d3, 2) == doctest::Approx(0.60534850810629159).epsilon(1e-14));
}

TEST_CASE("featurize_text properties") {
    const std::vector<TokenSeq> docs = {
        toks("knee pain knee"), toks("knee swelling"), toks("pain effusion")};
    const Vocabulary vocab = build_vocab(docs, 1);

    // Unit L2 norm whenever any vocabulary token is present.
    for (const auto& doc : docs) {
        const auto fv = featurize_text(doc, vocab);
        double norm_sq = 0.0;
        for (const auto& [i, v] : fv.entries) norm_sq += v * v;
        CHECK(norm_sq == doctest::Approx(1.0).epsilon(1e-12));
        // Entries sorted by index.
        for (std::size_t k = 1; k < fv.entries.size(); ++k) {
            CHECK(fv.entries[k - 1].first < fv.entries[k].first);
        }
    }

    // Out-of-vocabulary tokens are ignored; all-OOV gives the zero vector.
    const auto oov = featurize_text(toks("total meniscus tear"), vocab);
    CHECK(oov.entries.empty());
    CHECK(oov.dim == vocab.tokens.size());
}

TEST_CASE("normalize_pixels rescales to [0, 255]") {
    Image raw;
    raw.rows = 2;
    raw.cols = 2;
    raw.data = {10.0, 20.0, 30.0, 60.0};
    const Image out = normalize_pixels(raw);
    const std::vector<double> expected = {0.0, 51.0, 102.0, 255.0};
    REQUIRE(out.data.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(out.data[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }

    Image flat{2, 2, {7.0, 7.0, 7.0, 7.0}};
    CHECK(normalize_pixels(flat).data == std::vector<double>{0.0, 0.0, 0.0, 0.0});

    Image bad{1, 2, {1.0, std::nan("")}};
    CHECK_THROWS_AS(normalize_pixels(bad), validation_error);
    CHECK_THROWS_AS(normalize_pixels(Image{}), validation_error);
}

TEST_CASE("featurize_image block means") {
    Image img;
    img.rows = 4;
    img.cols = 4;
    img.data = {255, 255, 0, 0,
                255, 255, 0, 0,
                0,   0,   0, 0,
                0,   0,   0, 255};
    const FeatureVector fv = featurize_image(img, 2, 2);
    REQUIRE(fv.entries.size() == 4);
    CHECK(fv.dim == 4);
    CHECK(entry(fv, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(entry(fv, 1) == 0.0);
    CHECK(entry(fv, 2) == 0.0);
    CHECK(entry(fv, 3) == doctest::Approx(0.25).epsilon(1e-15));

    // Uneven division: 5 rows over 2 grid rows -> blocks of 2 and 3 rows.
    Image odd;
    odd.rows = 5;
    odd.cols = 2;
    odd.data.assign(10, 255.0);
    const auto whole = featurize_image(odd, 2, 1);
    CHECK(entry(whole, 0) == doctest::Approx(1.0));
    CHECK(entry(whole, 1) == doctest::Approx(1.0));

    CHECK_THROWS_AS(featurize_image(img, 8, 8), validation_error);
    CHECK_THROWS_AS(featurize_image(img, 0, 2), validation_error);
}

TEST_CASE("predict_proba of a zero model is uniform and sums to one") {
    const LinearSoftmaxModel model = LinearSoftmaxModel::image_prototype(2, 2);
    FeatureVector fv;
    fv.dim = 4;
    fv.entries = {{0, 0.5}, {3, 0.25}};
    const auto p = predict_proba(model, fv);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    LinearSoftmaxModel biased = model;
    biased.bias = {1000.0, 0.0, -1000.0};  // max-subtraction keeps this finite
    const auto q = predict_proba(biased, fv);
    CHECK(q[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(q[2]));

    FeatureVector wrong;
    wrong.dim = 5;
    CHECK_THROWS_AS(predict_proba(model, wrong), validation_error);
}

TEST_CASE("softmax_xent gradients match finite differences") {
    const std::size_t dim = 7;
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        LinearSoftmaxModel model = LinearSoftmaxModel::image_prototype(1, dim);
        for (auto& w : model.weights) {
            for (auto& v : w) v = rng.uniform() * 2.0 - 1.0;
        }
        for (auto& b : model.bias) b = rng.uniform() - 0.5;
        const FeatureVector fv = dense_features(rng, dim);
        const auto truth = static_cast<Label>(rng.below(3));

        const XentGradients g = softmax_xent(model, fv, truth);
        const double h = 1e-6;
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < dim; ++i) {
                LinearSoftmaxModel up = model, dn = model;
                up.weights[c][i] += h;
                dn.weights[c][i] -= h;
                const double fd = (softmax_xent(up, fv, truth).loss -
                                   softmax_xent(dn, fv, truth).loss) /
                                  (2.0 * h);
                CHECK(g.grad_weights[c][i] == doctest::Approx(fd).epsilon(1e-4));
            }
            LinearSoftmaxModel up = model, dn = model;
            up.bias[c] += h;
            dn.bias[c] -= h;
            const double fd =
                (softmax_xent(up, fv, truth).loss - softmax_xent(dn, fv, truth).loss) /
                (2.0 * h);
            CHECK(g.grad_bias[c] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("adam first step moves each parameter by -lr*sign(gradient)") {
    std::vector<double> params = {1.0, -2.0, 0.5};
    const std::vector<double> grads = {0.3, -0.7, 0.0001};
    AdamState state;
    adam_step(params, grads, state, 0.01);
    // With bias correction, m_hat/sqrt(v_hat) == sign(g) for any g != 0 on
    // step one (up to epsilon).
    CHECK(params[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(params[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(params[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-3));
    CHECK(state.t == 1);

    CHECK_THROWS_AS(adam_step(params, {0.1}, state, 0.01), validation_error);
}

TEST_CASE("adam converges on a deterministic quadratic") {
    // Minimize (x-3)^2 + (y+1)^2 by feeding analytic gradients.
    std::vector<double> params = {0.0, 0.0};
    AdamState state;
    for (int step = 0; step < 4000; ++step) {
        const std::vector<double> grads = {2.0 * (params[0] - 3.0),
                                           2.0 * (params[1] + 1.0)};
        adam_step(params, grads, state, 0.05);
    }
    CHECK(params[0] == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(params[1] == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("train fits a separable toy problem and logs the grid") {
    Rng rng(1);
    const Dataset train_set = toy_dataset(rng, 90);
    const Dataset val_set = toy_dataset(rng, 30);
    TrainConfig config;
    config.seed = 5;
    config.patience = 10;
    config.max_epochs = 120;

    const auto [model, log] = train(train_set, val_set, config,
                                    LinearSoftmaxModel::image_prototype(1, 2));
    REQUIRE(log.runs.size() == 2);
    CHECK(log.chosen_run < log.runs.size());
    const auto& chosen = log.runs[log.chosen_run];
    CHECK(chosen.best_val_wauc == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(chosen.best_epoch >= 1);
    CHECK(chosen.best_epoch <= chosen.epochs.size());
    // The stored model reproduces the chosen run's validation score.
    std::vector<std::array<double, 3>> probs;
    for (const auto& fv : val_set.features) probs.push_back(predict_proba(model, fv));
    CHECK(multiclass_wauc(probs, val_set.labels) ==
          doctest::Approx(chosen.best_val_wauc).epsilon(1e-12));
}

TEST_CASE("train is deterministic for a fixed seed") {
    Rng rng(2);
    const Dataset train_set = toy_dataset(rng, 60);
    const Dataset val_set = toy_dataset(rng, 21);
    TrainConfig config;
    config.seed = 9;
    config.max_epochs = 40;
    config.patience = 5;
    const LinearSoftmaxModel proto = LinearSoftmaxModel::image_prototype(1, 2);

    const auto [m1, l1] = train(train_set, val_set, config, proto);
    const auto [m2, l2] = train(train_set, val_set, config, proto);
    CHECK(m1.weights == m2.weights);
    CHECK(m1.bias == m2.bias);
    REQUIRE(l1.runs.size() == l2.runs.size());
    for (std::size_t r = 0; r < l1.runs.size(); ++r) {
        CHECK(l1.runs[r].best_val_wauc == l2.runs[r].best_val_wauc);
        CHECK(l1.runs[r].epochs.size() == l2.runs[r].epochs.size());
    }
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
    // All-zero features keep the model frozen at uniform probabilities, so
    // the validation WAUC never improves after epoch one.
    Dataset train_set, val_set;
    for (int i = 0; i < 12; ++i) {
        FeatureVector fv;
        fv.dim = 2;
        train_set.features.push_back(fv);
        train_set.labels.push_back(static_cast<Label>(i % 3));
        if (i < 6) {
            val_set.features.push_back(fv);
            val_set.labels.push_back(static_cast<Label>(i % 2));
        }
    }
    TrainConfig config;
    config.learning_rate_grid = {1e-3};
    config.patience = 4;
    config.max_epochs = 200;
    const auto [model, log] =
        train(train_set, val_set, config, LinearSoftmaxModel::image_prototype(1, 2));
    REQUIRE(log.runs.size() == 1);
    CHECK(log.runs[0].epochs.size() == 1 + config.patience);
    CHECK(log.runs[0].best_epoch == 1);
}

TEST_CASE("train input validation") {
    TrainConfig config;
    const LinearSoftmaxModel proto = LinearSoftmaxModel::image_prototype(1, 2);
    Rng rng(3);
    const Dataset good = toy_dataset(rng, 12);

    CHECK_THROWS_AS(train({}, good, config, proto), validation_error);
    CHECK_THROWS_AS(train(good, {}, config, proto), validation_error);

    Dataset single = good;
    single.labels.assign(single.labels.size(), Label::Normal);
    CHECK_THROWS_AS(train(good, single, config, proto), validation_error);

    TrainConfig bad = config;
    bad.learning_rate_grid = {};
    CHECK_THROWS_AS(train(good, good, bad, proto), validation_error);
    bad = config;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(good, good, bad, proto), validation_error);
    bad = config;
    bad.patience = 0;
    CHECK_THROWS_AS(train(good, good, bad, proto), validation_error);
}

TEST_CASE("pseudo_label assigns argmax with provenance and probabilities") {
    GeneratorSpec spec = GeneratorSpec::defaults();
    spec.n_records = 30;
    spec.image_rows = 8;
    spec.image_cols = 8;
    Corpus corpus = generate_corpus(spec, 44);
    for (auto& rec : corpus) rec.label.reset();

    // Hand-set text model that keys on one generator word per class.
    const std::vector<TokenSeq> docs = {toks("unremarkable"), toks("degenerative"),
                                        toks("arthroplasty")};
    LinearSoftmaxModel model =
        LinearSoftmaxModel::text_prototype(build_vocab(docs, 1));
    const auto set_weight = [&](const std::string& tok, std::size_t cls, double w) {
        model.weights[cls][*model.vocab->index_of(tok)] = w;
    };
    set_weight("unremarkable", 0, 8.0);
    set_weight("degenerative", 1, 8.0);
    set_weight("arthroplasty", 2, 8.0);

    const Corpus labeled = pseudo_label(model, corpus);
    REQUIRE(labeled.size() == corpus.size());
    for (const auto& rec : labeled) {
        REQUIRE(rec.label.has_value());
        CHECK(rec.label->provenance == Provenance::Pseudo);
        double sum = 0.0;
        std::size_t argmax = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            sum += rec.label->probs[c];
            if (rec.label->probs[c] > rec.label->probs[argmax]) argmax = c;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(static_cast<std::size_t>(rec.label->value) == argmax);
    }

    // Ties go to the lowest label: a zero model predicts uniform.
    const LinearSoftmaxModel zero =
        LinearSoftmaxModel::text_prototype(build_vocab(docs, 1));
    const Corpus uniform = pseudo_label(zero, corpus);
    for (const auto& rec : uniform) CHECK(rec.label->value == Label::Normal);

    CHECK_THROWS_AS(pseudo_label(model, labeled), validation_error);
}

TEST_CASE("model save/load round-trip is exact") {
    Rng rng(6);
    const Dataset train_set = toy_dataset(rng, 45);
    const Dataset val_set = toy_dataset(rng, 15);
    TrainConfig config;
    config.max_epochs = 25;
    const auto [image_model, ignored] =
        train(train_set, val_set, config, LinearSoftmaxModel::image_prototype(1, 2));

    const std::string path = temp_path("kneelab_test_model.json");
    save_model(image_model, path);
    const LinearSoftmaxModel back = load_model(path);
    CHECK(back.kind == FeatureKind::Image);
    CHECK(back.dim == image_model.dim);
    CHECK(back.weights == image_model.weights);  // bit-exact via JSON doubles
    CHECK(back.bias == image_model.bias);
    CHECK(back.grid_rows == image_model.grid_rows);
    CHECK(back.grid_cols == image_model.grid_cols);
    CHECK_FALSE(back.vocab.has_value());

    const std::vector<TokenSeq> docs = {toks("knee pain"), toks("knee swelling")};
    LinearSoftmaxModel text_model =
        LinearSoftmaxModel::text_prototype(build_vocab(docs, 1), 128);
    text_model.weights[2][0] = 0.123456789012345678;
    save_model(text_model, path);
    const LinearSoftmaxModel tback = load_model(path);
    CHECK(tback.kind == FeatureKind::Text);
    CHECK(tback.vocab == text_model.vocab);
    CHECK(tback.max_tokens == 128);
    CHECK(tback.weights == text_model.weights);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_model(path), validation_error);
}

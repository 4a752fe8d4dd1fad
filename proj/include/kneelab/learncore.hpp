#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kneelab/corpus.hpp"
#include "kneelab/textprep.hpp"

namespace kneelab {

struct Vocabulary {
    std::vector<std::string> tokens;  // lexicographic; position = feature index
    std::vector<std::size_t> df;      // document frequency per token
    std::size_t corpus_size = 0;

    std::optional<std::size_t> index_of(const std::string& token) const;
    // Smoothed inverse document frequency: ln((1+N)/(1+df)) + 1.
    double idf(std::size_t index) const;

    bool operator==(const Vocabulary&) const = default;
};

// Sparse vector; entries sorted by index, indices unique.
struct FeatureVector {
    std::vector<std::pair<std::uint32_t, double>> entries;
    std::size_t dim = 0;
};

enum class FeatureKind { Text, Image };

struct LinearSoftmaxModel {
    FeatureKind kind = FeatureKind::Text;
    std::size_t dim = 0;
    std::array<std::vector<double>, 3> weights;  // per class, length dim
    std::array<double, 3> bias = {0.0, 0.0, 0.0};

    // Featurization metadata.
    std::optional<Vocabulary> vocab;      // text models
    std::size_t max_tokens = default_max_tokens;
    std::size_t grid_rows = 0;            // image models
    std::size_t grid_cols = 0;

    static LinearSoftmaxModel text_prototype(Vocabulary vocab,
                                             std::size_t max_tokens = default_max_tokens);
    static LinearSoftmaxModel image_prototype(std::size_t grid_rows, std::size_t grid_cols);
};

struct TrainConfig {
    std::vector<double> learning_rate_grid = {1e-2, 1e-3};
    std::size_t batch_size = 16;
    std::size_t patience = 15;
    std::size_t max_epochs = 500;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct AdamState {
    std::vector<double> m;  // first moments
    std::vector<double> v;  // second moments
    std::size_t t = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_wauc = 0.0;
};

struct TrainLog {
    struct GridRun {
        double learning_rate = 0.0;
        std::vector<EpochStats> epochs;
        std::size_t best_epoch = 0;  // 1-based
        double best_val_wauc = 0.0;
    };
    std::vector<GridRun> runs;
    std::size_t chosen_run = 0;
};

struct Dataset {
    std::vector<FeatureVector> features;
    std::vector<Label> labels;
};

struct XentGradients {
    double loss = 0.0;
    std::array<std::vector<double>, 3> grad_weights;  // dense, per class
    std::array<double, 3> grad_bias{};
};

Vocabulary build_vocab(const std::vector<TokenSeq>& token_seqs, std::size_t min_df);

FeatureVector featurize_text(const TokenSeq& tokens, const Vocabulary& vocab);

Image normalize_pixels(const Image& raw);

FeatureVector featurize_image(const Image& pixels, std::size_t grid_rows,
                              std::size_t grid_cols);

std::array<double, 3> predict_proba(const LinearSoftmaxModel& model,
                                    const FeatureVector& features);

XentGradients softmax_xent(const LinearSoftmaxModel& model, const FeatureVector& features,
                           Label true_label);

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double learning_rate, double beta1 = 0.9,
               double beta2 = 0.999, double epsilon = 1e-8);

std::pair<LinearSoftmaxModel, TrainLog> train(const Dataset& train_set,
                                              const Dataset& val_set,
                                              const TrainConfig& config,
                                              const LinearSoftmaxModel& prototype);

// Featurizes a record according to the model's kind and metadata.
FeatureVector featurize_record(const LinearSoftmaxModel& model, const StudyRecord& record);

// Argmax labeling with Pseudo provenance; ties go to the lowest label in the
// canonical order. Throws if any record already carries a label.
Corpus pseudo_label(const LinearSoftmaxModel& model, const Corpus& corpus);

void save_model(const LinearSoftmaxModel& model, const std::string& path);
LinearSoftmaxModel load_model(const std::string& path);

}  // namespace kneelab

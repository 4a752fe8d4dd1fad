#include "kneelab/learncore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "kneelab/metrics.hpp"

namespace kneelab {

using nlohmann::json;

std::optional<std::size_t> Vocabulary::index_of(const std::string& token) const {
    const auto it = std::lower_bound(tokens.begin(), tokens.end(), token);
    if (it == tokens.end() || *it != token) return std::nullopt;
    return static_cast<std::size_t>(it - tokens.begin());
}

double Vocabulary::idf(std::size_t index) const {
    return std::log((1.0 + static_cast<double>(corpus_size)) /
                    (1.0 + static_cast<double>(df[index]))) +
           1.0;
}

void TrainConfig::validate() const {
    if (learning_rate_grid.empty()) throw validation_error("learning_rate_grid is empty");
    for (double lr : learning_rate_grid) {
        if (!(lr > 0.0)) throw validation_error("learning rates must be positive");
    }
    if (batch_size == 0) throw validation_error("batch_size must be positive");
    if (patience == 0) throw validation_error("patience must be >= 1");
    if (max_epochs == 0) throw validation_error("max_epochs must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
        throw validation_error("adam betas must lie in (0, 1)");
    }
}

LinearSoftmaxModel LinearSoftmaxModel::text_prototype(Vocabulary vocab,
                                                      std::size_t max_tokens) {
    LinearSoftmaxModel model;
    model.kind = FeatureKind::Text;
    model.dim = vocab.tokens.size();
    model.vocab = std::move(vocab);
    model.max_tokens = max_tokens;
    for (auto& w : model.weights) w.assign(model.dim, 0.0);
    return model;
}

LinearSoftmaxModel LinearSoftmaxModel::image_prototype(std::size_t grid_rows,
                                                       std::size_t grid_cols) {
    LinearSoftmaxModel model;
    model.kind = FeatureKind::Image;
    model.dim = grid_rows * grid_cols;
    model.grid_rows = grid_rows;
    model.grid_cols = grid_cols;
    for (auto& w : model.weights) w.assign(model.dim, 0.0);
    return model;
}

Vocabulary build_vocab(const std::vector<TokenSeq>& token_seqs, std::size_t min_df) {
    if (token_seqs.empty()) {
        throw validation_error("build_vocab requires a non-empty corpus");
    }
    std::map<std::string, std::size_t> df_map;
    for (const auto& seq : token_seqs) {
        std::set<std::string> uniq(seq.tokens.begin(), seq.tokens.end());
        for (const auto& tok : uniq) ++df_map[tok];
    }
    Vocabulary vocab;
    vocab.corpus_size = token_seqs.size();
    for (const auto& [tok, df] : df_map) {  // map iteration = lexicographic order
        if (df >= min_df) {
            vocab.tokens.push_back(tok);
            vocab.df.push_back(df);
        }
    }
    return vocab;
}

FeatureVector featurize_text(const TokenSeq& tokens, const Vocabulary& vocab) {
    std::map<std::size_t, double> tf;
    for (const auto& tok : tokens.tokens) {
        if (const auto idx = vocab.index_of(tok)) ++tf[*idx];
    }
    FeatureVector fv;
    fv.dim = vocab.tokens.size();
    double norm_sq = 0.0;
    for (const auto& [idx, count] : tf) {
        const double w = count * vocab.idf(idx);
        fv.entries.emplace_back(static_cast<std::uint32_t>(idx), w);
        norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [idx, w] : fv.entries) w *= inv;
    }
    return fv;
}

Image normalize_pixels(const Image& raw) {
    if (raw.data.empty()) throw validation_error("normalize_pixels: empty grid");
    double mn = raw.data[0], mx = raw.data[0];
    for (double v : raw.data) {
        if (!std::isfinite(v)) throw validation_error("normalize_pixels: non-finite pixel");
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    Image out = raw;
    if (mx == mn) {
        std::fill(out.data.begin(), out.data.end(), 0.0);
        return out;
    }
    const double scale = 255.0 / (mx - mn);
    for (auto& v : out.data) v = (v - mn) * scale;
    return out;
}

FeatureVector featurize_image(const Image& pixels, std::size_t grid_rows,
                              std::size_t grid_cols) {
    if (grid_rows == 0 || grid_cols == 0 || grid_rows > pixels.rows ||
        grid_cols > pixels.cols) {
        throw validation_error("featurize_image: grid exceeds image dimensions");
    }
    FeatureVector fv;
    fv.dim = grid_rows * grid_cols;
    fv.entries.reserve(fv.dim);
    for (std::size_t gr = 0; gr < grid_rows; ++gr) {
        const std::size_t r0 = gr * pixels.rows / grid_rows;
        const std::size_t r1 = (gr + 1) * pixels.rows / grid_rows;
        for (std::size_t gc = 0; gc < grid_cols; ++gc) {
            const std::size_t c0 = gc * pixels.cols / grid_cols;
            const std::size_t c1 = (gc + 1) * pixels.cols / grid_cols;
            double acc = 0.0;
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t c = c0; c < c1; ++c) acc += pixels.at(r, c);
            }
            acc /= static_cast<double>((r1 - r0) * (c1 - c0)) * 255.0;
            fv.entries.emplace_back(static_cast<std::uint32_t>(gr * grid_cols + gc), acc);
        }
    }
    return fv;
}

namespace {

std::array<double, 3> logits_of(const LinearSoftmaxModel& model, const FeatureVector& fv) {
    if (fv.dim != model.dim) {
        throw validation_error("feature dimension mismatch: " + std::to_string(fv.dim) +
                               " vs model " + std::to_string(model.dim));
    }
    std::array<double, 3> z = model.bias;
    for (const auto& [idx, val] : fv.entries) {
        for (std::size_t c = 0; c < 3; ++c) z[c] += model.weights[c][idx] * val;
    }
    return z;
}

std::array<double, 3> softmax(std::array<double, 3> z) {
    const double zmax = std::max({z[0], z[1], z[2]});
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
}

}  // namespace

std::array<double, 3> predict_proba(const LinearSoftmaxModel& model,
                                    const FeatureVector& features) {
    return softmax(logits_of(model, features));
}

XentGradients softmax_xent(const LinearSoftmaxModel& model, const FeatureVector& features,
                           Label true_label) {
    const auto p = softmax(logits_of(model, features));
    XentGradients out;
    const auto truth = static_cast<std::size_t>(true_label);
    out.loss = -std::log(std::max(p[truth], std::numeric_limits<double>::min()));
    for (std::size_t c = 0; c < 3; ++c) {
        out.grad_weights[c].assign(model.dim, 0.0);
        const double delta = p[c] - (c == truth ? 1.0 : 0.0);
        out.grad_bias[c] = delta;
        for (const auto& [idx, val] : features.entries) {
            out.grad_weights[c][idx] = delta * val;
        }
    }
    return out;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double learning_rate, double beta1, double beta2,
               double epsilon) {
    if (grads.size() != params.size()) {
        throw validation_error("adam_step: parameter/gradient shape mismatch");
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) {
        throw validation_error("adam_step: state shape mismatch");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
    }
}

namespace {

// Flat parameter layout: weights row-major by class, then the three biases.
void unpack_params(const std::vector<double>& flat, LinearSoftmaxModel& model) {
    const std::size_t d = model.dim;
    for (std::size_t c = 0; c < 3; ++c) {
        model.weights[c].assign(flat.begin() + static_cast<std::ptrdiff_t>(c * d),
                                flat.begin() + static_cast<std::ptrdiff_t>((c + 1) * d));
        model.bias[c] = flat[3 * d + c];
    }
}

double val_wauc_of(const LinearSoftmaxModel& model, const Dataset& val) {
    std::vector<std::array<double, 3>> probs;
    probs.reserve(val.features.size());
    for (const auto& fv : val.features) probs.push_back(predict_proba(model, fv));
    return multiclass_wauc(probs, val.labels);
}

}  // namespace

std::pair<LinearSoftmaxModel, TrainLog> train(const Dataset& train_set,
                                              const Dataset& val_set,
                                              const TrainConfig& config,
                                              const LinearSoftmaxModel& prototype) {
    config.validate();
    if (train_set.features.empty() || val_set.features.empty()) {
        throw validation_error("train: both training and validation sets must be non-empty");
    }
    if (train_set.features.size() != train_set.labels.size() ||
        val_set.features.size() != val_set.labels.size()) {
        throw validation_error("train: features and labels must be parallel");
    }
    {
        std::set<Label> val_classes(val_set.labels.begin(), val_set.labels.end());
        if (val_classes.size() < 2) {
            throw validation_error("train: validation set is single-class");
        }
    }

    const std::size_t d = prototype.dim;
    const std::size_t n_params = 3 * d + 3;
    const std::size_t n = train_set.features.size();

    TrainLog log;
    LinearSoftmaxModel best_model = prototype;
    for (double lr : config.learning_rate_grid) {
        TrainLog::GridRun run;
        run.learning_rate = lr;

        std::vector<double> params(n_params, 0.0);
        std::vector<double> best_params = params;
        AdamState state;
        Rng rng(config.seed);
        LinearSoftmaxModel scratch = prototype;

        double best_wauc = -std::numeric_limits<double>::infinity();
        std::size_t best_epoch = 0;
        std::size_t epochs_since_best = 0;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> grads(n_params);

        for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
            rng.shuffle(order);
            double epoch_loss = 0.0;
            unpack_params(params, scratch);
            for (std::size_t start = 0; start < n; start += config.batch_size) {
                const std::size_t stop = std::min(n, start + config.batch_size);
                std::fill(grads.begin(), grads.end(), 0.0);
                for (std::size_t k = start; k < stop; ++k) {
                    const auto& fv = train_set.features[order[k]];
                    const auto p = softmax(logits_of(scratch, fv));
                    const auto truth = static_cast<std::size_t>(train_set.labels[order[k]]);
                    epoch_loss -=
                        std::log(std::max(p[truth], std::numeric_limits<double>::min()));
                    for (std::size_t c = 0; c < 3; ++c) {
                        const double delta = p[c] - (c == truth ? 1.0 : 0.0);
                        grads[3 * d + c] += delta;
                        for (const auto& [idx, val] : fv.entries) {
                            grads[c * d + idx] += delta * val;
                        }
                    }
                }
                const double inv = 1.0 / static_cast<double>(stop - start);
                for (auto& g : grads) g *= inv;
                adam_step(params, grads, state, lr, config.beta1, config.beta2,
                          config.epsilon);
                unpack_params(params, scratch);
            }

            const double wauc = val_wauc_of(scratch, val_set);
            run.epochs.push_back(EpochStats{epoch_loss / static_cast<double>(n), wauc});
            if (wauc > best_wauc) {
                best_wauc = wauc;
                best_epoch = epoch;
                best_params = params;
                epochs_since_best = 0;
            } else if (++epochs_since_best >= config.patience) {
                break;
            }
        }

        run.best_epoch = best_epoch;
        run.best_val_wauc = best_wauc;
        if (log.runs.empty() || best_wauc > log.runs[log.chosen_run].best_val_wauc) {
            log.chosen_run = log.runs.size();
            unpack_params(best_params, best_model);
        }
        log.runs.push_back(std::move(run));
    }

    return {std::move(best_model), std::move(log)};
}

FeatureVector featurize_record(const LinearSoftmaxModel& model, const StudyRecord& record) {
    if (model.kind == FeatureKind::Text) {
        return featurize_text(preprocess_report(record.report_text, model.max_tokens),
                              *model.vocab);
    }
    if (!record.pixels) {
        throw validation_error("record " + record.accession_id + " has no pixels");
    }
    return featurize_image(normalize_pixels(*record.pixels), model.grid_rows,
                           model.grid_cols);
}

Corpus pseudo_label(const LinearSoftmaxModel& model, const Corpus& corpus) {
    Corpus out;
    out.reserve(corpus.size());
    for (const auto& rec : corpus) {
        if (rec.label) {
            throw validation_error("pseudo_label: record " + rec.accession_id +
                                   " already carries a label");
        }
        StudyRecord labeled = rec;
        const auto p = predict_proba(model, featurize_record(model, rec));
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < 3; ++c) {
            if (p[c] > p[argmax]) argmax = c;  // ties keep the lower label
        }
        labeled.label = LabelInfo{static_cast<Label>(argmax), Provenance::Pseudo, p};
        out.push_back(std::move(labeled));
    }
    return out;
}

void save_model(const LinearSoftmaxModel& model, const std::string& path) {
    json j;
    j["feature_kind"] = model.kind == FeatureKind::Text ? "text" : "image";
    j["dim"] = model.dim;
    j["weights"] = model.weights;
    j["bias"] = model.bias;
    if (model.vocab) {
        j["vocabulary"] = {{"tokens", model.vocab->tokens},
                           {"df", model.vocab->df},
                           {"corpus_size", model.vocab->corpus_size}};
    } else {
        j["vocabulary"] = nullptr;
    }
    j["max_tokens"] = model.max_tokens;
    j["grid_rows"] = model.grid_rows;
    j["grid_cols"] = model.grid_cols;
    std::ofstream out(path);
    if (!out) throw validation_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

LinearSoftmaxModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("no such model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw validation_error("model parse error in " + path + ": " + e.what());
    }
    LinearSoftmaxModel model;
    const std::string kind = j.at("feature_kind").get<std::string>();
    if (kind == "text") {
        model.kind = FeatureKind::Text;
    } else if (kind == "image") {
        model.kind = FeatureKind::Image;
    } else {
        throw validation_error("unknown feature_kind: " + kind);
    }
    model.dim = j.at("dim").get<std::size_t>();
    model.weights = j.at("weights").get<std::array<std::vector<double>, 3>>();
    model.bias = j.at("bias").get<std::array<double, 3>>();
    if (!j.at("vocabulary").is_null()) {
        Vocabulary vocab;
        vocab.tokens = j.at("vocabulary").at("tokens").get<std::vector<std::string>>();
        vocab.df = j.at("vocabulary").at("df").get<std::vector<std::size_t>>();
        vocab.corpus_size = j.at("vocabulary").at("corpus_size").get<std::size_t>();
        model.vocab = std::move(vocab);
    }
    model.max_tokens = j.at("max_tokens").get<std::size_t>();
    model.grid_rows = j.at("grid_rows").get<std::size_t>();
    model.grid_cols = j.at("grid_cols").get<std::size_t>();
    for (const auto& w : model.weights) {
        if (w.size() != model.dim) throw validation_error("model weight shape mismatch");
    }
    return model;
}

}  // namespace kneelab

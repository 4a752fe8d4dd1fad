#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kneelab/common.hpp"

namespace kneelab {

enum class Label : int { Normal = 0, Abnormal = 1, Arthroplasty = 2 };

constexpr std::array<Label, 3> all_labels = {Label::Normal, Label::Abnormal,
                                             Label::Arthroplasty};

std::string label_name(Label l);
Label label_from_name(const std::string& name);

enum class Provenance : int { Manual = 0, Rule = 1, Pseudo = 2 };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct LabelInfo {
    Label value = Label::Normal;
    Provenance provenance = Provenance::Manual;
    // Probability vector that produced a pseudo label; meaningful only when
    // provenance == Pseudo, in which case it must sum to 1 within 1e-9.
    std::array<double, 3> probs = {0.0, 0.0, 0.0};

    bool operator==(const LabelInfo&) const = default;
};

struct Image {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }

    bool operator==(const Image&) const = default;
};

struct StudyRecord {
    std::string patient_id;
    std::string accession_id;  // unique within a corpus
    Date study_date;
    std::string modality;
    std::string series_description;
    std::string report_text;
    std::optional<Image> pixels;
    std::optional<LabelInfo> label;

    bool operator==(const StudyRecord&) const = default;
};

using Corpus = std::vector<StudyRecord>;

struct SeriesFilter {
    std::set<std::string> allowed_modalities;
    std::set<std::string> allowed_series;

    static SeriesFilter blpa_default();  // CR/DX + the three PA series
};

// Rectangular bright region planted into images of one label class.
struct ImageSignal {
    double intensity = 0.0;   // added inside the region
    double row_center = 0.5;  // fraction of image height
    double col_center = 0.5;  // fraction of image width
    double height = 0.0;      // fraction of image height
    double width = 0.0;       // fraction of image width
    int jitter = 0;           // uniform positional jitter in pixels
};

struct GeneratorSpec {
    std::size_t n_records = 8585;
    std::array<double, 3> label_proportions = {0.23, 0.69, 0.08};
    std::array<std::vector<std::string>, 3> signal_vocab;  // per-label report words
    std::array<ImageSignal, 3> image_signal;
    double noise_rate = 0.05;
    Date date_start = Date::from_ymd(2019, 1, 1);
    Date date_end = Date::from_ymd(2019, 12, 31);
    std::size_t image_rows = 64;
    std::size_t image_cols = 64;
    // Header variants planted into generated reports. The first two are the
    // sections the pipeline extracts; the rest are distractors.
    std::vector<std::string> section_headers = {"FINDINGS", "IMPRESSION", "TECHNIQUE"};

    static GeneratorSpec defaults();
    void validate() const;  // throws validation_error naming the offending field
};

// Deterministic largest-remainder apportionment of n into 3 shares.
std::array<std::size_t, 3> apportion_counts(std::size_t n,
                                            const std::array<double, 3>& proportions);

std::vector<StudyRecord> filter_studies(const std::vector<StudyRecord>& records,
                                        const SeriesFilter& filter);

Corpus generate_corpus(const GeneratorSpec& spec, std::uint64_t seed);

void save_corpus(const Corpus& records, const std::string& path);
Corpus load_corpus(const std::string& path);

// JSON-lines codecs for a single record (shared with the pipeline report).
std::string record_to_json_line(const StudyRecord& record);
StudyRecord record_from_json_line(const std::string& line);

}  // namespace kneelab

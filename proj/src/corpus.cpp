#include "kneelab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace kneelab {

using nlohmann::json;

std::string label_name(Label l) {
    switch (l) {
        case Label::Normal: return "Normal";
        case Label::Abnormal: return "Abnormal";
        case Label::Arthroplasty: return "Arthroplasty";
    }
    throw std::logic_error("bad Label");
}

Label label_from_name(const std::string& name) {
    for (Label l : all_labels) {
        if (label_name(l) == name) return l;
    }
    throw validation_error("unknown label: \"" + name + "\"");
}

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Manual: return "manual";
        case Provenance::Rule: return "rule";
        case Provenance::Pseudo: return "pseudo";
    }
    throw std::logic_error("bad Provenance");
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "manual") return Provenance::Manual;
    if (name == "rule") return Provenance::Rule;
    if (name == "pseudo") return Provenance::Pseudo;
    throw validation_error("unknown provenance: \"" + name + "\"");
}

SeriesFilter SeriesFilter::blpa_default() {
    return SeriesFilter{{"CR", "DX"}, {"PA Axial", "PA Weight Bearing", "PA Tunnel"}};
}

GeneratorSpec GeneratorSpec::defaults() {
    GeneratorSpec spec;
    spec.signal_vocab[static_cast<int>(Label::Normal)] = {
        "unremarkable", "intact", "preserved", "maintained", "congruent"};
    spec.signal_vocab[static_cast<int>(Label::Abnormal)] = {
        "degenerative", "osteophyte", "narrowing", "screw",     "plate",
        "fracture",     "lesion",     "fragment",  "lucency",   "subluxation",
        "varus",        "erosion",    "sclerosis", "effusion",  "swelling",
        "dysplasia",    "contusion"};
    spec.signal_vocab[static_cast<int>(Label::Arthroplasty)] = {
        "arthroplasty", "prosthesis", "prosthetic"};
    spec.image_signal[static_cast<int>(Label::Normal)] = ImageSignal{};
    spec.image_signal[static_cast<int>(Label::Abnormal)] =
        ImageSignal{12.0, 0.50, 0.32, 0.20, 0.20, 10};
    spec.image_signal[static_cast<int>(Label::Arthroplasty)] =
        ImageSignal{16.0, 0.50, 0.68, 0.75, 0.14, 8};
    return spec;
}

void GeneratorSpec::validate() const {
    const double psum = label_proportions[0] + label_proportions[1] + label_proportions[2];
    if (std::abs(psum - 1.0) > 1e-9 || label_proportions[0] < 0 ||
        label_proportions[1] < 0 || label_proportions[2] < 0) {
        throw validation_error("label_proportions must be non-negative and sum to 1");
    }
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
        throw validation_error("noise_rate must lie in [0, 1]");
    }
    if (date_end < date_start) {
        throw validation_error("date_range end precedes start");
    }
    if (image_rows == 0 || image_cols == 0) {
        throw validation_error("image_size dimensions must be positive");
    }
    for (Label l : all_labels) {
        if (signal_vocab[static_cast<int>(l)].empty()) {
            throw validation_error("signal_vocab empty for label " + label_name(l));
        }
    }
}

std::array<std::size_t, 3> apportion_counts(std::size_t n,
                                            const std::array<double, 3>& proportions) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = proportions[static_cast<std::size_t>(i)] * static_cast<double>(n);
        counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(exact));
        remainder[static_cast<std::size_t>(i)] = exact - std::floor(exact);
        assigned += counts[static_cast<std::size_t>(i)];
    }
    // Hand out the leftover units by descending remainder, label order breaking ties.
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)];
    });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
        ++counts[static_cast<std::size_t>(order[k % 3])];
    }
    return counts;
}

std::vector<StudyRecord> filter_studies(const std::vector<StudyRecord>& records,
                                        const SeriesFilter& filter) {
    std::vector<StudyRecord> kept;
    for (const auto& r : records) {
        if (filter.allowed_modalities.count(r.modality) &&
            filter.allowed_series.count(r.series_description)) {
            kept.push_back(r);
        }
    }
    return kept;
}

namespace {

const std::vector<std::string> kSides = {"left", "right"};
const std::vector<std::string> kSites = {"medial compartment", "lateral compartment",
                                         "patella", "femur", "tibia", "joint line"};
const std::vector<std::string> kSeriesPool = {"PA Axial", "PA Weight Bearing", "PA Tunnel"};
const std::vector<std::string> kModalityPool = {"CR", "DX"};

std::string pick_word(Rng& rng, const std::vector<std::string>& words) {
    return words[rng.below(words.size())];
}

std::string make_report(Rng& rng, const GeneratorSpec& spec, Label text_label) {
    const auto& vocab = spec.signal_vocab[static_cast<int>(text_label)];
    std::ostringstream out;
    const auto& headers = spec.section_headers;
    const std::string findings_hdr = headers.size() > 0 ? headers[0] : "FINDINGS";
    const std::string impression_hdr = headers.size() > 1 ? headers[1] : "IMPRESSION";

    // Distractor headers come first so section extraction has to skip them.
    for (std::size_t i = 2; i < headers.size(); ++i) {
        out << headers[i] << ": " << rng.range(2, 3) << " views of the "
            << rng.pick(kSides) << " knee. ";
    }

    out << findings_hdr << ": ";
    switch (text_label) {
        case Label::Normal: {
            out << "The " << rng.pick(kSites) << " is " << pick_word(rng, vocab) << ". ";
            out << "Joint spaces are " << pick_word(rng, vocab) << ". ";
            if (rng.uniform() < 0.25) out << "No acute fracture identified. ";
            out << "Soft tissues are " << pick_word(rng, vocab) << ".";
            break;
        }
        case Label::Abnormal: {
            out << "There is " << pick_word(rng, vocab) << " involving the "
                << rng.pick(kSites) << ". ";
            out << "A " << rng.range(2, 9) << " mm area of " << pick_word(rng, vocab)
                << " is seen at the " << rng.pick(kSites) << ". ";
            out << "Mild " << pick_word(rng, vocab) << " noted.";
            break;
        }
        case Label::Arthroplasty: {
            out << "Total knee " << pick_word(rng, vocab) << " components are in place. ";
            out << "The " << pick_word(rng, vocab) << " appears well seated. ";
            if (rng.uniform() < 0.3) {
                const auto& abn = spec.signal_vocab[static_cast<int>(Label::Abnormal)];
                out << "Adjacent " << pick_word(rng, abn) << " is present.";
            } else {
                out << "Alignment is anatomic.";
            }
            break;
        }
    }

    out << " " << impression_hdr << ": ";
    switch (text_label) {
        case Label::Normal:
            out << "The knee is " << pick_word(rng, vocab) << ".";
            break;
        case Label::Abnormal:
            out << "Findings of " << pick_word(rng, vocab) << ".";
            break;
        case Label::Arthroplasty:
            out << "Stable " << pick_word(rng, vocab) << ".";
            break;
    }
    return out.str();
}

Image make_image(Rng& rng, const GeneratorSpec& spec, Label image_label) {
    const std::size_t rows = spec.image_rows;
    const std::size_t cols = spec.image_cols;
    Image img{rows, cols, std::vector<double>(rows * cols)};

    const double offset = rng.uniform() * 60.0;  // per-image exposure offset
    for (auto& px : img.data) {
        px = 30.0 + offset + rng.uniform() * 150.0;
    }

    const ImageSignal& sig = spec.image_signal[static_cast<int>(image_label)];
    if (sig.intensity != 0.0 && sig.height > 0.0 && sig.width > 0.0) {
        const std::int64_t jr = sig.jitter > 0 ? rng.range(-sig.jitter, sig.jitter) : 0;
        const std::int64_t jc = sig.jitter > 0 ? rng.range(-sig.jitter, sig.jitter) : 0;
        const double rc = sig.row_center * static_cast<double>(rows) + static_cast<double>(jr);
        const double cc = sig.col_center * static_cast<double>(cols) + static_cast<double>(jc);
        const double rh = sig.height * static_cast<double>(rows) / 2.0;
        const double cw = sig.width * static_cast<double>(cols) / 2.0;
        const auto lo = [](double v) { return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(v))); };
        for (std::int64_t r = lo(rc - rh); r < static_cast<std::int64_t>(rows) && r <= static_cast<std::int64_t>(std::ceil(rc + rh)); ++r) {
            for (std::int64_t c = lo(cc - cw); c < static_cast<std::int64_t>(cols) && c <= static_cast<std::int64_t>(std::ceil(cc + cw)); ++c) {
                img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) += sig.intensity;
            }
        }
    }

    // Quantize: keeps files compact and mimics integer detector output.
    for (auto& px : img.data) {
        px = std::floor(px);
    }
    return img;
}

}  // namespace

Corpus generate_corpus(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);

    std::vector<Label> labels;
    labels.reserve(spec.n_records);
    const auto counts = apportion_counts(spec.n_records, spec.label_proportions);
    for (Label l : all_labels) {
        labels.insert(labels.end(), counts[static_cast<std::size_t>(l)], l);
    }
    rng.shuffle(labels);

    Corpus corpus;
    corpus.reserve(spec.n_records);
    const std::int64_t span = spec.date_end.days - spec.date_start.days + 1;

    std::size_t next_patient = 0;
    std::size_t i = 0;
    while (i < spec.n_records) {
        char pid[16];
        std::snprintf(pid, sizeof pid, "P%06zu", next_patient++);
        // A patient occasionally owns two studies, possibly spanning split
        // windows, so leakage removal gets exercised.
        const std::size_t studies =
            (rng.uniform() < 0.15 && i + 1 < spec.n_records) ? 2 : 1;
        for (std::size_t s = 0; s < studies; ++s, ++i) {
            StudyRecord rec;
            rec.patient_id = pid;
            char aid[16];
            std::snprintf(aid, sizeof aid, "A%07zu", i);
            rec.accession_id = aid;
            rec.study_date = Date{spec.date_start.days + rng.range(0, span - 1)};
            rec.modality = rng.pick(kModalityPool);
            rec.series_description = rng.pick(kSeriesPool);

            const Label truth = labels[i];
            // Independent corruption of the text and pixel channels: a
            // corrupted channel carries the signal of a uniformly random
            // label instead of the true one.
            const Label text_label =
                rng.uniform() < spec.noise_rate
                    ? all_labels[rng.below(3)]
                    : truth;
            const Label image_label =
                rng.uniform() < spec.noise_rate
                    ? all_labels[rng.below(3)]
                    : truth;
            rec.report_text = make_report(rng, spec, text_label);
            rec.pixels = make_image(rng, spec, image_label);
            rec.label = LabelInfo{truth, Provenance::Manual, {0.0, 0.0, 0.0}};
            corpus.push_back(std::move(rec));
        }
    }
    return corpus;
}

std::string record_to_json_line(const StudyRecord& record) {
    json j;
    j["patient_id"] = record.patient_id;
    j["accession_id"] = record.accession_id;
    j["study_date"] = record.study_date.to_string();
    j["modality"] = record.modality;
    j["series_description"] = record.series_description;
    j["report_text"] = record.report_text;
    if (record.pixels) {
        json rows = json::array();
        for (std::size_t r = 0; r < record.pixels->rows; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < record.pixels->cols; ++c) {
                row.push_back(record.pixels->at(r, c));
            }
            rows.push_back(std::move(row));
        }
        j["pixels"] = std::move(rows);
    } else {
        j["pixels"] = nullptr;
    }
    if (record.label) {
        json lbl;
        lbl["value"] = label_name(record.label->value);
        lbl["provenance"] = provenance_name(record.label->provenance);
        if (record.label->provenance == Provenance::Pseudo) {
            lbl["probs"] = record.label->probs;
        } else {
            lbl["probs"] = nullptr;
        }
        j["label"] = std::move(lbl);
    } else {
        j["label"] = nullptr;
    }
    return j.dump();
}

StudyRecord record_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    StudyRecord rec;
    rec.patient_id = j.at("patient_id").get<std::string>();
    rec.accession_id = j.at("accession_id").get<std::string>();
    rec.study_date = Date::parse(j.at("study_date").get<std::string>());
    rec.modality = j.at("modality").get<std::string>();
    rec.series_description = j.at("series_description").get<std::string>();
    rec.report_text = j.at("report_text").get<std::string>();
    const json& px = j.at("pixels");
    if (!px.is_null()) {
        Image img;
        img.rows = px.size();
        img.cols = img.rows > 0 ? px.at(0).size() : 0;
        img.data.reserve(img.rows * img.cols);
        for (const auto& row : px) {
            if (row.size() != img.cols) {
                throw validation_error("ragged pixel rows");
            }
            for (const auto& v : row) {
                img.data.push_back(v.get<double>());
            }
        }
        rec.pixels = std::move(img);
    }
    const json& lbl = j.at("label");
    if (!lbl.is_null()) {
        LabelInfo info;
        info.value = label_from_name(lbl.at("value").get<std::string>());
        info.provenance = provenance_from_name(lbl.at("provenance").get<std::string>());
        if (info.provenance == Provenance::Pseudo) {
            const auto& probs = lbl.at("probs");
            if (probs.is_null() || probs.size() != 3) {
                throw validation_error("pseudo label requires a 3-vector of probabilities");
            }
            for (int k = 0; k < 3; ++k) {
                info.probs[static_cast<std::size_t>(k)] = probs.at(static_cast<std::size_t>(k)).get<double>();
            }
            const double sum = info.probs[0] + info.probs[1] + info.probs[2];
            if (std::abs(sum - 1.0) > 1e-9) {
                throw validation_error("pseudo label probabilities do not sum to 1");
            }
        }
        rec.label = info;
    }
    return rec;
}

void save_corpus(const Corpus& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw validation_error("cannot open for writing: " + path);
    }
    for (const auto& rec : records) {
        out << record_to_json_line(rec) << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw validation_error("no such corpus file: " + path);
    }
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen_accessions;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            corpus.push_back(record_from_json_line(line));
        } catch (const std::exception& e) {
            throw validation_error("corpus parse error at line " + std::to_string(lineno) +
                                   ": " + e.what());
        }
        if (!seen_accessions.insert(corpus.back().accession_id).second) {
            throw validation_error("duplicate accession_id at line " + std::to_string(lineno) +
                                   ": " + corpus.back().accession_id);
        }
    }
    return corpus;
}

}  // namespace kneelab

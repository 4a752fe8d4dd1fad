#include "kneelab/textprep.hpp"

#include <algorithm>
#include <cctype>

namespace kneelab {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string upper(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

struct HeaderHit {
    std::size_t start;        // offset of the header word
    std::size_t body_begin;   // offset just past the colon
    std::string name;         // canonical (uppercase, singular)
};

// Matches `name` case-insensitively at `pos`, allowing an optional plural
// 'S' (IMPRESSIONS) and optional spaces before the required colon.
bool match_header_at(const std::string& text, std::size_t pos, const std::string& name,
                     std::size_t& body_begin) {
    if (pos > 0 && is_alpha(text[pos - 1])) return false;
    std::size_t i = pos;
    for (char c : name) {
        if (i >= text.size() ||
            std::toupper(static_cast<unsigned char>(text[i])) != c) {
            return false;
        }
        ++i;
    }
    if (i < text.size() && std::toupper(static_cast<unsigned char>(text[i])) == 'S') {
        ++i;
    }
    if (i < text.size() && is_alpha(text[i])) return false;
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    if (i >= text.size() || text[i] != ':') return false;
    body_begin = i + 1;
    return true;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& default_section_headers() {
    static const std::vector<std::string> headers = {
        "TECHNIQUE", "COMPARISON", "FINDINGS", "IMPRESSION", "INDICATION", "HISTORY"};
    return headers;
}

SectionedReport extract_sections(const std::string& raw) {
    return extract_sections(raw, default_section_headers());
}

SectionedReport extract_sections(const std::string& raw,
                                 const std::vector<std::string>& headers) {
    std::vector<std::string> canon;
    canon.reserve(headers.size());
    for (const auto& h : headers) canon.push_back(upper(h));

    std::vector<HeaderHit> hits;
    for (std::size_t pos = 0; pos < raw.size(); ++pos) {
        for (const auto& name : canon) {
            std::size_t body_begin = 0;
            if (match_header_at(raw, pos, name, body_begin)) {
                hits.push_back(HeaderHit{pos, body_begin, name});
                pos = body_begin - 1;  // resume after the colon
                break;
            }
        }
    }

    SectionedReport out;
    bool found_any = false;
    for (std::size_t k = 0; k < hits.size(); ++k) {
        const std::size_t body_end = k + 1 < hits.size() ? hits[k + 1].start : raw.size();
        const std::string body =
            trim(raw.substr(hits[k].body_begin, body_end - hits[k].body_begin));
        if (hits[k].name == "FINDINGS" || hits[k].name == "FINDING") {
            out.findings = body;
            found_any = true;
        } else if (hits[k].name == "IMPRESSION" || hits[k].name == "IMPRESSIONS") {
            out.impression = body;
            found_any = true;
        }
    }
    if (!found_any) {
        out.findings = raw;
        out.impression.clear();
        out.used_fallback = true;
    }
    return out;
}

std::string clean_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_alpha(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = true;
        }
        // Everything else (punctuation, digits) is dropped outright.
    }
    return out;
}

TokenSeq tokenize(const std::string& cleaned, std::size_t max_len) {
    TokenSeq seq;
    std::size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && cleaned[i] == ' ') ++i;
        std::size_t j = i;
        while (j < cleaned.size() && cleaned[j] != ' ') ++j;
        if (j > i) {
            if (seq.tokens.size() == max_len) {
                seq.truncated = true;
                break;
            }
            seq.tokens.emplace_back(cleaned.substr(i, j - i));
        }
        i = j;
    }
    return seq;
}

TokenSeq preprocess_report(const std::string& raw, std::size_t max_len) {
    const SectionedReport sections = extract_sections(raw);
    std::string joined = sections.findings;
    if (!sections.impression.empty()) {
        if (!joined.empty()) joined += ' ';
        joined += sections.impression;
    }
    return tokenize(clean_text(joined), max_len);
}

}  // namespace kneelab

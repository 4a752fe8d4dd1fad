#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace kneelab {

struct SectionedReport {
    std::string findings;
    std::string impression;
    // True iff neither a FINDINGS nor an IMPRESSION header was found; the
    // full raw text is then carried in `findings`.
    bool used_fallback = false;
};

struct TokenSeq {
    std::vector<std::string> tokens;  // lowercase alphabetic only
    bool truncated = false;
};

inline constexpr std::size_t default_max_tokens = 512;

const std::vector<std::string>& default_section_headers();

SectionedReport extract_sections(const std::string& raw);
SectionedReport extract_sections(const std::string& raw,
                                 const std::vector<std::string>& headers);

// Deletes everything but letters and whitespace, collapses whitespace runs,
// trims, lowercases.
std::string clean_text(const std::string& text);

TokenSeq tokenize(const std::string& cleaned, std::size_t max_len);

// extract -> join findings/impression -> clean -> tokenize(max_len).
TokenSeq preprocess_report(const std::string& raw,
                           std::size_t max_len = default_max_tokens);

}  // namespace kneelab

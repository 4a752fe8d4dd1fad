#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kneelab/common.hpp"
#include "kneelab/textprep.hpp"

using namespace kneelab;

TEST_CASE("extract_sections splits on recognized headers") {
    const auto r = extract_sections(
        "TECHNIQUE: 2 views. FINDINGS: Mild narrowing. IMPRESSION: Degenerative change.");
    CHECK(r.findings == "Mild narrowing.");
    CHECK(r.impression == "Degenerative change.");
    CHECK_FALSE(r.used_fallback);
}

TEST_CASE("extract_sections falls back to the full text without headers") {
    const auto r = extract_sections("No headers here at all");
    CHECK(r.findings == "No headers here at all");
    CHECK(r.impression.empty());
    CHECK(r.used_fallback);
}

TEST_CASE("extract_sections is case-insensitive and tolerates missing findings") {
    const auto r = extract_sections("Impression: stable.");
    CHECK(r.findings.empty());
    CHECK(r.impression == "stable.");
    CHECK_FALSE(r.used_fallback);
}

TEST_CASE("extract_sections handles IMPRESSIONS plural and embedded header words") {
    const auto r = extract_sections(
        "HISTORY: pain. FINDINGS: The findings are stable. IMPRESSIONS: No change.");
    CHECK(r.findings == "The findings are stable.");
    CHECK(r.impression == "No change.");

    // A header word without a colon is body text.
    const auto r2 = extract_sections("FINDINGS: impression of swelling noted.");
    CHECK(r2.findings == "impression of swelling noted.");
    CHECK(r2.impression.empty());
}

TEST_CASE("clean_text removes punctuation and digits, lowercases, collapses spaces") {
    CHECK(clean_text("2 views, no acute fracture.") == "views no acute fracture");
    CHECK(clean_text("") == "");
    CHECK(clean_text("  A  3mm   Lesion!  ") == "a mm lesion");
}

TEST_CASE("clean_text is idempotent and emits only [a-z ] characters") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::string s;
        for (std::size_t i = 0; i < 80; ++i) {
            s.push_back(static_cast<char>(32 + rng.below(95)));
        }
        const std::string once = clean_text(s);
        CHECK(clean_text(once) == once);
        for (char c : once) {
            CHECK(((c >= 'a' && c <= 'z') || c == ' '));
        }
        CHECK(once.find("  ") == std::string::npos);
    }
}

TEST_CASE("tokenize caps length and flags truncation") {
    const auto seq = tokenize("total knee arthroplasty", 512);
    CHECK(seq.tokens == std::vector<std::string>{"total", "knee", "arthroplasty"});
    CHECK_FALSE(seq.truncated);

    std::string longtext;
    for (int i = 0; i < 600; ++i) longtext += "a ";
    const auto capped = tokenize(longtext, 512);
    CHECK(capped.tokens.size() == 512);
    CHECK(capped.truncated);

    const auto empty = tokenize("", 512);
    CHECK(empty.tokens.empty());
    CHECK_FALSE(empty.truncated);
}

TEST_CASE("preprocess_report composes sections, cleaning, and the token cap") {
    const auto seq = preprocess_report(
        "TECHNIQUE: 3 views. FINDINGS: There is a 4 mm lesion. IMPRESSION: Lesion, stable.");
    CHECK(seq.tokens == std::vector<std::string>{"there", "is", "a", "mm", "lesion",
                                                 "lesion", "stable"});
    for (const auto& tok : seq.tokens) {
        for (char c : tok) CHECK((c >= 'a' && c <= 'z'));
    }
}

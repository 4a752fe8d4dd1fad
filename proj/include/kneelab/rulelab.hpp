#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kneelab/corpus.hpp"
#include "kneelab/textprep.hpp"

namespace kneelab {

struct Pattern {
    std::vector<std::string> phrase;  // 1..5 lowercase alphabetic tokens
    // A negatable pattern is suppressed when a negation cue occurs within
    // the 3 tokens preceding the phrase.
    bool negatable = false;

    bool operator==(const Pattern&) const = default;
};

struct RuleSet {
    std::vector<Pattern> arthroplasty_patterns;
    // Ordered: decisions report categories in config order.
    std::vector<std::pair<std::string, std::vector<Pattern>>> abnormal_categories;
    std::vector<std::string> negation_cues = {"no", "without", "negative", "unremarkable"};

    bool operator==(const RuleSet&) const = default;
};

struct PatternMatch {
    std::string category;
    std::vector<std::string> phrase;
    std::size_t offset = 0;  // token index of the phrase start
};

struct LabelDecision {
    Label label = Label::Normal;
    std::set<std::string> matched_categories;  // "arthroplasty" reserved
    std::vector<PatternMatch> matched_patterns;  // sorted by offset
};

RuleSet parse_ruleset(const std::string& config_text);
std::string serialize_ruleset(const RuleSet& rules);

// Twelve categories named after the knee-abnormality taxonomy, with patterns
// authored for the synthetic generator's vocabularies.
const std::string& default_rule_config();
const RuleSet& default_ruleset();

LabelDecision apply_rules(const RuleSet& rules, const TokenSeq& tokens);

}  // namespace kneelab

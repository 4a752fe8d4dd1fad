#include "kneelab/rulelab.hpp"

#include <algorithm>
#include <sstream>

namespace kneelab {

namespace {

constexpr std::size_t kNegationWindow = 3;
constexpr std::size_t kMaxPhraseLen = 5;

bool lowercase_alpha(const std::string& tok) {
    if (tok.empty()) return false;
    return std::all_of(tok.begin(), tok.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

[[noreturn]] void parse_fail(std::size_t lineno, const std::string& what) {
    throw validation_error("rule config line " + std::to_string(lineno) + ": " + what);
}

}  // namespace

RuleSet parse_ruleset(const std::string& config_text) {
    RuleSet rules;
    rules.negation_cues = {"no", "without", "negative", "unremarkable"};
    bool cues_extended = false;

    std::istringstream in(config_text);
    std::string line;
    std::size_t lineno = 0;
    std::string open_category;  // empty until the first `category` directive
    bool open_is_arthro = false;
    std::set<std::string> seen_categories;
    std::vector<Pattern>* open_patterns = nullptr;

    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto toks = split_ws(line);
        if (toks.empty()) continue;

        if (toks[0] == "category") {
            if (toks.size() != 2) parse_fail(lineno, "category takes exactly one name");
            const std::string& name = toks[1];
            if (!seen_categories.insert(name).second) {
                parse_fail(lineno, "duplicate category \"" + name + "\"");
            }
            open_category = name;
            open_is_arthro = name == "arthroplasty";
            if (open_is_arthro) {
                open_patterns = &rules.arthroplasty_patterns;
            } else {
                rules.abnormal_categories.emplace_back(name, std::vector<Pattern>{});
                open_patterns = &rules.abnormal_categories.back().second;
            }
        } else if (toks[0] == "pattern") {
            if (open_patterns == nullptr) parse_fail(lineno, "pattern before any category");
            Pattern pat;
            std::size_t first = 1;
            if (toks.size() > 1 && toks[1] == "neg") {
                pat.negatable = true;
                first = 2;
            }
            for (std::size_t k = first; k < toks.size(); ++k) {
                if (!lowercase_alpha(toks[k])) {
                    parse_fail(lineno, "pattern token \"" + toks[k] +
                                           "\" is not lowercase alphabetic");
                }
                pat.phrase.push_back(toks[k]);
            }
            if (pat.phrase.empty()) parse_fail(lineno, "empty phrase");
            if (pat.phrase.size() > kMaxPhraseLen) {
                parse_fail(lineno, "phrase longer than 5 tokens");
            }
            open_patterns->push_back(std::move(pat));
        } else if (toks[0] == "negation_cue") {
            if (toks.size() != 2 || !lowercase_alpha(toks[1])) {
                parse_fail(lineno, "negation_cue takes one lowercase token");
            }
            if (!cues_extended) {
                // First explicit cue line keeps the defaults and extends them.
                cues_extended = true;
            }
            if (std::find(rules.negation_cues.begin(), rules.negation_cues.end(), toks[1]) ==
                rules.negation_cues.end()) {
                rules.negation_cues.push_back(toks[1]);
            }
        } else {
            parse_fail(lineno, "unknown directive \"" + toks[0] + "\"");
        }
    }

    if (rules.arthroplasty_patterns.empty()) {
        throw validation_error("rule config: at least one arthroplasty pattern required");
    }
    if (rules.abnormal_categories.empty()) {
        throw validation_error("rule config: at least one abnormal category required");
    }
    for (const auto& [name, patterns] : rules.abnormal_categories) {
        if (patterns.empty()) {
            throw validation_error("rule config: category \"" + name + "\" has no patterns");
        }
    }
    return rules;
}

std::string serialize_ruleset(const RuleSet& rules) {
    std::ostringstream out;
    const auto emit = [&out](const std::vector<Pattern>& patterns) {
        for (const auto& pat : patterns) {
            out << "pattern";
            if (pat.negatable) out << " neg";
            for (const auto& tok : pat.phrase) out << ' ' << tok;
            out << '\n';
        }
    };
    out << "category arthroplasty\n";
    emit(rules.arthroplasty_patterns);
    for (const auto& [name, patterns] : rules.abnormal_categories) {
        out << "category " << name << '\n';
        emit(patterns);
    }
    static const std::vector<std::string> defaults = {"no", "without", "negative",
                                                      "unremarkable"};
    for (const auto& cue : rules.negation_cues) {
        if (std::find(defaults.begin(), defaults.end(), cue) == defaults.end()) {
            out << "negation_cue " << cue << '\n';
        }
    }
    return out.str();
}

const std::string& default_rule_config() {
    static const std::string config = R"(# Default knee report annotation rules.
# Eleven abnormal categories plus arthroplasty.
category arthroplasty
pattern arthroplasty
pattern prosthesis
pattern prosthetic

category degenerative_changes
pattern neg degenerative
pattern neg osteophyte
pattern neg narrowing

category postoperative_changes
pattern neg screw
pattern neg plate
pattern postoperative

category fractures
pattern neg fracture
pattern neg fractures

category lesions
pattern neg lesion

category fragmentation
pattern neg fragment
pattern neg fragmentation

category bone_lucency
pattern neg lucency
pattern neg lucent

category malalignment
pattern neg subluxation
pattern neg varus
pattern neg malalignment

category osseous_abnormalities
pattern neg erosion
pattern neg sclerosis

category soft_tissue_abnormalities
pattern neg effusion
pattern neg swelling

category developmental_abnormalities
pattern neg dysplasia

category trauma
pattern neg contusion
pattern neg trauma
)";
    return config;
}

const RuleSet& default_ruleset() {
    static const RuleSet rules = parse_ruleset(default_rule_config());
    return rules;
}

LabelDecision apply_rules(const RuleSet& rules, const TokenSeq& tokens) {
    LabelDecision decision;
    const auto& toks = tokens.tokens;

    const auto negated = [&](std::size_t start) {
        const std::size_t lo = start > kNegationWindow ? start - kNegationWindow : 0;
        for (std::size_t i = lo; i < start; ++i) {
            if (std::find(rules.negation_cues.begin(), rules.negation_cues.end(), toks[i]) !=
                rules.negation_cues.end()) {
                return true;
            }
        }
        return false;
    };

    const auto scan = [&](const std::string& category, const std::vector<Pattern>& patterns) {
        for (const auto& pat : patterns) {
            if (pat.phrase.size() > toks.size()) continue;
            for (std::size_t start = 0; start + pat.phrase.size() <= toks.size(); ++start) {
                if (!std::equal(pat.phrase.begin(), pat.phrase.end(), toks.begin() + static_cast<std::ptrdiff_t>(start))) {
                    continue;
                }
                if (pat.negatable && negated(start)) continue;
                decision.matched_categories.insert(category);
                decision.matched_patterns.push_back(PatternMatch{category, pat.phrase, start});
            }
        }
    };

    scan("arthroplasty", rules.arthroplasty_patterns);
    for (const auto& [name, patterns] : rules.abnormal_categories) {
        scan(name, patterns);
    }

    std::stable_sort(decision.matched_patterns.begin(), decision.matched_patterns.end(),
                     [](const PatternMatch& a, const PatternMatch& b) {
                         return a.offset < b.offset;
                     });

    if (decision.matched_categories.count("arthroplasty")) {
        decision.label = Label::Arthroplasty;  // takes precedence over abnormal
    } else if (!decision.matched_categories.empty()) {
        decision.label = Label::Abnormal;
    } else {
        decision.label = Label::Normal;
    }
    return decision;
}

}  // namespace kneelab

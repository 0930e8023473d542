#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "csas/error.hpp"

namespace csas::filter {

using Variables = std::map<std::string, std::string>;

struct PromptTemplate {
    std::string id;
    std::string body;  // named placeholders: {text}, {party}, {matches}
    double temperature = 0.0;
};

namespace detail {

inline bool is_identifier(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    }
    return true;
}

// Calls on_literal / on_placeholder for each segment of `body`. Braces that
// do not enclose an identifier are literal text.
template <class Literal, class Placeholder>
void scan(std::string_view body, Literal&& on_literal, Placeholder&& on_placeholder) {
    std::size_t pos = 0;
    while (pos < body.size()) {
        const auto open = body.find('{', pos);
        if (open == std::string_view::npos) break;
        const auto close = body.find('}', open + 1);
        if (close == std::string_view::npos) break;
        const auto name = body.substr(open + 1, close - open - 1);
        if (!is_identifier(name)) {
            on_literal(body.substr(pos, open + 1 - pos));
            pos = open + 1;
            continue;
        }
        on_literal(body.substr(pos, open - pos));
        on_placeholder(name);
        pos = close + 1;
    }
    on_literal(body.substr(pos));
}

}  // namespace detail

inline std::set<std::string> placeholders(const PromptTemplate& tmpl) {
    std::set<std::string> names;
    detail::scan(tmpl.body, [](std::string_view) {}, [&](std::string_view name) { names.emplace(name); });
    return names;
}

// Single-pass substitution: bound values are never re-expanded.
inline std::string render(const PromptTemplate& tmpl, const Variables& vars) {
    std::string out;
    out.reserve(tmpl.body.size());
    detail::scan(
        tmpl.body, [&](std::string_view lit) { out.append(lit); },
        [&](std::string_view name) {
            auto it = vars.find(std::string(name));
            if (it == vars.end()) {
                throw ValidationError("template '" + tmpl.id + "' placeholder {" + std::string(name) + "} is unbound");
            }
            out += it->second;
        });
    return out;
}

inline PromptTemplate load_template(const std::string& id, const std::string& path, double temperature = 0.0) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read prompt template file '" + path + "'");
    std::ostringstream body;
    body << in.rdbuf();
    return {id, body.str(), temperature};
}

inline constexpr std::string_view kIrrelevantSentinel = "Room Temperature Superconductors";

namespace templates {

inline constexpr std::string_view kClaimFilterId = "claim_filter";
inline constexpr std::string_view kClaimSummaryId = "claim_summary";
inline constexpr std::string_view kIssueSummaryId = "issue_summary";

inline PromptTemplate claim_filter() {
    return {std::string(kClaimFilterId),
            "Is the following text a specific, verifiable claim or is it a value judgment/gibberish/evaluative "
            "statement? Use 1 to indicate a verifiable claim; 0 to indicate otherwise.\n"
            "\n"
            "Examples:\n"
            "Biden is corrupt.->0\n"
            "Biden's son had profitable business deals in Ukraine.->1\n"
            "Trump was a horrible president.->0\n"
            "Trump kept classified documents in his home.->1\n"
            "George Soros funded the Black Lives Matter protests.->1\n"
            "Republicans are hiding a lot of information.->0\n"
            "The 2020 election was stolen by the Democrats.->1\n"
            "Republicans are racist.->0\n"
            "Republicans are in the pocket of big business.->0\n"
            "Democrats lie.->0\n"
            "Republicans are the best party.->0\n"
            "Democrats are the best party.->0\n"
            "Democrats hate the country.->0\n"
            "Republicans should ban Donald Trump from social media.->0\n"
            "Bill Clinton and Hillary Clinton were friends with Jeffrey Epstein.->1\n"
            "{text}->",
            0.0};
}

inline PromptTemplate claim_summary() {
    return {std::string(kClaimSummaryId),
            "Produce a one-sentence summary of the following point of view. Only summarize the most important "
            "claim. This claim is about {party}.\n"
            "Claim: {text}\n"
            "Summary:",
            0.0};
}

inline PromptTemplate issue_summary() {
    return {std::string(kIssueSummaryId),
            "Please extract the political issue or concern mentioned by the respondent using one to three words. "
            "Be descriptive and stay true to what the user has written. Select only one issue, concern, or topic. "
            "Never ask about two issues.\n"
            "If the issue is not politically relevant, return the phrase Room Temperature Superconductors.\n"
            "If a related issue or theme has already been mentioned, return the same issue or theme as the output. "
            "Do not duplicate broad issue areas or themes.\n"
            "Examples:\n"
            "Previously Mentioned Issues () I care about the environment.->Environment\n"
            "Previously Mentioned Issues (Taxation) My taxes are too high.->Taxation\n"
            "Previously Mentioned Issues () Abortion should be legal under all circumstances.->Abortion\n"
            "Previously Mentioned Issues (Immigration) Close the borders.->Immigration\n"
            "Previously Mentioned Issues (Inflation) I am concerned about rising prices.->Inflation\n"
            "Previously Mentioned Issue ({matches}) {text}->",
            0.0};
}

}  // namespace templates

}  // namespace csas::filter

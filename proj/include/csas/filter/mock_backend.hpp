#pragma once

// Deterministic offline backend.
//
//  * complete()  rule tables: exact labeled examples and a value-judgment
//                lexicon for the claim filter, first-sentence cleanup for
//                claim summaries, keyword-to-issue rules for issue summaries
//  * embed()     signed feature hashing of word unigrams and character
//                trigrams, L2-normalized; fixed vectors can be pinned per text
//  * moderate()  phrase blocklist with one category per phrase

#include <cctype>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csas/error.hpp"
#include "csas/filter/backend.hpp"

namespace csas::filter {

namespace text {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

// Lowercase ASCII letters and digits separated by single spaces.
inline std::string normalize(std::string_view s) {
    std::string out;
    bool gap = false;
    for (char c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || u >= 0x80) {
            if (gap && !out.empty()) out += ' ';
            gap = false;
            out += static_cast<char>(std::tolower(u));
        } else if (c != '\'') {
            gap = true;
        }
    }
    return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}

// True when `phrase` starts at a word boundary in normalized `haystack`.
inline bool has_word_prefix(std::string_view haystack, std::string_view phrase) {
    const std::string padded = " " + std::string(haystack);
    return padded.find(" " + std::string(phrase)) != std::string::npos;
}

inline bool has_phrase(std::string_view haystack, std::string_view phrase) {
    const std::string padded = " " + std::string(haystack) + " ";
    return padded.find(" " + std::string(phrase) + " ") != std::string::npos;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    // final avalanche so that nearby inputs spread across buckets
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

}  // namespace text

class MockBackend final : public Backend {
public:
    struct IssueRule {
        std::string keyword;  // matched at a word start in normalized text
        std::string label;
    };

    struct Options {
        std::size_t dimension = 1536;
        std::uint64_t seed = 0x5eed;
        // normalized phrase -> moderation category
        std::vector<std::pair<std::string, std::string>> blocklist = default_blocklist();
        std::vector<IssueRule> issue_rules = default_issue_rules();
        std::set<std::string> value_judgment_words = default_value_judgment_words();
        std::size_t summary_max_chars = 200;
    };

    MockBackend() : MockBackend(Options{}) {}
    explicit MockBackend(Options options) : options_(std::move(options)) {
        if (options_.dimension == 0) throw ConfigError("embedding dimension must be positive");
    }

    std::string id() const override { return "mock"; }
    std::size_t dimension() const override { return options_.dimension; }

    std::string complete(const PromptTemplate& tmpl, const Variables& vars) override {
        check_fault("complete");
        render(tmpl, vars);  // unbound placeholders fail here, as with a real backend
        const std::string input = vars.contains("text") ? vars.at("text") : std::string{};
        if (tmpl.id == templates::kClaimFilterId) return classify(input) ? "1" : "0";
        if (tmpl.id == templates::kIssueSummaryId) {
            return issue(input, vars.contains("matches") ? vars.at("matches") : std::string{});
        }
        return summarize(input);
    }

    Embedding embed(const std::string& input) override {
        check_fault("embed");
        {
            std::lock_guard lock(mutex_);
            if (auto it = pinned_.find(input); it != pinned_.end()) return it->second;
        }
        Embedding v(options_.dimension, 0.0);
        std::string norm = text::normalize(input);
        if (norm.empty()) norm = input.empty() ? std::string("\x01") : input;
        const auto add = [&](std::string_view feature, std::uint64_t salt) {
            const auto h = text::fnv1a(feature, options_.seed ^ salt);
            v[h % options_.dimension] += (h >> 63) ? -1.0 : 1.0;
        };
        std::size_t start = 0;
        while (start <= norm.size()) {
            auto end = norm.find(' ', start);
            if (end == std::string::npos) end = norm.size();
            if (end > start) add(std::string_view(norm).substr(start, end - start), 0x77);
            start = end + 1;
        }
        const std::string padded = " " + norm + " ";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(std::string_view(padded).substr(i, 3), 0x33);

        double ss = 0.0;
        for (double x : v) ss += x * x;
        if (ss == 0.0) {
            v[text::fnv1a(norm, options_.seed) % options_.dimension] = 1.0;
            return v;
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (double& x : v) x *= inv;
        return v;
    }

    ModerationResult moderate(const std::string& input) override {
        check_fault("moderate");
        ModerationResult result;
        const std::string norm = text::normalize(input);
        std::set<std::string> categories;
        for (const auto& [phrase, category] : options_.blocklist) {
            if (text::has_phrase(norm, text::normalize(phrase))) categories.insert(category);
        }
        result.flagged = !categories.empty();
        result.categories.assign(categories.begin(), categories.end());
        return result;
    }

    // Fixes embed(text) to `vector`, e.g. to construct exact similarities.
    void pin_embedding(const std::string& input, Embedding vector) {
        if (vector.size() != options_.dimension) {
            throw ValidationError("pinned embedding has dimension " + std::to_string(vector.size()) +
                                  ", backend dimension is " + std::to_string(options_.dimension));
        }
        std::lock_guard lock(mutex_);
        pinned_[input] = std::move(vector);
    }

    // Makes one operation ("complete", "embed", "moderate") throw BackendError.
    void set_outage(const std::string& operation, bool down) {
        std::lock_guard lock(mutex_);
        if (down) {
            outages_.insert(operation);
        } else {
            outages_.erase(operation);
        }
    }

    static std::vector<std::pair<std::string, std::string>> default_blocklist() {
        return {{"kill", "violence"},        {"killed", "violence"},     {"killer", "violence"},
                {"killing", "violence"},     {"murder", "violence"},     {"murdered", "violence"},
                {"assassinate", "violence"}, {"bomb", "violence"},       {"abuse", "abuse"},
                {"abused", "abuse"},         {"rape", "sexual"},         {"heroin", "illicit_drugs"},
                {"cocaine", "illicit_drugs"}, {"suicide", "self_harm"}};
    }

    static std::vector<IssueRule> default_issue_rules() {
        return {{"basic income", "Universal Basic Income"},
                {"cost of living", "Cost of Living"},
                {"tax", "Taxation"},
                {"climate", "Climate Change"},
                {"global warming", "Climate Change"},
                {"environment", "Environment"},
                {"pollution", "Environment"},
                {"abortion", "Abortion"},
                {"border", "Immigration"},
                {"immigra", "Immigration"},
                {"migrant", "Immigration"},
                {"inflation", "Inflation"},
                {"price", "Inflation"},
                {"health", "Healthcare"},
                {"medical", "Healthcare"},
                {"insurance", "Healthcare"},
                {"gun", "Gun Control"},
                {"firearm", "Gun Control"},
                {"crime", "Crime"},
                {"criminal", "Crime"},
                {"unemploy", "Jobs"},
                {"jobs", "Jobs"},
                {"econom", "Economy"},
                {"deficit", "Deficit Spending"},
                {"national debt", "Deficit Spending"},
                {"education", "Education"},
                {"school", "Education"},
                {"housing", "Housing"},
                {"rent", "Housing"},
                {"racism", "Race Relations"},
                {"race relations", "Race Relations"},
                {"polariz", "Political Polarization"},
                {"divided", "Political Polarization"},
                {"corrupt", "Corruption"},
                {"election", "Elections"},
                {"voting", "Elections"},
                {"democracy", "Democracy"},
                {"women s rights", "Women's Rights"},
                {"womens rights", "Women's Rights"},
                {"leadership", "Government Leadership"},
                {"government", "Government Leadership"}};
    }

    static std::set<std::string> default_value_judgment_words() {
        return {"corrupt", "racist", "best",  "worst",  "hate",   "hates",    "lie",    "lies",
                "liar",    "liars",  "horrible", "terrible", "should", "evil", "bad", "good",
                "great",   "stupid", "hiding", "pocket", "awful", "dangerous", "disgusting", "incompetent"};
    }

private:
    void check_fault(const std::string& operation) {
        std::lock_guard lock(mutex_);
        if (outages_.contains(operation)) throw BackendError("mock backend " + operation + " unavailable");
    }

    bool classify(const std::string& input) const {
        static const std::vector<std::pair<std::string, bool>> labeled = {
            {"Biden is corrupt.", false},
            {"Biden's son had profitable business deals in Ukraine.", true},
            {"Trump was a horrible president.", false},
            {"Trump kept classified documents in his home.", true},
            {"George Soros funded the Black Lives Matter protests.", true},
            {"Republicans are hiding a lot of information.", false},
            {"The 2020 election was stolen by the Democrats.", true},
            {"Republicans are racist.", false},
            {"Republicans are in the pocket of big business.", false},
            {"Democrats lie.", false},
            {"Republicans are the best party.", false},
            {"Democrats are the best party.", false},
            {"Democrats hate the country.", false},
            {"Republicans should ban Donald Trump from social media.", false},
            {"Bill Clinton and Hillary Clinton were friends with Jeffrey Epstein.", true},
        };
        const std::string norm = text::normalize(input);
        for (const auto& [example, label] : labeled) {
            if (text::normalize(example) == norm) return label;
        }
        std::size_t words = 0;
        std::size_t vowelless = 0;
        std::size_t start = 0;
        while (start < norm.size()) {
            auto end = norm.find(' ', start);
            if (end == std::string::npos) end = norm.size();
            const std::string word = norm.substr(start, end - start);
            ++words;
            if (options_.value_judgment_words.contains(word)) return false;
            if (word.find_first_of("aeiouy0123456789") == std::string::npos) ++vowelless;
            start = end + 1;
        }
        // too short to assert anything checkable, or mostly unpronounceable
        if (words < 3 || vowelless * 2 > words) return false;
        return true;
    }

    std::string summarize(const std::string& input) const {
        std::string s = text::collapse_whitespace(text::trim(input));
        for (std::size_t i = 0; i < s.size(); ++i) {
            if ((s[i] == '.' || s[i] == '!' || s[i] == '?') && (i + 1 == s.size() || s[i + 1] == ' ')) {
                s.resize(i + 1);
                break;
            }
        }
        if (s.size() > options_.summary_max_chars) {
            auto cut = s.rfind(' ', options_.summary_max_chars);
            s.resize(cut == std::string::npos || cut == 0 ? options_.summary_max_chars : cut);
        }
        while (!s.empty() && (s.back() == ',' || s.back() == ';' || s.back() == ':' || s.back() == ' ')) s.pop_back();
        if (!s.empty()) {
            s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
            if (s.back() != '.' && s.back() != '!' && s.back() != '?') s += '.';
        }
        return s;
    }

    std::string issue(const std::string& input, const std::string& matches) const {
        const std::string norm = text::normalize(input);
        std::vector<std::string> previous;
        std::size_t start = 0;
        while (start < matches.size()) {
            auto end = matches.find(',', start);
            if (end == std::string::npos) end = matches.size();
            auto m = text::trim(std::string_view(matches).substr(start, end - start));
            if (!m.empty()) previous.push_back(std::move(m));
            start = end + 1;
        }
        for (const auto& rule : options_.issue_rules) {
            if (!text::has_word_prefix(norm, text::normalize(rule.keyword))) continue;
            for (const auto& p : previous) {
                if (text::iequals(p, rule.label)) return p;
            }
            return rule.label;
        }
        // an already-mentioned theme named verbatim in the response
        for (const auto& p : previous) {
            const auto pn = text::normalize(p);
            if (!pn.empty() && text::has_phrase(norm, pn)) return p;
        }
        return std::string(kIrrelevantSentinel);
    }

    Options options_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Embedding> pinned_;
    std::set<std::string> outages_;
};

}  // namespace csas::filter

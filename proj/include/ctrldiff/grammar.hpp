#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctrldiff/corpus.hpp"
#include "ctrldiff/errors.hpp"
#include "ctrldiff/rng.hpp"
#include "ctrldiff/signals.hpp"

namespace ctrldiff {

/// One sentence skeleton: fixed words, frame-tagged slots, and (for context
/// templates) a marker slot filled with an emotion-specific word.
struct TemplateItem {
    enum class Kind { word, slot, marker };
    Kind kind;
    std::string text;  // the word, or the slot's SF tag

    static TemplateItem word(std::string w) { return {Kind::word, std::move(w)}; }
    static TemplateItem slot(std::string tag) { return {Kind::slot, std::move(tag)}; }
    static TemplateItem marker() { return {Kind::marker, ""}; }
};

struct SentenceTemplate {
    std::string intent;  // empty for context templates
    std::vector<TemplateItem> items;
};

/// Controlled grammar: a word inventory with one SF tag per word, intent
/// templates whose slots draw from single tag classes, an intent->CM
/// implication table, and per-emotion context material. Tags are invertible
/// by construction, which is what makes control success measurable exactly.
struct GrammarSpec {
    std::unordered_map<std::string, std::string> word_tag;       // word -> SF tag ("_" for none)
    std::map<std::string, std::vector<std::string>> tag_words;   // tag -> words, insertion order
    std::vector<SentenceTemplate> response_templates;
    std::map<std::string, std::vector<Mechanism>> intent_cm;     // implication table
    std::vector<std::string> emotions;
    std::map<std::string, std::vector<std::string>> emotion_markers;
    std::vector<SentenceTemplate> speaker_templates;   // use markers
    std::vector<SentenceTemplate> listener_templates;  // generic openers

    std::string tag_of(const std::string& word) const {
        auto it = word_tag.find(word);
        return it == word_tag.end() ? kNoFrame : it->second;
    }

    static GrammarSpec default_grammar();
    void validate() const;
};

namespace detail {

inline bool is_terminator(const std::string& t) { return t == "." || t == "!" || t == "?"; }

/// True when `sentence` could have been produced by `tpl`.
inline bool template_matches(const GrammarSpec& g, const SentenceTemplate& tpl,
                             const std::vector<std::string>& sentence) {
    if (sentence.size() != tpl.items.size()) return false;
    for (std::size_t i = 0; i < sentence.size(); ++i) {
        const TemplateItem& item = tpl.items[i];
        if (item.kind == TemplateItem::Kind::word) {
            if (sentence[i] != item.text) return false;
        } else {
            if (g.tag_of(sentence[i]) != item.text) return false;
        }
    }
    return true;
}

/// True when some sentence matches both templates (positionwise
/// compatibility is exact here because each word carries a single tag).
inline bool templates_overlap(const GrammarSpec& g, const SentenceTemplate& a,
                              const SentenceTemplate& b) {
    if (a.items.size() != b.items.size()) return false;
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        const TemplateItem& x = a.items[i];
        const TemplateItem& y = b.items[i];
        const bool xw = x.kind == TemplateItem::Kind::word;
        const bool yw = y.kind == TemplateItem::Kind::word;
        if (xw && yw) {
            if (x.text != y.text) return false;
        } else if (xw && !yw) {
            if (g.tag_of(x.text) != y.text) return false;
        } else if (!xw && yw) {
            if (x.text != g.tag_of(y.text)) return false;
        } else {
            if (x.text != y.text) return false;
        }
    }
    return true;
}

}  // namespace detail

inline void GrammarSpec::validate() const {
    if (emotions.empty()) throw ContractError("grammar needs emotion classes");
    if (response_templates.empty()) throw ContractError("grammar needs response templates");
    for (const auto& tpl : response_templates) {
        if (intent_cm.find(tpl.intent) == intent_cm.end())
            throw ContractError("template intent '" + tpl.intent + "' missing from the CM table");
        if (tpl.items.empty()) throw ContractError("empty template");
        for (std::size_t i = 0; i < tpl.items.size(); ++i) {
            const TemplateItem& item = tpl.items[i];
            if (item.kind == TemplateItem::Kind::marker)
                throw ContractError("response templates cannot use markers");
            if (item.kind == TemplateItem::Kind::slot) {
                auto it = tag_words.find(item.text);
                if (it == tag_words.end() || it->second.empty())
                    throw ContractError("slot tag '" + item.text + "' has no words");
                for (const auto& w : it->second)
                    if (tag_of(w) != item.text)
                        throw ContractError("word '" + w + "' does not carry tag '" +
                                            item.text + "'");
            }
            const bool last = i + 1 == tpl.items.size();
            if (item.kind == TemplateItem::Kind::word && detail::is_terminator(item.text) && !last)
                throw ContractError("template has an internal sentence terminator");
            if (last && (item.kind != TemplateItem::Kind::word ||
                         !detail::is_terminator(item.text)))
                throw ContractError("template must end with a sentence terminator");
        }
    }
    for (const auto& [intent, mechs] : intent_cm)
        if (mechs.empty())
            throw ContractError("intent '" + intent + "' implies no mechanism");
    // Pairwise unambiguity: no sentence may match two templates, otherwise
    // the oracle tagger loses invertibility.
    for (std::size_t i = 0; i < response_templates.size(); ++i)
        for (std::size_t j = i + 1; j < response_templates.size(); ++j)
            if (detail::templates_overlap(*this, response_templates[i], response_templates[j]))
                throw ContractError("ambiguous templates " + std::to_string(i) + " and " +
                                    std::to_string(j));
    for (const auto& e : emotions) {
        auto it = emotion_markers.find(e);
        if (it == emotion_markers.end() || it->second.empty())
            throw ContractError("emotion '" + e + "' has no marker words");
    }
    if (speaker_templates.empty() || listener_templates.empty())
        throw ContractError("grammar needs context templates");
}

inline GrammarSpec GrammarSpec::default_grammar() {
    GrammarSpec g;

    auto add_tag = [&](const std::string& tag, std::vector<std::string> words) {
        for (const auto& w : words) g.word_tag[w] = tag;
        g.tag_words[tag] = std::move(words);
    };
    add_tag("Animals", {"dog", "cat", "bird", "horse", "rabbit"});
    add_tag("People", {"friend", "neighbor", "teacher", "coworker", "stranger"});
    add_tag("Kinship", {"mom", "dad", "sister", "brother", "cousin"});
    add_tag("Food", {"pizza", "cake", "soup", "noodles", "sandwich"});
    add_tag("Ingestion", {"eat", "drink", "taste", "bite", "chew"});
    add_tag("Motion", {"go", "move", "walk", "run", "travel"});
    add_tag("Vehicle", {"car", "bus", "train", "bike", "truck"});
    add_tag("Buildings", {"house", "apartment", "cabin", "garage", "barn"});
    add_tag("Locale", {"park", "school", "office", "beach", "market"});
    add_tag("Weather", {"rain", "snow", "storm", "sunshine", "fog"});
    add_tag("Activity", {"game", "party", "picnic", "concert", "meeting"});
    add_tag("Time_vector", {"today", "yesterday", "tomorrow", "tonight", "soon"});
    add_tag("Calendric_unit", {"monday", "friday", "weekend", "morning", "evening"});
    add_tag("Perception_experience", {"see", "hear", "feel", "notice", "watch"});
    add_tag("Communication", {"say", "tell", "talk", "speak", "chat"});
    add_tag("Possession", {"have", "own", "keep", "hold", "carry"});
    add_tag("Intentionally_act", {"do", "try", "make", "act", "attempt"});
    add_tag("Scrutiny", {"check", "search", "inspect", "examine", "review"});
    add_tag("Judgment", {"blame", "praise", "admire", "respect", "criticize"});
    add_tag("Assistance", {"help", "support", "aid", "assist", "rescue"});
    add_tag("Event", {"happen", "occur", "arise", "unfold", "result"});
    add_tag("Quantity", {"many", "few", "some", "several", "plenty"});
    add_tag("Desirability", {"great", "terrible", "awesome", "awful", "lovely"});
    add_tag("Emotion_directed", {"happy", "glad", "thrilled", "excited", "delighted"});
    add_tag("Feeling",
            {"sad",      "gloomy",    "miserable", "angry",   "furious",  "annoyed",
             "afraid",   "scared",    "nervous",   "surprised", "shocked", "amazed",
             "proud",    "confident", "victorious", "lonely", "isolated", "alone",
             "grateful", "thankful",  "blessed"});

    for (const std::string& w :
         {"i",    "you",   "we",     "they", "he",     "she",   "it",    "am",    "is",
          "are",  "was",   "were",   "the",  "a",      "an",    "my",    "your",  "his",
          "her",  "so",    "very",   "really", "that", "this",  "what",  "how",   "why",
          "did",  "not",   "no",     "yes",  "to",     "for",   "with",  "about", "because",
          "of",   "and",   "will",   "can",  "could",  "should", "would", "be",   "been",
          "when", "sounds", "sorry", "agree", "right", "totally", "wish", "at",   "near",
          "on",   "in",    "me",     "us",   "too",    "again",  "oh",   "well",  "hi",
          "hello", "hey",  "more",   "made", "after",  "new",    "never", "give", "up",
          "maybe", "should"})
        g.word_tag[w] = kNoFrame;

    using TI = TemplateItem;
    auto tpl = [](std::string intent, std::vector<TI> items) {
        return SentenceTemplate{std::move(intent), std::move(items)};
    };
    auto W = [](const char* w) { return TI::word(w); };
    auto S = [](const char* tag) { return TI::slot(tag); };

    g.response_templates = {
        tpl("Questioning", {W("what"), W("did"), W("you"), S("Intentionally_act"), W("?")}),
        tpl("Questioning",
            {W("did"), W("you"), S("Perception_experience"), W("the"), S("Animals"), W("?")}),
        tpl("Questioning", {W("how"), W("was"), W("the"), S("Activity"), W("?")}),
        tpl("Acknowledging", {W("sounds"), S("Desirability"), W("!")}),
        tpl("Acknowledging", {W("that"), W("sounds"), W("really"), S("Desirability"), W(".")}),
        tpl("Agreeing", {W("yes"), W("i"), W("totally"), W("agree"), W(".")}),
        tpl("Agreeing", {W("you"), W("are"), W("so"), W("right"), W(".")}),
        tpl("Consoling", {W("do"), W("not"), W("feel"), S("Feeling"), W(".")}),
        tpl("Consoling", {W("it"), W("will"), W("be"), S("Desirability"), W("soon"), W(".")}),
        tpl("Sympathizing", {W("i"), W("am"), W("so"), W("sorry"), W("for"), W("you"), W(".")}),
        tpl("Sympathizing",
            {W("i"), W("am"), W("sorry"), W("about"), W("your"), S("Animals"), W(".")}),
        tpl("Encouraging", {W("you"), W("can"), S("Intentionally_act"), W("it"), W("!")}),
        tpl("Encouraging",
            {W("never"), W("give"), W("up"), W("on"), W("the"), S("Activity"), W("!")}),
        tpl("Suggesting",
            {W("maybe"), W("you"), W("could"), S("Motion"), W("to"), W("the"), S("Locale"),
             W(".")}),
        tpl("Suggesting",
            {W("you"), W("should"), S("Communication"), W("with"), W("your"), S("People"),
             W(".")}),
        tpl("Wishing",
            {W("i"), W("wish"), W("you"), W("a"), S("Desirability"), S("Calendric_unit"),
             W(".")}),
        tpl("Wishing", {W("have"), W("a"), S("Desirability"), S("Calendric_unit"), W("!")}),
        tpl("Neutral", {W("i"), W("was"), W("at"), W("the"), S("Locale"), S("Time_vector"),
                        W(".")}),
        tpl("Neutral",
            {W("the"), S("Animals"), W("is"), W("near"), W("the"), S("Buildings"), W(".")}),
    };

    g.intent_cm = {
        {"Questioning", {Mechanism::EX}},
        {"Suggesting", {Mechanism::EX}},
        {"Acknowledging", {Mechanism::IP}},
        {"Agreeing", {Mechanism::IP}},
        {"Neutral", {Mechanism::IP}},
        {"Consoling", {Mechanism::ER}},
        {"Sympathizing", {Mechanism::ER}},
        {"Encouraging", {Mechanism::ER}},
        {"Wishing", {Mechanism::ER}},
    };

    g.emotions = {"joyful", "sad", "angry", "afraid", "surprised", "proud", "lonely",
                  "grateful"};
    g.emotion_markers = {
        {"joyful", {"happy", "glad", "thrilled"}},
        {"sad", {"sad", "gloomy", "miserable"}},
        {"angry", {"angry", "furious", "annoyed"}},
        {"afraid", {"afraid", "scared", "nervous"}},
        {"surprised", {"surprised", "shocked", "amazed"}},
        {"proud", {"proud", "confident", "victorious"}},
        {"lonely", {"lonely", "isolated", "alone"}},
        {"grateful", {"grateful", "thankful", "blessed"}},
    };

    auto M = [] { return TI::marker(); };
    g.speaker_templates = {
        tpl("", {W("i"), W("am"), W("so"), M(), W("about"), W("the"), S("Activity"), W(".")}),
        tpl("", {W("i"), W("feel"), W("really"), M(), W("today"), W(".")}),
        tpl("", {W("my"), S("Kinship"), W("made"), W("me"), M(), W("yesterday"), W(".")}),
        tpl("", {W("i"), W("was"), M(), W("after"), W("the"), S("Activity"), W(".")}),
        tpl("", {W("the"), S("Weather"), W("made"), W("me"), M(), W(".")}),
    };
    g.listener_templates = {
        tpl("", {W("hi"), W("how"), W("are"), W("you"), W("?")}),
        tpl("", {W("hello"), W("tell"), W("me"), W("more"), W(".")}),
        tpl("", {W("hey"), W("what"), W("is"), W("new"), W("?")}),
    };

    g.validate();
    return g;
}

/// Rule-based tagger: SF by word lookup (NO_FRAME for punctuation and
/// unknowns), IT by unique template match with Neutral fallback, CM as the
/// union of the matched intents' implied mechanisms. Total on any input.
inline ControlSignals oracle_tag(const std::vector<std::vector<std::string>>& response_sentences,
                                 const GrammarSpec& g) {
    ControlSignals cs;
    for (const auto& sentence : response_sentences) {
        std::string intent = kNeutralIntent;
        for (const auto& tpl : g.response_templates) {
            if (detail::template_matches(g, tpl, sentence)) {
                intent = tpl.intent;
                break;  // unambiguous by grammar validation
            }
        }
        cs.it.push_back(intent);
        for (const auto& tok : sentence) cs.sf.push_back(g.tag_of(tok));
        auto it = g.intent_cm.find(intent);
        if (it != g.intent_cm.end())
            for (Mechanism m : it->second) cs.cm.push_back(m);
    }
    cs.canonicalize();
    return cs;
}

namespace detail {

inline std::vector<std::string> instantiate(const GrammarSpec& g, const SentenceTemplate& tpl,
                                            const std::vector<std::string>* markers, Rng& rng) {
    std::vector<std::string> out;
    out.reserve(tpl.items.size());
    for (const auto& item : tpl.items) {
        switch (item.kind) {
            case TemplateItem::Kind::word: out.push_back(item.text); break;
            case TemplateItem::Kind::slot: {
                const auto& words = g.tag_words.at(item.text);
                out.push_back(words[rng.next_index(words.size())]);
                break;
            }
            case TemplateItem::Kind::marker:
                out.push_back((*markers)[rng.next_index(markers->size())]);
                break;
        }
    }
    return out;
}

}  // namespace detail

/// Generates `n` records: 1-2 context utterances drawn for a sampled emotion
/// class, a response of 1-3 template sentences, and signals attached by
/// construction. Deterministic for a given seed.
inline std::vector<DatasetRecord> gen_synthetic(const GrammarSpec& g, std::size_t n,
                                                std::uint64_t seed) {
    if (n < 1) throw ContractError("gen_synthetic requires n >= 1");
    g.validate();
    Rng rng(seed);
    std::vector<DatasetRecord> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        DatasetRecord r;
        const std::string& emotion = g.emotions[rng.next_index(g.emotions.size())];
        const auto& markers = g.emotion_markers.at(emotion);
        const std::size_t n_ctx = 1 + rng.next_index(2);
        if (n_ctx == 2) {
            Utterance u;
            u.speaker = Utterance::Speaker::listener;
            u.tokens = detail::instantiate(
                g, g.listener_templates[rng.next_index(g.listener_templates.size())], nullptr,
                rng);
            r.context.push_back(std::move(u));
        }
        Utterance u;
        u.speaker = Utterance::Speaker::speaker;
        u.tokens = detail::instantiate(
            g, g.speaker_templates[rng.next_index(g.speaker_templates.size())], &markers, rng);
        r.context.push_back(std::move(u));

        const std::size_t n_sent = 1 + rng.next_index(3);
        for (std::size_t s = 0; s < n_sent; ++s) {
            const auto& tpl =
                g.response_templates[rng.next_index(g.response_templates.size())];
            r.response_sentences.push_back(detail::instantiate(g, tpl, nullptr, rng));
        }
        r.signals = oracle_tag(r.response_sentences, g);
        r.emotion = emotion;
        validate_record(r);
        records.push_back(std::move(r));
    }
    return records;
}

/// Vocabulary over the full grammar inventory plus all reserved signal
/// tokens, independent of any generated corpus.
inline Vocab vocab_from_grammar(const GrammarSpec& g) {
    Vocab v;
    v.add(cm_token(Mechanism::ER));
    v.add(cm_token(Mechanism::IP));
    v.add(cm_token(Mechanism::EX));
    v.add(kNoneCmToken);
    std::set<std::string> intents{kNeutralIntent};
    for (const auto& [intent, _] : g.intent_cm) intents.insert(intent);
    for (const auto& i : intents) v.add(it_token(i));
    v.add(sf_token(kNoFrame));
    std::set<std::string> tags;
    for (const auto& [tag, _] : g.tag_words) tags.insert(tag);
    for (const auto& t : tags) v.add(sf_token(t));
    std::set<std::string> words{".", "!", "?"};
    for (const auto& [w, _] : g.word_tag) words.insert(w);
    for (const auto& w : words) v.add(w);
    return v;
}

}  // namespace ctrldiff

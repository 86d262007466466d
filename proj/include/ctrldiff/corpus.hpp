#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctrldiff/errors.hpp"
#include "ctrldiff/signals.hpp"
#include "ctrldiff/vocab.hpp"

namespace ctrldiff {

struct Utterance {
    enum class Speaker { speaker, listener };
    Speaker speaker = Speaker::speaker;
    std::vector<std::string> tokens;

    bool operator==(const Utterance& o) const {
        return speaker == o.speaker && tokens == o.tokens;
    }
};

/// One dialogue: alternating context utterances, a sentence-segmented
/// response, and (optionally) the control signals extracted for it.
struct DatasetRecord {
    std::vector<Utterance> context;
    std::vector<std::vector<std::string>> response_sentences;
    std::optional<ControlSignals> signals;
    std::optional<std::string> emotion;
    std::optional<std::vector<double>> sem_vec;
    std::optional<std::vector<double>> emo_dist;

    std::size_t response_token_count() const {
        std::size_t n = 0;
        for (const auto& s : response_sentences) n += s.size();
        return n;
    }

    std::vector<std::string> response_tokens() const {
        std::vector<std::string> out;
        for (const auto& s : response_sentences) out.insert(out.end(), s.begin(), s.end());
        return out;
    }

    std::vector<std::vector<std::string>> context_token_lists() const {
        std::vector<std::vector<std::string>> out;
        for (const auto& u : context) out.push_back(u.tokens);
        return out;
    }

    std::vector<std::string> context_tokens() const {
        std::vector<std::string> out;
        for (const auto& u : context)
            out.insert(out.end(), u.tokens.begin(), u.tokens.end());
        return out;
    }

    std::vector<std::size_t> sentence_lengths() const {
        std::vector<std::size_t> out;
        for (const auto& s : response_sentences) out.push_back(s.size());
        return out;
    }

    bool operator==(const DatasetRecord& o) const {
        return context == o.context && response_sentences == o.response_sentences &&
               signals == o.signals && emotion == o.emotion && sem_vec == o.sem_vec &&
               emo_dist == o.emo_dist;
    }
};

namespace detail {

inline bool has_whitespace(const std::string& s) {
    for (unsigned char c : s)
        if (std::isspace(c)) return true;
    return false;
}

inline void validate_tokens(const std::vector<std::string>& tokens, long line,
                            const char* field) {
    if (tokens.empty()) throw ValidationError(std::string(field) + " must be nonempty", line, field);
    for (const auto& t : tokens) {
        if (t.empty()) throw ValidationError(std::string(field) + " contains an empty token", line, field);
        if (has_whitespace(t))
            throw ValidationError(std::string(field) + " token '" + t + "' contains whitespace",
                                  line, field);
    }
}

}  // namespace detail

/// Checks every DatasetRecord invariant; `line` feeds error messages.
inline void validate_record(const DatasetRecord& r, long line = -1) {
    if (r.response_sentences.empty())
        throw ValidationError("response must contain at least one sentence", line, "response");
    for (const auto& s : r.response_sentences) detail::validate_tokens(s, line, "response");
    for (const auto& u : r.context) detail::validate_tokens(u.tokens, line, "context");
    if (r.signals) {
        if (r.signals->it.size() != r.response_sentences.size())
            throw ValidationError("it length " + std::to_string(r.signals->it.size()) +
                                      " does not match sentence count " +
                                      std::to_string(r.response_sentences.size()),
                                  line, "it");
        if (r.signals->sf.size() != r.response_token_count())
            throw ValidationError("sf length " + std::to_string(r.signals->sf.size()) +
                                      " does not match response token count " +
                                      std::to_string(r.response_token_count()),
                                  line, "sf");
    }
    if (r.emo_dist) {
        double sum = 0.0;
        for (double v : *r.emo_dist) sum += v;
        if (std::abs(sum - 1.0) > 1e-6)
            throw ValidationError("emo_dist sums to " + std::to_string(sum) + ", not 1",
                                  line, "emo_dist");
    }
}

inline nlohmann::json record_to_json(const DatasetRecord& r) {
    nlohmann::json j;
    j["context"] = nlohmann::json::array();
    for (const auto& u : r.context) {
        nlohmann::json ju;
        ju["speaker"] = u.speaker == Utterance::Speaker::speaker ? "speaker" : "listener";
        ju["tokens"] = u.tokens;
        j["context"].push_back(ju);
    }
    j["response"] = r.response_sentences;
    if (r.signals) {
        ControlSignals canon = *r.signals;
        canon.canonicalize();
        nlohmann::json js;
        js["cm"] = nlohmann::json::array();
        for (Mechanism m : canon.cm) js["cm"].push_back(mechanism_name(m));
        js["it"] = canon.it;
        js["sf"] = canon.sf;
        j["signals"] = js;
    }
    if (r.emotion) j["emotion"] = *r.emotion;
    if (r.sem_vec) j["sem_vec"] = *r.sem_vec;
    if (r.emo_dist) j["emo_dist"] = *r.emo_dist;
    return j;
}

inline DatasetRecord record_from_json(const nlohmann::json& j, long line = -1) {
    DatasetRecord r;
    if (!j.is_object()) throw ValidationError("record must be a JSON object", line, "record");
    if (j.contains("context")) {
        for (const auto& ju : j.at("context")) {
            Utterance u;
            const std::string sp = ju.value("speaker", "speaker");
            if (sp == "speaker") u.speaker = Utterance::Speaker::speaker;
            else if (sp == "listener") u.speaker = Utterance::Speaker::listener;
            else throw ValidationError("unknown speaker '" + sp + "'", line, "speaker");
            u.tokens = ju.at("tokens").get<std::vector<std::string>>();
            r.context.push_back(std::move(u));
        }
    }
    if (!j.contains("response"))
        throw ValidationError("record lacks a response", line, "response");
    r.response_sentences = j.at("response").get<std::vector<std::vector<std::string>>>();
    if (j.contains("signals")) {
        const auto& js = j.at("signals");
        ControlSignals cs;
        for (const auto& m : js.value("cm", std::vector<std::string>{})) {
            Mechanism mech;
            if (!parse_mechanism(m, mech))
                throw ValidationError("unknown mechanism '" + m + "'", line, "cm");
            cs.cm.push_back(mech);
        }
        cs.canonicalize();
        cs.it = js.at("it").get<std::vector<std::string>>();
        cs.sf = js.at("sf").get<std::vector<std::string>>();
        r.signals = std::move(cs);
    }
    if (j.contains("emotion")) r.emotion = j.at("emotion").get<std::string>();
    if (j.contains("sem_vec")) r.sem_vec = j.at("sem_vec").get<std::vector<double>>();
    if (j.contains("emo_dist")) r.emo_dist = j.at("emo_dist").get<std::vector<double>>();
    validate_record(r, line);
    return r;
}

/// Loads a JSONL dataset, validating each record. Errors carry the 1-based
/// line number and the offending field.
inline std::vector<DatasetRecord> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<DatasetRecord> records;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(std::string("malformed JSON: ") + e.what(), lineno, "json");
        }
        records.push_back(record_from_json(j, lineno));
    }
    return records;
}

inline void write_jsonl(const std::vector<DatasetRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

/// Splits a flat token stream into sentences after each of ".", "!", "?";
/// the terminator stays with its sentence, and a trailing fragment without a
/// terminator forms the final sentence.
inline std::vector<std::vector<std::string>> split_sentences(
    const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw ContractError("split_sentences requires tokens");
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> current;
    for (const auto& t : tokens) {
        current.push_back(t);
        if (t == "." || t == "!" || t == "?") {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

/// Builds the vocabulary: PAD/UNK, the reserved signal tokens (CM mechanisms
/// and NONE, every IT/SF class seen in the records plus the Neutral and
/// NO_FRAME fallbacks), then all corpus tokens with frequency >= min_count in
/// lexicographic order.
inline Vocab build_vocab(const std::vector<DatasetRecord>& records, std::size_t min_count) {
    if (records.empty()) throw ContractError("cannot build a vocabulary from an empty corpus");
    std::set<std::string> it_classes{kNeutralIntent};
    std::set<std::string> sf_classes;
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) {
        for (const auto& u : r.context)
            for (const auto& t : u.tokens) ++counts[t];
        for (const auto& s : r.response_sentences)
            for (const auto& t : s) ++counts[t];
        if (r.signals) {
            for (const auto& i : r.signals->it) it_classes.insert(i);
            for (const auto& f : r.signals->sf)
                if (f != kNoFrame) sf_classes.insert(f);
        }
    }
    Vocab v;
    v.add(cm_token(Mechanism::ER));
    v.add(cm_token(Mechanism::IP));
    v.add(cm_token(Mechanism::EX));
    v.add(kNoneCmToken);
    for (const auto& c : it_classes) v.add(it_token(c));
    v.add(sf_token(kNoFrame));
    for (const auto& c : sf_classes) v.add(sf_token(c));
    for (const auto& [tok, n] : counts)
        if (n >= min_count) v.add(tok);
    return v;
}

}  // namespace ctrldiff

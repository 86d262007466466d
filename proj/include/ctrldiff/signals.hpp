#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ctrldiff/errors.hpp"
#include "ctrldiff/vocab.hpp"

namespace ctrldiff {

/// Utterance-level communication mechanisms, in canonical flattening order.
enum class Mechanism { ER = 0, IP = 1, EX = 2 };

inline const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::ER: return "ER";
        case Mechanism::IP: return "IP";
        case Mechanism::EX: return "EX";
    }
    return "?";
}

inline bool parse_mechanism(const std::string& s, Mechanism& out) {
    if (s == "ER") out = Mechanism::ER;
    else if (s == "IP") out = Mechanism::IP;
    else if (s == "EX") out = Mechanism::EX;
    else return false;
    return true;
}

/// Token-level frame label for "no frame"; spelled "_" on disk and in signal
/// sequences.
inline const std::string kNoFrame = "_";
/// Fallback intent class when no template matches.
inline const std::string kNeutralIntent = "Neutral";

/// Multi-grained control signals for one response: cm at the utterance level,
/// one intent per sentence, one frame label per token.
struct ControlSignals {
    std::vector<Mechanism> cm;       // canonical order, no duplicates
    std::vector<std::string> it;     // per response sentence
    std::vector<std::string> sf;     // per response token (flattened)

    void canonicalize() {
        std::sort(cm.begin(), cm.end());
        cm.erase(std::unique(cm.begin(), cm.end()), cm.end());
    }

    bool has(Mechanism m) const {
        return std::find(cm.begin(), cm.end(), m) != cm.end();
    }

    void validate(std::size_t response_token_count) const {
        if (it.empty()) throw ContractError("control signals need at least one intent");
        if (sf.size() != response_token_count)
            throw ContractError("sf length " + std::to_string(sf.size()) +
                                " does not match response token count " +
                                std::to_string(response_token_count));
    }

    bool operator==(const ControlSignals& o) const {
        return cm == o.cm && it == o.it && sf == o.sf;
    }
};

inline std::string cm_token(Mechanism m) { return std::string("[CM:") + mechanism_name(m) + "]"; }
inline const std::string kNoneCmToken = "[CM:NONE]";
inline std::string it_token(const std::string& intent) { return "[IT:" + intent + "]"; }
inline std::string sf_token(const std::string& frame) { return "[SF:" + frame + "]"; }

/// Coarse-to-fine flattening of a signal set: CM tokens (ER, IP, EX as
/// present, or the NONE marker), then IT tokens in sentence order, then SF
/// tokens in response-token order. Stable under any internal ordering of cm.
inline std::vector<std::string> flatten_signals(const ControlSignals& cs) {
    std::vector<std::string> out;
    ControlSignals c = cs;
    c.canonicalize();
    if (c.cm.empty()) {
        out.push_back(kNoneCmToken);
    } else {
        for (Mechanism m : c.cm) out.push_back(cm_token(m));
    }
    for (const auto& intent : c.it) out.push_back(it_token(intent));
    for (const auto& frame : c.sf) out.push_back(sf_token(frame));
    return out;
}

/// Absolute-position layout of one assembled model input:
/// [context][cm][it][sf][response], with bookkeeping for which sentence an IT
/// position governs and which response position an SF position aligns to.
struct SpanMap {
    enum class Segment { context = 0, cm = 1, it = 2, sf = 3, response = 4 };

    struct ItPosition {
        std::size_t pos;
        std::size_t sentence;  // index into sentence_spans
    };
    struct SfPosition {
        std::size_t pos;
        std::size_t response_pos;  // absolute aligned position
    };

    std::size_t ctx_begin = 0, ctx_end = 0;
    std::vector<std::size_t> cm_positions;
    std::vector<ItPosition> it_positions;
    std::vector<SfPosition> sf_positions;
    std::size_t resp_begin = 0, resp_end = 0;
    std::vector<std::pair<std::size_t, std::size_t>> sentence_spans;  // absolute [b, e)
    std::size_t total_len = 0;

    std::size_t ctx_len() const { return ctx_end - ctx_begin; }
    std::size_t resp_len() const { return resp_end - resp_begin; }

    Segment segment_of(std::size_t pos) const {
        if (pos < ctx_end) return Segment::context;
        if (pos < ctx_end + cm_positions.size()) return Segment::cm;
        if (pos < ctx_end + cm_positions.size() + it_positions.size()) return Segment::it;
        if (pos < resp_begin) return Segment::sf;
        if (pos < resp_end) return Segment::response;
        throw IndexError("position " + std::to_string(pos) + " outside span map");
    }

    std::vector<Segment> segments() const {
        std::vector<Segment> out(total_len);
        for (std::size_t p = 0; p < total_len; ++p) out[p] = segment_of(p);
        return out;
    }

    /// Sentence index of an absolute response position.
    std::size_t sentence_of(std::size_t pos) const {
        for (std::size_t s = 0; s < sentence_spans.size(); ++s)
            if (pos >= sentence_spans[s].first && pos < sentence_spans[s].second) return s;
        throw IndexError("position " + std::to_string(pos) + " not in any sentence span");
    }

    /// Audits every structural invariant; throws ContractError on violation.
    void validate() const {
        if (ctx_begin != 0) throw ContractError("span map must start at 0");
        std::size_t cursor = ctx_end;
        for (std::size_t p : cm_positions)
            if (p != cursor++) throw ContractError("cm positions not contiguous");
        for (const auto& ip : it_positions) {
            if (ip.pos != cursor++) throw ContractError("it positions not contiguous");
            if (ip.sentence >= sentence_spans.size())
                throw ContractError("it position names a missing sentence");
        }
        for (const auto& sp : sf_positions) {
            if (sp.pos != cursor++) throw ContractError("sf positions not contiguous");
            if (sp.response_pos < resp_begin || sp.response_pos >= resp_end)
                throw ContractError("sf alignment escapes the response span");
        }
        if (cursor != resp_begin || resp_end != total_len || resp_begin > resp_end)
            throw ContractError("response span does not close the layout");
        if (sf_positions.size() != resp_len())
            throw ContractError("sf/response bijection violated");
        for (std::size_t i = 0; i < sf_positions.size(); ++i)
            if (sf_positions[i].response_pos != resp_begin + i)
                throw ContractError("sf alignment is not the identity pairing");
        std::size_t covered = resp_begin;
        for (std::size_t s = 0; s < sentence_spans.size(); ++s) {
            if (sentence_spans[s].first != covered ||
                sentence_spans[s].second <= sentence_spans[s].first)
                throw ContractError("sentence spans must partition the response span");
            covered = sentence_spans[s].second;
        }
        if (covered != resp_end)
            throw ContractError("sentence spans must cover the response span");
    }
};

/// Lays out [context][cm][it][sf][response] positions for a context of
/// `ctx_len` tokens and the given signals/sentences.
inline SpanMap build_span_map(std::size_t ctx_len, const ControlSignals& cs,
                              const std::vector<std::vector<std::string>>& response_sentences) {
    if (response_sentences.empty())
        throw ContractError("response must contain at least one sentence");
    std::size_t resp_tokens = 0;
    for (const auto& s : response_sentences) {
        if (s.empty()) throw ContractError("response sentences must be nonempty");
        resp_tokens += s.size();
    }
    if (cs.it.size() != response_sentences.size())
        throw ContractError("intent count " + std::to_string(cs.it.size()) +
                            " does not match sentence count " +
                            std::to_string(response_sentences.size()));
    cs.validate(resp_tokens);

    ControlSignals canon = cs;
    canon.canonicalize();
    const std::size_t n_cm = canon.cm.empty() ? 1 : canon.cm.size();

    SpanMap span;
    span.ctx_begin = 0;
    span.ctx_end = ctx_len;
    std::size_t cursor = ctx_len;
    for (std::size_t i = 0; i < n_cm; ++i) span.cm_positions.push_back(cursor++);
    for (std::size_t s = 0; s < cs.it.size(); ++s)
        span.it_positions.push_back({cursor++, s});
    const std::size_t sf_start = cursor;
    cursor += resp_tokens;
    span.resp_begin = cursor;
    span.resp_end = cursor + resp_tokens;
    for (std::size_t i = 0; i < resp_tokens; ++i)
        span.sf_positions.push_back({sf_start + i, span.resp_begin + i});
    std::size_t sb = span.resp_begin;
    for (const auto& s : response_sentences) {
        span.sentence_spans.emplace_back(sb, sb + s.size());
        sb += s.size();
    }
    span.total_len = span.resp_end;
    span.validate();
    return span;
}

/// Token ids plus per-position segment labels plus the span map.
struct AssembledInput {
    std::vector<int> ids;
    std::vector<SpanMap::Segment> segments;
    SpanMap span;
};

/// Builds the full model input for one record. When the concatenation exceeds
/// `max_len`, whole context utterances are dropped oldest-first; signals and
/// response are never truncated.
inline AssembledInput assemble_input(const std::vector<std::vector<std::string>>& context_utterances,
                                     const ControlSignals& cs,
                                     const std::vector<std::vector<std::string>>& response_sentences,
                                     const Vocab& vocab, std::size_t max_len) {
    std::size_t resp_tokens = 0;
    for (const auto& s : response_sentences) resp_tokens += s.size();
    const std::vector<std::string> signal_tokens = flatten_signals(cs);
    const std::size_t fixed = signal_tokens.size() + resp_tokens;
    if (fixed > max_len)
        throw LengthError("signals plus response (" + std::to_string(fixed) +
                          " tokens) exceed the input budget of " + std::to_string(max_len));

    std::size_t first_utt = 0;
    std::size_t ctx_len = 0;
    for (const auto& u : context_utterances) ctx_len += u.size();
    while (first_utt < context_utterances.size() && ctx_len + fixed > max_len) {
        ctx_len -= context_utterances[first_utt].size();
        ++first_utt;
    }

    AssembledInput out;
    out.span = build_span_map(ctx_len, cs, response_sentences);
    out.ids.reserve(out.span.total_len);
    for (std::size_t u = first_utt; u < context_utterances.size(); ++u)
        for (const auto& tok : context_utterances[u]) out.ids.push_back(vocab.id(tok));
    for (const auto& tok : signal_tokens) out.ids.push_back(vocab.id(tok));
    for (const auto& sent : response_sentences)
        for (const auto& tok : sent) out.ids.push_back(vocab.id(tok));
    out.segments = out.span.segments();
    return out;
}

}  // namespace ctrldiff

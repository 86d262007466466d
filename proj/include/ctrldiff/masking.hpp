#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ctrldiff/errors.hpp"
#include "ctrldiff/signals.hpp"
#include "ctrldiff/tensor.hpp"

namespace ctrldiff {

/// L-by-L visibility relation. visible(q, k) is true when position k controls
/// position q, i.e. query q may attend key k. This is the transpose of the
/// controller-indexed matrix convention where entry (i, j) covers "i controls
/// j"; storing it query-major makes the attention bias a plain row lookup.
struct MaskMatrix {
    std::size_t length = 0;
    std::vector<char> visible;  // row-major, visible[q * length + k]

    bool at(std::size_t q, std::size_t k) const { return visible[q * length + k] != 0; }
    void set(std::size_t q, std::size_t k, bool v) { visible[q * length + k] = v ? 1 : 0; }

    void validate() const {
        for (std::size_t q = 0; q < length; ++q) {
            if (!at(q, q)) throw ContractError("mask lost self-visibility at " + std::to_string(q));
            bool any = false;
            for (std::size_t k = 0; k < length && !any; ++k) any = at(q, k);
            if (!any) throw ContractError("fully masked query row " + std::to_string(q));
        }
    }
};

struct MaskRules {
    /// Coarse-to-fine visibility between signal levels: CM tokens control IT
    /// and SF tokens, IT tokens control SF tokens.
    bool coarse_to_fine = true;
};

/// Builds the control-range mask by painting each rule in turn:
///   R1 full attention on context rows and columns,
///   R2 each CM position controls every response position,
///   R3 each IT position controls its own sentence's response positions,
///   R4 each SF position controls exactly its aligned response position,
///   R5 same-level mutual visibility (CM, IT, SF, response),
///   R6 coarse-to-fine between signal levels (configurable),
///   R7 the diagonal.
inline MaskMatrix build_mask(const SpanMap& span, const MaskRules& rules = {}) {
    span.validate();
    const std::size_t L = span.total_len;
    MaskMatrix m;
    m.length = L;
    m.visible.assign(L * L, 0);

    // R1: context rows and columns.
    for (std::size_t c = span.ctx_begin; c < span.ctx_end; ++c) {
        for (std::size_t p = 0; p < L; ++p) {
            m.set(c, p, true);
            m.set(p, c, true);
        }
    }
    // R2: CM -> response.
    for (std::size_t k : span.cm_positions)
        for (std::size_t q = span.resp_begin; q < span.resp_end; ++q) m.set(q, k, true);
    // R3: IT -> own sentence.
    for (const auto& it : span.it_positions) {
        const auto [b, e] = span.sentence_spans[it.sentence];
        for (std::size_t q = b; q < e; ++q) m.set(q, it.pos, true);
    }
    // R4: SF -> aligned response position.
    for (const auto& sf : span.sf_positions) m.set(sf.response_pos, sf.pos, true);
    // R5: same-level blocks.
    for (std::size_t a : span.cm_positions)
        for (std::size_t b : span.cm_positions) m.set(a, b, true);
    for (const auto& a : span.it_positions)
        for (const auto& b : span.it_positions) m.set(a.pos, b.pos, true);
    for (const auto& a : span.sf_positions)
        for (const auto& b : span.sf_positions) m.set(a.pos, b.pos, true);
    for (std::size_t a = span.resp_begin; a < span.resp_end; ++a)
        for (std::size_t b = span.resp_begin; b < span.resp_end; ++b) m.set(a, b, true);
    // R6: coarse-to-fine.
    if (rules.coarse_to_fine) {
        for (std::size_t k : span.cm_positions) {
            for (const auto& it : span.it_positions) m.set(it.pos, k, true);
            for (const auto& sf : span.sf_positions) m.set(sf.pos, k, true);
        }
        for (const auto& it : span.it_positions)
            for (const auto& sf : span.sf_positions) m.set(sf.pos, it.pos, true);
    }
    // R7: diagonal.
    for (std::size_t p = 0; p < L; ++p) m.set(p, p, true);

    m.validate();
    return m;
}

/// Additive attention bias: 0 where visible, -1e9 elsewhere. -1e9 saturates
/// softmax like -inf would but cannot produce NaN, and R7 guarantees no row
/// is fully masked.
template <typename T = float>
Tensor<T> mask_to_bias(const MaskMatrix& mask) {
    const std::size_t L = mask.length;
    Tensor<T> bias({L, L});
    for (std::size_t q = 0; q < L; ++q)
        for (std::size_t k = 0; k < L; ++k)
            bias.at(q, k) = mask.at(q, k) ? T(0) : T(-1e9);
    return bias;
}

struct MaskViolation {
    std::size_t q = 0;
    std::size_t k = 0;
    bool expected = false;
    bool got = false;

    std::string describe() const {
        return "(" + std::to_string(q) + ", " + std::to_string(k) + ") expected " +
               (expected ? "visible" : "masked") + ", got " + (got ? "visible" : "masked");
    }
};

namespace detail {

/// Entry-level re-statement of the rules, kept independent of build_mask's
/// painting order so one can cross-check the other.
inline bool rule_visible(const SpanMap& span, const MaskRules& rules, std::size_t q,
                         std::size_t k) {
    using Seg = SpanMap::Segment;
    const Seg sq = span.segment_of(q);
    const Seg sk = span.segment_of(k);
    if (q == k) return true;                              // R7
    if (sq == Seg::context || sk == Seg::context) return true;  // R1
    if (sq == sk) return true;                            // R5
    if (sk == Seg::cm && sq == Seg::response) return true;  // R2
    if (sk == Seg::it && sq == Seg::response) {           // R3
        for (const auto& it : span.it_positions)
            if (it.pos == k) return span.sentence_of(q) == it.sentence;
    }
    if (sk == Seg::sf && sq == Seg::response) {           // R4
        for (const auto& sf : span.sf_positions)
            if (sf.pos == k) return sf.response_pos == q;
    }
    if (rules.coarse_to_fine) {                           // R6
        if (sk == Seg::cm && (sq == Seg::it || sq == Seg::sf)) return true;
        if (sk == Seg::it && sq == Seg::sf) return true;
    }
    return false;
}

}  // namespace detail

/// Brute-force conformance check: re-evaluates every (q, k) entry against the
/// rule set and reports all mismatches.
inline std::vector<MaskViolation> verify_mask(const MaskMatrix& mask, const SpanMap& span,
                                              const MaskRules& rules = {}) {
    if (mask.length != span.total_len)
        throw DimensionError("mask length does not match span map");
    std::vector<MaskViolation> violations;
    for (std::size_t q = 0; q < mask.length; ++q) {
        for (std::size_t k = 0; k < mask.length; ++k) {
            const bool expected = detail::rule_visible(span, rules, q, k);
            const bool got = mask.at(q, k);
            if (expected != got) violations.push_back({q, k, expected, got});
        }
    }
    return violations;
}

}  // namespace ctrldiff

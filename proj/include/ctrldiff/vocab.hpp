#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ctrldiff/errors.hpp"

namespace ctrldiff {

/// Token <-> id map. Id 0 is PAD, id 1 is UNK; reserved signal tokens follow,
/// then corpus tokens. Lookup of an unknown token yields UNK.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocab() {
        add("[PAD]");
        add("[UNK]");
    }

    int add(const std::string& token) {
        auto it = to_id_.find(token);
        if (it != to_id_.end()) return it->second;
        const int id = static_cast<int>(to_token_.size());
        to_id_.emplace(token, id);
        to_token_.push_back(token);
        return id;
    }

    int id(const std::string& token) const {
        auto it = to_id_.find(token);
        return it == to_id_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return to_id_.count(token) != 0; }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= to_token_.size())
            throw IndexError("vocab id " + std::to_string(id) + " out of range");
        return to_token_[id];
    }

    std::size_t size() const { return to_token_.size(); }
    const std::vector<std::string>& tokens() const { return to_token_; }

  private:
    std::unordered_map<std::string, int> to_id_;
    std::vector<std::string> to_token_;
};

}  // namespace ctrldiff

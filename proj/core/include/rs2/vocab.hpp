#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace rs2 {

// Closed word-level vocabulary. Ids 0/1/2 are reserved for the class token,
// end-of-sequence marker, and unknown-word bucket; real words start at 3.
class Vocab {
public:
    static constexpr std::size_t kCls = 0;
    static constexpr std::size_t kEos = 1;
    static constexpr std::size_t kUnk = 2;

    // Vocabulary covering the synthetic expression grammar.
    static Vocab builtin();

    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    explicit Vocab(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const;
    std::size_t id_of(const std::string& word) const; // kUnk if absent

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

// [CLS] + lowercased, punctuation-stripped words + [EOS]. Unknown words map
// to the UNK id. Empty text (after normalization) is rejected.
std::vector<std::size_t> tokenize(const std::string& text, const Vocab& vocab);

} // namespace rs2

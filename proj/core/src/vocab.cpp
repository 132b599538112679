#include "rs2/vocab.hpp"

#include <cctype>
#include <fstream>

#include "rs2/common.hpp"

namespace rs2 {

Vocab Vocab::builtin() {
    return Vocab({
        "<cls>", "<eos>", "<unk>",
        // grammar scaffolding
        "the", "on", "left", "right", "top", "bottom",
        // colors
        "red", "green", "blue", "yellow", "white", "purple",
        // categories
        "road", "building", "vehicle", "tank",
    });
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    require(tokens_.size() > kUnk, "vocab: needs at least the 3 reserved tokens");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], i);
        require(inserted, "vocab: duplicate token '", tokens_[i], "'");
    }
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("vocab: cannot open ", path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail("vocab: cannot write ", path);
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) fail("vocab: write failed for ", path);
}

const std::string& Vocab::token(std::size_t id) const {
    require(id < tokens_.size(), "vocab: id ", id, " out of range");
    return tokens_[id];
}

std::size_t Vocab::id_of(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> tokenize(const std::string& text, const Vocab& vocab) {
    std::vector<std::size_t> ids{Vocab::kCls};
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            ids.push_back(vocab.id_of(word));
            word.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c))
            word.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    require(ids.size() > 1, "tokenize: empty text");
    ids.push_back(Vocab::kEos);
    return ids;
}

} // namespace rs2

#include "rs2/text_table.hpp"

#include <algorithm>
#include <sstream>

#include "rs2/common.hpp"

namespace rs2 {

void TextTable::header(std::vector<std::string> cells) { header_ = std::move(cells); }

void TextTable::row(std::vector<std::string> cells) {
    require(!header_.empty() && cells.size() == header_.size(), "table: row has ", cells.size(),
            " cells, header has ", header_.size());
    rows_.push_back(std::move(cells));
}

std::string TextTable::render() const {
    require(!header_.empty(), "table: no header");
    std::vector<std::size_t> width(header_.size());
    for (std::size_t c = 0; c < header_.size(); ++c) width[c] = header_[c].size();
    for (const auto& r : rows_)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());

    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) line += "  ";
            const std::string pad(width[c] - cells[c].size(), ' ');
            line += (c == 0) ? cells[c] + pad : pad + cells[c];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    };
    emit(header_);
    for (const auto& r : rows_) emit(r);
    return out.str();
}

} // namespace rs2

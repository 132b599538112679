#pragma once

#include <string>
#include <vector>

namespace rs2 {

// Whitespace-aligned table: first column left-aligned, the rest right-aligned
// (numeric columns line up on the decimal point when cells share precision).
class TextTable {
public:
    void header(std::vector<std::string> cells);
    void row(std::vector<std::string> cells);
    std::string render() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace rs2

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace abrforge {

// 1237 -> "1,237".
std::string with_thousands(std::uint64_t n);

// Fixed-point rendering with the given number of decimals.
std::string fixed(double value, int decimals);

// "1,237 (41.2%)"
std::string count_with_percent(std::uint64_t count, std::uint64_t total);

// Renders rows as a left/right aligned text table. The first row is the header.
// `right_align[i]` selects alignment for column i (missing entries are left-aligned).
std::string text_table(const std::vector<std::vector<std::string>>& rows,
                       const std::vector<bool>& right_align = {});

}  // namespace abrforge

#pragma once

#include <string>
#include <vector>

namespace lensrig {

// Shortest round-trip decimal representation of a double ('.' separator,
// locale-independent). All machine output goes through this.
std::string fmtDouble(double x);

// One CSV row from already-formatted cells (no quoting needed for our data).
std::string csvRow(const std::vector<std::string>& cells);

}  // namespace lensrig

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace privdistill {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Strict full-token parse; returns false on any trailing garbage.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::string join_csv(const std::vector<std::string>& fields);

}  // namespace privdistill

#pragma once

#include <string>
#include <vector>

namespace trajcluster::io {

/// Canonical shortest-round-trip text form of a double ("%.17g");
/// every writer uses this so reruns are byte-identical.
std::string format_double(double v);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

/// Minimal CSV: no quoting, fields must not contain commas or newlines.
std::vector<std::vector<std::string>> read_csv(const std::string& path);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace trajcluster::io

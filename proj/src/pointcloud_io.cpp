#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ucomp/data.hpp"
#include "ucomp/error.hpp"

namespace ucomp {
namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void dump(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

/// Splits on '\n'; a single trailing newline does not produce an empty line.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

bool parse_triple(std::string_view line, double out[3]) {
  const char* p = line.data();
  const char* end = line.data() + line.size();
  for (int k = 0; k < 3; ++k) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (p == end) return false;
    auto [next, ec] = std::from_chars(p, end, out[k]);
    if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t')) return false;
    p = next;
  }
  while (p < end && (*p == ' ' || *p == '\t')) ++p;
  return p == end;
}

void append_point(std::string& s, const double* p) {
  char buf[96];
  const int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
  s.append(buf, static_cast<std::size_t>(n));
}

PointCloud parse_point_lines(std::span<const std::string_view> lines, std::size_t first_line,
                             std::string_view origin) {
  std::vector<double> data;
  data.reserve(lines.size() * 3);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    double p[3];
    if (!parse_triple(lines[i], p)) {
      throw IoError(std::string(origin) + ": line " + std::to_string(first_line + i) +
                    ": expected three numbers, got '" + std::string(lines[i]) + "'");
    }
    data.insert(data.end(), p, p + 3);
  }
  const std::size_t n = data.size() / 3;
  return PointCloud(Tensor({n, 3}, std::move(data)));
}

}  // namespace

std::string format_xyz(const PointCloud& cloud) {
  std::string s;
  s.reserve(cloud.size() * 40);
  for (std::size_t i = 0; i < cloud.size(); ++i) append_point(s, cloud.tensor().raw() + 3 * i);
  return s;
}

PointCloud parse_xyz(std::string_view text, std::string_view origin) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw IoError(std::string(origin) + ": empty point file");
  return parse_point_lines(lines, 1, origin);
}

PointCloud read_xyz(const std::filesystem::path& path) {
  return parse_xyz(slurp(path), path.string());
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  dump(path, format_xyz(cloud));
}

std::string format_ply(const PointCloud& cloud) {
  std::string s = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
                  "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  s += format_xyz(cloud);
  return s;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  dump(path, format_ply(cloud));
}

PointCloud parse_ply(std::string_view text, std::string_view origin) {
  const auto lines = split_lines(text);
  const std::string where(origin);
  static constexpr std::string_view kHeader[] = {"ply", "format ascii 1.0", "", "property float x",
                                                 "property float y", "property float z",
                                                 "end_header"};
  if (lines.size() < 7) throw IoError(where + ": truncated PLY header");
  std::size_t count = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    if (i == 2) {
      constexpr std::string_view prefix = "element vertex ";
      const auto line = lines[i];
      if (line.substr(0, prefix.size()) != prefix) {
        throw IoError(where + ": line 3: expected 'element vertex <N>'");
      }
      const auto digits = line.substr(prefix.size());
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), count);
      if (ec != std::errc() || p != digits.data() + digits.size()) {
        throw IoError(where + ": line 3: bad vertex count");
      }
    } else if (lines[i] != kHeader[i]) {
      throw IoError(where + ": line " + std::to_string(i + 1) + ": expected '" +
                    std::string(kHeader[i]) + "'");
    }
  }
  const std::size_t body = lines.size() - 7;
  if (body != count) {
    throw IoError(where + ": header declares " + std::to_string(count) + " vertices but file has " +
                  std::to_string(body));
  }
  if (count == 0) throw IoError(where + ": PLY has no vertices");
  return parse_point_lines(std::span(lines).subspan(7), 8, origin);
}

PointCloud read_ply(const std::filesystem::path& path) {
  return parse_ply(slurp(path), path.string());
}

}  // namespace ucomp

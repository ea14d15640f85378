#include "vcf/probability_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vcf/error.hpp"
#include "vcf/volume.hpp"

namespace vcf::cls {

void ProbabilityVector::validate() const {
  if (values.empty()) throw std::invalid_argument("probability vector for '" + study_id + "' is empty");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("probability outside [0, 1] in vector for '" + study_id + "'");
}

namespace {

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw IoError("probability csv line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::string format_probability_csv(const std::vector<ProbabilityVector>& vectors) {
  std::string out = "study_id,label,probabilities\n";
  for (const auto& v : vectors) {
    v.validate();
    out += v.study_id;
    out += ',';
    if (v.label) out += *v.label ? "positive" : "negative";
    out += ',';
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      if (i) out += ';';
      out += shortest(v.values[i]);
    }
    out += '\n';
  }
  return out;
}

std::vector<ProbabilityVector> parse_probability_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ProbabilityVector> out;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("study_id,", 0) == 0) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos)
      throw IoError("probability csv line " + std::to_string(lineno) + ": expected 3 fields");
    ProbabilityVector v;
    v.study_id = line.substr(0, c1);
    const std::string label = line.substr(c1 + 1, c2 - c1 - 1);
    if (label == "positive") v.label = 1;
    else if (label == "negative") v.label = 0;
    else if (!label.empty())
      throw IoError("probability csv line " + std::to_string(lineno) + ": bad label '" + label + "'");
    std::string rest = line.substr(c2 + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      auto semi = rest.find(';', pos);
      if (semi == std::string::npos) semi = rest.size();
      v.values.push_back(parse_double(rest.substr(pos, semi - pos), lineno));
      pos = semi + 1;
    }
    try {
      v.validate();
    } catch (const std::invalid_argument& e) {
      throw IoError("probability csv line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(v));
  }
  return out;
}

void write_probability_csv(const std::filesystem::path& path, const std::vector<ProbabilityVector>& vectors) {
  write_file_atomic(path, format_probability_csv(vectors));
}

std::vector<ProbabilityVector> read_probability_csv(const std::filesystem::path& path) {
  return parse_probability_csv(read_file(path));
}

}  // namespace vcf::cls

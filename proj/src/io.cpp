#include "gaitseg/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gaitseg/errors.hpp"

namespace gaitseg {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("format_double: conversion failed");
  return std::string(buf, end);
}

std::string format_double(double v, int significant) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant, v);
  return buf;
}

Json events_to_json(const EventSet& events) {
  Json j = Json::object();
  for (EventClass c : kEventClasses) j[std::string(event_key(c))] = events[c];
  return j;
}

EventSet events_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("events JSON must be an object");
  EventSet events;
  for (EventClass c : kEventClasses) {
    const std::string key(event_key(c));
    if (!j.contains(key)) continue;
    const auto& arr = j.at(key);
    if (!arr.is_array()) throw DataError("events JSON field '" + key + "' must be an array");
    for (const auto& v : arr) {
      if (!v.is_number()) throw DataError("events JSON field '" + key + "' holds a non-number");
      events[c].push_back(v.get<double>());
    }
  }
  return events;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

EventSet load_events(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  // A trial sidecar carries its events under "reference_events".
  if (j.is_object() && j.contains("reference_events")) return events_from_json(j.at("reference_events"));
  return events_from_json(j);
}

void save_events(const EventSet& events, const std::filesystem::path& path) {
  write_text_file(path, events_to_json(events).dump(2) + "\n");
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  line += '\n';
  return line;
}

std::string csv_row(std::initializer_list<std::string> cells) {
  return csv_row(std::vector<std::string>(cells));
}

void save_likelihoods(const Signal2D& likelihoods, double sample_rate,
                      const std::filesystem::path& path) {
  if (likelihoods.rows() != 4) throw ContractError("likelihoods must have 4 rows");
  std::string text = "time_s";
  for (EventClass c : kEventClasses) text += "," + std::string(event_key(c));
  text += '\n';
  for (Index t = 0; t < likelihoods.cols(); ++t) {
    text += format_double(double(t) / sample_rate);
    for (Index r = 0; r < 4; ++r) text += "," + format_double(likelihoods(r, t));
    text += '\n';
  }
  write_text_file(path, text);
}

Signal2D load_likelihoods(const std::filesystem::path& path, double* sample_rate) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header[0] != "time_s")
    throw DataError(path.string() + ": first column must be time_s");
  int col_of[4] = {-1, -1, -1, -1};
  for (EventClass c : kEventClasses) {
    for (std::size_t i = 1; i < header.size(); ++i)
      if (header[i] == event_key(c)) col_of[int(c)] = int(i);
    if (col_of[int(c)] < 0)
      throw DataError(path.string() + ": missing column '" + std::string(event_key(c)) + "'");
  }
  std::vector<double> times;
  std::vector<std::array<double, 4>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> vals;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v;
      auto [q, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || q != comma)
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number");
      vals.push_back(v);
      p = comma + 1;
    }
    if (vals.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": wrong field count");
    times.push_back(vals[0]);
    rows.push_back({vals[col_of[0]], vals[col_of[1]], vals[col_of[2]], vals[col_of[3]]});
  }
  if (rows.empty()) throw DataError(path.string() + ": no samples");
  Signal2D out(4, Index(rows.size()));
  for (Index t = 0; t < out.cols(); ++t)
    for (Index r = 0; r < 4; ++r) out(r, t) = rows[t][r];
  if (sample_rate) {
    if (times.size() < 2 || !(times.back() > times.front()))
      throw DataError(path.string() + ": cannot infer the sample rate from the time column");
    const double rate = double(times.size() - 1) / (times.back() - times.front());
    const double rounded = std::round(rate);
    *sample_rate = std::abs(rate - rounded) <= 1e-6 * rate ? rounded : rate;
  }
  return out;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gaitseg

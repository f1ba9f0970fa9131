#pragma once

// Shared file helpers: events JSON, CSV rows and number formatting.

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "gaitseg/event_set.hpp"
#include "gaitseg/numcore.hpp"

#include "json.hpp"

namespace gaitseg {

using Json = nlohmann::json;

/// Shortest round-trip decimal representation ("nan" for NaN).
std::string format_double(double v);
/// Fixed significant-digit formatting for report tables.
std::string format_double(double v, int significant);

Json events_to_json(const EventSet& events);
/// Accepts {"lic": [...], ...}; missing keys are empty lists.
EventSet events_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

EventSet load_events(const std::filesystem::path& path);
void save_events(const EventSet& events, const std::filesystem::path& path);

std::string csv_row(std::initializer_list<std::string> cells);
std::string csv_row(const std::vector<std::string>& cells);

/// Likelihood traces: header "time_s,ric,rfc,lic,lfc", one row per sample.
void save_likelihoods(const Signal2D& likelihoods, double sample_rate,
                      const std::filesystem::path& path);
/// Returns the [4 x N] traces; the sample rate is recovered from the time column.
Signal2D load_likelihoods(const std::filesystem::path& path, double* sample_rate);

/// FNV-1a 64-bit digest, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace gaitseg

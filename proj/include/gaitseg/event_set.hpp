#pragma once

#include <array>
#include <string_view>
#include <vector>

namespace gaitseg {

/// Output rows of the network follow this order.
enum class EventClass : int { right_ic = 0, right_fc = 1, left_ic = 2, left_fc = 3 };

inline constexpr std::array<EventClass, 4> kEventClasses = {
    EventClass::right_ic, EventClass::right_fc, EventClass::left_ic, EventClass::left_fc};

/// Short key used in JSON and CSV files: "ric", "rfc", "lic", "lfc".
std::string_view event_key(EventClass c);
bool is_initial_contact(EventClass c);

inline constexpr double kDefaultMinSeparation = 0.25;

/// Four per-class lists of event times in seconds.
struct EventSet {
  std::vector<double> lic;
  std::vector<double> lfc;
  std::vector<double> ric;
  std::vector<double> rfc;

  std::vector<double>& operator[](EventClass c);
  const std::vector<double>& operator[](EventClass c) const;

  std::size_t total() const { return lic.size() + lfc.size() + ric.size() + rfc.size(); }

  /// Both sides merged and sorted: initial contacts or final contacts.
  std::vector<double> merged(bool initial_contacts) const;

  /// Throws DataError unless every class is strictly increasing with
  /// consecutive events at least `min_separation` seconds apart.
  void validate(double min_separation = kDefaultMinSeparation) const;

  bool operator==(const EventSet&) const = default;
};

}  // namespace gaitseg

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsfuse/tensor.hpp"

namespace gsfuse {

/// Macro event types of the scripts.
enum class EventCategory : std::uint8_t { Fomc, Employment, UnemploymentInsurance, Cpi, Ppi, Gdp };
inline constexpr std::size_t kEventCategoryCount = 6;

std::string_view category_name(EventCategory c);
EventCategory category_from_name(std::string_view name);

struct EventScript {
  std::vector<int> token_ids;
  std::int64_t release_time = 0;
  EventCategory category = EventCategory::Fomc;
};

/// Look-back window, L x d_x.
struct MarketWindow {
  Tensor values;
  std::size_t length() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

/// Post-event target, H x d_y.
struct FutureSegment {
  Tensor values;
  std::size_t horizon() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

struct AlignedInstance {
  std::int64_t id = 0;
  EventScript script;
  MarketWindow window;
  FutureSegment target;
  /// Simulator ground truth; only evaluation code may read it.
  std::optional<bool> text_informative;

  friend bool operator==(const AlignedInstance& a, const AlignedInstance& b);
};

using Dataset = std::vector<AlignedInstance>;

inline bool operator==(const EventScript& a, const EventScript& b) {
  return a.token_ids == b.token_ids && a.release_time == b.release_time && a.category == b.category;
}

inline bool operator==(const AlignedInstance& a, const AlignedInstance& b) {
  return a.id == b.id && a.script == b.script && a.window.values == b.window.values &&
         a.target.values == b.target.values && a.text_informative == b.text_informative;
}

}  // namespace gsfuse

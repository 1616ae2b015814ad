#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gsavatar::train {

struct TraceEntry {
  long iteration = 0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> components;
  std::optional<double> psnr;
  std::size_t gaussians = 0;
};

struct SplitEvent {
  long iteration = 0;
  std::size_t parents = 0;
  std::size_t gaussians_after = 0;
};

struct FitTrace {
  std::vector<TraceEntry> entries;
  std::vector<SplitEvent> splits;
  double wall_clock_seconds = 0.0;

  /// Appends an entry; iteration indices must increase.
  void record(TraceEntry e);

  /// Bitwise equality of everything except wall-clock time.
  bool same_trajectory(const FitTrace& other) const;

  std::string to_csv() const;
  std::string to_json() const;
  static FitTrace from_json(const std::string& text);
};

}  // namespace gsavatar::train

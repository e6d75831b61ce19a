// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace fgrnn::report {

/// kLinear maps [min, max] to [0, 1]; kRank uses the average rank of each
/// value (ties share a rank), which is how human durations are shown.
enum class Rescale { kLinear, kRank };

struct HeatmapTrack {
  std::string label;
  std::vector<double> values;
  Rescale rescale = Rescale::kLinear;
};

struct HeatmapDoc {
  std::vector<std::string> tokens;
  std::vector<HeatmapTrack> tracks;
  std::string caption;

  /// Throws std::invalid_argument on a misaligned or non-finite track.
  void validate() const;
};

/// Intensities in [0, 1]. A constant track maps to 0.5 everywhere.
std::vector<double> rescale(const HeatmapTrack& track);

enum class HeatmapFormat { kHtml, kAnsi };
HeatmapFormat parse_heatmap_format(const std::string& name);

/// Standalone HTML with inline styles.
std::string render_html(const HeatmapDoc& doc);
/// ANSI 256-color text, one line per track.
std::string render_ansi(const HeatmapDoc& doc);
std::string render(const HeatmapDoc& doc, HeatmapFormat format);

}  // namespace fgrnn::report

namespace fgrnn::report {

/// {"tokens": [...], "caption": str, "tracks": [{"label", "values", "rescale": "linear"|"rank"}]}
HeatmapDoc parse_heatmap_doc(const std::string& json_text);
std::string format_heatmap_doc(const HeatmapDoc& doc);

}  // namespace fgrnn::report

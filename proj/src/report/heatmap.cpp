// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/report/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

namespace fgrnn::report {

namespace {

// White to deep red, 6 steps of the xterm cube.
constexpr int kAnsiRamp[] = {231, 224, 217, 210, 203, 160};

std::string hex_color(double intensity) {
  // Linear blend from white to #b2182b.
  const auto mix = [&](int to) { return static_cast<int>(std::lround(255.0 + (to - 255.0) * intensity)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(0xb2), mix(0x18), mix(0x2b));
  return buf;
}

std::string escape_html(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

void HeatmapDoc::validate() const {
  for (const auto& t : tracks) {
    if (t.values.size() != tokens.size()) {
      throw std::invalid_argument("heatmap track '" + t.label + "' has " + std::to_string(t.values.size()) +
                                  " values for " + std::to_string(tokens.size()) + " tokens");
    }
    for (double v : t.values) {
      if (!std::isfinite(v)) throw std::invalid_argument("heatmap track '" + t.label + "' has a non-finite value");
    }
  }
}

std::vector<double> rescale(const HeatmapTrack& track) {
  const auto& v = track.values;
  const std::size_t n = v.size();
  std::vector<double> out(n, 0.5);
  if (n == 0) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) return out;
  if (track.rescale == Rescale::kLinear) {
    for (std::size_t i = 0; i < n; ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
    return out;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  const double top = *std::max_element(rank.begin(), rank.end());
  const double bottom = *std::min_element(rank.begin(), rank.end());
  for (std::size_t i = 0; i < n; ++i) out[i] = (rank[i] - bottom) / (top - bottom);
  return out;
}

HeatmapFormat parse_heatmap_format(const std::string& name) {
  if (name == "html") return HeatmapFormat::kHtml;
  if (name == "ansi") return HeatmapFormat::kAnsi;
  throw std::invalid_argument("unknown heatmap format '" + name + "' (html, ansi)");
}

std::string render_html(const HeatmapDoc& doc) {
  doc.validate();
  std::string out =
      "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>fixation heatmap</title>\n</head>\n"
      "<body style=\"font-family:monospace;background:#ffffff;color:#000000\">\n";
  if (!doc.caption.empty()) out += "<p>" + escape_html(doc.caption) + "</p>\n";
  out += "<table style=\"border-collapse:collapse\">\n";
  for (const auto& t : doc.tracks) {
    const auto level = rescale(t);
    out += "<tr><th style=\"text-align:right;padding:2px 8px\">" + escape_html(t.label) + "</th><td>";
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      out += "<span title=\"" + format_value(t.values[i]) + "\" style=\"background:" + hex_color(level[i]) +
             ";padding:1px 3px;margin:1px\">" + escape_html(doc.tokens[i]) + "</span>";
    }
    out += "</td></tr>\n";
  }
  out += "</table>\n</body>\n</html>\n";
  return out;
}

std::string render_ansi(const HeatmapDoc& doc) {
  doc.validate();
  std::string out;
  if (!doc.caption.empty()) out += doc.caption + "\n";
  std::size_t width = 0;
  for (const auto& t : doc.tracks) width = std::max(width, t.label.size());
  for (const auto& t : doc.tracks) {
    const auto level = rescale(t);
    out += t.label + std::string(width - t.label.size(), ' ') + " |";
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      const int color = kAnsiRamp[static_cast<int>(std::lround(level[i] * 5.0))];
      out += " \x1b[38;5;16;48;5;" + std::to_string(color) + "m" + doc.tokens[i] + "\x1b[0m";
    }
    out += "\n";
  }
  return out;
}

std::string render(const HeatmapDoc& doc, HeatmapFormat format) {
  return format == HeatmapFormat::kHtml ? render_html(doc) : render_ansi(doc);
}

HeatmapDoc parse_heatmap_doc(const std::string& json_text) {
  HeatmapDoc doc;
  try {
    const auto j = nlohmann::json::parse(json_text);
    doc.tokens = j.at("tokens").get<std::vector<std::string>>();
    doc.caption = j.value("caption", "");
    for (const auto& t : j.at("tracks")) {
      HeatmapTrack track;
      track.label = t.value("label", "");
      track.values = t.at("values").get<std::vector<double>>();
      const auto mode = t.value("rescale", "linear");
      if (mode == "rank") {
        track.rescale = Rescale::kRank;
      } else if (mode != "linear") {
        throw std::invalid_argument("unknown rescale '" + mode + "'");
      }
      doc.tracks.push_back(std::move(track));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("heatmap doc: ") + e.what());
  }
  doc.validate();
  return doc;
}

std::string format_heatmap_doc(const HeatmapDoc& doc) {
  nlohmann::ordered_json j;
  j["tokens"] = doc.tokens;
  j["caption"] = doc.caption;
  j["tracks"] = nlohmann::ordered_json::array();
  for (const auto& t : doc.tracks) {
    nlohmann::ordered_json tj;
    tj["label"] = t.label;
    tj["values"] = t.values;
    tj["rescale"] = t.rescale == Rescale::kRank ? "rank" : "linear";
    j["tracks"].push_back(tj);
  }
  return j.dump(2) + "\n";
}

}  // namespace fgrnn::report

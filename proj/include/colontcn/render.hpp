#pragma once

#include <string>
#include <vector>

#include "colontcn/seq.hpp"

namespace ctcn {

struct TimelineTrack {
    std::string name;
    std::vector<int> labels;
};

// Start indices of maximal constant-label runs (the band boundaries).
std::vector<std::size_t> band_boundaries(const std::vector<int>& labels);

// Fixed class color (hex, no '#') for labels 0..9.
const char* label_color(int label);

// Horizontal color-band timeline, one track per row, as an SVG document.
// All tracks must share one length. Output is deterministic.
std::string render_timeline_svg(const std::vector<TimelineTrack>& tracks);

}  // namespace ctcn

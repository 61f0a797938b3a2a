#include "colontcn/render.hpp"

#include <cstdio>
#include <sstream>

namespace ctcn {

std::vector<std::size_t> band_boundaries(const std::vector<int>& labels) {
    std::vector<std::size_t> starts;
    for (std::size_t t = 0; t < labels.size(); ++t)
        if (t == 0 || labels[t] != labels[t - 1]) starts.push_back(t);
    return starts;
}

const char* label_color(int label) {
    static const char* colors[] = {
        "7f7f7f",  // outside    grey
        "1f77b4",  // insertion  blue
        "ff7f0e",  // cecum      orange
        "d62728",  // ileum      red
        "2ca02c",  // ascending  green
        "9467bd",  // transverse purple
        "8c564b",  // descending brown
        "e377c2",  // sigmoid    pink
        "bcbd22",  // rectum     olive
        "17becf",  // uncertain  cyan
    };
    if (label < 0 || label > 9) return "000000";
    return colors[label];
}

std::string render_timeline_svg(const std::vector<TimelineTrack>& tracks) {
    require(!tracks.empty(), "render: no tracks");
    const std::size_t T = tracks.front().labels.size();
    require(T > 0, "render: empty track");
    for (const TimelineTrack& tr : tracks)
        if (tr.labels.size() != T) throw DataError("render: track length mismatch");

    const double width = 1000.0;
    const int band_h = 28, gap = 10, label_w = 120;
    const int height = int(tracks.size()) * (band_h + gap) + gap;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << int(width) + label_w
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << int(width) + label_w << " "
        << height << "\">\n";
    char buf[256];
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        const TimelineTrack& tr = tracks[i];
        const int y = gap + int(i) * (band_h + gap);
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"4\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\">",
                      y + band_h / 2 + 4);
        out << buf << tr.name << "</text>\n";
        std::vector<std::size_t> starts = band_boundaries(tr.labels);
        starts.push_back(T);
        for (std::size_t k = 0; k + 1 < starts.size(); ++k) {
            const double x0 = double(starts[k]) / double(T) * width;
            const double x1 = double(starts[k + 1]) / double(T) * width;
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%.3f\" y=\"%d\" width=\"%.3f\" height=\"%d\" fill=\"#%s\"/>\n",
                          double(label_w) + x0, y, x1 - x0, band_h,
                          label_color(tr.labels[starts[k]]));
            out << buf;
        }
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace ctcn

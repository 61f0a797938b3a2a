#include "colontcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ctcn {

namespace {

const char* kLabelNames[] = {"outside",    "insertion", "cecum",   "ileum",    "ascending",
                             "transverse", "descending", "sigmoid", "rectum",  "uncertain"};

}  // namespace

const char* label_name(LabelClass c) { return kLabelNames[int(c)]; }

LabelClass label_from_name(const std::string& name) {
    for (int i = 0; i <= int(LabelClass::Uncertain); ++i)
        if (name == kLabelNames[i]) return LabelClass(i);
    throw DataError("unknown label name: '" + name + "'");
}

void FeatureSequence::validate() const {
    if (labels.size() != frames() || mask.size() != frames())
        throw DataError("feature sequence " + video_id + ": feature/label/mask misalignment");
    if (fps <= 0.0) throw DataError("feature sequence " + video_id + ": non-positive fps");
}

// ---- annotations ----

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::int64_t parse_frame_number(const std::string& s, int line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size() || v < 0) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw DataError("annotations line " + std::to_string(line_no) + ": bad " + what + " '" +
                        s + "'");
    }
}

}  // namespace

std::vector<SegmentAnnotation> parse_annotations(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("annotations: empty document");
    {
        const std::vector<std::string> header = split_csv_row(line);
        const std::vector<std::string> expected = {"video_id", "start_frame", "end_frame",
                                                   "label"};
        if (header != expected)
            throw DataError("annotations line 1: expected header video_id,start_frame,end_frame,label");
    }

    struct Row {
        SegmentAnnotation seg;
        int line_no;
    };
    std::vector<Row> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> f = split_csv_row(line);
        if (f.size() != 4)
            throw DataError("annotations line " + std::to_string(line_no) + ": expected 4 fields, got " +
                            std::to_string(f.size()));
        Row r;
        r.line_no = line_no;
        r.seg.video_id = f[0];
        r.seg.start_frame = parse_frame_number(f[1], line_no, "start_frame");
        r.seg.end_frame = parse_frame_number(f[2], line_no, "end_frame");
        r.seg.label = label_from_name(f[3]);
        if (r.seg.video_id.empty())
            throw DataError("annotations line " + std::to_string(line_no) + ": empty video_id");
        if (r.seg.start_frame > r.seg.end_frame)
            throw DataError("annotations line " + std::to_string(line_no) + ": start_frame > end_frame");
        rows.push_back(std::move(r));
    }

    // Validate per video: sorted by start, no overlap, no gap, starts at 0.
    std::map<std::string, std::vector<std::size_t>> by_video;
    for (std::size_t i = 0; i < rows.size(); ++i) by_video[rows[i].seg.video_id].push_back(i);

    std::vector<SegmentAnnotation> out;
    for (auto& [video, idx] : by_video) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return rows[a].seg.start_frame < rows[b].seg.start_frame;
        });
        if (rows[idx.front()].seg.start_frame != 0)
            throw DataError("annotations line " + std::to_string(rows[idx.front()].line_no) +
                            ": video " + video + " does not start at frame 0");
        for (std::size_t i = 1; i < idx.size(); ++i) {
            const Row& prev = rows[idx[i - 1]];
            const Row& cur = rows[idx[i]];
            if (cur.seg.start_frame <= prev.seg.end_frame)
                throw DataError("annotations: overlapping segments in video " + video +
                                " (lines " + std::to_string(prev.line_no) + " and " +
                                std::to_string(cur.line_no) + ")");
            if (cur.seg.start_frame != prev.seg.end_frame + 1)
                throw DataError("annotations: gap in video " + video + " between lines " +
                                std::to_string(prev.line_no) + " and " +
                                std::to_string(cur.line_no));
        }
        for (std::size_t i : idx) out.push_back(rows[i].seg);
    }
    return out;
}

std::vector<SegmentAnnotation> load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotations file: " + path);
    try {
        return parse_annotations(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

void save_annotations(const std::vector<SegmentAnnotation>& segments, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write annotations file: " + path);
    out << "video_id,start_frame,end_frame,label\n";
    for (const SegmentAnnotation& s : segments)
        out << s.video_id << ',' << s.start_frame << ',' << s.end_frame << ','
            << label_name(s.label) << '\n';
    if (!out) throw DataError("failed writing annotations file: " + path);
}

std::vector<int> rasterize(const std::vector<SegmentAnnotation>& segments, std::int64_t frames) {
    require(frames >= 0, "rasterize: negative frame count");
    std::vector<int> labels(std::size_t(frames), -1);
    for (const SegmentAnnotation& s : segments) {
        if (s.start_frame < 0 || s.end_frame >= frames)
            throw DataError("rasterize: segment [" + std::to_string(s.start_frame) + ", " +
                            std::to_string(s.end_frame) + "] outside [0, " +
                            std::to_string(frames) + ") in video " + s.video_id);
        for (std::int64_t t = s.start_frame; t <= s.end_frame; ++t) {
            if (labels[std::size_t(t)] != -1)
                throw DataError("rasterize: overlapping coverage at frame " + std::to_string(t));
            labels[std::size_t(t)] = int(s.label);
        }
    }
    for (std::int64_t t = 0; t < frames; ++t)
        if (labels[std::size_t(t)] == -1)
            throw DataError("rasterize: frame " + std::to_string(t) + " not covered");
    return labels;
}

std::vector<SegmentAnnotation> segmentize(const std::vector<int>& labels,
                                          const std::string& video_id) {
    std::vector<SegmentAnnotation> segs;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (segs.empty() || labels[t] != int(segs.back().label)) {
            SegmentAnnotation s;
            s.video_id = video_id;
            s.start_frame = std::int64_t(t);
            s.end_frame = std::int64_t(t);
            s.label = LabelClass(labels[t]);
            segs.push_back(s);
        } else {
            segs.back().end_frame = std::int64_t(t);
        }
    }
    return segs;
}

FrameMask mask_from_labels(const std::vector<int>& labels) {
    FrameMask mask(labels.size(), 1);
    for (std::size_t t = 0; t < labels.size(); ++t)
        if (labels[t] == int(LabelClass::Uncertain)) mask[t] = 0;
    return mask;
}

// ---- frame-rate handling ----

namespace {

FeatureSequence take_frames(const FeatureSequence& seq, const std::vector<std::size_t>& keep,
                            double new_fps) {
    FeatureSequence out;
    out.video_id = seq.video_id;
    out.fps = new_fps;
    out.features = SeqMatrix(keep.size(), seq.dim());
    out.labels.resize(keep.size());
    out.mask.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::memcpy(out.features.row(i), seq.features.row(keep[i]), seq.dim() * sizeof(double));
        out.labels[i] = seq.labels[keep[i]];
        out.mask[i] = seq.mask[keep[i]];
    }
    return out;
}

}  // namespace

FeatureSequence resample_to_fps(const FeatureSequence& seq, double target_fps) {
    seq.validate();
    if (seq.fps < target_fps)
        throw DataError("resample: source fps " + std::to_string(seq.fps) + " below target");
    const double ratio = seq.fps / target_fps;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0;; ++i) {
        const auto src = std::llround(double(i) * ratio);
        if (src >= std::int64_t(seq.frames())) break;
        keep.push_back(std::size_t(src));
    }
    return take_frames(seq, keep, target_fps);
}

FeatureSequence temporal_augment(const FeatureSequence& seq, RngStream& rng, double target_fps) {
    seq.validate();
    const double f = seq.fps / target_fps;
    if (f < 1.0) throw DataError("temporal_augment: source fps below target");

    const bool random_phase = rng.next_double() < 0.5;
    std::vector<std::size_t> keep;
    if (random_phase) {
        const double offset = rng.next_uniform(0.0, f);
        for (std::size_t m = 0;; ++m) {
            const auto src = std::int64_t(std::floor(offset + double(m) * f));
            if (src >= std::int64_t(seq.frames())) break;
            keep.push_back(std::size_t(src));
        }
    } else {
        const auto stride = std::size_t(std::ceil(f));
        for (std::size_t i = 0; i < seq.frames(); i += stride) keep.push_back(i);
    }
    return take_frames(seq, keep, target_fps);
}

Batch make_batch(const std::vector<const FeatureSequence*>& seqs) {
    if (seqs.empty()) throw DataError("make_batch: empty sequence list");
    const std::size_t D = seqs.front()->dim();
    Batch batch;
    for (const FeatureSequence* s : seqs) {
        s->validate();
        if (s->dim() != D) throw DataError("make_batch: mixed feature dimensions");
        batch.max_frames = std::max(batch.max_frames, s->frames());
    }
    for (const FeatureSequence* s : seqs) {
        SeqMatrix padded(batch.max_frames, D);
        std::memcpy(padded.data(), s->features.data(), s->features.size() * sizeof(double));
        std::vector<int> labels(batch.max_frames, int(LabelClass::Outside));
        FrameMask mask(batch.max_frames, 0);
        std::copy(s->labels.begin(), s->labels.end(), labels.begin());
        std::copy(s->mask.begin(), s->mask.end(), mask.begin());
        batch.features.push_back(std::move(padded));
        batch.labels.push_back(std::move(labels));
        batch.masks.push_back(std::move(mask));
        batch.lengths.push_back(s->frames());
        batch.video_ids.push_back(s->video_id);
    }
    return batch;
}

// ---- feature files ----

namespace {

constexpr char kFeatureMagic[8] = {'C', 'T', 'C', 'N', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x00000100000001b3ULL;
    }
    return h;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return bool(in);
}

}  // namespace

void save_features(const FeatureSequence& seq, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write feature file: " + path);

    std::vector<float> payload(seq.features.size());
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = float(seq.features.data()[i]);

    out.write(kFeatureMagic, sizeof(kFeatureMagic));
    write_pod(out, kFeatureVersion);
    write_pod(out, std::uint32_t(seq.frames()));
    write_pod(out, std::uint32_t(seq.dim()));
    write_pod(out, float(seq.fps));
    out.write(reinterpret_cast<const char*>(payload.data()),
              std::streamsize(payload.size() * sizeof(float)));
    write_pod(out, fnv1a(payload.data(), payload.size() * sizeof(float)));
    if (!out) throw DataError("failed writing feature file: " + path);
}

FeatureSequence load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file: " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0)
        throw DataError(path + ": bad magic, not a CTCNFEAT file");
    std::uint32_t version = 0, frames = 0, dim = 0;
    float fps = 0.0f;
    if (!read_pod(in, version) || !read_pod(in, frames) || !read_pod(in, dim) ||
        !read_pod(in, fps))
        throw DataError(path + ": truncated header");
    if (version != kFeatureVersion)
        throw DataError(path + ": unsupported version " + std::to_string(version));
    if (frames == 0 || dim == 0) throw DataError(path + ": empty feature matrix");

    std::vector<float> payload(std::size_t(frames) * dim);
    in.read(reinterpret_cast<char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(float)));
    if (!in) throw DataError(path + ": truncated payload");
    std::uint64_t stored = 0;
    if (!read_pod(in, stored)) throw DataError(path + ": missing checksum");
    if (stored != fnv1a(payload.data(), payload.size() * sizeof(float)))
        throw DataError(path + ": checksum mismatch");

    FeatureSequence seq;
    seq.fps = double(fps);
    seq.features = SeqMatrix(frames, dim);
    for (std::size_t i = 0; i < payload.size(); ++i) seq.features.data()[i] = double(payload[i]);
    return seq;
}

// ---- manifest ----

std::string directory_of(const std::string& path) {
    const std::size_t slash = path.find_last_of('/');
    return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path + ": " + e.what());
    }
    Manifest m;
    try {
        m.feature_dim = j.at("feature_dim").get<int>();
        for (const auto& v : j.at("videos")) {
            ManifestEntry e;
            e.video_id = v.at("video_id").get<std::string>();
            e.features_path = v.at("features").get<std::string>();
            e.annotations_path = v.at("annotations").get<std::string>();
            e.fps = v.at("fps").get<double>();
            e.cohort = v.value("cohort", "");
            m.videos.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path + ": " + e.what());
    }
    if (m.feature_dim <= 0) throw DataError("manifest " + path + ": feature_dim must be positive");
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    nlohmann::json j;
    j["feature_dim"] = m.feature_dim;
    j["videos"] = nlohmann::json::array();
    for (const ManifestEntry& e : m.videos) {
        j["videos"].push_back({{"video_id", e.video_id},
                               {"features", e.features_path},
                               {"annotations", e.annotations_path},
                               {"fps", e.fps},
                               {"cohort", e.cohort}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("failed writing manifest: " + path);
}

FeatureSequence load_video(const Manifest& m, const ManifestEntry& entry,
                           const std::string& manifest_dir) {
    FeatureSequence seq = load_features(manifest_dir + "/" + entry.features_path);
    seq.video_id = entry.video_id;
    if (int(seq.dim()) != m.feature_dim)
        throw DataError("video " + entry.video_id + ": feature dim " + std::to_string(seq.dim()) +
                        " does not match manifest feature_dim " + std::to_string(m.feature_dim));
    const std::vector<SegmentAnnotation> segs =
        load_annotations(manifest_dir + "/" + entry.annotations_path);
    std::vector<SegmentAnnotation> mine;
    for (const SegmentAnnotation& s : segs)
        if (s.video_id == entry.video_id) mine.push_back(s);
    if (mine.empty())
        throw DataError("video " + entry.video_id + ": no annotations in " +
                        entry.annotations_path);
    seq.labels = rasterize(mine, std::int64_t(seq.frames()));
    seq.mask = mask_from_labels(seq.labels);
    seq.fps = entry.fps;
    return seq;
}

}  // namespace ctcn

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "colontcn/loss.hpp"
#include "colontcn/rng.hpp"
#include "colontcn/seq.hpp"

namespace ctcn {

// 9 model classes plus Uncertain, which is never a training target.
enum class LabelClass : int {
    Outside = 0,
    Insertion = 1,
    Cecum = 2,
    Ileum = 3,
    Ascending = 4,
    Transverse = 5,
    Descending = 6,
    Sigmoid = 7,
    Rectum = 8,
    Uncertain = 9,
};

inline constexpr int kNumClasses = 9;

const char* label_name(LabelClass c);
LabelClass label_from_name(const std::string& name);  // throws DataError on unknown names

// A labeled frame interval [start_frame, end_frame] (inclusive) over a video
// timeline at the original frame rate.
struct SegmentAnnotation {
    std::string video_id;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;
    LabelClass label = LabelClass::Outside;
};

// Per-frame embeddings with aligned labels and mask. The mask is false on
// Uncertain frames and on padding; losses and metrics never read masked
// frames.
struct FeatureSequence {
    std::string video_id;
    double fps = 5.0;
    SeqMatrix features;           // T x D
    std::vector<int> labels;      // T, values of LabelClass
    FrameMask mask;               // T

    std::size_t frames() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    void validate() const;
};

struct Batch {
    std::vector<SeqMatrix> features;       // padded to T_max, one per sequence
    std::vector<std::vector<int>> labels;  // padded with Outside, masked
    std::vector<FrameMask> masks;          // false on padding and Uncertain
    std::vector<std::size_t> lengths;      // true frame counts
    std::vector<std::string> video_ids;
    std::size_t max_frames = 0;

    std::size_t size() const { return features.size(); }
};

// ---- annotations ----

// CSV with header `video_id,start_frame,end_frame,label`; labels by
// canonical lowercase name. Segments are validated per video: sorted,
// non-overlapping, gap-free from frame 0. Errors carry 1-based line numbers.
std::vector<SegmentAnnotation> parse_annotations(std::istream& in);
std::vector<SegmentAnnotation> load_annotations(const std::string& path);
void save_annotations(const std::vector<SegmentAnnotation>& segments, const std::string& path);

// Per-frame labels for frames [0, T); segments must cover the range.
std::vector<int> rasterize(const std::vector<SegmentAnnotation>& segments, std::int64_t frames);

// Run-length inverse of rasterize.
std::vector<SegmentAnnotation> segmentize(const std::vector<int>& labels,
                                          const std::string& video_id);

FrameMask mask_from_labels(const std::vector<int>& labels);

// ---- frame-rate handling ----

// Keeps frames at indices round(i * fps / target) until the source runs out.
FeatureSequence resample_to_fps(const FeatureSequence& seq, double target_fps = 5.0);

// Temporal augmentation: with probability 1/2 keep frames floor(o + m*f) for
// a random phase o in [0, f), otherwise keep every ceil(f)-th frame from
// offset 0, where f = fps / target. The same index map applies to features,
// labels and mask.
FeatureSequence temporal_augment(const FeatureSequence& seq, RngStream& rng,
                                 double target_fps = 5.0);

Batch make_batch(const std::vector<const FeatureSequence*>& seqs);

// ---- feature files ----
// Binary format: magic "CTCNFEAT", u32 version = 1, u32 T, u32 D, f32 fps,
// little-endian f32 features row-major, u64 FNV-1a checksum of the payload.

void save_features(const FeatureSequence& seq, const std::string& path);
FeatureSequence load_features(const std::string& path);  // labels/mask left empty

// ---- dataset manifest ----

struct ManifestEntry {
    std::string video_id;
    std::string features_path;     // relative to the manifest directory
    std::string annotations_path;  // ditto
    double fps = 5.0;
    std::string cohort;
};

struct Manifest {
    int feature_dim = 0;
    std::vector<ManifestEntry> videos;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// Loads a video's features and attaches rasterized labels and mask.
FeatureSequence load_video(const Manifest& m, const ManifestEntry& entry,
                           const std::string& manifest_dir);

std::string directory_of(const std::string& path);

}  // namespace ctcn

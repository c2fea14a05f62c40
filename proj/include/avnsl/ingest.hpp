#ifndef AVNSL_INGEST_HPP
#define AVNSL_INGEST_HPP

#include "avnsl/types.hpp"
#include "avnsl/utterance.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace avnsl {

// ---------------------------------------------------------------------------
// TXLSP001 container: 16-byte ASCII magic ("TXLSP001" + 8 spaces), then
// little-endian u32 T, u32 D, f64 frame_rate, then T*D float32 row-major.
// Attention and VAD reuse it with D=1 (VAD stores 0.0/1.0).
// ---------------------------------------------------------------------------

struct FrameFile {
    Mat frames; // T x D, widened from float32
    double frame_rate = 0.0;
};

void write_frame_file(const std::string& path, const Mat& frames, double frame_rate);
FrameFile read_frame_file(const std::string& path);

// ---------------------------------------------------------------------------
// Corpus manifest: one JSON object per line. Keys: id, features, attention
// (array of {layer, path}), vad, image; optional oracle_segmentation,
// ref_tree. Paths are resolved relative to the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestRecord {
    std::string id;
    std::string features;
    std::vector<std::pair<int, std::string>> attention; // (layer_id, path)
    std::string vad;
    std::string image;
    std::optional<std::string> oracle_segmentation;
    std::optional<std::string> ref_tree;
};

struct CorpusManifest {
    std::vector<ManifestRecord> records;

    static CorpusManifest load(const std::string& path);
    void save(const std::string& path) const;
};

std::vector<Utterance> load_corpus(const std::string& manifest_path);

// ---------------------------------------------------------------------------
// Sidecar formats.
// ---------------------------------------------------------------------------

// {"spans": [[start, end], ...]} with full-precision doubles.
void write_segmentation_file(const std::string& path, const Segmentation& seg);
Segmentation read_segmentation_file(const std::string& path);

void write_ref_tree_file(const std::string& path, const LabeledRefTree& tree);
LabeledRefTree read_ref_tree_file(const std::string& path);

// Image embeddings reuse the container with T=1 and frame_rate=0.
void write_image_file(const std::string& path, const ImageEmbedding& image);
ImageEmbedding read_image_file(const std::string& path);

// ---------------------------------------------------------------------------
// Checkpoints: versioned flat binary of named tensors. 16-byte ASCII magic
// ("AVCKPT01" + 8 spaces), u32 tensor count, then per tensor (in name order):
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 row-major.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const std::map<std::string, Mat>& tensors);
std::map<std::string, Mat> load_checkpoint(const std::string& path);

} // namespace avnsl

#endif

#include "avnsl/ingest.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace avnsl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kFrameMagic[17] = "TXLSP001        ";
constexpr char kCkptMagic[17] = "AVCKPT01        ";

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

float get_f32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return is;
}

std::string resolve(const fs::path& base_dir, const std::string& p) {
    fs::path q(p);
    if (q.is_absolute()) return q.string();
    return (base_dir / q).string();
}

} // namespace

void write_frame_file(const std::string& path, const Mat& frames, double frame_rate) {
    if (frames.rows() < 1 || frames.cols() < 1)
        throw std::invalid_argument("write_frame_file: empty matrix for " + path);
    std::ofstream os = open_out(path);
    os.write(kFrameMagic, 16);
    put_u32(os, static_cast<std::uint32_t>(frames.rows()));
    put_u32(os, static_cast<std::uint32_t>(frames.cols()));
    put_f64(os, frame_rate);
    for (long t = 0; t < frames.rows(); ++t)
        for (long d = 0; d < frames.cols(); ++d)
            put_f32(os, static_cast<float>(frames(t, d)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

FrameFile read_frame_file(const std::string& path) {
    std::ifstream is = open_in(path);
    char magic[16];
    is.read(magic, 16);
    if (!is || std::memcmp(magic, kFrameMagic, 16) != 0)
        throw std::runtime_error("bad magic (expected TXLSP001): " + path);
    std::uint32_t t = get_u32(is);
    std::uint32_t d = get_u32(is);
    double rate = get_f64(is);
    if (!is || t == 0 || d == 0)
        throw std::runtime_error("bad header (T=" + std::to_string(t) + ", D=" +
                                 std::to_string(d) + "): " + path);
    FrameFile f;
    f.frame_rate = rate;
    f.frames.resize(t, d);
    for (std::uint32_t i = 0; i < t; ++i)
        for (std::uint32_t j = 0; j < d; ++j) f.frames(i, j) = get_f32(is);
    if (!is) throw std::runtime_error("truncated frame data: " + path);
    return f;
}

CorpusManifest CorpusManifest::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    CorpusManifest m;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("manifest " + path + " line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        ManifestRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.features = j.at("features").get<std::string>();
            for (const auto& a : j.at("attention"))
                r.attention.emplace_back(a.at("layer").get<int>(),
                                         a.at("path").get<std::string>());
            r.vad = j.at("vad").get<std::string>();
            r.image = j.at("image").get<std::string>();
            if (j.contains("oracle_segmentation"))
                r.oracle_segmentation = j.at("oracle_segmentation").get<std::string>();
            if (j.contains("ref_tree")) r.ref_tree = j.at("ref_tree").get<std::string>();
        } catch (const json::exception& e) {
            throw std::runtime_error("manifest " + path + " line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        if (r.attention.empty())
            throw std::runtime_error("manifest " + path + " line " + std::to_string(line_no) +
                                     ": no attention entries");
        m.records.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < m.records.size(); ++i)
        for (std::size_t k = i + 1; k < m.records.size(); ++k)
            if (m.records[i].id == m.records[k].id)
                throw std::runtime_error("manifest " + path + ": duplicate id " +
                                         m.records[i].id);
    return m;
}

void CorpusManifest::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& r : records) {
        json j;
        j["id"] = r.id;
        j["features"] = r.features;
        json attn = json::array();
        for (const auto& [layer, p] : r.attention) attn.push_back({{"layer", layer}, {"path", p}});
        j["attention"] = attn;
        j["vad"] = r.vad;
        j["image"] = r.image;
        if (r.oracle_segmentation) j["oracle_segmentation"] = *r.oracle_segmentation;
        if (r.ref_tree) j["ref_tree"] = *r.ref_tree;
        os << j.dump() << '\n';
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<Utterance> load_corpus(const std::string& manifest_path) {
    CorpusManifest m = CorpusManifest::load(manifest_path);
    if (m.records.empty())
        std::cerr << "warning: manifest " << manifest_path << " lists no utterances\n";
    fs::path base = fs::path(manifest_path).parent_path();
    std::vector<Utterance> out;
    out.reserve(m.records.size());
    for (const auto& r : m.records) {
      try {
        Utterance u;
        u.id = r.id;
        FrameFile feats = read_frame_file(resolve(base, r.features));
        u.features.frames = std::move(feats.frames);
        u.features.frame_rate = feats.frame_rate;
        long t = u.features.t();
        for (const auto& [layer, p] : r.attention) {
            FrameFile af = read_frame_file(resolve(base, p));
            if (af.frames.cols() != 1)
                throw std::runtime_error("utterance " + r.id + ": attention file " + p +
                                         " has D=" + std::to_string(af.frames.cols()) +
                                         ", expected D=1");
            if (af.frames.rows() != t)
                throw std::runtime_error("utterance " + r.id + ": attention file " + p +
                                         " has T=" + std::to_string(af.frames.rows()) +
                                         ", expected T=" + std::to_string(t));
            AttentionProfile ap;
            ap.layer_id = layer;
            ap.weights = af.frames.col(0);
            u.attention.push_back(std::move(ap));
        }
        FrameFile vf = read_frame_file(resolve(base, r.vad));
        if (vf.frames.cols() != 1)
            throw std::runtime_error("utterance " + r.id + ": VAD file " + r.vad + " has D=" +
                                     std::to_string(vf.frames.cols()) + ", expected D=1");
        if (vf.frames.rows() != t)
            throw std::runtime_error("utterance " + r.id + ": VAD file " + r.vad + " has T=" +
                                     std::to_string(vf.frames.rows()) +
                                     ", expected T=" + std::to_string(t));
        u.vad.voiced.resize(t);
        for (long i = 0; i < t; ++i) u.vad.voiced[i] = vf.frames(i, 0) != 0.0;
        u.image = read_image_file(resolve(base, r.image));
        if (r.oracle_segmentation)
            u.oracle_segmentation = read_segmentation_file(resolve(base, *r.oracle_segmentation));
        if (r.ref_tree) u.ref_tree = read_ref_tree_file(resolve(base, *r.ref_tree));
        u.validate();
        out.push_back(std::move(u));
      } catch (const std::exception& e) {
        std::string msg = e.what();
        if (msg.rfind("utterance ", 0) == 0) throw;
        throw std::runtime_error("utterance " + r.id + ": " + msg);
      }
    }
    return out;
}

void write_segmentation_file(const std::string& path, const Segmentation& seg) {
    seg.validate();
    json spans = json::array();
    for (const TimeSpan& s : seg.spans) spans.push_back({s.start, s.end});
    json j;
    j["spans"] = spans;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump() << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

Segmentation read_segmentation_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("segmentation " + path + ": " + e.what());
    }
    Segmentation seg;
    for (const auto& s : j.at("spans")) {
        if (!s.is_array() || s.size() != 2)
            throw std::runtime_error("segmentation " + path + ": span must be [start, end]");
        seg.spans.emplace_back(s[0].get<double>(), s[1].get<double>());
    }
    seg.validate();
    return seg;
}

void write_ref_tree_file(const std::string& path, const LabeledRefTree& tree) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << ref_tree_to_sexpr(tree) << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

LabeledRefTree read_ref_tree_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ref_tree_from_sexpr(ss.str());
}

void write_image_file(const std::string& path, const ImageEmbedding& image) {
    write_frame_file(path, image.vector.transpose(), 0.0);
}

ImageEmbedding read_image_file(const std::string& path) {
    FrameFile f = read_frame_file(path);
    if (f.frames.rows() != 1)
        throw std::runtime_error("image embedding must have T=1: " + path);
    ImageEmbedding e;
    e.vector = f.frames.row(0).transpose();
    e.validate();
    return e;
}

void save_checkpoint(const std::string& path, const std::map<std::string, Mat>& tensors) {
    std::ofstream os = open_out(path);
    os.write(kCkptMagic, 16);
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(m.rows()));
        put_u32(os, static_cast<std::uint32_t>(m.cols()));
        for (long i = 0; i < m.rows(); ++i)
            for (long j = 0; j < m.cols(); ++j) put_f64(os, m(i, j));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::map<std::string, Mat> load_checkpoint(const std::string& path) {
    std::ifstream is = open_in(path);
    char magic[16];
    is.read(magic, 16);
    if (!is || std::memcmp(magic, kCkptMagic, 16) != 0)
        throw std::runtime_error("bad magic (expected AVCKPT01): " + path);
    std::uint32_t count = get_u32(is);
    std::map<std::string, Mat> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        std::uint32_t len = get_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        std::uint32_t rows = get_u32(is);
        std::uint32_t cols = get_u32(is);
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        Mat m(rows, cols);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = get_f64(is);
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        out.emplace(std::move(name), std::move(m));
    }
    return out;
}

} // namespace avnsl

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "avnsl/ingest.hpp"
#include "avnsl/rng.hpp"
#include "avnsl/synth.hpp"

using namespace avnsl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("avnsl_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("frame file: exact header fields and byte-identical rewrite") {
    fs::path dir = fresh_dir("frames");
    Rng rng(3);
    Mat frames(5, 3);
    for (long i = 0; i < frames.size(); ++i)
        frames.data()[i] = static_cast<float>(rng.normal()); // float32-exact values

    std::string p1 = (dir / "a.bin").string();
    write_frame_file(p1, frames, 62.5);
    FrameFile back = read_frame_file(p1);
    CHECK(back.frame_rate == 62.5);
    CHECK(back.frames.rows() == 5);
    CHECK(back.frames.cols() == 3);
    CHECK(back.frames == frames);

    std::string p2 = (dir / "b.bin").string();
    write_frame_file(p2, back.frames, back.frame_rate);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(fs::file_size(p1) == 16 + 4 + 4 + 8 + 5 * 3 * 4);

    fs::remove_all(dir);
}

TEST_CASE("frame file: corrupt magic and truncation are rejected") {
    fs::path dir = fresh_dir("badframes");
    std::string good = (dir / "good.bin").string();
    write_frame_file(good, Mat::Ones(2, 2), 10.0);
    std::string bytes = slurp(good);

    std::string corrupted = bytes;
    corrupted[0] = 'Z';
    std::string p = (dir / "x.bin").string();
    std::ofstream(p, std::ios::binary) << corrupted;
    CHECK_THROWS(read_frame_file(p));

    std::string q = (dir / "y.bin").string();
    std::ofstream(q, std::ios::binary) << bytes.substr(0, 20);
    CHECK_THROWS(read_frame_file(q));

    CHECK_THROWS(read_frame_file((dir / "missing.bin").string()));
    fs::remove_all(dir);
}

TEST_CASE("segmentation json round trip is exact") {
    fs::path dir = fresh_dir("segjson");
    Segmentation seg{{TimeSpan(0.1, std::sqrt(2.0)), TimeSpan(1.5, 1.5 + 1.0 / 3.0)}};
    std::string p = (dir / "seg.json").string();
    write_segmentation_file(p, seg);
    Segmentation back = read_segmentation_file(p);
    REQUIRE(back.size() == 2);
    CHECK(back.spans[0].start == seg.spans[0].start);
    CHECK(back.spans[0].end == seg.spans[0].end);
    CHECK(back.spans[1].end == seg.spans[1].end);
    CHECK(back == seg);
    fs::remove_all(dir);
}

TEST_CASE("ref tree and image files round trip") {
    fs::path dir = fresh_dir("sidecars");

    std::vector<LabeledRefTree::Node> nodes;
    nodes.push_back({TimeSpan(0.0, 1.0), "VP", {1, 2}});
    nodes.push_back({TimeSpan(0.0, 0.5), "", {}});
    nodes.push_back({TimeSpan(0.5, 1.0), "NP", {}});
    LabeledRefTree tree(nodes, 0);
    std::string tp = (dir / "t.txt").string();
    write_ref_tree_file(tp, tree);
    CHECK(read_ref_tree_file(tp) == tree);

    ImageEmbedding img;
    img.vector = Vec(3);
    img.vector << 0.25, -1.0, 0.5; // float32-exact
    std::string ip = (dir / "img.bin").string();
    write_image_file(ip, img);
    ImageEmbedding back = read_image_file(ip);
    CHECK(back.vector == img.vector);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint: named f64 tensors round trip bit-exactly") {
    fs::path dir = fresh_dir("ckpt");
    Rng rng(5);
    std::map<std::string, Mat> tensors;
    tensors["b/W"] = Mat::Random(4, 3);
    tensors["a/b"] = Mat::Random(4, 1) * std::acos(-1.0);
    tensors["z"] = Mat::Zero(1, 1);

    std::string p = (dir / "model.ckpt").string();
    save_checkpoint(p, tensors);
    auto back = load_checkpoint(p);
    REQUIRE(back.size() == 3);
    for (const auto& [name, m] : tensors) {
        REQUIRE(back.count(name) == 1);
        CHECK(back[name] == m);
    }

    // Same content saves to the same bytes regardless of insertion history.
    std::map<std::string, Mat> reordered;
    reordered["z"] = tensors["z"];
    reordered["a/b"] = tensors["a/b"];
    reordered["b/W"] = tensors["b/W"];
    std::string q = (dir / "model2.ckpt").string();
    save_checkpoint(q, reordered);
    CHECK(slurp(p) == slurp(q));

    CHECK_THROWS(load_checkpoint((dir / "nope.ckpt").string()));
    fs::remove_all(dir);
}

TEST_CASE("manifest round trip and corpus loading") {
    fs::path dir = fresh_dir("corpus");
    SyntheticGrammarConfig cfg;
    cfg.min_tokens = 3;
    cfg.max_tokens = 5;
    Rng rng(11);
    SynthCorpus corpus = synth_corpus(cfg, 2, rng);
    std::string manifest = write_corpus(corpus, dir.string());

    CorpusManifest m = CorpusManifest::load(manifest);
    REQUIRE(m.records.size() == 2);
    CHECK(m.records[0].id != m.records[1].id);
    CHECK(m.records[0].oracle_segmentation.has_value());
    CHECK(m.records[0].ref_tree.has_value());

    std::vector<Utterance> utts = load_corpus(manifest);
    REQUIRE(utts.size() == 2);
    for (std::size_t i = 0; i < utts.size(); ++i) {
        const Utterance& u = utts[i];
        u.validate();
        // Frame and image files store float32, so the round trip is lossy.
        CHECK((u.features.frames - corpus.utterances[i].features.frames).cwiseAbs().maxCoeff() <
              1e-6);
        CHECK((u.image.vector - corpus.utterances[i].image.vector).cwiseAbs().maxCoeff() < 1e-6);
        REQUIRE(u.oracle_segmentation.has_value());
        CHECK(*u.oracle_segmentation == *corpus.utterances[i].oracle_segmentation);
        REQUIRE(u.ref_tree.has_value());
        CHECK(*u.ref_tree == *corpus.utterances[i].ref_tree);
        for (const AttentionProfile& a : u.attention)
            CHECK(a.weights.size() == u.features.t());
    }
    fs::remove_all(dir);
}

TEST_CASE("corpus loading reports the offending id on length mismatch") {
    fs::path dir = fresh_dir("mismatch");
    write_frame_file((dir / "f.bin").string(), Mat::Ones(5, 2), 50.0);
    write_frame_file((dir / "attn.bin").string(), Mat::Ones(5, 1), 50.0);
    write_frame_file((dir / "vad.bin").string(), Mat::Ones(4, 1), 50.0); // wrong T
    ImageEmbedding img;
    img.vector = Vec::Ones(3);
    write_image_file((dir / "img.bin").string(), img);

    CorpusManifest m;
    ManifestRecord r;
    r.id = "utt_bad_vad";
    r.features = "f.bin";
    r.attention = {{0, "attn.bin"}};
    r.vad = "vad.bin";
    r.image = "img.bin";
    m.records.push_back(r);
    std::string mp = (dir / "manifest.jsonl").string();
    m.save(mp);

    bool threw = false;
    try {
        load_corpus(mp);
    } catch (const std::exception& e) {
        threw = true;
        CHECK(std::string(e.what()).find("utt_bad_vad") != std::string::npos);
    }
    CHECK(threw);
    fs::remove_all(dir);
}

TEST_CASE("missing referenced file names the id") {
    fs::path dir = fresh_dir("missingfile");
    CorpusManifest m;
    ManifestRecord r;
    r.id = "utt_gone";
    r.features = "not_there.bin";
    r.attention.push_back({0, "attn_gone.bin"});
    r.vad = "also_gone.bin";
    r.image = "gone.bin";
    m.records.push_back(r);
    std::string mp = (dir / "manifest.jsonl").string();
    m.save(mp);

    bool threw = false;
    try {
        load_corpus(mp);
    } catch (const std::exception& e) {
        threw = true;
        CHECK(std::string(e.what()).find("utt_gone") != std::string::npos);
    }
    CHECK(threw);
    fs::remove_all(dir);
}

TEST_CASE("empty manifest loads as an empty corpus") {
    fs::path dir = fresh_dir("empty");
    std::string mp = (dir / "manifest.jsonl").string();
    CorpusManifest{}.save(mp);
    CHECK(load_corpus(mp).empty());
    fs::remove_all(dir);
}

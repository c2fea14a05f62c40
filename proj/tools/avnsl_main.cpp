// Command-line front end for the pipeline: corpus synthesis, segmentation,
// parser training, tree decoding, MBR selection, chart-parser distillation,
// and evaluation. Subcommand flag sets mirror the library entry points.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "avnsl/eval.hpp"
#include "avnsl/ingest.hpp"
#include "avnsl/mbr.hpp"
#include "avnsl/parser.hpp"
#include "avnsl/pooling.hpp"
#include "avnsl/segmenter.hpp"
#include "avnsl/selftrain.hpp"
#include "avnsl/synth.hpp"
#include "avnsl/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace avnsl;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

void write_report(const json& report, const std::string& path) {
    if (path.empty()) {
        std::cout << report.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << report.dump(2) << "\n";
}

// Config parsers reject unknown keys so typos fail loudly instead of
// silently running with defaults.

HyperParams hyper_from_json(const json& j) {
    HyperParams hp;
    for (const auto& [key, value] : j.items()) {
        if (key == "layer") hp.layer = value.get<int>();
        else if (key == "p") hp.p = value.get<double>();
        else if (key == "gap_s") hp.gap_s = value.get<double>();
        else if (key == "insert_len") hp.insert_len = value.get<double>();
        else if (key == "margin") hp.margin = value.get<double>();
        else if (key == "lr_parser") hp.lr_parser = value.get<double>();
        else if (key == "lr_grounding") hp.lr_grounding = value.get<double>();
        else if (key == "score_hidden") hp.score_hidden = value.get<int>();
        else if (key == "score_depth") hp.score_depth = value.get<int>();
        else if (key == "combine_hidden") hp.combine_hidden = value.get<int>();
        else if (key == "joint_dim") hp.joint_dim = value.get<int>();
        else if (key == "seed") hp.seed = value.get<std::uint64_t>();
        else if (key == "steps") hp.steps = value.get<int>();
        else if (key == "batch_size") hp.batch_size = value.get<int>();
        else if (key == "ema_decay") hp.ema_decay = value.get<double>();
        else if (key == "momentum") hp.momentum = value.get<double>();
        else if (key == "combine_mode") hp.combine_mode = value.get<std::string>();
        else if (key == "score_input") hp.score_input = value.get<std::string>();
        else if (key == "pooling") hp.pooling = value.get<std::string>();
        else if (key == "checkpoint_every") hp.checkpoint_every = value.get<int>();
        else throw std::runtime_error("unknown hyperparameter key: " + key);
    }
    hp.validate();
    return hp;
}

SyntheticGrammarConfig synth_config_from_json(const json& j) {
    SyntheticGrammarConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "vocab_size") c.vocab_size = value.get<int>();
        else if (key == "concrete_fraction") c.concrete_fraction = value.get<double>();
        else if (key == "embed_dim") c.embed_dim = value.get<int>();
        else if (key == "image_dim") c.image_dim = value.get<int>();
        else if (key == "noise_scale") c.noise_scale = value.get<double>();
        else if (key == "branching_bias") c.branching_bias = value.get<double>();
        else if (key == "min_tokens") c.min_tokens = value.get<int>();
        else if (key == "max_tokens") c.max_tokens = value.get<int>();
        else if (key == "frame_rate") c.frame_rate = value.get<double>();
        else if (key == "dur_min") c.dur_min = value.get<double>();
        else if (key == "dur_max") c.dur_max = value.get<double>();
        else if (key == "function_dur_min") c.function_dur_min = value.get<double>();
        else if (key == "function_dur_max") c.function_dur_max = value.get<double>();
        else if (key == "concrete_prob_start") c.concrete_prob_start = value.get<double>();
        else if (key == "concrete_prob_end") c.concrete_prob_end = value.get<double>();
        else if (key == "silence_prob") c.silence_prob = value.get<double>();
        else if (key == "silence_min") c.silence_min = value.get<double>();
        else if (key == "silence_max") c.silence_max = value.get<double>();
        else if (key == "attn_peak_min") c.attn_peak_min = value.get<double>();
        else if (key == "attn_peak_max") c.attn_peak_max = value.get<double>();
        else if (key == "attn_floor") c.attn_floor = value.get<double>();
        else if (key == "collapse_prob") c.collapse_prob = value.get<double>();
        else throw std::runtime_error("unknown grammar config key: " + key);
    }
    c.validate();
    return c;
}

SelfTrainConfig selftrain_config_from_json(const json& j) {
    SelfTrainConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "hidden") c.hidden = value.get<int>();
        else if (key == "depth") c.depth = value.get<int>();
        else if (key == "lr") c.lr = value.get<double>();
        else if (key == "momentum") c.momentum = value.get<double>();
        else if (key == "steps") c.steps = value.get<int>();
        else if (key == "batch_size") c.batch_size = value.get<int>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else throw std::runtime_error("unknown self-train config key: " + key);
    }
    c.validate();
    return c;
}

// Directory of `<id>.tree` files in span form, sorted by id.
std::vector<std::pair<std::string, LabeledRefTree>> load_tree_dir(const std::string& dir) {
    std::vector<std::pair<std::string, LabeledRefTree>> out;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".tree")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const fs::path& p : paths) out.emplace_back(p.stem().string(), read_ref_tree_file(p.string()));
    if (out.empty()) throw std::runtime_error("no .tree files in " + dir);
    return out;
}

std::vector<std::pair<std::string, Segmentation>> load_seg_dir(const std::string& dir) {
    std::vector<std::pair<std::string, Segmentation>> out;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const fs::path& p : paths)
        out.emplace_back(p.stem().string(), read_segmentation_file(p.string()));
    if (out.empty()) throw std::runtime_error("no .json segmentations in " + dir);
    return out;
}

Segmentation seg_from_ref_leaves(const LabeledRefTree& tree) {
    Segmentation seg;
    for (int id : tree.leaves()) seg.spans.push_back(tree.node(id).span);
    seg.validate();
    return seg;
}

// Strictly binary span tree back into merge form; the on-disk span format
// does not record merge order, so it is reconstructed bottom-up.
ParseTree parse_tree_from_ref(const LabeledRefTree& ref) {
    std::vector<int> leaves = ref.leaves();
    std::map<int, int> leaf_pos;
    for (std::size_t i = 0; i < leaves.size(); ++i) leaf_pos[leaves[i]] = static_cast<int>(i);
    std::vector<TimeSpan> leaf_spans;
    for (int id : leaves) leaf_spans.push_back(ref.node(id).span);
    if (leaves.size() == 1) return ParseTree::leaf(leaf_spans[0]);

    std::vector<std::pair<int, int>> merges;
    auto build = [&](auto&& self, int id) -> int {
        const LabeledRefTree::Node& nd = ref.node(id);
        if (nd.is_leaf()) return leaf_pos.at(id);
        if (nd.children.size() != 2)
            throw std::runtime_error("tree is not binary; cannot use it as a teacher");
        int l = self(self, nd.children[0]);
        int r = self(self, nd.children[1]);
        merges.emplace_back(l, r);
        return static_cast<int>(leaves.size() + merges.size()) - 1;
    };
    build(build, ref.root());
    return ParseTree::from_merges(leaf_spans, merges);
}

Segmentation segment_with(const Utterance& u, const HyperParams& hp, bool no_insert) {
    const AttentionProfile& attn = u.attention_layer(hp.layer);
    Segmentation seg = threshold_segment(attn, hp.p, u.features.frame_rate);
    if (!no_insert)
        seg = insert_segments(seg, u.vad, u.features.frame_rate, hp.gap_s, hp.insert_len);
    return seg;
}

// Segmentation source priority: an explicit directory of proposals, then the
// corpus oracle, then a fresh run of the segmenter with `hp`.
Segmentation resolve_segmentation(const Utterance& u, const std::string& seg_dir,
                                  const HyperParams& hp) {
    if (!seg_dir.empty()) {
        fs::path p = fs::path(seg_dir) / (u.id + ".json");
        if (!fs::exists(p)) throw std::runtime_error("no segmentation for " + u.id + " in " + seg_dir);
        return read_segmentation_file(p.string());
    }
    if (u.oracle_segmentation) return *u.oracle_segmentation;
    return segment_with(u, hp, false);
}

SegmentEmbeddingSeq pool_with(const Utterance& u, const Segmentation& seg, const HyperParams& hp,
                              const PoolingParams& pooling) {
    if (hp.pooling == "attention") return attention_pool(u.features, u.attention_layer(hp.layer), seg);
    if (hp.pooling == "mlp") return mlp_attention_pool(u.features, seg, pooling);
    if (hp.pooling == "mean") return mean_pool(u.features, seg);
    throw std::runtime_error("unknown pooling mode " + hp.pooling);
}

// ---------------------------------------------------------------------------
// Subcommands

int run_synth(const std::string& config_path, int n, std::uint64_t seed, const std::string& out) {
    SyntheticGrammarConfig cfg;
    if (!config_path.empty()) cfg = synth_config_from_json(read_json_file(config_path));
    Rng rng(seed);
    SynthCorpus corpus = synth_corpus(cfg, n, rng);
    std::string manifest = write_corpus(corpus, out);
    std::cout << "wrote " << corpus.utterances.size() << " utterances; manifest at " << manifest
              << "\n";
    return 0;
}

int run_segment(const std::string& corpus_path, const std::string& attn_path,
                const std::string& vad_path, const HyperParams& hp, bool no_insert,
                const std::string& out) {
    if (!corpus_path.empty()) {
        std::vector<Utterance> corpus = load_corpus(corpus_path);
        fs::create_directories(out);
        for (const Utterance& u : corpus) {
            Segmentation seg = segment_with(u, hp, no_insert);
            write_segmentation_file((fs::path(out) / (u.id + ".json")).string(), seg);
        }
        std::cout << "segmented " << corpus.size() << " utterances into " << out << "\n";
        return 0;
    }
    if (attn_path.empty()) throw std::runtime_error("segment needs --corpus or --attn");
    FrameFile f = read_frame_file(attn_path);
    if (f.frames.cols() != 1) throw std::runtime_error(attn_path + ": attention must have D=1");
    AttentionProfile attn{hp.layer, f.frames.col(0)};
    Segmentation seg = threshold_segment(attn, hp.p, f.frame_rate);
    if (!vad_path.empty() && !no_insert) {
        FrameFile vf = read_frame_file(vad_path);
        if (vf.frames.cols() != 1) throw std::runtime_error(vad_path + ": VAD must have D=1");
        VadMask vad;
        for (long t = 0; t < vf.frames.rows(); ++t) vad.voiced.push_back(vf.frames(t, 0) != 0.0);
        seg = insert_segments(seg, vad, f.frame_rate, hp.gap_s, hp.insert_len);
    }
    write_segmentation_file(out, seg);
    std::cout << "wrote " << seg.size() << " spans to " << out << "\n";
    return 0;
}

int run_train(const std::string& corpus_path, const std::string& hyper_path,
              const std::string& seg_dir, int steps_override, const std::string& ckpt_dir) {
    HyperParams hp;
    if (!hyper_path.empty()) hp = hyper_from_json(read_json_file(hyper_path));
    if (steps_override >= 0) hp.steps = steps_override;

    std::vector<Utterance> corpus = load_corpus(corpus_path);
    if (corpus.size() < 2) throw std::runtime_error("training needs at least two utterances");

    std::vector<Segmentation> segs;
    std::vector<const Utterance*> usable;
    for (const Utterance& u : corpus) {
        Segmentation seg = resolve_segmentation(u, seg_dir, hp);
        if (seg.empty()) {
            std::cerr << "warning: skipping " << u.id << " (empty segmentation)\n";
            continue;
        }
        usable.push_back(&u);
        segs.push_back(std::move(seg));
    }
    if (usable.size() < 2) throw std::runtime_error("fewer than two segmentable utterances");

    long embed_dim = corpus.front().features.d();
    long image_dim = corpus.front().image.vector.size();
    Trainer trainer(hp, embed_dim, image_dim);
    fs::create_directories(ckpt_dir);

    const int batch = std::min<int>(hp.batch_size, static_cast<int>(usable.size()));
    std::vector<std::size_t> order(usable.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int t = 1; t <= hp.steps; ++t) {
        // Partial Fisher-Yates; a batch never repeats an utterance, so every
        // item has out-of-group imposters.
        for (int b = 0; b < batch; ++b) {
            std::size_t j = b + trainer.rng().uniform_int(static_cast<int>(order.size() - b));
            std::swap(order[b], order[j]);
        }
        std::vector<const Utterance*> items;
        std::vector<Segmentation> item_segs;
        for (int b = 0; b < batch; ++b) {
            items.push_back(usable[order[b]]);
            item_segs.push_back(segs[order[b]]);
        }
        TrainDiagnostics d = trainer.step(items, item_segs);
        if (t % 100 == 0 || t == hp.steps)
            std::cout << "step " << t << " reward " << d.mean_reward << " baseline " << d.baseline
                      << " loss " << d.total_loss << "\n";
        if (hp.checkpoint_every > 0 && t % hp.checkpoint_every == 0)
            save_checkpoint((fs::path(ckpt_dir) / ("step_" + std::to_string(t) + ".ckpt")).string(),
                            trainer.state());
    }
    save_checkpoint((fs::path(ckpt_dir) / "final.ckpt").string(), trainer.state());
    std::cout << "saved " << (fs::path(ckpt_dir) / "final.ckpt").string() << "\n";
    return 0;
}

int run_parse(const std::string& corpus_path, const std::string& ckpt_path,
              const std::string& hyper_path, const std::string& seg_dir, const std::string& mode,
              const std::string& out) {
    HyperParams hp;
    if (!hyper_path.empty()) hp = hyper_from_json(read_json_file(hyper_path));
    if (mode != "greedy" && mode != "sample")
        throw std::runtime_error("parse mode must be greedy or sample");

    std::vector<Utterance> corpus = load_corpus(corpus_path);
    if (corpus.empty()) throw std::runtime_error("empty corpus");
    long embed_dim = corpus.front().features.d();
    long image_dim = corpus.front().image.vector.size();
    Trainer trainer(hp, embed_dim, image_dim);
    trainer.load_state(load_checkpoint(ckpt_path));

    fs::create_directories(out);
    int written = 0;
    for (const Utterance& u : corpus) {
        Segmentation seg = resolve_segmentation(u, seg_dir, hp);
        if (seg.empty()) {
            std::cerr << "warning: skipping " << u.id << " (empty segmentation)\n";
            continue;
        }
        ParseTree tree = [&] {
            if (mode == "greedy") return trainer.parse(u, seg);
            SegmentEmbeddingSeq emb = pool_with(u, seg, hp, trainer.pooling());
            return build_tree(emb, seg, trainer.parser(), "sample", &trainer.rng()).tree;
        }();
        write_ref_tree_file((fs::path(out) / (u.id + ".tree")).string(),
                            ref_tree_from_parse_tree(tree));
        ++written;
    }
    std::cout << "parsed " << written << " utterances into " << out << "\n";
    return 0;
}

std::vector<std::string> candidate_dirs(const std::string& root) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw std::runtime_error("no candidate subdirectories in " + root);
    return names;
}

int run_mbr_select(const std::string& kind, const std::string& root, int k,
                   const std::string& norm, const std::string& report_path) {
    std::vector<std::string> names = candidate_dirs(root);
    json report;
    report["candidates"] = names;

    if (kind == "tree") {
        std::vector<std::vector<ParseTree>> candidates;
        std::vector<std::string> ids;
        for (const std::string& name : names) {
            auto trees = load_tree_dir((fs::path(root) / name).string());
            std::vector<std::string> these_ids;
            std::vector<ParseTree> parsed;
            for (auto& [id, t] : trees) {
                these_ids.push_back(id);
                parsed.push_back(parse_tree_from_ref(t));
            }
            if (ids.empty()) ids = these_ids;
            else if (ids != these_ids)
                throw std::runtime_error("candidate " + name + " covers different utterances");
            candidates.push_back(std::move(parsed));
        }
        int chosen = select_tree_candidates(candidates);
        report["chosen"] = names[chosen];
        std::cout << "chosen: " << names[chosen] << "\n";
        write_report(report, report_path);
        return 0;
    }
    if (kind != "seg") throw std::runtime_error("kind must be seg or tree");

    MiouNorm miou_norm = norm == "maxcount" ? MiouNorm::MaxCount : MiouNorm::Matched;
    SegLossFn loss = [miou_norm](const Segmentation& a, const Segmentation& b) {
        return miou_loss(a, b, miou_norm);
    };

    bool two_stage = fs::is_directory(fs::path(root) / names.front() / "val");
    if (two_stage) {
        std::vector<std::vector<Segmentation>> val, train;
        std::vector<std::string> train_ids;
        for (const std::string& name : names) {
            auto v = load_seg_dir((fs::path(root) / name / "val").string());
            auto t = load_seg_dir((fs::path(root) / name / "train").string());
            std::vector<Segmentation> vs, ts;
            for (auto& [id, s] : v) vs.push_back(std::move(s));
            train_ids.clear();
            for (auto& [id, s] : t) {
                train_ids.push_back(id);
                ts.push_back(std::move(s));
            }
            val.push_back(std::move(vs));
            train.push_back(std::move(ts));
        }
        TwoStageResult r = two_stage_select(val, train, k, loss);
        report["tally"] = json::object();
        for (std::size_t g = 0; g < names.size(); ++g)
            report["tally"][names[g]] = r.stage1_tally[g];
        report["top"] = json::array();
        for (std::size_t g : r.top_sets) report["top"].push_back(names[g]);
        report["train_choice"] = json::object();
        for (std::size_t u = 0; u < r.train_choice.size(); ++u)
            report["train_choice"][train_ids[u]] = names[r.train_choice[u]];
        write_report(report, report_path);
        return 0;
    }

    // Flat layout: per-utterance selection among the candidate settings.
    std::vector<std::vector<std::pair<std::string, Segmentation>>> per_cand;
    for (const std::string& name : names)
        per_cand.push_back(load_seg_dir((fs::path(root) / name).string()));
    for (const auto& c : per_cand)
        if (c.size() != per_cand.front().size())
            throw std::runtime_error("candidate directories cover different utterances");
    report["per_utterance"] = json::object();
    std::vector<int> wins(names.size(), 0);
    for (std::size_t u = 0; u < per_cand.front().size(); ++u) {
        std::vector<Segmentation> cands;
        for (const auto& c : per_cand) cands.push_back(c[u].second);
        std::size_t best = mbr_select(cands, loss);
        wins[best] += 1;
        report["per_utterance"][per_cand.front()[u].first] = names[best];
    }
    report["wins"] = json::object();
    for (std::size_t g = 0; g < names.size(); ++g) report["wins"][names[g]] = wins[g];
    write_report(report, report_path);
    return 0;
}

int run_self_train(const std::string& teacher_dir, const std::string& corpus_path,
                   const std::string& config_path, int n_checkpoints,
                   const std::string& ckpt_dir, std::string trees_out) {
    SelfTrainConfig cfg;
    if (!config_path.empty()) cfg = selftrain_config_from_json(read_json_file(config_path));
    if (trees_out.empty()) trees_out = (fs::path(ckpt_dir) / "trees").string();

    std::vector<Utterance> corpus = load_corpus(corpus_path);
    std::vector<SelfTrainExample> examples;
    std::vector<std::string> ids;
    for (const Utterance& u : corpus) {
        fs::path tp = fs::path(teacher_dir) / (u.id + ".tree");
        if (!fs::exists(tp)) {
            std::cerr << "warning: no teacher tree for " << u.id << "\n";
            continue;
        }
        LabeledRefTree ref = read_ref_tree_file(tp.string());
        ParseTree teacher = parse_tree_from_ref(ref);
        Segmentation seg = seg_from_ref_leaves(ref);
        examples.push_back({mean_pool(u.features, seg), std::move(teacher)});
        ids.push_back(u.id);
    }
    if (examples.empty()) throw std::runtime_error("no usable teacher trees in " + teacher_dir);

    FitResult fit = fit_selftrain(examples, cfg, n_checkpoints);
    fs::create_directories(ckpt_dir);
    for (std::size_t c = 0; c < fit.checkpoints.size(); ++c)
        save_checkpoint((fs::path(ckpt_dir) /
                         ("step_" + std::to_string(fit.checkpoint_steps[c]) + ".ckpt"))
                            .string(),
                        fit.checkpoints[c]);
    save_checkpoint((fs::path(ckpt_dir) / "final.ckpt").string(), fit.checkpoints[fit.best]);
    std::cout << "selected checkpoint at step " << fit.checkpoint_steps[fit.best] << "\n";

    SelfTrainer student(cfg, static_cast<int>(examples.front().emb.d()));
    student.load_state(fit.checkpoints[fit.best]);
    fs::create_directories(trees_out);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        Segmentation seg{examples[i].teacher.leaf_spans()};
        ParseTree tree = student.parse(examples[i].emb, seg);
        write_ref_tree_file((fs::path(trees_out) / (ids[i] + ".tree")).string(),
                            ref_tree_from_parse_tree(tree));
    }
    std::cout << "wrote " << examples.size() << " student trees into " << trees_out << "\n";
    return 0;
}

int run_eval_parse(const std::string& pred_dir, const std::string& gold_dir,
                   const std::string& metric, double tol, const std::string& report_path) {
    auto preds = load_tree_dir(pred_dir);
    std::map<std::string, LabeledRefTree> gold;
    for (auto& [id, t] : load_tree_dir(gold_dir)) gold.emplace(id, std::move(t));

    json report;
    report["metric"] = metric;
    report["per_utterance"] = json::object();
    int n = 0;
    if (metric == "parseval") {
        // Bracket comparison needs both trees over the same segment count;
        // utterances where they differ are skipped, not fatal, so one
        // mismatch does not abort scoring a whole directory.
        double sp = 0, sr = 0, sf = 0;
        int skipped = 0;
        for (const auto& [id, pred] : preds) {
            auto git = gold.find(id);
            if (git == gold.end()) continue;
            if (pred.leaves().size() != git->second.leaves().size()) {
                std::cerr << "warning: skipping " << id << " (" << pred.leaves().size() << " vs "
                          << git->second.leaves().size()
                          << " segments; use saiou or recall for mismatched segmentations)\n";
                ++skipped;
                continue;
            }
            ParsevalScore s = parseval_f1(pred, git->second);
            report["per_utterance"][id] = {{"precision", s.precision},
                                           {"recall", s.recall},
                                           {"f1", s.f1}};
            sp += s.precision;
            sr += s.recall;
            sf += s.f1;
            ++n;
        }
        if (n == 0)
            throw std::runtime_error(
                skipped > 0 ? "no utterance has matching segment counts; parseval needs trees "
                              "over the same segmentation (try saiou or recall)"
                            : "no utterances shared between pred and gold");
        report["skipped_incomparable"] = skipped;
        report["mean"] = {{"precision", sp / n}, {"recall", sr / n}, {"f1", sf / n}};
    } else if (metric == "saiou") {
        double sum = 0;
        for (const auto& [id, pred] : preds) {
            auto git = gold.find(id);
            if (git == gold.end()) continue;
            double v = saiou(pred, git->second);
            report["per_utterance"][id] = v;
            sum += v;
            ++n;
        }
        if (n == 0) throw std::runtime_error("no utterances shared between pred and gold");
        report["mean"] = sum / n;
    } else if (metric == "recall") {
        std::map<std::string, int> support, recalled;
        for (const auto& [id, pred] : preds) {
            auto git = gold.find(id);
            if (git == gold.end()) continue;
            ConstituentRecall r = constituent_recall(pred, git->second, tol);
            json per = json::object();
            for (const auto& [label, rec] : r.recall) per[label] = rec;
            report["per_utterance"][id] = per;
            for (const auto& [label, s] : r.support) support[label] += s;
            for (const auto& [label, c] : r.recalled) recalled[label] += c;
            ++n;
        }
        if (n == 0) throw std::runtime_error("no utterances shared between pred and gold");
        report["mean"] = json::object();
        for (const auto& [label, s] : support)
            if (s > 0) report["mean"][label] = static_cast<double>(recalled[label]) / s;
    } else {
        throw std::runtime_error("metric must be parseval, saiou, or recall");
    }
    report["n_utterances"] = n;
    write_report(report, report_path);
    return 0;
}

int run_eval_seg(const std::string& pred_dir, const std::string& gold_dir, double tol,
                 const std::string& report_path) {
    auto preds = load_seg_dir(pred_dir);
    std::map<std::string, Segmentation> gold;
    for (auto& [id, s] : load_seg_dir(gold_dir)) gold.emplace(id, std::move(s));

    json report;
    report["per_utterance"] = json::object();
    double sp = 0, sr = 0, sf = 0;
    int n = 0;
    for (const auto& [id, pred] : preds) {
        auto git = gold.find(id);
        if (git == gold.end()) continue;
        BoundaryPrf s = boundary_prf(pred, git->second, tol);
        report["per_utterance"][id] = {{"precision", s.precision},
                                       {"recall", s.recall},
                                       {"f1", s.f1}};
        sp += s.precision;
        sr += s.recall;
        sf += s.f1;
        ++n;
    }
    if (n == 0) throw std::runtime_error("no utterances shared between pred and gold");
    report["mean"] = {{"precision", sp / n}, {"recall", sr / n}, {"f1", sf / n}};
    report["n_utterances"] = n;
    write_report(report, report_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"visually grounded speech segmentation and parsing pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_config, synth_out = "corpus";
    int synth_n = 100;
    std::uint64_t synth_seed = 1;
    synth->add_option("--config", synth_config, "grammar config JSON");
    synth->add_option("--n", synth_n, "number of utterances");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    // segment
    auto* segment = app.add_subcommand("segment", "propose segmentations from attention");
    std::string seg_corpus, seg_attn, seg_vad, seg_out;
    HyperParams seg_hp;
    bool seg_no_insert = false;
    segment->add_option("--corpus", seg_corpus, "corpus manifest (directory mode)");
    segment->add_option("--attn", seg_attn, "single attention file (file mode)");
    segment->add_option("--vad", seg_vad, "VAD file for insertion (file mode)");
    segment->add_option("--layer", seg_hp.layer, "attention layer id");
    segment->add_option("--p", seg_hp.p, "retained attention mass, percent");
    segment->add_option("--gap", seg_hp.gap_s, "voiced gap threshold, seconds");
    segment->add_option("--insert-len", seg_hp.insert_len, "inserted span length, seconds");
    segment->add_flag("--no-insert", seg_no_insert, "skip the insertion pass");
    segment->add_option("--out", seg_out, "output directory (or file in file mode)")->required();

    // train
    auto* train = app.add_subcommand("train", "train the grounded parser");
    std::string train_corpus, train_hyper, train_segdir, train_ckpt = "ckpts";
    int train_steps = -1;
    train->add_option("--corpus", train_corpus, "corpus manifest")->required();
    train->add_option("--hyper", train_hyper, "hyperparameter JSON");
    train->add_option("--seg-dir", train_segdir, "precomputed segmentations");
    train->add_option("--steps", train_steps, "override step count");
    train->add_option("--ckpt-dir", train_ckpt, "checkpoint directory")->required();

    // parse
    auto* parse = app.add_subcommand("parse", "decode trees with a trained parser");
    std::string parse_corpus, parse_ckpt, parse_hyper, parse_segdir, parse_out = "trees";
    std::string parse_mode = "greedy";
    parse->add_option("--corpus", parse_corpus, "corpus manifest")->required();
    parse->add_option("--ckpt", parse_ckpt, "checkpoint path")->required();
    parse->add_option("--hyper", parse_hyper, "hyperparameter JSON (must match training)");
    parse->add_option("--seg-dir", parse_segdir, "precomputed segmentations");
    parse->add_option("--mode", parse_mode, "greedy or sample");
    parse->add_option("--out", parse_out, "output tree directory")->required();

    // mbr-select
    auto* mbr = app.add_subcommand("mbr-select", "consensus selection among candidates");
    std::string mbr_kind, mbr_root, mbr_report, mbr_norm = "matched";
    int mbr_k = 1;
    mbr->add_option("--kind", mbr_kind, "seg or tree")->required();
    mbr->add_option("--candidates", mbr_root, "directory of candidate subdirectories")->required();
    mbr->add_option("--k", mbr_k, "settings kept after the validation stage");
    mbr->add_option("--norm", mbr_norm, "mIoU normalization: matched or maxcount");
    mbr->add_option("--report", mbr_report, "report JSON path (stdout if absent)");

    // self-train
    auto* selftrain = app.add_subcommand("self-train", "distill a chart parser from teacher trees");
    std::string st_teachers, st_corpus, st_config, st_ckpt = "selftrain_ckpts", st_out;
    int st_checkpoints = 4;
    selftrain->add_option("--teacher-trees", st_teachers, "teacher tree directory")->required();
    selftrain->add_option("--corpus", st_corpus, "corpus manifest")->required();
    selftrain->add_option("--config", st_config, "self-train config JSON");
    selftrain->add_option("--checkpoints", st_checkpoints, "snapshots to select among");
    selftrain->add_option("--ckpt-dir", st_ckpt, "checkpoint directory")->required();
    selftrain->add_option("--out", st_out, "student tree directory (default <ckpt-dir>/trees)");

    // eval-parse
    auto* evalp = app.add_subcommand("eval-parse", "score predicted trees against gold");
    std::string ep_pred, ep_gold, ep_metric = "parseval", ep_report;
    double ep_tol = 0.02;
    evalp->add_option("--pred", ep_pred, "predicted tree directory")->required();
    evalp->add_option("--gold", ep_gold, "gold tree directory")->required();
    evalp->add_option("--metric", ep_metric, "parseval, saiou, or recall");
    evalp->add_option("--tol", ep_tol, "endpoint tolerance for recall, seconds");
    evalp->add_option("--report", ep_report, "report JSON path (stdout if absent)");

    // eval-seg
    auto* evals = app.add_subcommand("eval-seg", "score segmentations against gold");
    std::string es_pred, es_gold, es_report;
    double es_tol = 0.02;
    evals->add_option("--pred", es_pred, "predicted segmentation directory")->required();
    evals->add_option("--gold", es_gold, "gold segmentation directory")->required();
    evals->add_option("--tol", es_tol, "boundary tolerance, seconds");
    evals->add_option("--report", es_report, "report JSON path (stdout if absent)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(synth_config, synth_n, synth_seed, synth_out);
        if (segment->parsed())
            return run_segment(seg_corpus, seg_attn, seg_vad, seg_hp, seg_no_insert, seg_out);
        if (train->parsed())
            return run_train(train_corpus, train_hyper, train_segdir, train_steps, train_ckpt);
        if (parse->parsed())
            return run_parse(parse_corpus, parse_ckpt, parse_hyper, parse_segdir, parse_mode,
                             parse_out);
        if (mbr->parsed()) return run_mbr_select(mbr_kind, mbr_root, mbr_k, mbr_norm, mbr_report);
        if (selftrain->parsed())
            return run_self_train(st_teachers, st_corpus, st_config, st_checkpoints, st_ckpt,
                                  st_out);
        if (evalp->parsed()) return run_eval_parse(ep_pred, ep_gold, ep_metric, ep_tol, ep_report);
        if (evals->parsed()) return run_eval_seg(es_pred, es_gold, es_tol, es_report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

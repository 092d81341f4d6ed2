// crvos command-line interface: train / eval / bench / ablate / render / synth.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "crvos/data.hpp"
#include "crvos/errors.hpp"
#include "crvos/image_io.hpp"
#include "crvos/metrics.hpp"
#include "crvos/model.hpp"
#include "crvos/propagation.hpp"
#include "crvos/render.hpp"
#include "crvos/report.hpp"
#include "crvos/training.hpp"
#include "crvos/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace crvos;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

// ---------------------------------------------------------------------------
// config plumbing
// ---------------------------------------------------------------------------

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("bad JSON in " + path + ": " + e.what());
    }
}

ModelConfig parse_model_config(const json& cfg) {
    return model_config_from_json(cfg.value("model", json::object()).dump());
}

TrainConfig parse_train_config(const json& cfg) {
    const json t = cfg.value("train", json::object());
    TrainConfig out = TrainConfig::preset(stage_from_name(t.value("stage", "finetune")));
    out.clip_len = t.value("clip_len", out.clip_len);
    if (t.contains("resolution")) {
        out.res_h = t["resolution"].at(0).get<int>();
        out.res_w = t["resolution"].at(1).get<int>();
    }
    out.lr = t.value("lr", out.lr);
    out.epochs = t.value("epochs", out.epochs);
    out.augment = t.value("augment", out.augment);
    out.seed = t.value("seed", out.seed);
    out.backprop_through_clue = t.value("backprop_through_clue", out.backprop_through_clue);
    out.batch_clips = t.value("batch_clips", out.batch_clips);
    return out;
}

std::vector<SequenceRecord> build_dataset_from(const json& d, std::vector<std::string>* warnings);

std::vector<SequenceRecord> build_dataset(const json& cfg, std::vector<std::string>* warnings) {
    return build_dataset_from(cfg.value("data", json::object()), warnings);
}

std::vector<SequenceRecord> build_dataset_from(const json& d, std::vector<std::string>* warnings) {
    auto expand = [](const json& spec_json, int count) {
        SyntheticSpec base = synthetic_spec_from_json(spec_json.dump());
        std::vector<SequenceRecord> out;
        for (int i = 0; i < count; ++i) {
            SyntheticSpec spec = base;
            spec.seed = base.seed + static_cast<uint64_t>(i);
            out.push_back(generate_synthetic(spec));
        }
        return out;
    };
    if (d.contains("synthetic_mix")) {
        std::vector<SequenceRecord> out;
        for (const json& entry : d["synthetic_mix"]) {
            auto part = expand(entry, entry.value("count", 1));
            for (auto& rec : part) {
                rec.name += "_" + std::to_string(out.size());
                out.push_back(std::move(rec));
            }
        }
        return out;
    }
    if (d.contains("synthetic")) return expand(d["synthetic"], d.value("synthetic_count", 1));
    std::string root = d.value("root", std::string());
    if (root.empty()) {
        const char* env = std::getenv("CRVOS_DATA_ROOT");
        if (env) root = env;
    }
    if (root.empty())
        throw ConfigError("config key data.root (or data.synthetic) is required and missing");
    return load_davis_layout(root, d.value("year_style", 2017), warnings);
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Every command writes its manifest into the run directory before doing work.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_path, uint64_t seed, const json& config_echo) {
    fs::create_directories(out_dir);
    json m;
    m["command"] = command;
    m["config_path"] = config_path;
    m["seed"] = seed;
    m["version"] = kVersion;
    m["output_dir"] = out_dir;
    m["started"] = timestamp_utc();
    m["config"] = config_echo;
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw ConfigError("cannot write into output directory: " + out_dir);
    out << m.dump(2) << "\n";
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// Materialize a sequence at a resolution divisible by 16 (floor by default).
struct EvalSequence {
    std::string name;
    std::vector<Frame> frames;
    std::vector<MaskMap> gts;
    int num_targets = 1;
};

EvalSequence materialize_sequence(const SequenceRecord& rec, int res_h, int res_w) {
    EvalSequence seq;
    seq.name = rec.name;
    seq.num_targets = std::max(1, rec.num_targets);
    Frame probe = rec.load_frame(0);
    const int h = res_h > 0 ? res_h : probe.rgb.h() / 16 * 16;
    const int w = res_w > 0 ? res_w : probe.rgb.w() / 16 * 16;
    if (h < 16 || w < 16) throw DataError("sequence " + rec.name + " smaller than 16x16");
    for (int i = 0; i < static_cast<int>(rec.length()); ++i) {
        Frame f;
        MaskMap m;
        materialize_at(rec, i, h, w, &f, rec.has_mask(i) ? &m : nullptr);
        seq.frames.push_back(std::move(f));
        seq.gts.push_back(std::move(m));  // empty map when absent
    }
    return seq;
}

// ---------------------------------------------------------------------------
// eval machinery (shared by eval/ablate)
// ---------------------------------------------------------------------------

struct SequenceEval {
    ReportRow row;
    std::vector<MaskMap> preds;
};

SequenceEval eval_one_sequence(const Network& net, const EvalSequence& seq, int tolerance_px,
                               OverlapRule rule) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<MaskMap> preds = run_sequence(seq.frames, seq.gts.at(0), net, rule);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EvalResult r = evaluate(preds, seq.gts, std::max(1, max_label(seq.gts.at(0))), tolerance_px);
    SequenceEval out;
    out.row = {seq.name, seq.frames.size() > 1 ? (seq.frames.size() - 1) / wall : 0.0, r.mean_J,
               r.mean_F, r.mean_JF};
    out.preds = std::move(preds);
    return out;
}

ReportRow overall_row(const std::vector<ReportRow>& rows) {
    ReportRow all;
    all.name = "overall";
    if (rows.empty()) return all;
    for (const auto& r : rows) {
        all.fps += r.fps;
        all.mean_J += r.mean_J;
        all.mean_F += r.mean_F;
        all.mean_JF += r.mean_JF;
    }
    const double n = static_cast<double>(rows.size());
    all.fps /= n;
    all.mean_J /= n;
    all.mean_F /= n;
    all.mean_JF /= n;
    return all;
}

std::vector<SequenceEval> eval_dataset(const Network& net,
                                       const std::vector<SequenceRecord>& records, int res_h,
                                       int res_w, int tolerance_px, OverlapRule rule, int jobs) {
    std::vector<SequenceEval> results(records.size());
    if (jobs <= 1) {
        for (size_t i = 0; i < records.size(); ++i)
            results[i] = eval_one_sequence(net, materialize_sequence(records[i], res_h, res_w),
                                           tolerance_px, rule);
        return results;
    }
    std::mutex mu;
    size_t next = 0;
    std::vector<std::thread> workers;
    std::exception_ptr error;
    for (int j = 0; j < jobs; ++j) {
        workers.emplace_back([&]() {
            Network local = net.clone();
            while (true) {
                size_t i;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= records.size() || error) return;
                    i = next++;
                }
                try {
                    auto r = eval_one_sequence(
                        local, materialize_sequence(records[i], res_h, res_w), tolerance_px,
                        rule);
                    std::lock_guard<std::mutex> lock(mu);
                    results[i] = std::move(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
    return results;
}

void write_report_files(const std::string& out_dir, const std::vector<ReportRow>& rows,
                        const ReportRow& overall) {
    std::ofstream txt(fs::path(out_dir) / "report.txt");
    txt << format_report(rows, overall);
    std::ofstream js(fs::path(out_dir) / "report.json");
    js << report_json(rows, overall) << "\n";
}

Combine combine_from_name(const std::string& name) {
    if (name == "sum") return Combine::Sum;
    if (name == "last") return Combine::Last;
    throw ConfigError("--combine must be 'sum' or 'last'");
}

void check_device(const std::string& device) {
    if (device != "cpu")
        throw ConfigError("--device '" + device + "' is not available; only cpu is supported");
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<uint64_t> seed_override, const std::string& resume,
              const std::string& device) {
    check_device(device);
    const json cfg = load_json_file(config_path);
    TrainConfig tcfg = parse_train_config(cfg);
    if (seed_override) tcfg.seed = *seed_override;
    tcfg.validate();
    write_manifest(out_dir, "train", config_path, tcfg.seed, cfg);

    std::vector<std::string> warnings;
    std::vector<SequenceRecord> dataset = build_dataset(cfg, &warnings);
    print_warnings(warnings);
    if (dataset.empty()) throw DataError("dataset is empty");

    ModelConfig mcfg = parse_model_config(cfg);
    Network net(mcfg, tcfg.seed);
    Adam adam;
    uint64_t start_step = 0;
    if (!resume.empty()) {
        Network::CheckpointMeta meta;
        net = Network::load_checkpoint(resume, &meta);
        adam.load_state(net.parameters(), meta.extra);
        start_step = meta.step;
        std::cout << "resumed from " << resume << " at step " << start_step << "\n";
    }

    std::ofstream log(fs::path(out_dir) / "train.log");
    uint64_t steps_in_epoch = 0;
    double epoch_loss = 0.0;
    const size_t epoch_size = dataset.size();
    const uint64_t final_step = run_stage(
        net, adam, dataset, tcfg,
        [&](const TrainLogEntry& e) {
            log << "step=" << e.step << " stage=" << stage_name(e.stage) << " loss=" << e.loss
                << " lr=" << e.lr << " wall=" << e.wall_s << "\n";
            epoch_loss += e.loss;
            if (++steps_in_epoch == epoch_size) {
                log << "epoch_mean_loss=" << epoch_loss / static_cast<double>(epoch_size)
                    << " at_step=" << e.step << "\n";
                log.flush();
                steps_in_epoch = 0;
                epoch_loss = 0.0;
            }
        },
        start_step);

    const std::string ckpt = (fs::path(out_dir) / "checkpoint.ckpt").string();
    net.save_checkpoint(ckpt, final_step, adam.state(net.parameters()));
    std::cout << "wrote " << ckpt << " (step " << final_step << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& predictions, const std::string& data_root, int year,
             const std::string& out_dir, std::optional<uint64_t> seed_override,
             const std::string& variant_flag, int jobs, int tolerance_px, bool hard_clue,
             const std::string& combine_flag, bool save_masks, const std::string& device) {
    check_device(device);
    json cfg = config_path.empty() ? json::object() : load_json_file(config_path);
    if (!data_root.empty()) cfg["data"]["root"] = data_root;
    if (year > 0) cfg["data"]["year_style"] = year;
    const uint64_t seed = seed_override.value_or(cfg.value("seed", uint64_t{0}));
    write_manifest(out_dir, "eval", config_path, seed, cfg);

    std::vector<std::string> warnings;
    std::vector<SequenceRecord> records = build_dataset(cfg, &warnings);
    print_warnings(warnings);
    if (records.empty()) throw DataError("dataset is empty");

    const json ecfg = cfg.value("eval", json::object());
    const int res_h = ecfg.contains("resolution") ? ecfg["resolution"].at(0).get<int>() : 0;
    const int res_w = ecfg.contains("resolution") ? ecfg["resolution"].at(1).get<int>() : 0;
    if (tolerance_px < 0) tolerance_px = ecfg.value("tolerance_px", -1);
    if (jobs <= 0) jobs = ecfg.value("jobs", 1);

    std::vector<ReportRow> rows;
    std::vector<SequenceEval> results;

    if (!predictions.empty()) {
        // metric sanity mode: precomputed masks instead of model inference
        for (const auto& rec : records) {
            std::vector<MaskMap> gts, preds;
            for (int i = 0; i < static_cast<int>(rec.length()); ++i)
                gts.push_back(rec.load_mask(i));
            std::vector<std::string> files;
            const fs::path dir = fs::path(predictions) / rec.name;
            if (!fs::exists(dir))
                throw DataError("predictions directory missing sequence " + rec.name);
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && is_mask_extension(e.path().string()))
                    files.push_back(e.path().string());
            std::sort(files.begin(), files.end());
            if (files.size() != gts.size())
                throw DataError("sequence " + rec.name + ": " + std::to_string(files.size()) +
                                " prediction masks vs " + std::to_string(gts.size()) +
                                " annotated frames");
            for (const auto& f : files) preds.push_back(read_mask_image(f));
            EvalResult r = evaluate(preds, gts, std::max(1, max_label(gts.at(0))), tolerance_px);
            rows.push_back({rec.name, 0.0, r.mean_J, r.mean_F, r.mean_JF});
        }
    } else {
        if (checkpoint.empty())
            throw ConfigError("cmd_eval requires --checkpoint or --predictions");
        Network net = Network::load_checkpoint(checkpoint);
        if (!variant_flag.empty() && variant_from_name(variant_flag) != net.config().variant)
            throw ConfigError("--variant " + variant_flag +
                              " conflicts with checkpoint variant " +
                              variant_name(net.config().variant) + "; refused");
        if (hard_clue) net.set_hard_clue_mask(true);
        if (!combine_flag.empty()) net.set_combine(combine_from_name(combine_flag));

        results = eval_dataset(net, records, res_h, res_w, tolerance_px, OverlapRule::Argmax,
                               jobs);
        for (const auto& r : results) rows.push_back(r.row);
    }

    const ReportRow all = overall_row(rows);
    write_report_files(out_dir, rows, all);
    if (save_masks && !results.empty()) {
        for (size_t i = 0; i < records.size(); ++i) {
            const fs::path dir = fs::path(out_dir) / "pred" / records[i].name;
            fs::create_directories(dir);
            char name[16];
            for (size_t t = 0; t < results[i].preds.size(); ++t) {
                std::snprintf(name, sizeof(name), "%05zu.png", t);
                write_mask_image((dir / name).string(), results[i].preds[t]);
            }
        }
    }
    std::cout << format_report(rows, all);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const std::string& config_path, const std::string& checkpoint,
              const std::string& data_root, const std::string& out_dir, int warmup,
              const std::string& sequence, const std::string& device) {
    check_device(device);
    json cfg = config_path.empty() ? json::object() : load_json_file(config_path);
    if (!data_root.empty()) cfg["data"]["root"] = data_root;
    write_manifest(out_dir, "bench", config_path, cfg.value("seed", uint64_t{0}), cfg);

    std::vector<std::string> warnings;
    std::vector<SequenceRecord> records = build_dataset(cfg, &warnings);
    print_warnings(warnings);
    if (records.empty()) throw DataError("dataset is empty");
    size_t pick = 0;
    if (!sequence.empty()) {
        pick = records.size();
        for (size_t i = 0; i < records.size(); ++i)
            if (records[i].name == sequence) pick = i;
        if (pick == records.size()) throw DataError("sequence not found: " + sequence);
    }

    Network net = Network::load_checkpoint(checkpoint);
    EvalSequence seq = materialize_sequence(records[pick], 0, 0);
    BenchReport report = benchmark(seq.frames, seq.gts.at(0), net, warmup);

    json j;
    j["sequence"] = seq.name;
    j["frames_processed"] = report.frames_processed;
    j["wall_seconds"] = report.wall_seconds;
    j["fps"] = report.fps;
    j["per_stage_ms"] = report.per_stage_ms;
    j["note"] = report.note;
    std::ofstream out(fs::path(out_dir) / "bench.json");
    out << j.dump(2) << "\n";
    std::cout << "sequence " << seq.name << ": " << report.fps << " fps over "
              << report.frames_processed << " frames (" << report.note << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateRow {
    Variant variant;
    double jf = 0.0, j = 0.0, f = 0.0;
    std::vector<double> per_seed_jf;
};

std::string ablate_table(const std::vector<AblateRow>& rows) {
    std::string out = "variant  RM  PM  Clue    J&F      J      F\n";
    char buf[128];
    for (const auto& r : rows) {
        const bool rm = r.variant != Variant::IV;
        const bool pm = r.variant == Variant::II;
        const bool clue = r.variant == Variant::III || r.variant == Variant::IV;
        std::snprintf(buf, sizeof(buf), "%-7s  %-2s  %-2s  %-4s  %6.3f %6.3f %6.3f\n",
                      variant_name(r.variant).c_str(), rm ? "x" : "", pm ? "x" : "",
                      clue ? "x" : "", r.jf, r.j, r.f);
        out += buf;
    }
    return out;
}

int cmd_ablate(const std::string& config_path, const std::string& variants_arg, int seeds,
               const std::string& out_dir, std::optional<uint64_t> seed_override,
               const std::string& device) {
    check_device(device);
    const json cfg = load_json_file(config_path);
    write_manifest(out_dir, "ablate", config_path, seed_override.value_or(0), cfg);

    std::vector<Variant> variants;
    {
        std::string token;
        for (char c : variants_arg + ",") {
            if (c == ',') {
                if (!token.empty()) variants.push_back(variant_from_name(token));
                token.clear();
            } else {
                token += c;
            }
        }
    }
    if (variants.empty()) throw ConfigError("--variants needs at least one of I,II,III,IV");
    if (seeds < 1) throw ConfigError("--seeds must be >= 1");

    TrainConfig base_tcfg = parse_train_config(cfg);
    if (seed_override) base_tcfg.seed = *seed_override;
    const double width = cfg.value("model", json::object()).value("encoder_width_scale", 0.125);

    std::vector<std::string> warnings;
    std::vector<SequenceRecord> dataset = build_dataset(cfg, &warnings);
    print_warnings(warnings);
    if (dataset.empty()) throw DataError("dataset is empty");
    // evaluate on a held-out split when the config provides one
    std::vector<SequenceRecord> eval_set = dataset;
    if (cfg.value("data", json::object()).contains("val")) {
        eval_set = build_dataset_from(cfg["data"]["val"], &warnings);
        if (eval_set.empty()) throw DataError("validation split is empty");
    }

    std::vector<AblateRow> rows;
    json per_run = json::array();
    for (Variant v : variants) {
        AblateRow row;
        row.variant = v;
        std::vector<double> jf, jv, fv;
        for (int s = 0; s < seeds; ++s) {
            const uint64_t seed = base_tcfg.seed + static_cast<uint64_t>(s);
            TrainConfig tcfg = base_tcfg;
            tcfg.seed = seed;
            Network net(ModelConfig::for_variant(v, width), seed);
            Adam adam;
            run_stage(net, adam, dataset, tcfg);
            auto results =
                eval_dataset(net, eval_set, tcfg.res_h, tcfg.res_w, -1, OverlapRule::Argmax, 1);
            std::vector<ReportRow> rrows;
            for (const auto& r : results) rrows.push_back(r.row);
            const ReportRow all = overall_row(rrows);
            jf.push_back(all.mean_JF);
            jv.push_back(all.mean_J);
            fv.push_back(all.mean_F);
            per_run.push_back({{"variant", variant_name(v)},
                               {"seed", seed},
                               {"J&F", all.mean_JF},
                               {"J", all.mean_J},
                               {"F", all.mean_F}});
            std::cout << "variant " << variant_name(v) << " seed " << seed
                      << ": J&F = " << all.mean_JF << "\n";
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v[v.size() / 2];
        };
        row.jf = median(jf);
        row.j = median(jv);
        row.f = median(fv);
        row.per_seed_jf = jf;
        rows.push_back(std::move(row));
    }

    const std::string table = ablate_table(rows);
    std::ofstream txt(fs::path(out_dir) / "ablate_report.txt");
    txt << table;
    json j;
    j["runs"] = per_run;
    j["medians"] = json::array();
    for (const auto& r : rows)
        j["medians"].push_back({{"variant", variant_name(r.variant)},
                                {"J&F", r.jf},
                                {"J", r.j},
                                {"F", r.f},
                                {"per_seed_J&F", r.per_seed_jf}});
    std::ofstream js(fs::path(out_dir) / "ablate_report.json");
    js << j.dump(2) << "\n";
    std::cout << table;
    return kExitOk;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

int cmd_render(const std::string& config_path, const std::string& checkpoint,
               const std::string& data_root, const std::string& sequence,
               const std::string& out_dir, const std::string& device) {
    check_device(device);
    json cfg = config_path.empty() ? json::object() : load_json_file(config_path);
    if (!data_root.empty()) cfg["data"]["root"] = data_root;
    write_manifest(out_dir, "render", config_path, cfg.value("seed", uint64_t{0}), cfg);

    std::vector<std::string> warnings;
    std::vector<SequenceRecord> records = build_dataset(cfg, &warnings);
    print_warnings(warnings);
    if (records.empty()) throw DataError("dataset is empty");
    size_t pick = 0;
    if (!sequence.empty()) {
        pick = records.size();
        for (size_t i = 0; i < records.size(); ++i)
            if (records[i].name == sequence) pick = i;
        if (pick == records.size()) throw DataError("sequence not found: " + sequence);
    }

    Network net = Network::load_checkpoint(checkpoint);
    EvalSequence seq = materialize_sequence(records[pick], 0, 0);
    std::vector<MaskMap> preds = run_sequence(seq.frames, seq.gts.at(0), net);

    std::vector<Tensor> overlays;
    char name[32];
    for (size_t t = 0; t < preds.size(); ++t) {
        Tensor over = overlay_mask(seq.frames[t].rgb, preds[t]);
        std::snprintf(name, sizeof(name), "overlay_%05zu.png", t);
        write_frame_image((fs::path(out_dir) / name).string(), over);
        overlays.push_back(std::move(over));
    }
    std::vector<Tensor> tiles;
    for (int idx : contact_sheet_indices(overlays.size())) tiles.push_back(overlays[idx]);
    write_frame_image((fs::path(out_dir) / "contact_sheet.png").string(), contact_sheet(tiles));
    std::cout << "wrote " << preds.size() << " overlays + contact sheet to " << out_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, int count, const std::string& out_dir) {
    SyntheticSpec base;
    json echo = json::object();
    if (!spec_path.empty()) {
        echo = load_json_file(spec_path);
        base = synthetic_spec_from_json(echo.dump());
    }
    write_manifest(out_dir, "synth", spec_path, base.seed, echo);

    char name[32];
    for (int i = 0; i < count; ++i) {
        SyntheticSpec spec = base;
        spec.seed = base.seed + static_cast<uint64_t>(i);
        SequenceRecord rec = generate_synthetic(spec);
        const fs::path img_dir = fs::path(out_dir) / "JPEGImages" / rec.name;
        const fs::path ann_dir = fs::path(out_dir) / "Annotations" / rec.name;
        fs::create_directories(img_dir);
        fs::create_directories(ann_dir);
        for (size_t t = 0; t < rec.length(); ++t) {
            std::snprintf(name, sizeof(name), "%05zu.ppm", t);
            write_frame_image((img_dir / name).string(), rec.frames[t].rgb);
            std::snprintf(name, sizeof(name), "%05zu.png", t);
            write_mask_image((ann_dir / name).string(), rec.masks[t]);
        }
        std::cout << "wrote sequence " << rec.name << " (" << rec.length() << " frames)\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CRVOS: real-time video object segmentation (desk-scale artifact)"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", checkpoint, predictions, data_root, sequence;
    std::string variants = "I,II,III,IV", spec_path, variant_flag, combine_flag;
    std::string device = "cpu", resume;
    int year = 0, jobs = 0, warmup = 1, seeds = 3, count = 1, tolerance_px = -1;
    bool hard_clue = false, save_masks = false;
    std::optional<uint64_t> seed;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_dir, "run directory (outputs are confined here)");
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_option("--device", device, "compute device (only cpu)");
    };

    CLI::App* train = app.add_subcommand("train", "train one stage on a dataset");
    train->add_option("--config", config_path, "JSON config")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");
    add_common(train);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint (fps, J, F, J&F)");
    eval->add_option("--config", config_path, "JSON config");
    eval->add_option("--checkpoint", checkpoint, "trained checkpoint");
    eval->add_option("--predictions", predictions, "precomputed prediction masks directory");
    eval->add_option("--data", data_root, "DAVIS-layout dataset root");
    eval->add_option("--year", year, "2016 or 2017 label convention");
    eval->add_option("--variant", variant_flag, "must match the checkpoint; refused otherwise");
    eval->add_option("--jobs", jobs, "worker threads over sequences");
    eval->add_option("--tolerance-px", tolerance_px, "boundary tolerance in px");
    eval->add_flag("--hard-clue", hard_clue, "harden the recurrent mask");
    eval->add_option("--combine", combine_flag, "refine output combination: sum|last");
    eval->add_flag("--save-masks", save_masks, "write predicted masks");
    add_common(eval);

    CLI::App* bench = app.add_subcommand("bench", "fps benchmark on one sequence");
    bench->add_option("--config", config_path, "JSON config");
    bench->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    bench->add_option("--data", data_root, "DAVIS-layout dataset root");
    bench->add_option("--sequence", sequence, "sequence name (default: first)");
    bench->add_option("--warmup", warmup, "frames excluded from timing");
    add_common(bench);

    CLI::App* ablate = app.add_subcommand("ablate", "train+eval variants on matched seeds");
    ablate->add_option("--config", config_path, "JSON config")->required();
    ablate->add_option("--variants", variants, "comma list from I,II,III,IV");
    ablate->add_option("--seeds", seeds, "seeds per variant (median reported)");
    add_common(ablate);

    CLI::App* render = app.add_subcommand("render", "overlay predictions and a contact sheet");
    render->add_option("--config", config_path, "JSON config");
    render->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    render->add_option("--data", data_root, "DAVIS-layout dataset root");
    render->add_option("--sequence", sequence, "sequence name (default: first)");
    add_common(render);

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic DAVIS-layout dataset");
    synth->add_option("--spec", spec_path, "synthetic spec JSON");
    synth->add_option("--count", count, "number of sequences (seed+i)");
    add_common(synth);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir, seed, resume, device);
        if (eval->parsed())
            return cmd_eval(config_path, checkpoint, predictions, data_root, year, out_dir,
                            seed, variant_flag, jobs, tolerance_px, hard_clue, combine_flag,
                            save_masks, device);
        if (bench->parsed())
            return cmd_bench(config_path, checkpoint, data_root, out_dir, warmup, sequence,
                             device);
        if (ablate->parsed()) return cmd_ablate(config_path, variants, seeds, out_dir, seed,
                                                device);
        if (render->parsed())
            return cmd_render(config_path, checkpoint, data_root, sequence, out_dir, device);
        if (synth->parsed()) return cmd_synth(spec_path, count, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}

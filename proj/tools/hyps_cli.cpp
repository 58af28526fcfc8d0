// SPDX-License-Identifier: Apache-2.0
//
// Batch front end for the toy segmentation pipeline: synthetic
// pretraining and fine-tuning, rank sweeps, volume evaluation with
// optional component filtering, and volume-based classification.
//
// Exit codes: 0 success, 2 configuration/validation/format problems,
// 3 numeric divergence, 4 insufficient data. Set HYPS_LOG=debug|info|quiet
// to control progress output on stderr.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hyps/adapters.hpp"
#include "hyps/checkpoint.hpp"
#include "hyps/classify.hpp"
#include "hyps/errors.hpp"
#include "hyps/model.hpp"
#include "hyps/seg_metrics.hpp"
#include "hyps/synth.hpp"
#include "hyps/train.hpp"
#include "hyps/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("HYPS_LOG");
        if (!env) return LogLevel::Info;
        const std::string v(env);
        if (v == "quiet" || v == "error") return LogLevel::Quiet;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::cerr << msg << "\n";
}

std::string fmt(double v, int prec) {
    if (std::isnan(v)) return "nan";
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec) << v;
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw hyps::UsageError(path.string() + ": cannot open for writing");
    os << text;
    if (!os) throw hyps::UsageError(path.string() + ": write failed");
}

std::string now_iso8601() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

// One manifest per run, next to the outputs. Timestamp and duration
// vary between runs; everything else is a pure function of the inputs.
void write_manifest(const fs::path& out_dir, const std::string& command, json config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const RunTimer& timer) {
    const json manifest = {{"command", command},   {"version", kToolVersion},
                           {"config", std::move(config)}, {"inputs", inputs},
                           {"outputs", outputs},   {"duration_ms", timer.ms()},
                           {"written_at", now_iso8601()}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

fs::path ensure_out_dir(const std::string& out) {
    const fs::path dir(out.empty() ? "." : out);
    fs::create_directories(dir);
    return dir;
}

hyps::AdapterSpec spec_for(hyps::AdapterVariant v, std::size_t rank) {
    using hyps::AdapterSpec;
    using hyps::AdapterVariant;
    switch (v) {
        case AdapterVariant::FullTuning: return AdapterSpec::full();
        case AdapterVariant::LinearProbe: return AdapterSpec::linear_probe();
        case AdapterVariant::LoRA: return AdapterSpec::lora(rank);
        case AdapterVariant::SeqLoRA: return AdapterSpec::seqlora(rank);
        case AdapterVariant::PiSSA: return AdapterSpec::pissa(rank);
        case AdapterVariant::CPS: return AdapterSpec::cps(rank);
        case AdapterVariant::HyPS: return AdapterSpec::hyps(rank);
    }
    throw hyps::ConfigError("unknown adapter variant");
}

hyps::AdapterVariant parse_variant(const std::string& name) {
    const auto v = hyps::variant_from_name(name);
    if (!v)
        throw hyps::ConfigError("unknown variant \"" + name +
                                "\"; expected full, linear-probe, lora, seqlora, pissa, "
                                "cps or hyps");
    return *v;
}

std::string history_csv(const std::vector<hyps::EpochLog>& history) {
    std::ostringstream ss;
    ss << "epoch,lr,loss\n";
    ss << std::setprecision(12);
    for (const hyps::EpochLog& e : history) ss << e.epoch << ',' << e.lr << ',' << e.loss << '\n';
    return ss.str();
}

void log_history(const std::vector<hyps::EpochLog>& history, const std::string& tag) {
    for (const hyps::EpochLog& e : history) {
        std::ostringstream ss;
        ss << tag << " epoch " << e.epoch << "/" << history.size() << "  lr "
           << std::setprecision(6) << e.lr << "  loss " << e.loss;
        log_debug(ss.str());
    }
    if (!history.empty()) {
        std::ostringstream ss;
        ss << tag << " finished " << history.size() << " epochs, final loss "
           << std::setprecision(6) << history.back().loss;
        log_info(ss.str());
    }
}

struct HeldOutRow {
    std::size_t index;
    double dice;
    double hd95;  // NaN when undefined (an empty mask)
};

struct HeldOutStats {
    std::vector<HeldOutRow> rows;
    double mean_dice = 0.0;
    double mean_hd95 = std::numeric_limits<double>::quiet_NaN();
    std::size_t hd_defined = 0;
};

HeldOutStats evaluate_heldout(hyps::ToySegModel& model, const hyps::SynthTask& task,
                              std::size_t first, std::size_t count) {
    HeldOutStats st;
    double dice_sum = 0.0, hd_sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const hyps::Sample s = hyps::generate_sample(task, first + i);
        const hyps::BinaryMask pred = model.predict_mask(s.image);
        HeldOutRow row{first + i, hyps::dice_score(pred, s.label),
                       std::numeric_limits<double>::quiet_NaN()};
        try {
            row.hd95 = hyps::hd95(pred, s.label);
            hd_sum += row.hd95;
            ++st.hd_defined;
        } catch (const hyps::UsageError&) {
            // empty prediction or label: leave the cell as NaN
        }
        dice_sum += row.dice;
        st.rows.push_back(row);
    }
    if (count > 0) st.mean_dice = dice_sum / static_cast<double>(count);
    if (st.hd_defined > 0) st.mean_hd95 = hd_sum / static_cast<double>(st.hd_defined);
    return st;
}

// ---- finetune --------------------------------------------------------

struct FinetuneOpts {
    bool pretrain = false;
    std::string base;
    std::string variant = "hyps";
    std::size_t rank = 8;
    std::uint64_t seed = 42;
    std::size_t train_n = 0;  // 0: 200 when pretraining, 10 otherwise
    std::size_t epochs = 0;   // 0: 6 when pretraining, 30 otherwise
    std::size_t eval_n = 20;
    double lr = 1e-3;
    std::string out = ".";
};

int cmd_finetune(const FinetuneOpts& o) {
    RunTimer timer;
    const fs::path out_dir = ensure_out_dir(o.out);
    const std::size_t train_n = o.train_n > 0 ? o.train_n : (o.pretrain ? 200 : 10);
    const std::size_t epochs = o.epochs > 0 ? o.epochs : (o.pretrain ? 6 : 30);

    hyps::TrainConfig tc;
    tc.lr0 = o.lr;
    tc.epochs = epochs;
    tc.seed = o.seed;

    json config = {{"pretrain", o.pretrain}, {"variant", o.variant}, {"rank", o.rank},
                   {"seed", o.seed},         {"train_n", train_n},   {"epochs", epochs},
                   {"eval_n", o.eval_n},     {"lr", o.lr},           {"out", o.out}};
    std::vector<std::string> inputs, outputs;

    if (o.pretrain) {
        log_info("pretraining on task A: " + std::to_string(train_n) + " samples, " +
                 std::to_string(epochs) + " epochs");
        hyps::Rng rng(o.seed);
        hyps::ToySegModel model(hyps::ToyModelConfig{}, rng);
        const hyps::ParamPartition part = model.partition();
        const auto dataset = hyps::generate_dataset(hyps::SynthTask::pretrain(o.seed), train_n);
        const hyps::TrainResult result = hyps::train(model, dataset, part, tc);
        log_history(result.history, "pretrain");

        const fs::path ckpt = out_dir / "base.ckpt";
        hyps::save_model(model, ckpt.string());
        write_text(out_dir / "history.csv", history_csv(result.history));
        outputs = {ckpt.string(), (out_dir / "history.csv").string()};
        write_manifest(out_dir, "finetune", config, inputs, outputs, timer);
        return 0;
    }

    if (o.base.empty())
        throw hyps::ConfigError("finetune: --base checkpoint required unless --pretrain is given");
    inputs.push_back(o.base);
    const hyps::AdapterVariant variant = parse_variant(o.variant);
    const bool ranked = variant != hyps::AdapterVariant::FullTuning &&
                        variant != hyps::AdapterVariant::LinearProbe;
    if (ranked && o.rank == 0)
        throw hyps::ConfigError("finetune: adapter rank 0 out of range [1, min(m, n)]; "
                                "ranked variants need --rank >= 1");

    hyps::ToySegModel model = hyps::load_model(o.base);
    hyps::Rng rng(o.seed);
    const hyps::ParamPartition part =
        variant == hyps::AdapterVariant::FullTuning
            ? model.partition()
            : model.attach_adapters(spec_for(variant, o.rank), rng);

    log_info("fine-tuning " + o.variant + " (rank " + std::to_string(o.rank) + ") on task B: " +
             std::to_string(train_n) + " samples, " + std::to_string(epochs) + " epochs");
    const hyps::SynthTask task = hyps::SynthTask::shifted(o.seed);
    const auto dataset = hyps::generate_dataset(task, train_n);
    const hyps::TrainResult result = hyps::train(model, dataset, part, tc);
    log_history(result.history, "finetune");

    const bool full = variant == hyps::AdapterVariant::FullTuning;
    const fs::path ckpt = out_dir / (full ? "model.ckpt" : "adapter.ckpt");
    if (full) hyps::save_model(model, ckpt.string());
    else hyps::save_adapter(model, ckpt.string());
    write_text(out_dir / "history.csv", history_csv(result.history));
    outputs = {ckpt.string(), (out_dir / "history.csv").string()};

    if (o.eval_n > 0) {
        const HeldOutStats st = evaluate_heldout(model, task, train_n, o.eval_n);
        std::ostringstream csv;
        csv << "index,dice,hd95\n";
        for (const HeldOutRow& r : st.rows)
            csv << r.index << ',' << fmt(r.dice, 4) << ',' << fmt(r.hd95, 4) << '\n';
        write_text(out_dir / "report.csv", csv.str());

        std::ostringstream txt;
        txt << "variant " << o.variant << " rank " << o.rank << " train-n " << train_n
            << " epochs " << epochs << " seed " << o.seed << "\n"
            << "held-out n=" << o.eval_n << " (task B indices " << train_n << ".."
            << train_n + o.eval_n - 1 << ")\n"
            << "mean_dice " << fmt(st.mean_dice, 4) << "\n"
            << "mean_hd95 " << fmt(st.mean_hd95, 4) << " (defined on " << st.hd_defined << "/"
            << o.eval_n << ")\n";
        write_text(out_dir / "report.txt", txt.str());
        std::cout << txt.str();
        outputs.push_back((out_dir / "report.csv").string());
        outputs.push_back((out_dir / "report.txt").string());
    }
    write_manifest(out_dir, "finetune", config, inputs, outputs, timer);
    return 0;
}

// ---- rank-sweep ------------------------------------------------------

struct SweepOpts {
    std::vector<std::string> variants = {"lora", "seqlora", "pissa-only", "cps", "hyps"};
    std::vector<std::size_t> ranks = {2, 4, 8, 16, 32};
    std::size_t embed_dim = 32;
    std::uint64_t seed = 42;
    std::size_t train_n = 4;
    std::size_t epochs = 2;
    std::size_t eval_n = 4;
    double lr = 1e-3;
    std::string out = ".";
};

// A narrower, shallower model than the fine-tuning default so that the
// smallest adapted layer still admits rank 32 and 25 cells stay cheap.
hyps::ToyModelConfig sweep_config(std::size_t embed_dim) {
    hyps::ToyModelConfig c;
    c.patch = 8;
    c.embed_dim = embed_dim;
    c.depths = {1};
    c.heads = 2;
    c.window = 2;
    c.mlp_ratio = 4;
    return c;
}

int cmd_rank_sweep(const SweepOpts& o) {
    RunTimer timer;
    const fs::path out_dir = ensure_out_dir(o.out);
    const hyps::ToyModelConfig cfg = sweep_config(o.embed_dim);
    const hyps::SynthTask task = hyps::SynthTask::shifted(o.seed);
    const auto dataset = hyps::generate_dataset(task, o.train_n);

    hyps::TrainConfig tc;
    tc.lr0 = o.lr;
    tc.epochs = o.epochs;
    tc.seed = o.seed;

    std::ostringstream csv;
    csv << "variant,rank,dice,hd95,params\n";
    for (const std::string& vname : o.variants) {
        const hyps::AdapterVariant variant = parse_variant(vname);
        for (std::size_t rank : o.ranks) {
            hyps::Rng rng(o.seed);
            hyps::ToySegModel model(cfg, rng);
            const hyps::ParamPartition part =
                model.attach_adapters(spec_for(variant, rank), rng);
            hyps::train(model, dataset, part, tc);
            const HeldOutStats st = evaluate_heldout(model, task, o.train_n, o.eval_n);

            long long params = 0;
            for (const hyps::ParamEntry& e : model.params())
                if (e.trainable) params += static_cast<long long>(e.value->size());

            csv << vname << ',' << rank << ',' << fmt(st.mean_dice, 4) << ','
                << fmt(st.mean_hd95, 4) << ',' << params << '\n';
            log_info("sweep " + vname + " rank " + std::to_string(rank) + ": dice " +
                     fmt(st.mean_dice, 4) + ", params " + std::to_string(params));
        }
    }
    write_text(out_dir / "sweep.csv", csv.str());
    std::cout << csv.str();

    const json config = {{"variants", o.variants}, {"ranks", o.ranks},
                         {"embed_dim", o.embed_dim}, {"seed", o.seed},
                         {"train_n", o.train_n},   {"epochs", o.epochs},
                         {"eval_n", o.eval_n},     {"lr", o.lr},
                         {"out", o.out}};
    write_manifest(out_dir, "rank-sweep", config, {}, {(out_dir / "sweep.csv").string()},
                   timer);
    return 0;
}

// ---- eval ------------------------------------------------------------

struct EvalOpts {
    std::vector<std::string> files;  // pred gt pred gt ...
    bool filter_cc = false;
    std::size_t min_voxels = 1000;
    double threshold = 0.5;
    std::string out = ".";
};

int cmd_eval(const EvalOpts& o) {
    RunTimer timer;
    if (o.files.size() < 2 || o.files.size() % 2 != 0)
        throw hyps::UsageError("eval: expected an even number of files: PRED GT [PRED GT ...]");
    const fs::path out_dir = ensure_out_dir(o.out);

    std::ostringstream csv;
    csv << "id,dice,hd95,left_volume_cm3,right_volume_cm3\n";
    double dice_sum = 0.0, hd_sum = 0.0, lv_sum = 0.0, rv_sum = 0.0;
    std::size_t hd_defined = 0;
    const std::size_t n = o.files.size() / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& pred_path = o.files[2 * i];
        const std::string& gt_path = o.files[2 * i + 1];
        hyps::BinaryMask pred = hyps::to_mask(hyps::read_volume(pred_path), o.threshold);
        if (o.filter_cc) pred = hyps::filter_small_components(pred, o.min_voxels);
        const hyps::BinaryMask gt = hyps::read_mask(gt_path, o.threshold);

        const double dice = hyps::dice_score(pred, gt);
        double hd = std::numeric_limits<double>::quiet_NaN();
        try {
            hd = hyps::hd95(pred, gt);
            hd_sum += hd;
            ++hd_defined;
        } catch (const hyps::UsageError&) {
        }
        const auto [left, right] = hyps::split_left_right(pred);
        const double lv = hyps::measure_volume_cm3(left);
        const double rv = hyps::measure_volume_cm3(right);
        dice_sum += dice;
        lv_sum += lv;
        rv_sum += rv;

        csv << fs::path(pred_path).stem().string() << ',' << fmt(dice, 4) << ',' << fmt(hd, 4)
            << ',' << fmt(lv, 6) << ',' << fmt(rv, 6) << '\n';
    }
    const double dn = static_cast<double>(n);
    csv << "mean," << fmt(dice_sum / dn, 4) << ','
        << fmt(hd_defined > 0 ? hd_sum / static_cast<double>(hd_defined)
                              : std::numeric_limits<double>::quiet_NaN(),
               4)
        << ',' << fmt(lv_sum / dn, 6) << ',' << fmt(rv_sum / dn, 6) << '\n';

    write_text(out_dir / "eval.csv", csv.str());
    std::cout << csv.str();

    const json config = {{"filter_cc", o.filter_cc},
                         {"min_voxels", o.min_voxels},
                         {"threshold", o.threshold},
                         {"out", o.out}};
    write_manifest(out_dir, "eval", config, o.files, {(out_dir / "eval.csv").string()}, timer);
    return 0;
}

// ---- classify --------------------------------------------------------

struct ClassifyOpts {
    std::string table;
    std::string task = "ad-cn";
    std::size_t folds = 5;
    std::uint64_t seed = 42;
    double c = 1.0;
    double gamma = 0.0;
    std::string method = "hyps";
    std::string out = ".";
};

int cmd_classify(const ClassifyOpts& o) {
    RunTimer timer;
    const fs::path out_dir = ensure_out_dir(o.out);
    const hyps::ClassifyTask task =
        o.task == "ad-cn" ? hyps::ClassifyTask::AdVsCn : hyps::ClassifyTask::EmciVsLmci;

    std::ifstream is(o.table);
    if (!is) throw hyps::DataError("classify: cannot open subject table " + o.table);
    const std::vector<hyps::SubjectRecord> all = hyps::read_subject_table(is);

    // Keep only the two diagnoses that belong to the requested task.
    std::vector<hyps::SubjectRecord> recs;
    for (const hyps::SubjectRecord& r : all)
        if (hyps::task_label(r.diagnosis, task) != 0) recs.push_back(r);
    log_info("classify " + o.task + ": " + std::to_string(recs.size()) + " of " +
             std::to_string(all.size()) + " subjects in task, " + std::to_string(o.folds) +
             "-fold CV");

    const auto scored = hyps::cross_validate(recs, task, o.folds, o.seed, o.c, o.gamma);
    const hyps::ClassReport report = hyps::classification_report(scored);
    const std::string text = hyps::format_report(report, o.method);

    std::ostringstream csv;
    csv << "id,fold,label,score\n" << std::setprecision(12);
    for (const hyps::ScoredSubject& s : scored)
        csv << s.id << ',' << s.fold << ',' << s.label << ',' << s.score << '\n';

    const json rj = {{"auc", report.auc},
                     {"precision", report.precision},
                     {"sensitivity", report.sensitivity},
                     {"specificity", report.specificity},
                     {"f1", report.f1},
                     {"accuracy", report.accuracy},
                     {"tp", report.tp},
                     {"fp", report.fp},
                     {"tn", report.tn},
                     {"fn", report.fn}};
    write_text(out_dir / "report.txt", text);
    write_text(out_dir / "report.json", rj.dump(2) + "\n");
    write_text(out_dir / "scores.csv", csv.str());
    std::cout << text;

    const json config = {{"table", o.table}, {"task", o.task},     {"folds", o.folds},
                         {"seed", o.seed},   {"c", o.c},           {"gamma", o.gamma},
                         {"method", o.method}, {"out", o.out}};
    write_manifest(out_dir, "classify", config, {o.table},
                   {(out_dir / "report.txt").string(), (out_dir / "report.json").string(),
                    (out_dir / "scores.csv").string()},
                   timer);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy hippocampus segmentation pipeline: synthetic pretraining, "
                 "adapter fine-tuning, rank sweeps, evaluation and classification"};
    app.require_subcommand(1);
    int rc = 0;

    FinetuneOpts fo;
    CLI::App* ft = app.add_subcommand(
        "finetune", "pretrain on task A (--pretrain) or fine-tune a base checkpoint on task B");
    ft->add_flag("--pretrain", fo.pretrain, "train a fresh base model on task A");
    ft->add_option("--base", fo.base, "base model checkpoint to fine-tune");
    ft->add_option("--variant", fo.variant,
                   "full, linear-probe, lora, seqlora, pissa, cps or hyps (default hyps)");
    ft->add_option("--rank", fo.rank, "adapter rank (default 8)");
    ft->add_option("--seed", fo.seed, "random seed (default 42)");
    ft->add_option("--train-n", fo.train_n,
                   "training sample count (default 200 pretrain / 10 fine-tune)");
    ft->add_option("--epochs", fo.epochs, "epoch count (default 6 pretrain / 30 fine-tune)");
    ft->add_option("--eval-n", fo.eval_n, "held-out sample count (default 20, 0 to skip)");
    ft->add_option("--lr", fo.lr, "initial learning rate (default 1e-3)");
    ft->add_option("--out", fo.out, "output directory (default .)");
    ft->callback([&] { rc = cmd_finetune(fo); });

    SweepOpts so;
    CLI::App* sw = app.add_subcommand("rank-sweep",
                                      "train every (variant, rank) cell and tabulate "
                                      "dice, hd95 and trainable parameter counts");
    sw->add_option("--variants", so.variants,
                   "variants to sweep (default lora,seqlora,pissa-only,cps,hyps)")
        ->delimiter(',');
    sw->add_option("--ranks", so.ranks, "ranks to sweep (default 2,4,8,16,32)")->delimiter(',');
    sw->add_option("--embed-dim", so.embed_dim,
                   "embedding width of the sweep model (default 32, fits rank 32)");
    sw->add_option("--seed", so.seed, "random seed (default 42)");
    sw->add_option("--train-n", so.train_n, "training samples per cell (default 4)");
    sw->add_option("--epochs", so.epochs, "epochs per cell (default 2)");
    sw->add_option("--eval-n", so.eval_n, "held-out samples per cell (default 4)");
    sw->add_option("--lr", so.lr, "initial learning rate (default 1e-3)");
    sw->add_option("--out", so.out, "output directory (default .)");
    sw->callback([&] { rc = cmd_rank_sweep(so); });

    EvalOpts eo;
    CLI::App* ev = app.add_subcommand("eval", "per-subject dice, hd95 and left/right volumes "
                                              "for PRED GT volume file pairs");
    ev->add_option("files", eo.files, "volume files: PRED GT [PRED GT ...]")->required();
    ev->add_flag("--filter-cc", eo.filter_cc, "drop small connected components first");
    ev->add_option("--min-voxels", eo.min_voxels,
                   "component threshold for --filter-cc (default 1000)");
    ev->add_option("--threshold", eo.threshold, "probability threshold (default 0.5)");
    ev->add_option("--out", eo.out, "output directory (default .)");
    ev->callback([&] { rc = cmd_eval(eo); });

    ClassifyOpts co;
    CLI::App* cl = app.add_subcommand("classify",
                                      "cross-validated SVM diagnosis from a subject table");
    cl->add_option("table", co.table, "subject CSV table")->required();
    cl->add_option("--task", co.task, "ad-cn or emci-lmci (default ad-cn)")
        ->check(CLI::IsMember({"ad-cn", "emci-lmci"}));
    cl->add_option("--folds", co.folds, "fold count (default 5)");
    cl->add_option("--seed", co.seed, "random seed (default 42)");
    cl->add_option("--c", co.c, "SVM C parameter (default 1)");
    cl->add_option("--gamma", co.gamma, "RBF gamma, 0 for 1/n_features (default 0)");
    cl->add_option("--method", co.method, "method name printed in the report (default hyps)");
    cl->add_option("--out", co.out, "output directory (default .)");
    cl->callback([&] { rc = cmd_classify(co); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const hyps::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const hyps::InsufficientDataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const hyps::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const hyps::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const hyps::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const hyps::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const hyps::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

#include "core/runner.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace procl {

namespace {

using nlohmann::json;

std::filesystem::path resolve_split(const std::filesystem::path& dir, const char* preferred) {
    if (std::filesystem::exists(dir / preferred / "meta.json")) return dir / preferred;
    if (std::filesystem::exists(dir / "meta.json")) return dir;
    throw IoError(cat("no dataset found at ", dir.string(), " (expected meta.json or ",
                      preferred, "/meta.json)"));
}

ModelConfig model_config_for(const RunConfig& cfg, const Dataset& ds) {
    ModelConfig mc;
    mc.feature_dim = ds.feature_dim;
    mc.num_classes = ds.num_classes;
    mc.dropout = cfg.model_dropout;
    return mc;
}

std::vector<ScoredProposal> localize_dataset(const RunConfig& cfg, const Dataset& ds,
                                             const ModelParams& params) {
    std::vector<ScoredProposal> out;
    for (const auto& v : ds.videos) {
        for (const auto& p : localize(v, params, cfg.inference, ds.snippet_duration_sec))
            out.push_back({v.id, p});
    }
    return out;
}

}  // namespace

Dataset load_annotations(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path.string());
    Dataset ds;
    std::string line;
    int line_no = 0;
    int max_class = -1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(cat(path.string(), " line ", line_no, ": ", e.what()));
        }
        VideoRecord v;
        try {
            v.id = rec.at("video_id").get<std::string>();
            for (const auto& c : rec.at("labels")) v.labels.push_back(c.get<int>() - 1);
            for (const auto& s : rec.at("segments")) {
                GtSegment seg;
                seg.t_start = s.at("t_start").get<double>();
                seg.t_end = s.at("t_end").get<double>();
                seg.cls = s.at("class").get<int>() - 1;
                if (!(seg.t_start < seg.t_end))
                    throw DataError(cat(path.string(), " line ", line_no,
                                        ": degenerate segment"));
                max_class = std::max(max_class, seg.cls);
                v.segments.push_back(seg);
            }
        } catch (const json::exception& e) {
            throw DataError(cat(path.string(), " line ", line_no, ": ", e.what()));
        }
        ds.videos.push_back(std::move(v));
    }
    if (ds.videos.empty()) throw DataError("no records in " + path.string());
    ds.num_classes = max_class + 1;
    return ds;
}

void run_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto data = generate(cfg.data, cfg.seed);
    save_dataset(data.train, out_dir / "train");
    save_dataset(data.test, out_dir / "test");
    cfg.echo_to(out_dir);
}

void run_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto split = resolve_split(data_dir, "train");
    const Dataset ds = load_dataset(split);
    Trainer trainer(ds, cfg.train);
    trainer.run(&out_dir);
    cfg.echo_to(out_dir);
}

void run_localize(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& data_dir, const std::filesystem::path& out_file) {
    cfg.validate();
    const auto split = resolve_split(data_dir, "test");
    const Dataset ds = load_dataset(split);
    const auto ck = load_checkpoint(checkpoint, model_config_for(cfg, ds));
    save_proposals(localize_dataset(cfg, ds, ck.params), out_file);
}

std::string run_eval(const RunConfig& cfg, const std::filesystem::path& proposals_file,
                     const std::filesystem::path& ground_truth,
                     const std::filesystem::path& out_csv) {
    cfg.validate();
    const auto props = load_proposals(proposals_file);
    Dataset gt;
    if (std::filesystem::is_directory(ground_truth))
        gt = load_annotations(resolve_split(ground_truth, "test") / "annotations.jsonl");
    else
        gt = load_annotations(ground_truth);
    const auto report = map_table(props, gt, cfg.eval_thresholds);
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        if (!f) throw IoError("cannot open for write: " + out_csv.string());
        f << report.csv();
    }
    return report.table_text();
}

void run_label_audit(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& data_dir,
                     const std::filesystem::path& out_csv) {
    cfg.validate();
    const auto split = resolve_split(data_dir, "train");
    const Dataset ds = load_dataset(split);
    const auto ck = load_checkpoint(checkpoint, model_config_for(cfg, ds));
    Trainer trainer(ds, cfg.train);
    Checkpoint restored = ck;
    trainer.restore(restored);
    write_audit_csv(out_csv, trainer.audit(ck.iteration));
}

namespace {

const std::vector<std::pair<int, AblationFlags>> kAblationMatrix = {
    {1, AblationFlags{}},
    {3, AblationFlags{.cl = true}},
    {4, AblationFlags{.cl = true, .pcl = true}},
    {5, AblationFlags{.cl = true, .fbd = true}},
    {6, AblationFlags{.cl = true, .pcl = true, .fbd = true}},
    {7, AblationFlags{.cl = true, .fbd = true, .mpcl = true}},
};

}  // namespace

std::vector<AblationRow> run_ablation_matrix(const RunConfig& cfg,
                                             const std::filesystem::path& data_root,
                                             const std::filesystem::path& out_dir) {
    cfg.validate();
    const Dataset train_ds = load_dataset(resolve_split(data_root, "train"));
    const Dataset test_ds = load_dataset(resolve_split(data_root, "test"));

    std::vector<AblationRow> rows;
    for (const auto& [exp, flags] : kAblationMatrix) {
        RunConfig exp_cfg = cfg;
        exp_cfg.train.flags = flags;
        const auto exp_dir = out_dir / cat("exp", exp);
        Trainer trainer(train_ds, exp_cfg.train);
        trainer.run(&exp_dir);
        exp_cfg.echo_to(exp_dir);

        const auto props = localize_dataset(exp_cfg, test_ds, trainer.params());
        save_proposals(props, exp_dir / "proposals.jsonl");
        AblationRow row;
        row.exp = exp;
        row.flags = flags.to_string();
        row.report = map_table(props, test_ds, exp_cfg.eval_thresholds);
        {
            std::ofstream f(exp_dir / "eval.csv");
            if (!f) throw IoError("cannot open for write: " + (exp_dir / "eval.csv").string());
            f << row.report.csv();
        }
        rows.push_back(std::move(row));
    }

    std::ofstream f(out_dir / "ablation.csv");
    if (!f) throw IoError("cannot open for write: " + (out_dir / "ablation.csv").string());
    f << "exp,flags";
    char buf[128];
    for (double t : cfg.eval_thresholds) {
        std::snprintf(buf, sizeof(buf), ",map_%.2f", t);
        f << buf;
    }
    f << ",avg_0.1_0.5,avg_0.1_0.7\n";
    for (const auto& row : rows) {
        f << row.exp << "," << row.flags;
        for (double m : row.report.map) {
            std::snprintf(buf, sizeof(buf), ",%.17g", m);
            f << buf;
        }
        if (row.report.avg_01_05)
            std::snprintf(buf, sizeof(buf), ",%.17g", *row.report.avg_01_05);
        else
            std::snprintf(buf, sizeof(buf), ",null");
        f << buf;
        if (row.report.avg_01_07)
            std::snprintf(buf, sizeof(buf), ",%.17g", *row.report.avg_01_07);
        else
            std::snprintf(buf, sizeof(buf), ",null");
        f << buf << "\n";
    }
    if (!f) throw IoError("write failed: " + (out_dir / "ablation.csv").string());
    return rows;
}

std::string run_ablate(const RunConfig& cfg, const std::filesystem::path& data_root,
                       const std::filesystem::path& out_dir) {
    const auto rows = run_ablation_matrix(cfg, data_root, out_dir);
    cfg.echo_to(out_dir);

    char buf[128];
    std::ostringstream table;
    table << "exp  flags            ";
    for (double t : cfg.eval_thresholds) {
        std::snprintf(buf, sizeof(buf), "  mAP@%.2f", t);
        table << buf;
    }
    table << "  AVG[0.1:0.7]\n";
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%-4d %-16s ", row.exp, row.flags.c_str());
        table << buf;
        for (double m : row.report.map) {
            std::snprintf(buf, sizeof(buf), "  %8.4f", m);
            table << buf;
        }
        if (row.report.avg_01_07)
            std::snprintf(buf, sizeof(buf), "  %12.4f", *row.report.avg_01_07);
        else
            std::snprintf(buf, sizeof(buf), "  %12s", "n/a");
        table << buf << "\n";
    }
    return table.str();
}

}  // namespace procl

// procl command-line front end. Everything goes through the C API in
// include/procl/procl.h; this translation unit never touches the core
// library directly.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "procl/procl.h"

namespace {

struct ConfigDeleter {
    void operator()(procl_config* c) const { procl_config_free(c); }
};
using ConfigPtr = std::unique_ptr<procl_config, ConfigDeleter>;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string seed, iters, theta, flags, rho, thresholds;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--set", o.overrides, "config override key=value (repeatable)");
    cmd->add_option("--seed", o.seed, "root seed");
    cmd->add_option("--iters", o.iters, "training iterations");
    cmd->add_option("--theta", o.theta, "ambiguity entropy threshold (nats)");
    cmd->add_option("--flags", o.flags, "ablation flags, e.g. cl,fbd,mpcl or none");
    cmd->add_option("--rho", o.rho, "video-level class threshold");
    cmd->add_option("--thresholds", o.thresholds, "evaluation IoU thresholds, e.g. 0.1:0.1:0.7");
}

int fail(procl_status st) {
    std::fprintf(stderr, "procl: error: %s\n", procl_last_error());
    switch (st) {
        case PROCL_ERR_CONFIG:
            return 2;
        case PROCL_ERR_NUMERIC:
            return 3;
        default:
            return 1;
    }
}

int apply_overrides(ConfigPtr& cfg, const CommonOpts& o) {
    if (!o.config_path.empty()) {
        if (auto st = procl_config_load_file(cfg.get(), o.config_path.c_str()); st != PROCL_OK)
            return fail(st);
    }
    auto set = [&cfg](const std::string& key, const std::string& value) -> int {
        if (auto st = procl_config_set(cfg.get(), key.c_str(), value.c_str()); st != PROCL_OK)
            return fail(st);
        return 0;
    };
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "procl: error: --set expects key=value, got '%s'\n", kv.c_str());
            return 2;
        }
        if (int rc = set(kv.substr(0, eq), kv.substr(eq + 1)); rc != 0) return rc;
    }
    if (!o.seed.empty())
        if (int rc = set("seed", o.seed); rc != 0) return rc;
    if (!o.iters.empty())
        if (int rc = set("train.iterations", o.iters); rc != 0) return rc;
    if (!o.theta.empty())
        if (int rc = set("train.theta", o.theta); rc != 0) return rc;
    if (!o.flags.empty())
        if (int rc = set("train.flags", o.flags); rc != 0) return rc;
    if (!o.rho.empty())
        if (int rc = set("inference.rho", o.rho); rc != 0) return rc;
    if (!o.thresholds.empty())
        if (int rc = set("eval.iou_thresholds", o.thresholds); rc != 0) return rc;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"progressive category-exclusion training, localization and evaluation "
                 "for weakly-supervised temporal action localization"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, loc_o, eval_o, audit_o, ablate_o;
    std::string out_dir, data_dir, checkpoint, proposals, ground_truth, out_file, out_csv;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic benchmark");
    add_common(gen, gen_o);
    gen->add_option("--out", out_dir, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, train_o);
    std::string train_data, train_out;
    train->add_option("--data", train_data, "dataset root or split directory")->required();
    train->add_option("--out", train_out, "run output directory")->required();

    auto* loc = app.add_subcommand("localize", "emit scored temporal proposals");
    add_common(loc, loc_o);
    std::string loc_data, loc_ckpt, loc_out;
    loc->add_option("--checkpoint", loc_ckpt, "model checkpoint")->required();
    loc->add_option("--data", loc_data, "dataset root or split directory")->required();
    loc->add_option("--out", loc_out, "proposals JSON-lines file")->required();

    auto* ev = app.add_subcommand("eval", "mAP table from proposals and ground truth");
    add_common(ev, eval_o);
    ev->add_option("--proposals", proposals, "proposals JSON-lines file")->required();
    ev->add_option("--ground-truth", ground_truth, "annotations.jsonl or split directory")
        ->required();
    ev->add_option("--out", out_csv, "output CSV path");

    auto* audit = app.add_subcommand("label-audit", "pseudo-label quality audit (PL/PCL/MPCL)");
    add_common(audit, audit_o);
    std::string audit_data, audit_ckpt, audit_out;
    audit->add_option("--checkpoint", audit_ckpt, "model checkpoint")->required();
    audit->add_option("--data", audit_data, "dataset root or split directory")->required();
    audit->add_option("--out", audit_out, "output CSV path")->required();

    auto* ablate = app.add_subcommand("ablate", "run the loss ablation matrix");
    add_common(ablate, ablate_o);
    std::string ablate_data, ablate_out;
    ablate->add_option("--data", ablate_data, "dataset root directory")->required();
    ablate->add_option("--out", ablate_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage problems are config errors (exit 2); --help exits 0.
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    ConfigPtr cfg(procl_config_new());
    if (!cfg) {
        std::fprintf(stderr, "procl: error: out of memory\n");
        return 1;
    }

    if (gen->parsed()) {
        if (int rc = apply_overrides(cfg, gen_o); rc != 0) return rc;
        if (auto st = procl_gen_data(cfg.get(), out_dir.c_str()); st != PROCL_OK)
            return fail(st);
        std::printf("dataset written to %s\n", out_dir.c_str());
        return 0;
    }
    if (train->parsed()) {
        if (int rc = apply_overrides(cfg, train_o); rc != 0) return rc;
        if (auto st = procl_train(cfg.get(), train_data.c_str(), train_out.c_str());
            st != PROCL_OK)
            return fail(st);
        std::printf("run artifacts written to %s\n", train_out.c_str());
        return 0;
    }
    if (loc->parsed()) {
        if (int rc = apply_overrides(cfg, loc_o); rc != 0) return rc;
        if (auto st = procl_localize(cfg.get(), loc_ckpt.c_str(), loc_data.c_str(),
                                     loc_out.c_str());
            st != PROCL_OK)
            return fail(st);
        std::printf("proposals written to %s\n", loc_out.c_str());
        return 0;
    }
    if (ev->parsed()) {
        if (int rc = apply_overrides(cfg, eval_o); rc != 0) return rc;
        char* table = nullptr;
        if (auto st = procl_evaluate(cfg.get(), proposals.c_str(), ground_truth.c_str(),
                                     out_csv.empty() ? nullptr : out_csv.c_str(), &table);
            st != PROCL_OK)
            return fail(st);
        if (table) {
            std::fputs(table, stdout);
            procl_string_free(table);
        }
        return 0;
    }
    if (audit->parsed()) {
        if (int rc = apply_overrides(cfg, audit_o); rc != 0) return rc;
        if (auto st = procl_label_audit(cfg.get(), audit_ckpt.c_str(), audit_data.c_str(),
                                        audit_out.c_str());
            st != PROCL_OK)
            return fail(st);
        std::printf("audit written to %s\n", audit_out.c_str());
        return 0;
    }
    if (ablate->parsed()) {
        if (int rc = apply_overrides(cfg, ablate_o); rc != 0) return rc;
        char* table = nullptr;
        if (auto st = procl_ablate(cfg.get(), ablate_data.c_str(), ablate_out.c_str(), &table);
            st != PROCL_OK)
            return fail(st);
        if (table) {
            std::fputs(table, stdout);
            procl_string_free(table);
        }
        return 0;
    }
    return 2;
}

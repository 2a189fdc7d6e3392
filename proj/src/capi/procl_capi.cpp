#include "procl/procl.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "core/runner.hpp"

using namespace procl;

namespace {

thread_local std::string t_last_error;

void set_error(const std::string& msg) { t_last_error = msg; }

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
procl_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return PROCL_OK;
    } catch (const ConfigError& e) {
        set_error(e.what());
        return PROCL_ERR_CONFIG;
    } catch (const NumericError& e) {
        set_error(e.what());
        return PROCL_ERR_NUMERIC;
    } catch (const IoError& e) {
        set_error(e.what());
        return PROCL_ERR_IO;
    } catch (const DataError& e) {
        set_error(e.what());
        return PROCL_ERR_DATA;
    } catch (const std::exception& e) {
        set_error(e.what());
        return PROCL_ERR_GENERIC;
    } catch (...) {
        set_error("unknown error");
        return PROCL_ERR_GENERIC;
    }
}

bool require(bool ok, const char* what) {
    if (!ok) set_error(std::string("invalid argument: ") + what);
    return ok;
}

}  // namespace

struct procl_config {
    RunConfig cfg = RunConfig::defaults();
};

struct procl_dataset {
    Dataset ds;
};

extern "C" {

const char* procl_version(void) { return "1.0.0"; }

const char* procl_last_error(void) { return t_last_error.c_str(); }

procl_config* procl_config_new(void) {
    try {
        return new procl_config;
    } catch (...) {
        return nullptr;
    }
}

void procl_config_free(procl_config* cfg) { delete cfg; }

procl_status procl_config_load_file(procl_config* cfg, const char* path) {
    if (!require(cfg && path, "procl_config_load_file(cfg, path)")) return PROCL_ERR_INVALID_ARG;
    return guarded([&] { cfg->cfg = RunConfig::from_file(path); });
}

procl_status procl_config_set(procl_config* cfg, const char* key, const char* value) {
    if (!require(cfg && key && value, "procl_config_set(cfg, key, value)"))
        return PROCL_ERR_INVALID_ARG;
    return guarded([&] { cfg->cfg.set(key, value); });
}

char* procl_config_dump(const procl_config* cfg) {
    if (!require(cfg != nullptr, "procl_config_dump(cfg)")) return nullptr;
    try {
        return dup_string(cfg->cfg.to_json_text());
    } catch (...) {
        return nullptr;
    }
}

void procl_string_free(char* s) { std::free(s); }

procl_status procl_gen_data(const procl_config* cfg, const char* out_dir) {
    if (!require(cfg && out_dir, "procl_gen_data(cfg, out_dir)")) return PROCL_ERR_INVALID_ARG;
    return guarded([&] { run_gen_data(cfg->cfg, out_dir); });
}

procl_dataset* procl_dataset_open(const char* dir) {
    if (!require(dir != nullptr, "procl_dataset_open(dir)")) return nullptr;
    procl_dataset* out = nullptr;
    guarded([&] { out = new procl_dataset{load_dataset(dir)}; });
    return out;
}

void procl_dataset_free(procl_dataset* ds) { delete ds; }

int procl_dataset_num_videos(const procl_dataset* ds) {
    return ds ? static_cast<int>(ds->ds.videos.size()) : -1;
}

int procl_dataset_num_classes(const procl_dataset* ds) { return ds ? ds->ds.num_classes : -1; }

int procl_dataset_feature_dim(const procl_dataset* ds) { return ds ? ds->ds.feature_dim : -1; }

const char* procl_dataset_video_id(const procl_dataset* ds, int index) {
    if (!ds || index < 0 || index >= static_cast<int>(ds->ds.videos.size())) return nullptr;
    return ds->ds.videos[static_cast<size_t>(index)].id.c_str();
}

procl_status procl_train(const procl_config* cfg, const char* data_dir, const char* out_dir) {
    if (!require(cfg && data_dir && out_dir, "procl_train(cfg, data_dir, out_dir)"))
        return PROCL_ERR_INVALID_ARG;
    return guarded([&] { run_train(cfg->cfg, data_dir, out_dir); });
}

procl_status procl_localize(const procl_config* cfg, const char* checkpoint,
                            const char* data_dir, const char* out_file) {
    if (!require(cfg && checkpoint && data_dir && out_file,
                 "procl_localize(cfg, checkpoint, data_dir, out_file)"))
        return PROCL_ERR_INVALID_ARG;
    return guarded([&] { run_localize(cfg->cfg, checkpoint, data_dir, out_file); });
}

procl_status procl_evaluate(const procl_config* cfg, const char* proposals_file,
                            const char* ground_truth, const char* out_csv, char** table_text) {
    if (!require(cfg && proposals_file && ground_truth,
                 "procl_evaluate(cfg, proposals_file, ground_truth, ...)"))
        return PROCL_ERR_INVALID_ARG;
    return guarded([&] {
        const std::string table = run_eval(cfg->cfg, proposals_file, ground_truth,
                                           out_csv ? out_csv : "");
        if (table_text) *table_text = dup_string(table);
    });
}

procl_status procl_label_audit(const procl_config* cfg, const char* checkpoint,
                               const char* data_dir, const char* out_csv) {
    if (!require(cfg && checkpoint && data_dir && out_csv,
                 "procl_label_audit(cfg, checkpoint, data_dir, out_csv)"))
        return PROCL_ERR_INVALID_ARG;
    return guarded([&] { run_label_audit(cfg->cfg, checkpoint, data_dir, out_csv); });
}

procl_status procl_ablate(const procl_config* cfg, const char* data_root, const char* out_dir,
                          char** table_text) {
    if (!require(cfg && data_root && out_dir, "procl_ablate(cfg, data_root, out_dir, ...)"))
        return PROCL_ERR_INVALID_ARG;
    return guarded([&] {
        const std::string table = run_ablate(cfg->cfg, data_root, out_dir);
        if (table_text) *table_text = dup_string(table);
    });
}

}  // extern "C"

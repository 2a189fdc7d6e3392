#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "procl/procl.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("procl_capi_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

struct Config {
    procl_config* c = procl_config_new();
    ~Config() { procl_config_free(c); }
};

// Small-footprint dataset so the API round trip stays fast.
void shrink(procl_config* c) {
    REQUIRE(procl_config_set(c, "train.iterations", "2") == PROCL_OK);
    REQUIRE(procl_config_set(c, "train.snippets", "8") == PROCL_OK);
    REQUIRE(procl_config_set(c, "train.batch_size", "2") == PROCL_OK);
}

}  // namespace

TEST_CASE("version and error strings are always available") {
    CHECK(procl_version() != nullptr);
    CHECK(procl_last_error() != nullptr);
}

TEST_CASE("config handle: defaults, overrides, dump, rejection") {
    Config cfg;
    REQUIRE(cfg.c != nullptr);
    CHECK(procl_config_set(cfg.c, "seed", "11") == PROCL_OK);
    CHECK(procl_config_set(cfg.c, "train.theta", "0.4") == PROCL_OK);
    CHECK(procl_config_set(cfg.c, "train.flags", "cl,fbd") == PROCL_OK);

    CHECK(procl_config_set(cfg.c, "train.theta", "2.5") == PROCL_ERR_CONFIG);
    CHECK(std::strlen(procl_last_error()) > 0);
    CHECK(procl_config_set(cfg.c, "no.such.key", "1") == PROCL_ERR_CONFIG);
    CHECK(procl_config_set(nullptr, "seed", "1") == PROCL_ERR_INVALID_ARG);

    char* dump = procl_config_dump(cfg.c);
    REQUIRE(dump != nullptr);
    CHECK(std::string(dump).find("\"seed\": 11") != std::string::npos);
    CHECK(std::string(dump).find("\"theta\": 0.4") != std::string::npos);
    procl_string_free(dump);
}

TEST_CASE("config file loading: missing file and malformed JSON") {
    Config cfg;
    CHECK(procl_config_load_file(cfg.c, "/nonexistent/procl.json") == PROCL_ERR_IO);
    TempDir tmp;
    const auto bad = tmp.path / "bad.json";
    std::ofstream(bad) << "{ not json";
    CHECK(procl_config_load_file(cfg.c, bad.c_str()) == PROCL_ERR_CONFIG);
    const auto unknown = tmp.path / "unknown.json";
    std::ofstream(unknown) << "{\"train\": {\"bogus_knob\": 3}}";
    CHECK(procl_config_load_file(cfg.c, unknown.c_str()) == PROCL_ERR_CONFIG);
    CHECK(std::string(procl_last_error()).find("bogus_knob") != std::string::npos);
    const auto good = tmp.path / "good.json";
    std::ofstream(good) << "{\"seed\": 3, \"train\": {\"iterations\": 5}}";
    CHECK(procl_config_load_file(cfg.c, good.c_str()) == PROCL_OK);
}

TEST_CASE("dataset generation and the dataset handle") {
    TempDir tmp;
    Config cfg;
    shrink(cfg.c);
    // Tiny dataset.
    REQUIRE(procl_config_set(cfg.c, "seed", "5") == PROCL_OK);
    const auto data_dir = tmp.path / "data";
    REQUIRE(procl_gen_data(cfg.c, data_dir.c_str()) == PROCL_OK);
    CHECK(fs::exists(data_dir / "train" / "meta.json"));
    CHECK(fs::exists(data_dir / "test" / "annotations.jsonl"));
    CHECK(fs::exists(data_dir / "config.json"));

    procl_dataset* ds = procl_dataset_open((data_dir / "train").c_str());
    REQUIRE(ds != nullptr);
    CHECK(procl_dataset_num_videos(ds) == 60);
    CHECK(procl_dataset_num_classes(ds) == 6);
    CHECK(procl_dataset_feature_dim(ds) == 32);
    CHECK(procl_dataset_video_id(ds, 0) == std::string("train_0000"));
    CHECK(procl_dataset_video_id(ds, 999999) == nullptr);
    procl_dataset_free(ds);

    CHECK(procl_dataset_open((tmp.path / "missing").c_str()) == nullptr);
    CHECK(std::strlen(procl_last_error()) > 0);
}

TEST_CASE("train, localize, evaluate, audit and ablate through the C surface") {
    TempDir tmp;
    Config cfg;
    shrink(cfg.c);
    REQUIRE(procl_config_set(cfg.c, "seed", "9") == PROCL_OK);

    const auto data_dir = tmp.path / "data";
    REQUIRE(procl_gen_data(cfg.c, data_dir.c_str()) == PROCL_OK);

    const auto run_dir = tmp.path / "run";
    REQUIRE(procl_train(cfg.c, data_dir.c_str(), run_dir.c_str()) == PROCL_OK);
    const auto ckpt = run_dir / "checkpoint_final.pckp";
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(run_dir / "loss.csv"));
    CHECK(fs::exists(run_dir / "audit.csv"));

    const auto props = tmp.path / "proposals.jsonl";
    REQUIRE(procl_localize(cfg.c, ckpt.c_str(), data_dir.c_str(), props.c_str()) == PROCL_OK);
    CHECK(fs::exists(props));

    char* table = nullptr;
    const auto eval_csv = tmp.path / "eval.csv";
    REQUIRE(procl_evaluate(cfg.c, props.c_str(), (data_dir / "test").c_str(), eval_csv.c_str(),
                           &table) == PROCL_OK);
    REQUIRE(table != nullptr);
    CHECK(std::string(table).find("mAP") != std::string::npos);
    procl_string_free(table);
    CHECK(fs::exists(eval_csv));

    const auto audit_csv = tmp.path / "audit.csv";
    REQUIRE(procl_label_audit(cfg.c, ckpt.c_str(), data_dir.c_str(), audit_csv.c_str()) ==
            PROCL_OK);
    std::ifstream audit(audit_csv);
    std::string header;
    std::getline(audit, header);
    CHECK(header == "iteration,method,precision,coverage");

    // Error paths surface as status codes with messages.
    CHECK(procl_localize(cfg.c, (tmp.path / "nope.pckp").c_str(), data_dir.c_str(),
                         props.c_str()) == PROCL_ERR_IO);
    CHECK(procl_evaluate(cfg.c, (tmp.path / "nope.jsonl").c_str(), (data_dir / "test").c_str(),
                         nullptr, nullptr) == PROCL_ERR_IO);
    CHECK(procl_train(nullptr, "x", "y") == PROCL_ERR_INVALID_ARG);
}

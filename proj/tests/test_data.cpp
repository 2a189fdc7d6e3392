#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "core/data.hpp"
#include "oracles.hpp"

using namespace procl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("procl_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.num_classes = 4;
    s.feature_dim = 8;
    s.train_videos = 6;
    s.test_videos = 3;
    s.min_len = 20;
    s.max_len = 30;
    s.min_instances = 1;
    s.max_instances = 3;
    s.min_duration = 3;
    s.max_duration = 6;
    s.confusable_pairs = {{0, 1}};
    return s;
}

}  // namespace

TEST_CASE("sampling indices: identity, downsampling, and constant sequences") {
    CHECK(sample_indices(4, 4) == std::vector<int>{0, 1, 2, 3});
    CHECK(sample_indices(4, 2) == std::vector<int>{0, 3});
    CHECK(sample_indices(1, 3) == std::vector<int>{0, 0, 0});
    CHECK_THROWS_AS(sample_indices(4, 0), ShapeError);

    Mat constant_feats(5, 2, 3.5);
    for (int target : {1, 2, 3, 7, 11}) {
        const auto out = sample_snippets(constant_feats, target);
        CHECK(out.rows == target);
        for (double v : out.v) CHECK(v == 3.5);
    }
}

TEST_CASE("generation is deterministic and respects structural invariants") {
    const auto spec = small_spec();
    const auto d1 = generate(spec, 99);
    const auto d2 = generate(spec, 99);
    CHECK(d1.train.videos.size() == 6);
    CHECK(d1.test.videos.size() == 3);
    for (size_t i = 0; i < d1.train.videos.size(); ++i) {
        CHECK(d1.train.videos[i].features.v == d2.train.videos[i].features.v);
        CHECK(d1.train.videos[i].snippet_labels == d2.train.videos[i].snippet_labels);
    }
    const auto d3 = generate(spec, 100);
    CHECK(d1.train.videos[0].features.v != d3.train.videos[0].features.v);

    std::set<std::string> ids;
    for (const auto& split : {&d1.train, &d1.test})
        for (const auto& v : split->videos) {
            CHECK(ids.insert(v.id).second);  // ids unique across splits
            CHECK(v.length() >= spec.min_len);
            CHECK(v.length() <= spec.max_len);
            CHECK(!v.segments.empty());
            CHECK(!v.labels.empty());

            // >= 1 background snippet; snippet labels match segments; no overlap.
            int bg_count = 0;
            for (int s : v.snippet_labels) bg_count += s == spec.num_classes ? 1 : 0;
            CHECK(bg_count >= 1);
            std::vector<int> expected(static_cast<size_t>(v.length()), spec.num_classes);
            double prev_end = -1.0;
            for (const auto& seg : v.segments) {
                CHECK(seg.t_start >= prev_end);  // non-overlapping, sorted
                prev_end = seg.t_end;
                CHECK(seg.t_end <= v.length() * spec.snippet_duration_sec + 1e-9);
                for (int t = static_cast<int>(seg.t_start); t < static_cast<int>(seg.t_end); ++t)
                    expected[static_cast<size_t>(t)] = seg.cls;
            }
            CHECK(v.snippet_labels == expected);

            // Y_c = 1 iff a segment of class c exists.
            std::set<int> seg_classes;
            for (const auto& seg : v.segments) seg_classes.insert(seg.cls);
            CHECK(std::vector<int>(seg_classes.begin(), seg_classes.end()) == v.labels);
        }
}

TEST_CASE("noise-free features are perfectly separable by nearest prototype") {
    auto spec = small_spec();
    spec.noise_sigma = 0.0;
    spec.context_snippets_max = 0;  // context/hard-bg snippets deliberately lean off-prototype
    spec.hard_bg_fraction = 0.0;
    const auto data = generate(spec, 5);
    for (const auto& v : data.train.videos)
        for (int t = 0; t < v.length(); ++t)
            CHECK(oracle::nearest_prototype(data.prototypes,
                                            &v.features.v[static_cast<size_t>(t) * spec.feature_dim],
                                            spec.feature_dim) == v.snippet_labels[static_cast<size_t>(t)]);
}

TEST_CASE("confusable pairs push nearest-prototype accuracy below 100% but above chance") {
    SyntheticSpec spec = small_spec();
    spec.num_classes = 6;
    spec.train_videos = 20;
    spec.noise_sigma = 0.5;
    spec.confusable_pairs = {{0, 1}, {2, 3}};
    const auto data = generate(spec, 21);
    long long correct = 0, total = 0;
    for (const auto& v : data.train.videos)
        for (int t = 0; t < v.length(); ++t) {
            const int pred = oracle::nearest_prototype(
                data.prototypes, &v.features.v[static_cast<size_t>(t) * spec.feature_dim],
                spec.feature_dim);
            correct += pred == v.snippet_labels[static_cast<size_t>(t)] ? 1 : 0;
            ++total;
        }
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    CHECK(acc < 1.0);
    CHECK(acc > 1.0 / 7.0);
}

TEST_CASE("infeasible packing is rejected up front") {
    auto spec = small_spec();
    spec.min_len = spec.max_len = 5;
    spec.min_instances = spec.max_instances = 2;
    spec.min_duration = spec.max_duration = 4;
    CHECK_THROWS_AS(generate(spec, 1), ConfigError);
}

TEST_CASE("dataset round trip is exact") {
    TempDir tmp;
    const auto data = generate(small_spec(), 7);
    save_dataset(data.train, tmp.path / "train");
    const auto loaded = load_dataset(tmp.path / "train");
    CHECK(loaded.num_classes == data.train.num_classes);
    CHECK(loaded.feature_dim == data.train.feature_dim);
    CHECK(loaded.snippet_duration_sec == data.train.snippet_duration_sec);
    REQUIRE(loaded.videos.size() == data.train.videos.size());
    for (size_t i = 0; i < loaded.videos.size(); ++i) {
        const auto& a = loaded.videos[i];
        const auto& b = data.train.videos[i];
        CHECK(a.id == b.id);
        CHECK(a.features.v == b.features.v);  // bit-exact
        CHECK(a.labels == b.labels);
        CHECK(a.snippet_labels == b.snippet_labels);
        REQUIRE(a.segments.size() == b.segments.size());
        for (size_t s = 0; s < a.segments.size(); ++s) {
            CHECK(a.segments[s].t_start == b.segments[s].t_start);
            CHECK(a.segments[s].t_end == b.segments[s].t_end);
            CHECK(a.segments[s].cls == b.segments[s].cls);
        }
    }
}

TEST_CASE("truncated feature files and version mismatches are rejected") {
    TempDir tmp;
    const auto data = generate(small_spec(), 8);
    save_dataset(data.train, tmp.path / "train");

    const auto feat = tmp.path / "train" / "features" / (data.train.videos[0].id + ".feat");
    {
        // Chop the file in half.
        std::ifstream in(feat, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out(feat, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_dataset(tmp.path / "train"), DataError);

    // Fresh copy with a bumped meta version.
    save_dataset(data.train, tmp.path / "v2");
    {
        std::ofstream meta(tmp.path / "v2" / "meta.json", std::ios::trunc);
        meta << "{\"format_version\": 999, \"num_classes\": 4, \"feature_dim\": 8,"
                "\"num_videos\": 6, \"snippet_duration_sec\": 1.0}\n";
    }
    try {
        load_dataset(tmp.path / "v2");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    // Corrupt a stored label so annotations disagree with segments.
    save_dataset(data.train, tmp.path / "v3");
    {
        std::ifstream in(tmp.path / "v3" / "annotations.jsonl");
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto pos = all.find("\"labels\":[");
        REQUIRE(pos != std::string::npos);
        all.replace(pos, 10, "\"labels\":[4,");
        std::ofstream out(tmp.path / "v3" / "annotations.jsonl", std::ios::trunc);
        out << all;
    }
    CHECK_THROWS_AS(load_dataset(tmp.path / "v3"), DataError);
}

#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

namespace procl {

namespace {

using nlohmann::json;

constexpr char kFeatureMagic[4] = {'P', 'C', 'L', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

std::vector<double> random_direction(Rng& rng, int dim) {
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
    } while (norm < 1e-9);
    for (auto& x : v) x /= norm;
    return v;
}

// Places n non-overlapping instances of the given durations into a video of
// len snippets, leaving at least one background snippet. Returns start
// offsets.
std::vector<int> place_instances(const std::vector<int>& durations, int len, Rng& rng) {
    int total = 0;
    for (int d : durations) total += d;
    const int free_snips = len - total;  // >= 1 checked by caller
    const int n = static_cast<int>(durations.size());
    std::vector<int> gaps(n + 1, 0);
    for (int u = 0; u < free_snips; ++u) ++gaps[rng.uniform_int(0, n)];
    std::vector<int> starts(n);
    int pos = 0;
    for (int i = 0; i < n; ++i) {
        pos += gaps[i];
        starts[i] = pos;
        pos += durations[i];
    }
    return starts;
}

VideoRecord generate_video(const SyntheticSpec& spec, const Mat& prototypes,
                           const std::string& id, Rng& rng) {
    const int C = spec.num_classes;
    const int bg = C;
    VideoRecord v;
    v.id = id;

    const int len = rng.uniform_int(spec.min_len, spec.max_len);
    // Pick the distinct classes appearing in this video.
    const int want_classes = rng.uniform_int(1, spec.max_classes_per_video);
    std::vector<int> pool(C);
    for (int c = 0; c < C; ++c) pool[c] = c;
    for (int i = 0; i < want_classes; ++i)
        std::swap(pool[i], pool[rng.uniform_int(i, C - 1)]);
    pool.resize(want_classes);

    // Draw the instance count and durations until they pack; spec.validate()
    // guarantees the minimal configuration always fits.
    int n_inst = 0;
    std::vector<int> durations;
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 200)
            throw DataError(cat("generate: cannot pack instances into video of ", len,
                                " snippets"));
        n_inst = rng.uniform_int(spec.min_instances, spec.max_instances);
        n_inst = std::max(n_inst, std::min(want_classes, spec.max_instances));
        durations.assign(n_inst, 0);
        int total = 0;
        for (auto& d : durations) {
            d = rng.uniform_int(spec.min_duration, spec.max_duration);
            total += d;
        }
        if (total <= len - 1) break;
    }

    // Every drawn class appears at least once; remaining instances choose
    // uniformly among them.
    std::vector<int> inst_class(n_inst);
    const int n_cls = std::min<int>(want_classes, n_inst);
    for (int i = 0; i < n_inst; ++i)
        inst_class[i] = i < n_cls ? pool[i] : pool[rng.uniform_int(0, want_classes - 1)];

    const auto starts = place_instances(durations, len, rng);
    v.snippet_labels.assign(len, bg);
    for (int i = 0; i < n_inst; ++i) {
        for (int t = starts[i]; t < starts[i] + durations[i]; ++t) v.snippet_labels[t] = inst_class[i];
        GtSegment seg;
        seg.t_start = starts[i] * spec.snippet_duration_sec;
        seg.t_end = (starts[i] + durations[i]) * spec.snippet_duration_sec;
        seg.cls = inst_class[i];
        v.segments.push_back(seg);
    }
    std::sort(v.segments.begin(), v.segments.end(),
              [](const GtSegment& a, const GtSegment& b) { return a.t_start < b.t_start; });

    std::set<int> used;
    for (int c : inst_class) used.insert(c);
    v.labels.assign(used.begin(), used.end());

    // lean[t]: class prototype a background snippet leans toward (or -1),
    // with the mixing strength in lean_strength[t].
    std::vector<int> lean(static_cast<size_t>(len), -1);
    std::vector<double> lean_strength(static_cast<size_t>(len), 0.0);

    // Hard background runs, placed over the remaining background stretches.
    if (spec.hard_bg_fraction > 0.0) {
        int t = 0;
        while (t < len) {
            if (v.snippet_labels[static_cast<size_t>(t)] != bg) {
                ++t;
                continue;
            }
            int end = t;
            while (end + 1 < len && v.snippet_labels[static_cast<size_t>(end + 1)] == bg) ++end;
            // Partition [t, end] into runs, each hard with the given odds.
            int pos = t;
            while (pos <= end) {
                const int run =
                    std::min(end - pos + 1,
                             rng.uniform_int(spec.hard_bg_run_min, spec.hard_bg_run_max));
                if (rng.uniform() < spec.hard_bg_fraction) {
                    const int mode = rng.uniform_int(0, C - 1);
                    for (int u = pos; u < pos + run; ++u) {
                        lean[static_cast<size_t>(u)] = mode;
                        lean_strength[static_cast<size_t>(u)] = spec.hard_bg_strength;
                    }
                }
                pos += run;
            }
            t = end + 1;
        }
    }

    // Context snippets flanking each instance lean toward its class.
    if (spec.context_snippets_max > 0) {
        for (int i = 0; i < n_inst; ++i) {
            const int left = rng.uniform_int(0, spec.context_snippets_max);
            const int right = rng.uniform_int(0, spec.context_snippets_max);
            for (int t = starts[i] - left; t < starts[i]; ++t)
                if (t >= 0 && v.snippet_labels[static_cast<size_t>(t)] == bg) {
                    lean[static_cast<size_t>(t)] = inst_class[i];
                    lean_strength[static_cast<size_t>(t)] = spec.context_strength;
                }
            const int end = starts[i] + durations[i];
            for (int t = end; t < std::min(len, end + right); ++t)
                if (v.snippet_labels[static_cast<size_t>(t)] == bg) {
                    lean[static_cast<size_t>(t)] = inst_class[i];
                    lean_strength[static_cast<size_t>(t)] = spec.context_strength;
                }
        }
    }

    v.features = Mat(len, spec.feature_dim);
    for (int t = 0; t < len; ++t) {
        const int proto_row = v.snippet_labels[t];
        const int mix = lean[static_cast<size_t>(t)];
        for (int d = 0; d < spec.feature_dim; ++d) {
            double base = prototypes.at(proto_row, d);
            if (mix >= 0)
                base += lean_strength[static_cast<size_t>(t)] *
                        (prototypes.at(mix, d) - base);
            v.features.at(t, d) = base + spec.noise_sigma * rng.normal();
        }
    }
    return v;
}

Dataset generate_split(const SyntheticSpec& spec, const Mat& prototypes, int count,
                       const std::string& prefix, Rng& rng) {
    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.feature_dim = spec.feature_dim;
    ds.snippet_duration_sec = spec.snippet_duration_sec;
    for (int i = 0; i < count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s_%04d", prefix.c_str(), i);
        ds.videos.push_back(generate_video(spec, prototypes, buf, rng));
    }
    return ds;
}

void check_record(const VideoRecord& v, int num_classes, double snippet_sec) {
    const double duration = v.length() * snippet_sec;
    std::vector<int> expected(v.length(), num_classes);
    std::set<int> label_set;
    for (const auto& s : v.segments) {
        if (!(s.t_start < s.t_end) || s.t_start < 0.0 || s.t_end > duration + 1e-9)
            throw DataError(cat("video ", v.id, ": segment [", s.t_start, ",", s.t_end,
                                ") outside [0,", duration, ")"));
        if (s.cls < 0 || s.cls >= num_classes)
            throw DataError(cat("video ", v.id, ": segment class ", s.cls, " out of range"));
        label_set.insert(s.cls);
        const int a = static_cast<int>(std::llround(s.t_start / snippet_sec));
        const int b = static_cast<int>(std::llround(s.t_end / snippet_sec));
        for (int t = a; t < b; ++t) expected[t] = s.cls;
    }
    if (std::vector<int>(label_set.begin(), label_set.end()) != v.labels)
        throw DataError(cat("video ", v.id, ": stored labels disagree with segments"));
    if (!v.snippet_labels.empty() && v.snippet_labels != expected)
        throw DataError(cat("video ", v.id, ": snippet labels disagree with segments"));
}

}  // namespace

void SyntheticSpec::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("synthetic spec: " + msg);
    };
    require(num_classes >= 1, "num_classes >= 1");
    require(feature_dim >= 1, "feature_dim >= 1");
    require(train_videos >= 1 && test_videos >= 0, "video counts");
    require(min_len >= 2 && min_len <= max_len, "video length range");
    require(min_instances >= 1 && min_instances <= max_instances, "instance count range");
    require(min_duration >= 1 && min_duration <= max_duration, "duration range");
    require(max_classes_per_video >= 1 && max_classes_per_video <= num_classes,
            "max_classes_per_video in [1, num_classes]");
    require(noise_sigma >= 0.0, "noise_sigma >= 0");
    require(context_snippets_max >= 0, "context_snippets_max >= 0");
    require(context_strength >= 0.0 && context_strength <= 1.0, "context_strength in [0,1]");
    require(hard_bg_fraction >= 0.0 && hard_bg_fraction <= 1.0, "hard_bg_fraction in [0,1]");
    require(hard_bg_strength >= 0.0 && hard_bg_strength <= 1.0, "hard_bg_strength in [0,1]");
    require(hard_bg_run_min >= 1 && hard_bg_run_min <= hard_bg_run_max, "hard_bg run range");
    require(snippet_duration_sec > 0.0, "snippet_duration_sec > 0");
    // The smallest legal draw must fit in the shortest video, background
    // snippet included; otherwise some videos cannot be packed.
    const int base = std::max(min_instances, std::min(max_classes_per_video, max_instances));
    require(base * min_duration + 1 <= min_len,
            cat("infeasible packing: ", base, " instance(s) of >= ", min_duration,
                " snippets plus background do not fit in ", min_len, " snippets"));
    for (auto [a, b] : confusable_pairs) {
        require(a >= 0 && a < num_classes && b >= 0 && b < num_classes && a != b,
                cat("confusable pair (", a, ",", b, ") invalid"));
    }
}

SyntheticData generate(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticData out;

    Rng proto_rng = Rng::substream(seed, "data.proto");
    out.prototypes = Mat(spec.num_classes + 1, spec.feature_dim);
    for (int c = 0; c < spec.num_classes; ++c) {
        auto dir = random_direction(proto_rng, spec.feature_dim);
        for (int d = 0; d < spec.feature_dim; ++d)
            out.prototypes.at(c, d) = spec.prototype_norm * dir[d];
    }
    // Confusable twin sits at a controlled small distance from its partner.
    for (auto [a, b] : spec.confusable_pairs) {
        auto dir = random_direction(proto_rng, spec.feature_dim);
        for (int d = 0; d < spec.feature_dim; ++d)
            out.prototypes.at(b, d) = out.prototypes.at(a, d) + spec.confusable_distance * dir[d];
    }
    auto bg_dir = random_direction(proto_rng, spec.feature_dim);
    for (int d = 0; d < spec.feature_dim; ++d)
        out.prototypes.at(spec.num_classes, d) = spec.background_norm * bg_dir[d];

    Rng train_rng = Rng::substream(seed, "data.train");
    Rng test_rng = Rng::substream(seed, "data.test");
    out.train = generate_split(spec, out.prototypes, spec.train_videos, "train", train_rng);
    out.test = generate_split(spec, out.prototypes, spec.test_videos, "test", test_rng);
    return out;
}

std::vector<int> sample_indices(int source_len, int target_len) {
    if (source_len < 1) throw ShapeError(cat("sample_indices: source_len=", source_len));
    if (target_len < 1) throw ShapeError(cat("sample_indices: target_len=", target_len));
    std::vector<int> idx(target_len);
    if (target_len == 1) {
        idx[0] = static_cast<int>(std::llround((source_len - 1) / 2.0));
        return idx;
    }
    for (int i = 0; i < target_len; ++i)
        idx[i] = static_cast<int>(
            std::llround(static_cast<double>(i) * (source_len - 1) / (target_len - 1)));
    return idx;
}

Mat sample_snippets(const Mat& features, int target_len) {
    const auto idx = sample_indices(features.rows, target_len);
    Mat out(target_len, features.cols);
    for (int i = 0; i < target_len; ++i)
        for (int d = 0; d < features.cols; ++d) out.at(i, d) = features.at(idx[i], d);
    return out;
}

namespace {

void write_features(const std::filesystem::path& path, const Mat& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(kFeatureMagic, 4);
    const std::uint32_t ver = kFormatVersion, T = m.rows, D = m.cols;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    f.write(reinterpret_cast<const char*>(&T), 4);
    f.write(reinterpret_cast<const char*>(&D), 4);
    f.write(reinterpret_cast<const char*>(m.v.data()),
            static_cast<std::streamsize>(m.v.size() * sizeof(double)));
    if (!f) throw IoError("write failed: " + path.string());
}

Mat read_features(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    char magic[4];
    std::uint32_t ver = 0, T = 0, D = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&ver), 4);
    f.read(reinterpret_cast<char*>(&T), 4);
    f.read(reinterpret_cast<char*>(&D), 4);
    if (!f || std::memcmp(magic, kFeatureMagic, 4) != 0)
        throw DataError("bad feature file header: " + path.string());
    if (ver != kFormatVersion)
        throw DataError(cat("feature file version ", ver, " incompatible with ", kFormatVersion,
                            ": ", path.string()));
    if (T == 0 || D == 0 || T > (1u << 24) || D > (1u << 20))
        throw DataError(cat("implausible feature dims ", T, "x", D, ": ", path.string()));
    Mat m(static_cast<int>(T), static_cast<int>(D));
    f.read(reinterpret_cast<char*>(m.v.data()),
           static_cast<std::streamsize>(m.v.size() * sizeof(double)));
    if (!f || static_cast<size_t>(f.gcount()) != m.v.size() * sizeof(double))
        throw DataError("truncated feature file: " + path.string());
    return m;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "features", ec);
    if (ec) throw IoError("cannot create " + (dir / "features").string() + ": " + ec.message());

    json meta{{"format_version", kFormatVersion},
              {"num_classes", ds.num_classes},
              {"feature_dim", ds.feature_dim},
              {"num_videos", ds.videos.size()},
              {"snippet_duration_sec", ds.snippet_duration_sec}};
    std::ofstream mf(dir / "meta.json");
    if (!mf) throw IoError("cannot open for write: " + (dir / "meta.json").string());
    mf << meta.dump(2) << "\n";

    std::ofstream af(dir / "annotations.jsonl");
    if (!af) throw IoError("cannot open for write: " + (dir / "annotations.jsonl").string());
    for (const auto& v : ds.videos) {
        // Classes are 1-based on disk; 0 marks background in snippet labels.
        json segs = json::array();
        for (const auto& s : v.segments)
            segs.push_back({{"t_start", s.t_start}, {"t_end", s.t_end}, {"class", s.cls + 1}});
        json labels = json::array();
        for (int c : v.labels) labels.push_back(c + 1);
        json rec{{"video_id", v.id},
                 {"num_snippets", v.length()},
                 {"labels", labels},
                 {"segments", segs}};
        if (!v.snippet_labels.empty()) {
            json snip = json::array();
            for (int s : v.snippet_labels) snip.push_back(s == ds.num_classes ? 0 : s + 1);
            rec["snippet_labels"] = snip;
        }
        af << rec.dump() << "\n";
        write_features(dir / "features" / (v.id + ".feat"), v.features);
    }
    if (!af) throw IoError("write failed: " + (dir / "annotations.jsonl").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw IoError("cannot open: " + (dir / "meta.json").string());
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw DataError(cat("malformed meta.json in ", dir.string(), ": ", e.what()));
    }
    if (meta.value("format_version", 0u) != kFormatVersion)
        throw DataError(cat("dataset format version ", meta.value("format_version", 0u),
                            " incompatible with ", kFormatVersion, ": ", dir.string()));
    Dataset ds;
    ds.num_classes = meta.at("num_classes").get<int>();
    ds.feature_dim = meta.at("feature_dim").get<int>();
    ds.snippet_duration_sec = meta.at("snippet_duration_sec").get<double>();

    std::ifstream af(dir / "annotations.jsonl");
    if (!af) throw IoError("cannot open: " + (dir / "annotations.jsonl").string());
    std::string line;
    int line_no = 0;
    while (std::getline(af, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(cat("annotations.jsonl line ", line_no, ": ", e.what()));
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
                v.segments.push_back(seg);
            }
            if (rec.contains("snippet_labels"))
                for (const auto& s : rec["snippet_labels"]) {
                    const int raw = s.get<int>();
                    v.snippet_labels.push_back(raw == 0 ? ds.num_classes : raw - 1);
                }
        } catch (const json::exception& e) {
            throw DataError(cat("annotations.jsonl line ", line_no, " (", v.id, "): ", e.what()));
        }
        std::sort(v.labels.begin(), v.labels.end());
        v.features = read_features(dir / "features" / (v.id + ".feat"));
        if (v.features.cols != ds.feature_dim)
            throw DataError(cat("video ", v.id, ": feature dim ", v.features.cols, " vs dataset ",
                                ds.feature_dim));
        const int expected_len = rec.at("num_snippets").get<int>();
        if (v.length() != expected_len)
            throw DataError(cat("video ", v.id, ": ", v.length(), " snippets vs annotated ",
                                expected_len));
        check_record(v, ds.num_classes, ds.snippet_duration_sec);
        ds.videos.push_back(std::move(v));
    }
    if (ds.videos.empty()) throw DataError("empty dataset: " + dir.string());
    return ds;
}

std::vector<GtSegment> const* find_video_segments(const Dataset& ds, const std::string& id) {
    for (const auto& v : ds.videos)
        if (v.id == id) return &v.segments;
    return nullptr;
}

}  // namespace procl

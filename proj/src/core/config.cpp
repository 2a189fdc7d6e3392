#include "core/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace procl {

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
    throw ConfigError("config field '" + path + "': " + why);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
    for (const auto& [key, _] : obj.items())
        if (!known.count(key))
            throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) +
                              "'");
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& dst) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        bad_field(path + "." + key, e.what());
    }
}

}  // namespace

std::vector<double> parse_threshold_list(const std::string& text) {
    std::vector<double> out;
    const auto colon1 = text.find(':');
    try {
        if (colon1 != std::string::npos) {
            const auto colon2 = text.find(':', colon1 + 1);
            if (colon2 == std::string::npos)
                throw ConfigError("threshold range needs start:step:stop, got '" + text + "'");
            const double start = std::stod(text.substr(0, colon1));
            const double step = std::stod(text.substr(colon1 + 1, colon2 - colon1 - 1));
            const double stop = std::stod(text.substr(colon2 + 1));
            if (!(step > 0.0)) throw ConfigError("threshold range step must be > 0");
            // Snap to 6 decimals so accumulated steps land on clean values.
            for (double t = start; t <= stop + 1e-9; t += step)
                out.push_back(std::round(t * 1e6) / 1e6);
        } else {
            std::stringstream ss(text);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (!tok.empty()) out.push_back(std::stod(tok));
            }
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("cannot parse threshold list '" + text + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("cannot parse threshold list '" + text + "'");
    }
    if (out.empty()) throw ConfigError("empty threshold list '" + text + "'");
    return out;
}

AblationFlags parse_flags(const std::string& text) {
    AblationFlags f;
    if (text == "none" || text.empty()) return f;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "cl")
            f.cl = true;
        else if (tok == "pcl")
            f.pcl = true;
        else if (tok == "fbd")
            f.fbd = true;
        else if (tok == "mpcl")
            f.mpcl = true;
        else
            throw ConfigError("unknown ablation flag '" + tok +
                              "' (expected subset of cl,pcl,fbd,mpcl)");
    }
    return f;
}

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.inference.act_thresholds = InferenceConfig::default_act_thresholds();
    c.eval_thresholds = parse_threshold_list("0.1:0.1:0.7");
    c.train.seed = c.seed;
    return c;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(cat("config is not valid JSON: ", e.what()));
    }
    RunConfig c = defaults();
    check_keys(j, "", {"seed", "data", "model", "train", "inference", "eval"});
    read_field(j, "", "seed", c.seed);

    if (j.contains("data")) {
        const auto& d = j["data"];
        check_keys(d, "data",
                   {"num_classes", "feature_dim", "train_videos", "test_videos", "min_len",
                    "max_len", "min_instances", "max_instances", "min_duration", "max_duration",
                    "max_classes_per_video", "noise_sigma", "prototype_norm", "background_norm",
                    "confusable_distance", "confusable_pairs", "context_snippets_max",
                    "context_strength", "hard_bg_fraction", "hard_bg_strength",
                    "hard_bg_run_min", "hard_bg_run_max", "snippet_duration_sec"});
        read_field(d, "data", "num_classes", c.data.num_classes);
        read_field(d, "data", "feature_dim", c.data.feature_dim);
        read_field(d, "data", "train_videos", c.data.train_videos);
        read_field(d, "data", "test_videos", c.data.test_videos);
        read_field(d, "data", "min_len", c.data.min_len);
        read_field(d, "data", "max_len", c.data.max_len);
        read_field(d, "data", "min_instances", c.data.min_instances);
        read_field(d, "data", "max_instances", c.data.max_instances);
        read_field(d, "data", "min_duration", c.data.min_duration);
        read_field(d, "data", "max_duration", c.data.max_duration);
        read_field(d, "data", "max_classes_per_video", c.data.max_classes_per_video);
        read_field(d, "data", "noise_sigma", c.data.noise_sigma);
        read_field(d, "data", "prototype_norm", c.data.prototype_norm);
        read_field(d, "data", "background_norm", c.data.background_norm);
        read_field(d, "data", "confusable_distance", c.data.confusable_distance);
        read_field(d, "data", "context_snippets_max", c.data.context_snippets_max);
        read_field(d, "data", "context_strength", c.data.context_strength);
        read_field(d, "data", "hard_bg_fraction", c.data.hard_bg_fraction);
        read_field(d, "data", "hard_bg_strength", c.data.hard_bg_strength);
        read_field(d, "data", "hard_bg_run_min", c.data.hard_bg_run_min);
        read_field(d, "data", "hard_bg_run_max", c.data.hard_bg_run_max);
        read_field(d, "data", "snippet_duration_sec", c.data.snippet_duration_sec);
        if (d.contains("confusable_pairs")) {
            c.data.confusable_pairs.clear();
            try {
                for (const auto& pair : d["confusable_pairs"]) {
                    // 1-based in files, 0-based internally.
                    c.data.confusable_pairs.emplace_back(pair.at(0).get<int>() - 1,
                                                         pair.at(1).get<int>() - 1);
                }
            } catch (const json::exception& e) {
                bad_field("data.confusable_pairs", e.what());
            }
        }
    }

    if (j.contains("model")) {
        const auto& m = j["model"];
        check_keys(m, "model", {"dropout"});
        read_field(m, "model", "dropout", c.model_dropout);
    }

    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t, "train",
                   {"snippets", "gamma", "theta", "learning_rate", "weight_decay", "iterations",
                    "batch_size", "flags", "checkpoint_interval", "audit_interval", "pl_tau",
                    "ambiguity_high_entropy"});
        read_field(t, "train", "snippets", c.train.snippets);
        read_field(t, "train", "gamma", c.train.gamma);
        read_field(t, "train", "theta", c.train.theta);
        read_field(t, "train", "learning_rate", c.train.learning_rate);
        read_field(t, "train", "weight_decay", c.train.weight_decay);
        read_field(t, "train", "iterations", c.train.iterations);
        read_field(t, "train", "batch_size", c.train.batch_size);
        read_field(t, "train", "checkpoint_interval", c.train.checkpoint_interval);
        read_field(t, "train", "audit_interval", c.train.audit_interval);
        read_field(t, "train", "pl_tau", c.train.pl_tau);
        read_field(t, "train", "ambiguity_high_entropy", c.train.ambiguity_high_entropy);
        if (t.contains("flags")) {
            if (t["flags"].is_string()) {
                c.train.flags = parse_flags(t["flags"].get<std::string>());
            } else if (t["flags"].is_array()) {
                std::string joined;
                for (const auto& x : t["flags"]) {
                    if (!joined.empty()) joined += ",";
                    joined += x.get<std::string>();
                }
                c.train.flags = parse_flags(joined);
            } else {
                bad_field("train.flags", "expected string or array of strings");
            }
        }
    }

    if (j.contains("inference")) {
        const auto& i = j["inference"];
        check_keys(i, "inference",
                   {"rho", "nms_iou", "gamma", "act_thresholds", "fuse_video_score"});
        read_field(i, "inference", "rho", c.inference.rho);
        read_field(i, "inference", "nms_iou", c.inference.nms_iou);
        read_field(i, "inference", "gamma", c.inference.gamma);
        read_field(i, "inference", "fuse_video_score", c.inference.fuse_video_score);
        if (i.contains("act_thresholds")) {
            if (i["act_thresholds"].is_string())
                c.inference.act_thresholds =
                    parse_threshold_list(i["act_thresholds"].get<std::string>());
            else
                read_field(i, "inference", "act_thresholds", c.inference.act_thresholds);
        }
    }

    if (j.contains("eval")) {
        const auto& e = j["eval"];
        check_keys(e, "eval", {"iou_thresholds"});
        if (e.contains("iou_thresholds")) {
            if (e["iou_thresholds"].is_string())
                c.eval_thresholds = parse_threshold_list(e["iou_thresholds"].get<std::string>());
            else
                read_field(e, "eval", "iou_thresholds", c.eval_thresholds);
        }
    }

    c.train.seed = c.seed;
    c.train.dropout = c.model_dropout;
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    RunConfig next = *this;
    next.apply_override(key, value);
    next.validate();
    *this = next;
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
    auto as_double = [&]() {
        try {
            return std::stod(value);
        } catch (...) {
            throw ConfigError("config field '" + key + "': cannot parse '" + value +
                              "' as number");
        }
    };
    auto as_int = [&]() {
        try {
            return std::stoll(value);
        } catch (...) {
            throw ConfigError("config field '" + key + "': cannot parse '" + value +
                              "' as integer");
        }
    };
    if (key == "seed") {
        seed = static_cast<std::uint64_t>(as_int());
        train.seed = seed;
    } else if (key == "train.iterations") {
        train.iterations = as_int();
    } else if (key == "train.theta") {
        train.theta = as_double();
    } else if (key == "train.flags") {
        train.flags = parse_flags(value);
    } else if (key == "train.snippets") {
        train.snippets = static_cast<int>(as_int());
    } else if (key == "train.learning_rate") {
        train.learning_rate = as_double();
    } else if (key == "train.batch_size") {
        train.batch_size = static_cast<int>(as_int());
    } else if (key == "inference.rho") {
        inference.rho = as_double();
    } else if (key == "eval.iou_thresholds") {
        eval_thresholds = parse_threshold_list(value);
    } else {
        throw ConfigError("config: unknown override key '" + key + "'");
    }
}

void RunConfig::validate() const {
    data.validate();
    train.validate();
    if (!(inference.rho > 0.0 && inference.rho < 1.0))
        throw ConfigError(cat("inference.rho must lie in (0,1), got ", inference.rho));
    if (!(inference.nms_iou > 0.0 && inference.nms_iou < 1.0))
        throw ConfigError(cat("inference.nms_iou must lie in (0,1), got ", inference.nms_iou));
    if (!(inference.gamma > 0.0)) throw ConfigError("inference.gamma must be > 0");
    if (inference.act_thresholds.empty())
        throw ConfigError("inference.act_thresholds must be nonempty");
    for (double t : inference.act_thresholds)
        if (!(t > 0.0 && t < 1.0))
            throw ConfigError(cat("inference.act_thresholds entry ", t, " outside (0,1)"));
    if (eval_thresholds.empty()) throw ConfigError("eval.iou_thresholds must be nonempty");
    for (double t : eval_thresholds)
        if (!(t > 0.0 && t < 1.0))
            throw ConfigError(cat("eval.iou_thresholds entry ", t, " outside (0,1)"));
    if (!(model_dropout >= 0.0 && model_dropout < 1.0))
        throw ConfigError(cat("model.dropout must lie in [0,1), got ", model_dropout));
}

std::string RunConfig::to_json_text() const {
    json pairs = json::array();
    for (auto [a, b] : data.confusable_pairs) pairs.push_back({a + 1, b + 1});
    json flags = json::array();
    if (train.flags.cl) flags.push_back("cl");
    if (train.flags.pcl) flags.push_back("pcl");
    if (train.flags.fbd) flags.push_back("fbd");
    if (train.flags.mpcl) flags.push_back("mpcl");
    json j{
        {"seed", seed},
        {"data",
         {{"num_classes", data.num_classes},
          {"feature_dim", data.feature_dim},
          {"train_videos", data.train_videos},
          {"test_videos", data.test_videos},
          {"min_len", data.min_len},
          {"max_len", data.max_len},
          {"min_instances", data.min_instances},
          {"max_instances", data.max_instances},
          {"min_duration", data.min_duration},
          {"max_duration", data.max_duration},
          {"max_classes_per_video", data.max_classes_per_video},
          {"noise_sigma", data.noise_sigma},
          {"prototype_norm", data.prototype_norm},
          {"background_norm", data.background_norm},
          {"confusable_distance", data.confusable_distance},
          {"confusable_pairs", pairs},
          {"context_snippets_max", data.context_snippets_max},
          {"context_strength", data.context_strength},
          {"hard_bg_fraction", data.hard_bg_fraction},
          {"hard_bg_strength", data.hard_bg_strength},
          {"hard_bg_run_min", data.hard_bg_run_min},
          {"hard_bg_run_max", data.hard_bg_run_max},
          {"snippet_duration_sec", data.snippet_duration_sec}}},
        {"model", {{"dropout", model_dropout}}},
        {"train",
         {{"snippets", train.snippets},
          {"gamma", train.gamma},
          {"theta", train.theta},
          {"learning_rate", train.learning_rate},
          {"weight_decay", train.weight_decay},
          {"iterations", train.iterations},
          {"batch_size", train.batch_size},
          {"flags", flags},
          {"checkpoint_interval", train.checkpoint_interval},
          {"audit_interval", train.audit_interval},
          {"pl_tau", train.pl_tau},
          {"ambiguity_high_entropy", train.ambiguity_high_entropy}}},
        {"inference",
         {{"rho", inference.rho},
          {"nms_iou", inference.nms_iou},
          {"gamma", inference.gamma},
          {"act_thresholds", inference.act_thresholds},
          {"fuse_video_score", inference.fuse_video_score}}},
        {"eval", {{"iou_thresholds", eval_thresholds}}}};
    return j.dump(2) + "\n";
}

void RunConfig::echo_to(const std::filesystem::path& out_dir) const {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    std::ofstream f(out_dir / "config.json");
    if (!f) throw IoError("cannot open for write: " + (out_dir / "config.json").string());
    f << to_json_text();
    if (!f) throw IoError("write failed: " + (out_dir / "config.json").string());
}

}  // namespace procl

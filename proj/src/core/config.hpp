#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/inference.hpp"
#include "core/trainer.hpp"

namespace procl {

// One config object drives every subcommand. Parsed from JSON with strict
// key checking; the effective config is echoed into each run's output
// directory so any artifact can be regenerated from it.
struct RunConfig {
    std::uint64_t seed = 7;
    SyntheticSpec data;
    double model_dropout = 0.5;
    TrainConfig train;
    InferenceConfig inference;
    std::vector<double> eval_thresholds;  // default 0.1:0.1:0.7

    static RunConfig defaults();
    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::filesystem::path& path);

    // Dotted-path override, e.g. set("train.theta", "0.4") or
    // set("train.flags", "cl,fbd,mpcl"). Transactional: a rejected value
    // leaves the config untouched.
    void set(const std::string& key, const std::string& value);

    void validate() const;
    std::string to_json_text() const;
    void echo_to(const std::filesystem::path& out_dir) const;

  private:
    void apply_override(const std::string& key, const std::string& value);
};

// "0.1:0.1:0.7" -> {0.1, 0.2, ..., 0.7}; also accepts a comma list.
std::vector<double> parse_threshold_list(const std::string& text);

AblationFlags parse_flags(const std::string& text);

}  // namespace procl

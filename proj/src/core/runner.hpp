#pragma once

#include <filesystem>
#include <string>

#include "core/config.hpp"

namespace procl {

// Orchestration entry points shared by the C API and the test suites. Each
// writes its artifacts under the given paths and echoes the effective config.

void run_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir);

// data_dir may be a dataset root (containing train/) or a split directory.
void run_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir);

void run_localize(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& data_dir, const std::filesystem::path& out_file);

// ground_truth may be an annotations.jsonl file or a split directory.
// Returns the printable mAP table.
std::string run_eval(const RunConfig& cfg, const std::filesystem::path& proposals_file,
                     const std::filesystem::path& ground_truth,
                     const std::filesystem::path& out_csv);

void run_label_audit(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& data_dir,
                     const std::filesystem::path& out_csv);

// Runs the ablation matrix (experiments 1, 3, 4, 5, 6, 7) on one dataset:
// train on the train split, localize and evaluate the test split, and write
// ablation.csv plus per-experiment artifacts. Returns the printable table.
std::string run_ablate(const RunConfig& cfg, const std::filesystem::path& data_root,
                       const std::filesystem::path& out_dir);

struct AblationRow {
    int exp = 0;
    std::string flags;
    EvalReport report;
};

// Parsed view of ablation.csv used by tests.
std::vector<AblationRow> run_ablation_matrix(const RunConfig& cfg,
                                             const std::filesystem::path& data_root,
                                             const std::filesystem::path& out_dir);

// Annotations-only ground truth loader (features not required).
Dataset load_annotations(const std::filesystem::path& path);

}  // namespace procl

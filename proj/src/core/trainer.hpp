#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/evaluation.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"

namespace procl {

struct TrainConfig {
    int snippets = 40;  // T; even, >= 4
    double gamma = 7.0;
    double theta = 0.45;  // nats
    double learning_rate = 1e-3;
    double weight_decay = 1e-3;
    long long iterations = 2000;
    int batch_size = 8;
    AblationFlags flags{.cl = true, .pcl = false, .fbd = true, .mpcl = true};
    long long checkpoint_interval = 500;
    long long audit_interval = 100;
    double pl_tau = 0.5;  // threshold pseudo-label baseline
    double dropout = 0.5;
    bool ambiguity_high_entropy = true;
    std::uint64_t seed = 1;

    void validate() const;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long long t = 0;
};

// Adam with L2-style weight decay folded into the gradient.
void adam_step(std::vector<ad::Var> params, AdamState& st, double lr, double weight_decay,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct AuditRow {
    long long iteration = 0;
    std::string method;  // PL | PCL | MPCL
    std::optional<double> precision;
    double coverage = 0.0;
};

struct Checkpoint {
    ModelParams params;
    AdamState adam;
    long long iteration = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const AdamState& adam, long long iteration);
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg);

class Trainer {
  public:
    Trainer(const Dataset& train_data, const TrainConfig& cfg);

    // One optimizer step over a freshly sampled batch. Scale passes that no
    // enabled loss consumes are skipped.
    LossReport step();

    // Full loop: loss CSV row per iteration, audits and checkpoints on their
    // intervals. out_dir may be null for in-memory runs.
    void run(const std::filesystem::path* out_dir);

    // Label-quality audit of the three labeling methods at the current
    // parameters (evaluation mode, training-length sampling).
    std::vector<AuditRow> audit(long long iteration) const;

    const ModelParams& params() const { return params_; }
    const AdamState& adam() const { return adam_; }
    const std::vector<LossReport>& loss_log() const { return loss_log_; }
    const std::vector<AuditRow>& audit_log() const { return audit_log_; }
    long long iteration() const { return iter_; }

    void restore(const Checkpoint& ck);

  private:
    std::vector<int> sample_batch(long long iter) const;
    void warn_once(bool& flag, const std::string& msg);

    const Dataset& data_;
    TrainConfig cfg_;
    ModelParams params_;
    AdamState adam_;
    long long iter_ = 0;
    std::vector<LossReport> loss_log_;
    std::vector<AuditRow> audit_log_;
    bool warned_pcl_ = false, warned_fbd_ = false, warned_mpcl_ = false;
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& log);
void write_audit_csv(const std::filesystem::path& path, const std::vector<AuditRow>& rows);

}  // namespace procl

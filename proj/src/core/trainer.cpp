#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include "core/labeling.hpp"

namespace procl {

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<double> expand_labels(const std::vector<int>& labels, int num_classes,
                                  double background_bit) {
    std::vector<double> y(num_classes + 1, 0.0);
    for (int c : labels) y[c] = 1.0;
    y[num_classes] = background_bit;
    return y;
}

Mat values_as_mat(const ad::Var& v) {
    Mat m(v->rows(), v->cols());
    m.v = v->value;
    return m;
}

void check_component(double value, const char* name, long long iter) {
    if (!std::isfinite(value))
        throw NumericError(cat("training aborted: ", name, " is non-finite at iteration ", iter));
}

}  // namespace

void TrainConfig::validate() const {
    if (snippets < 4 || snippets % 2 != 0)
        throw ConfigError(cat("train.snippets must be even and >= 4, got ", snippets));
    if (!(gamma > 0.0)) throw ConfigError(cat("train.gamma must be > 0, got ", gamma));
    if (!(theta > 0.0) || theta > std::log(2.0) + 1e-12)
        throw ConfigError(cat("train.theta must lie in (0, ln 2], got ", theta));
    if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
    if (checkpoint_interval < 1 || audit_interval < 1)
        throw ConfigError("train.checkpoint_interval and audit_interval must be >= 1");
    if (!(pl_tau > 0.0 && pl_tau < 1.0))
        throw ConfigError(cat("train.pl_tau must lie in (0,1), got ", pl_tau));
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw ConfigError(cat("train.dropout must lie in [0,1), got ", dropout));
}

void adam_step(std::vector<ad::Var> params, AdamState& st, double lr, double weight_decay,
               double beta1, double beta2, double eps) {
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            st.m[i].assign(params[i]->value.size(), 0.0);
            st.v[i].assign(params[i]->value.size(), 0.0);
        }
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (p.grad.size() != p.value.size())
            throw NumericError(cat("adam_step: no gradient on '", p.name, "'"));
        for (size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j] + weight_decay * p.value[j];
            st.m[i][j] = beta1 * st.m[i][j] + (1.0 - beta1) * g;
            st.v[i][j] = beta2 * st.v[i][j] + (1.0 - beta2) * g * g;
            p.value[j] -= lr * (st.m[i][j] / bc1) / (std::sqrt(st.v[i][j] / bc2) + eps);
        }
    }
}

Trainer::Trainer(const Dataset& train_data, const TrainConfig& cfg) : data_(train_data), cfg_(cfg) {
    cfg_.validate();
    if (data_.videos.empty()) throw DataError("trainer: empty dataset");
    ModelConfig mc;
    mc.feature_dim = data_.feature_dim;
    mc.num_classes = data_.num_classes;
    mc.dropout = cfg_.dropout;
    Rng init_rng = Rng::substream(cfg_.seed, "init");
    params_ = ModelParams::init(mc, init_rng);
}

void Trainer::restore(const Checkpoint& ck) {
    params_ = ck.params;
    adam_ = ck.adam;
    iter_ = ck.iteration;
}

std::vector<int> Trainer::sample_batch(long long iter) const {
    const int n = static_cast<int>(data_.videos.size());
    const int b = std::min(cfg_.batch_size, n);
    Rng rng = Rng::substream(cfg_.seed, "batch", static_cast<std::uint64_t>(iter));
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < b; ++i) std::swap(idx[i], idx[rng.uniform_int(i, n - 1)]);
    idx.resize(b);
    // Gradients reduce in video-index order.
    std::sort(idx.begin(), idx.end());
    return idx;
}

void Trainer::warn_once(bool& flag, const std::string& msg) {
    if (flag) return;
    flag = true;
    std::cerr << "[procl] warning: " << msg << " (further occurrences suppressed)\n";
}

LossReport Trainer::step() {
    const long long iter = iter_ + 1;
    const int T = cfg_.snippets;
    const int C = data_.num_classes;
    const auto batch = sample_batch(iter);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    LossReport rep;
    rep.flags = cfg_.flags;
    ad::Var batch_total;
    const bool need_single_masks = cfg_.flags.pcl || cfg_.flags.fbd;

    for (int vid : batch) {
        const auto& v = data_.videos[static_cast<size_t>(vid)];
        const auto G = make_category_set(v.labels, C);
        const auto y_tilde = expand_labels(v.labels, C, 1.0);
        const auto y_hat = expand_labels(v.labels, C, 0.0);

        Rng dr = Rng::substream(cfg_.seed, "dropout", static_cast<std::uint64_t>(iter),
                                static_cast<std::uint64_t>(vid), 1);
        const auto bundle = forward(sample_snippets(v.features, T), params_, true, &dr);

        auto video_total = mil_loss(bundle.S, bundle.S_hat, y_tilde, y_hat, cfg_.gamma);
        rep.mil += video_total->scalar() * inv_b;

        if (cfg_.flags.cl) {
            auto l = cl_loss(bundle.P, y_tilde);
            rep.cl += l->scalar() * inv_b;
            video_total = ad::add(video_total, l);
        }

        if (need_single_masks) {
            const Mat S_vals = values_as_mat(bundle.S);
            const auto amb = identify_state(S_vals, G, cfg_.theta, RestrictMode::SoftmaxOverG,
                                            cfg_.ambiguity_high_entropy);
            if (cfg_.flags.pcl) {
                const auto mask = assign_pseudo_complementary(S_vals, amb.F, G);
                if (mask.num_unambiguous == 0)
                    warn_once(warned_pcl_, "pcl: no unambiguous snippets this step");
                auto l = pcl_loss(bundle.P, mask, G);
                rep.pcl += l->scalar() * inv_b;
                video_total = ad::add(video_total, l);
            }
            if (cfg_.flags.fbd) {
                if (amb.num_unambiguous() == static_cast<int>(amb.F.size()))
                    warn_once(warned_fbd_, "fbd: no ambiguous snippets this step");
                auto p_bg = ad::reshape(ad::slice_cols(bundle.P, C, C + 1), {bundle.T});
                auto l = fbd_loss(bundle.B, p_bg, amb.F);
                rep.fbd += l->scalar() * inv_b;
                video_total = ad::add(video_total, l);
            }
        }

        if (cfg_.flags.mpcl) {
            Rng dr_dense = Rng::substream(cfg_.seed, "dropout", static_cast<std::uint64_t>(iter),
                                          static_cast<std::uint64_t>(vid), 0);
            Rng dr_sparse = Rng::substream(cfg_.seed, "dropout", static_cast<std::uint64_t>(iter),
                                           static_cast<std::uint64_t>(vid), 2);
            const auto dense = forward(sample_snippets(v.features, 2 * T), params_, true,
                                       &dr_dense);
            const auto sparse = forward(sample_snippets(v.features, T / 2), params_, true,
                                        &dr_sparse);
            auto p_dense = ad::resample_rows(dense.P, T);
            auto p_sparse = ad::resample_rows(sparse.P, T);
            auto s_mu = ad::scale(ad::add(ad::add(p_dense, bundle.P), p_sparse), 1.0 / 3.0);
            auto sq = [](const ad::Var& a) { return ad::mul(a, a); };
            auto s_sigma = ad::scale(ad::add(ad::add(sq(ad::sub(p_dense, s_mu)),
                                                     sq(ad::sub(bundle.P, s_mu))),
                                             sq(ad::sub(p_sparse, s_mu))),
                                     1.0 / 3.0);
            const auto fused = multiscale_fuse(
                {values_as_mat(p_dense), values_as_mat(bundle.P), values_as_mat(p_sparse)}, G,
                cfg_.theta, cfg_.ambiguity_high_entropy);
            if (fused.mask.num_unambiguous == 0)
                warn_once(warned_mpcl_, "mpcl: no unambiguous snippets this step");
            auto l = mpcl_loss(s_mu, s_sigma, fused.mask, G);
            rep.mpcl += l->scalar() * inv_b;
            video_total = ad::add(video_total, l);
        }

        batch_total = batch_total ? ad::add(batch_total, video_total) : video_total;
    }

    auto objective = ad::scale(batch_total, inv_b);
    rep.total = objective->scalar();
    check_component(rep.mil, "l_mil", iter);
    check_component(rep.cl, "l_cl", iter);
    check_component(rep.pcl, "l_pcl", iter);
    check_component(rep.fbd, "l_fbd", iter);
    check_component(rep.mpcl, "l_mpcl", iter);
    check_component(rep.total, "l_total", iter);

    ad::backward(objective);
    adam_step(params_.all(), adam_, cfg_.learning_rate, cfg_.weight_decay);
    iter_ = iter;
    return rep;
}

std::vector<AuditRow> Trainer::audit(long long iteration) const {
    const int T = cfg_.snippets;
    const int C = data_.num_classes;
    AuditCounts pl, pcl, mpcl;
    for (const auto& v : data_.videos) {
        if (v.snippet_labels.empty())
            throw DataError(cat("audit: video ", v.id, " has no snippet-level ground truth"));
        const auto G = make_category_set(v.labels, C);
        const auto idx = sample_indices(v.length(), T);
        std::vector<int> gt(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) gt[i] = v.snippet_labels[static_cast<size_t>(idx[i])];

        const auto bundle = forward(sample_snippets(v.features, T), params_, false, nullptr);
        const Mat S_vals = values_as_mat(bundle.S);
        const Mat S_hat_vals = values_as_mat(bundle.S_hat);

        pl += audit_pseudo_labels(
            assign_threshold_pseudo_labels(bundle.A->value, S_hat_vals, cfg_.pl_tau), gt);

        const auto amb = identify_state(S_vals, G, cfg_.theta, RestrictMode::SoftmaxOverG,
                                        cfg_.ambiguity_high_entropy);
        pcl += audit_mask(assign_pseudo_complementary(S_vals, amb.F, G), G, gt);

        const auto dense = forward(sample_snippets(v.features, 2 * T), params_, false, nullptr);
        const auto sparse = forward(sample_snippets(v.features, T / 2), params_, false, nullptr);
        const auto fused = multiscale_fuse({values_as_mat(ad::resample_rows(dense.P, T)),
                                            values_as_mat(bundle.P),
                                            values_as_mat(ad::resample_rows(sparse.P, T))},
                                           G, cfg_.theta, cfg_.ambiguity_high_entropy);
        mpcl += audit_mask(fused.mask, G, gt);
    }
    std::vector<AuditRow> rows;
    rows.push_back({iteration, "PL", pl.precision(), pl.coverage()});
    rows.push_back({iteration, "PCL", pcl.precision(), pcl.coverage()});
    rows.push_back({iteration, "MPCL", mpcl.precision(), mpcl.coverage()});
    return rows;
}

void Trainer::run(const std::filesystem::path* out_dir) {
    if (out_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*out_dir, ec);
        if (ec) throw IoError("cannot create " + out_dir->string() + ": " + ec.message());
    }
    auto maybe_audit = [this](long long it) {
        const auto rows = audit(it);
        audit_log_.insert(audit_log_.end(), rows.begin(), rows.end());
    };
    auto maybe_checkpoint = [this, out_dir](long long it, bool final) {
        if (!out_dir) return;
        char name[64];
        if (final)
            std::snprintf(name, sizeof(name), "checkpoint_final.pckp");
        else
            std::snprintf(name, sizeof(name), "checkpoint_%06lld.pckp", it);
        save_checkpoint(*out_dir / name, params_, adam_, it);
    };

    maybe_audit(iter_);
    while (iter_ < cfg_.iterations) {
        loss_log_.push_back(step());
        if (iter_ % cfg_.audit_interval == 0 && iter_ < cfg_.iterations) maybe_audit(iter_);
        if (iter_ % cfg_.checkpoint_interval == 0 && iter_ < cfg_.iterations)
            maybe_checkpoint(iter_, false);
    }
    if (cfg_.iterations > 0) maybe_audit(iter_);
    maybe_checkpoint(iter_, true);
    if (out_dir) {
        write_loss_csv(*out_dir / "loss.csv", loss_log_);
        write_audit_csv(*out_dir / "audit.csv", audit_log_);
    }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& log) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f << "iteration,l_mil,l_cl,l_pcl,l_fbd,l_mpcl,l_total\n";
    char buf[256];
    for (size_t i = 0; i < log.size(); ++i) {
        const auto& r = log[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1, r.mil,
                      r.cl, r.pcl, r.fbd, r.mpcl, r.total);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path.string());
}

void write_audit_csv(const std::filesystem::path& path, const std::vector<AuditRow>& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f << "iteration,method,precision,coverage\n";
    char buf[160];
    for (const auto& r : rows) {
        if (r.precision)
            std::snprintf(buf, sizeof(buf), "%lld,%s,%.17g,%.17g\n", r.iteration,
                          r.method.c_str(), *r.precision, r.coverage);
        else
            std::snprintf(buf, sizeof(buf), "%lld,%s,null,%.17g\n", r.iteration, r.method.c_str(),
                          r.coverage);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path.string());
}

namespace {

void write_tensor(std::ofstream& f, const std::string& name, const std::vector<int>& shape,
                  const std::vector<double>& data) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    f.write(reinterpret_cast<const char*>(&name_len), 4);
    f.write(name.data(), name_len);
    const std::uint32_t ndims = static_cast<std::uint32_t>(shape.size());
    f.write(reinterpret_cast<const char*>(&ndims), 4);
    for (int d : shape) {
        const std::uint32_t u = static_cast<std::uint32_t>(d);
        f.write(reinterpret_cast<const char*>(&u), 4);
    }
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

struct RawTensor {
    std::vector<int> shape;
    std::vector<double> data;
};

std::map<std::string, RawTensor> read_tensors(std::ifstream& f, std::uint32_t count,
                                              const std::string& path) {
    std::map<std::string, RawTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = 0;
        f.read(reinterpret_cast<char*>(&name_len), 4);
        if (!f || name_len > 4096) throw DataError("corrupt checkpoint: " + path);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        std::uint32_t ndims = 0;
        f.read(reinterpret_cast<char*>(&ndims), 4);
        if (!f || ndims > 8) throw DataError("corrupt checkpoint: " + path);
        RawTensor t;
        std::int64_t n = 1;
        for (std::uint32_t d = 0; d < ndims; ++d) {
            std::uint32_t u = 0;
            f.read(reinterpret_cast<char*>(&u), 4);
            t.shape.push_back(static_cast<int>(u));
            n *= u;
        }
        if (!f || n < 0 || n > (1ll << 30)) throw DataError("corrupt checkpoint: " + path);
        t.data.resize(static_cast<size_t>(n));
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!f) throw DataError("truncated checkpoint: " + path);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const AdamState& adam, long long iteration) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(kCheckpointMagic, 4);
    f.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
    const std::int64_t iter = iteration, adam_t = adam.t;
    f.write(reinterpret_cast<const char*>(&iter), 8);
    f.write(reinterpret_cast<const char*>(&adam_t), 8);
    const auto tensors = params.all();
    const std::uint32_t count =
        static_cast<std::uint32_t>(tensors.size() * (adam.m.empty() ? 1 : 3));
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& t : tensors) write_tensor(f, t->name, t->shape, t->value);
    if (!adam.m.empty()) {
        for (size_t i = 0; i < tensors.size(); ++i)
            write_tensor(f, "adam.m." + tensors[i]->name, tensors[i]->shape, adam.m[i]);
        for (size_t i = 0; i < tensors.size(); ++i)
            write_tensor(f, "adam.v." + tensors[i]->name, tensors[i]->shape, adam.v[i]);
    }
    if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    char magic[4];
    std::uint32_t version = 0, count = 0;
    std::int64_t iter = 0, adam_t = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&iter), 8);
    f.read(reinterpret_cast<char*>(&adam_t), 8);
    f.read(reinterpret_cast<char*>(&count), 4);
    if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw DataError("bad checkpoint header: " + path.string());
    if (version != kCheckpointVersion)
        throw DataError(cat("checkpoint version ", version, " incompatible with ",
                            kCheckpointVersion, ": ", path.string()));
    auto tensors = read_tensors(f, count, path.string());

    Checkpoint ck;
    ck.iteration = iter;
    ck.adam.t = adam_t;
    Rng dummy(0);
    ck.params = ModelParams::init(cfg, dummy);
    auto fill = [&tensors, &path](const ad::Var& dst) {
        auto it = tensors.find(dst->name);
        if (it == tensors.end())
            throw DataError(cat("checkpoint missing tensor '", dst->name, "': ", path.string()));
        if (it->second.shape != dst->shape)
            throw DataError(cat("checkpoint tensor '", dst->name, "' has shape ",
                                shape_str(it->second.shape), ", model expects ",
                                shape_str(dst->shape)));
        dst->value = it->second.data;
    };
    for (const auto& t : ck.params.all()) fill(t);
    if (tensors.count("adam.m.emb1.w")) {
        const auto all = ck.params.all();
        ck.adam.m.resize(all.size());
        ck.adam.v.resize(all.size());
        for (size_t i = 0; i < all.size(); ++i) {
            ck.adam.m[i] = tensors.at("adam.m." + all[i]->name).data;
            ck.adam.v[i] = tensors.at("adam.v." + all[i]->name).data;
        }
    }
    return ck;
}

}  // namespace procl

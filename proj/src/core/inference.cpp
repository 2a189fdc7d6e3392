#include "core/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "core/evaluation.hpp"

namespace procl {

namespace {

using nlohmann::json;

bool proposal_before(const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.t_start != b.t_start) return a.t_start < b.t_start;
    return (a.t_end - a.t_start) < (b.t_end - b.t_start);
}

}  // namespace

std::vector<double> InferenceConfig::default_act_thresholds() {
    std::vector<double> t;
    for (int i = 2; i <= 18; ++i) t.push_back(i * 0.05);
    return t;
}

std::vector<int> video_level_classify(const Mat& S_hat, double gamma, double rho,
                                      std::vector<double>* video_probs) {
    if (!(rho > 0.0 && rho < 1.0))
        throw ConfigError(cat("video_level_classify: rho=", rho, " outside (0,1)"));
    const auto pooled = topk_pool(S_hat, gamma);
    // Softmax over all C+1 pooled scores.
    double mx = pooled[0];
    for (double x : pooled) mx = std::max(mx, x);
    std::vector<double> probs(pooled.size());
    double z = 0.0;
    for (size_t c = 0; c < pooled.size(); ++c) {
        probs[c] = std::exp(pooled[c] - mx);
        z += probs[c];
    }
    for (auto& p : probs) p /= z;
    if (video_probs) *video_probs = probs;

    const int C = static_cast<int>(pooled.size()) - 1;
    std::vector<int> classes;
    for (int c = 0; c < C; ++c)
        if (probs[c] > rho) classes.push_back(c);
    if (classes.empty()) {
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (probs[c] > probs[best]) best = c;
        classes.push_back(best);
    }
    return classes;
}

std::vector<SnippetSegment> extract_segments(const std::vector<double>& A,
                                             const std::vector<double>& thresholds) {
    if (thresholds.empty()) throw ConfigError("extract_segments: no thresholds");
    std::vector<SnippetSegment> segs;
    const int T = static_cast<int>(A.size());
    for (double tau : thresholds) {
        if (!(tau > 0.0 && tau < 1.0))
            throw ConfigError(cat("extract_segments: threshold ", tau, " outside (0,1)"));
        int t = 0;
        while (t < T) {
            if (A[t] < tau) {
                ++t;
                continue;
            }
            int end = t;
            while (end + 1 < T && A[end + 1] >= tau) ++end;
            segs.push_back({t, end});
            t = end + 1;
        }
    }
    return segs;
}

double score_proposal(const SnippetSegment& seg, const Mat& S_hat, int cls) {
    if (seg.first < 0 || seg.last >= S_hat.rows || seg.first > seg.last)
        throw ShapeError(cat("score_proposal: segment [", seg.first, ",", seg.last,
                             "] outside 0..", S_hat.rows - 1));
    const int len = seg.last - seg.first + 1;
    double inner = 0.0;
    for (int t = seg.first; t <= seg.last; ++t) inner += S_hat.at(t, cls);
    inner /= len;

    const int margin = std::max(1, static_cast<int>(std::floor(0.25 * len + 0.5)));
    double outer = 0.0;
    int outer_n = 0;
    for (int t = std::max(0, seg.first - margin); t < seg.first; ++t) {
        outer += S_hat.at(t, cls);
        ++outer_n;
    }
    for (int t = seg.last + 1; t <= std::min(S_hat.rows - 1, seg.last + margin); ++t) {
        outer += S_hat.at(t, cls);
        ++outer_n;
    }
    return inner - (outer_n > 0 ? outer / outer_n : 0.0);
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
        throw ConfigError(cat("nms: iou_threshold=", iou_threshold, " outside (0,1)"));
    std::stable_sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
        if (a.cls != b.cls) return a.cls < b.cls;
        return proposal_before(a, b);
    });
    std::vector<Proposal> kept;
    std::vector<char> dead(proposals.size(), 0);
    for (size_t i = 0; i < proposals.size(); ++i) {
        if (dead[i]) continue;
        kept.push_back(proposals[i]);
        for (size_t j = i + 1; j < proposals.size(); ++j) {
            if (dead[j] || proposals[j].cls != proposals[i].cls) continue;
            if (temporal_iou(proposals[i].t_start, proposals[i].t_end, proposals[j].t_start,
                             proposals[j].t_end) >= iou_threshold)
                dead[j] = 1;
        }
    }
    return kept;
}

std::vector<Proposal> localize(const VideoRecord& video, const ModelParams& params,
                               const InferenceConfig& cfg, double snippet_duration_sec) {
    // All snippets are taken at evaluation time.
    auto bundle = forward(video.features, params, /*train_mode=*/false, nullptr);
    Mat S_hat(bundle.T, params.cfg.num_classes + 1);
    S_hat.v = bundle.S_hat->value;
    const std::vector<double>& A = bundle.A->value;

    std::vector<double> video_probs;
    const auto classes = video_level_classify(S_hat, cfg.gamma, cfg.rho, &video_probs);
    const auto segs = extract_segments(
        A, cfg.act_thresholds.empty() ? InferenceConfig::default_act_thresholds()
                                      : cfg.act_thresholds);

    std::vector<Proposal> proposals;
    for (int c : classes) {
        for (const auto& seg : segs) {
            Proposal p;
            p.t_start = seg.first * snippet_duration_sec;
            p.t_end = (seg.last + 1) * snippet_duration_sec;
            p.cls = c;
            p.score = score_proposal(seg, S_hat, c);
            if (cfg.fuse_video_score) p.score *= video_probs[c];
            proposals.push_back(p);
        }
    }
    return nms(std::move(proposals), cfg.nms_iou);
}

void save_proposals(const std::vector<ScoredProposal>& props,
                    const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for write: " + path.string());
    for (const auto& sp : props) {
        json rec{{"video_id", sp.video_id},
                 {"t_start", sp.p.t_start},
                 {"t_end", sp.p.t_end},
                 {"score", sp.p.score},
                 {"class", sp.p.cls + 1}};
        f << rec.dump() << "\n";
    }
    if (!f) throw IoError("write failed: " + path.string());
}

std::vector<ScoredProposal> load_proposals(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path.string());
    std::vector<ScoredProposal> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            json rec = json::parse(line);
            ScoredProposal sp;
            sp.video_id = rec.at("video_id").get<std::string>();
            sp.p.t_start = rec.at("t_start").get<double>();
            sp.p.t_end = rec.at("t_end").get<double>();
            sp.p.score = rec.at("score").get<double>();
            sp.p.cls = rec.at("class").get<int>() - 1;
            out.push_back(std::move(sp));
        } catch (const json::exception& e) {
            throw DataError(cat("proposals line ", line_no, ": ", e.what()));
        }
    }
    return out;
}

}  // namespace procl

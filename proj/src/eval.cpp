#include "genrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "genrec/backbone.hpp"
#include "genrec/semantic.hpp"
#include "json.hpp"

namespace genrec::eval {

using nlohmann::json;

RankMetrics rank_metrics(std::span<const double> scores, std::span<const int> ids, int target_id,
                         int k) {
    if (scores.size() != ids.size()) {
        throw InternalError("rank_metrics: scores/ids size mismatch");
    }
    if (scores.empty()) throw DataError("rank_metrics: empty candidate set");
    if (k < 1) throw ConfigError("rank_metrics: k must be >= 1");
    std::unordered_set<int> seen;
    seen.reserve(ids.size());
    for (int id : ids) {
        if (!seen.insert(id).second) {
            throw DataError("rank_metrics: duplicate candidate id " + std::to_string(id));
        }
    }
    std::size_t ti = ids.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == target_id) {
            ti = i;
            break;
        }
    }
    if (ti == ids.size()) {
        throw DataError("rank_metrics: target id " + std::to_string(target_id) +
                        " not among candidates");
    }
    const double st = scores[ti];
    int rank = 1;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i == ti) continue;
        if (scores[i] > st || (scores[i] == st && ids[i] < target_id)) ++rank;
    }
    RankMetrics m;
    m.rank = rank;
    m.mrr = 1.0 / rank;
    m.hit = rank <= k ? 1.0 : 0.0;
    m.ndcg = rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
    return m;
}

RankMetrics rank_metrics_dense(std::span<const double> scores, int target_id, int k) {
    if (scores.empty()) throw DataError("rank_metrics: empty candidate set");
    if (k < 1) throw ConfigError("rank_metrics: k must be >= 1");
    if (target_id < 0 || static_cast<std::size_t>(target_id) >= scores.size()) {
        throw DataError("rank_metrics: target id " + std::to_string(target_id) +
                        " outside dense candidate range");
    }
    const double st = scores[target_id];
    int rank = 1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (static_cast<int>(i) == target_id) continue;
        if (scores[i] > st || (scores[i] == st && static_cast<int>(i) < target_id)) ++rank;
    }
    RankMetrics m;
    m.rank = rank;
    m.mrr = 1.0 / rank;
    m.hit = rank <= k ? 1.0 : 0.0;
    m.ndcg = rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
    return m;
}

double EvalReport::value(world::Task task, const std::string& slice, std::int64_t delay,
                         const std::string& metric) const {
    for (const auto& r : rows) {
        if (r.task == task && r.slice == slice && r.delay == delay && r.metric == metric) {
            return r.value;
        }
    }
    throw InternalError("EvalReport: no row for task=" + std::string(1, world::task_tag(task)) +
                        " slice=" + slice + " delay=" + std::to_string(delay) +
                        " metric=" + metric);
}

std::int64_t EvalReport::count(world::Task task, const std::string& slice, std::int64_t delay,
                               const std::string& metric) const {
    for (const auto& r : rows) {
        if (r.task == task && r.slice == slice && r.delay == delay && r.metric == metric) {
            return r.count;
        }
    }
    throw InternalError("EvalReport: no row for requested cell");
}

std::string EvalReport::to_csv() const {
    std::string out = "task,slice,delay,metric,value,count\n";
    for (const auto& r : rows) {
        out += world::task_tag(r.task);
        out += ',' + r.slice + ',' + std::to_string(r.delay) + ',' + r.metric + ',' +
               format_double(r.value) + ',' + std::to_string(r.count) + '\n';
    }
    return out;
}

std::string EvalReport::to_json() const {
    json j;
    j["skipped_users"] = skipped_users;
    j["rows"] = json::array();
    for (const auto& r : rows) {
        json row;
        row["task"] = std::string(1, world::task_tag(r.task));
        row["slice"] = r.slice;
        row["delay"] = r.delay;
        row["metric"] = r.metric;
        row["value"] = r.value;
        row["count"] = r.count;
        j["rows"].push_back(row);
    }
    return j.dump(2) + "\n";
}

void EvalConfig::validate() const {
    if (k < 1) throw ConfigError("eval: k must be >= 1");
    if (user_cap < 0) throw ConfigError("eval: user_cap must be >= 0");
    if (delays.empty()) throw ConfigError("eval: at least one delay required");
    if (delays.front() != 0) throw ConfigError("eval: first delay must be 0");
    for (std::size_t i = 1; i < delays.size(); ++i) {
        if (delays[i] <= delays[i - 1]) throw ConfigError("eval: delays must be ascending");
    }
}

namespace {

struct MetricAcc {
    double mrr = 0.0;
    double hit = 0.0;
    double ndcg = 0.0;
    std::int64_t n = 0;

    void add(const RankMetrics& m) {
        mrr += m.mrr;
        hit += m.hit;
        ndcg += m.ndcg;
        ++n;
    }
};

}  // namespace

EvalReport replay_staleness(const ModelConfig& cfg, const ParamSet& params,
                            const world::Dataset& train_split,
                            const world::Dataset& valid_split, const EvalConfig& eval_cfg) {
    eval_cfg.validate();
    if (train_split.n_users() != valid_split.n_users()) {
        throw DataError("replay: train and validation splits cover different user sets");
    }
    const auto& catalog = train_split.catalog;
    if (catalog.in_vocab_count != cfg.vocab) {
        throw DataError("replay: model vocab " + std::to_string(cfg.vocab) +
                        " does not match catalog in-vocab count " +
                        std::to_string(catalog.in_vocab_count));
    }
    const semantic::FeatureTable feats = semantic::FeatureTable::build(catalog);
    if (feats.dim != cfg.feat_dim()) {
        throw DataError("replay: catalog feature width does not match model config");
    }
    const decoder::CandidateMatrix matrix = decoder::build_candidate_matrix(cfg, params, feats);

    const int nd = static_cast<int>(eval_cfg.delays.size());
    int users = train_split.n_users();
    if (eval_cfg.user_cap > 0 && eval_cfg.user_cap < users) users = eval_cfg.user_cap;

    // acc[task][delay][slice]; slice 0 = all, 1 = cold_start.
    std::vector<MetricAcc> acc(static_cast<std::size_t>(world::kNumTasks) * nd * 2);
    auto cell = [&](int task, int di, int slice) -> MetricAcc& {
        return acc[static_cast<std::size_t>((task * nd + di) * 2 + slice)];
    };

    EvalReport report;
    std::vector<double> tokens, hidden, scores;
    backbone::Cache cache;
    for (int u = 0; u < users; ++u) {
        const auto& hist = train_split.histories[u];
        if (hist.empty()) {
            ++report.skipped_users;
            continue;
        }
        backbone::EventWindow window;
        const int start = std::max(0, static_cast<int>(hist.size()) - cfg.seq_len);
        for (std::size_t i = start; i < hist.size(); ++i) {
            const auto& ev = hist[i];
            window.push(ev.item, ev.item >= cfg.vocab, ev.context);
        }
        backbone::embed_events(cfg, params, window, feats, tokens);
        backbone::forward(cfg, params, tokens, window.len(), cache, hidden);
        const double* h_last = hidden.data() + static_cast<std::size_t>(window.len() - 1) * cfg.width;
        decoder::score_all(cfg, params, h_last, matrix, scores);

        const auto& future = valid_split.histories[u];
        for (int t = 0; t < world::kNumTasks; ++t) {
            const auto task = static_cast<world::Task>(t);
            std::vector<int> targets(nd, -1);
            bool complete = true;
            for (int di = 0; di < nd; ++di) {
                auto ev = world::first_high_value_after(future, task,
                                                        train_split.cutoff_time +
                                                            eval_cfg.delays[di]);
                if (!ev) {
                    complete = false;
                    break;
                }
                targets[di] = ev->item;
            }
            // The per-task population is fixed across delays: a user counts
            // either at every delay or at none.
            if (!complete) continue;
            for (int di = 0; di < nd; ++di) {
                const RankMetrics m = rank_metrics_dense(scores, targets[di], eval_cfg.k);
                cell(t, di, 0).add(m);
                if (!catalog.at(targets[di]).in_vocab) cell(t, di, 1).add(m);
            }
        }
    }

    static const char* kSlices[2] = {"all", "cold_start"};
    static const char* kMetrics[3] = {"mrr", "hit", "ndcg"};
    for (int t = 0; t < world::kNumTasks; ++t) {
        for (int s = 0; s < 2; ++s) {
            for (int di = 0; di < nd; ++di) {
                const MetricAcc& a = cell(t, di, s);
                const double inv = a.n > 0 ? 1.0 / static_cast<double>(a.n) : 0.0;
                const double vals[3] = {a.mrr * inv, a.hit * inv, a.ndcg * inv};
                for (int m = 0; m < 3; ++m) {
                    EvalRow row;
                    row.task = static_cast<world::Task>(t);
                    row.slice = kSlices[s];
                    row.delay = eval_cfg.delays[di];
                    row.metric = kMetrics[m];
                    row.value = vals[m];
                    row.count = a.n;
                    report.rows.push_back(row);
                }
            }
        }
    }
    return report;
}

EvalReport evaluate(const ModelConfig& cfg, const ParamSet& params,
                    const world::Dataset& train_split, const world::Dataset& valid_split, int k,
                    int user_cap) {
    EvalConfig ec;
    ec.k = k;
    ec.user_cap = user_cap;
    ec.delays = {0};
    return replay_staleness(cfg, params, train_split, valid_split, ec);
}

}  // namespace genrec::eval

#pragma once

// Time-split ranking evaluation: MRR / HitRate@k / NDCG@k over the full
// catalog, task and cold-start slices, and the staleness-replay protocol.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "genrec/decoder.hpp"
#include "genrec/world.hpp"

namespace genrec::eval {

struct RankMetrics {
    double mrr = 0.0;
    double hit = 0.0;   // HitRate@k
    double ndcg = 0.0;  // NDCG@k, single relevant item
    int rank = 0;
};

// Ties broken by ascending item id. `ids` must be duplicate-free and contain
// the target.
RankMetrics rank_metrics(std::span<const double> scores, std::span<const int> ids, int target_id,
                         int k);

// Dense variant where candidate i has id i.
RankMetrics rank_metrics_dense(std::span<const double> scores, int target_id, int k);

struct EvalRow {
    world::Task task = world::Task::A;
    std::string slice;     // "all" or "cold_start"
    std::int64_t delay = 0;
    std::string metric;    // "mrr", "hit", "ndcg"
    double value = 0.0;
    std::int64_t count = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::int64_t skipped_users = 0;  // users with no usable context or target

    double value(world::Task task, const std::string& slice, std::int64_t delay,
                 const std::string& metric) const;
    std::int64_t count(world::Task task, const std::string& slice, std::int64_t delay,
                       const std::string& metric) const;
    std::string to_csv() const;
    std::string to_json() const;
};

struct EvalConfig {
    int k = 10;
    int user_cap = 0;                       // 0 = all users
    std::vector<std::int64_t> delays = {0};  // ascending, first must be 0

    void validate() const;
};

// Context = last seq_len training events per user; target = first high-value
// future event per task at each delay. The example population per task is
// held fixed across delays: users lacking a target at any delay are skipped
// for that task everywhere.
EvalReport replay_staleness(const ModelConfig& cfg, const ParamSet& params,
                            const world::Dataset& train_split,
                            const world::Dataset& valid_split, const EvalConfig& eval_cfg);

// Standard evaluation: replay at the single delay 0.
EvalReport evaluate(const ModelConfig& cfg, const ParamSet& params,
                    const world::Dataset& train_split, const world::Dataset& valid_split,
                    int k = 10, int user_cap = 0);

}  // namespace genrec::eval

#pragma once

// Deterministic mini-batch trainer: example sampling, masking, candidate
// assembly, AdamW with warmup+cosine schedule, metric logging, and the
// model-size ladder used by scaling sweeps.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "genrec/eval.hpp"
#include "genrec/model.hpp"
#include "genrec/mtp.hpp"
#include "genrec/semantic.hpp"
#include "genrec/world.hpp"

namespace genrec::train {

enum class Objective { ntp, mtp };
std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

struct OptimConfig {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;  // applied to matrices only
    int warmup_steps = 20;
    double final_lr_ratio = 0.1;  // cosine floor as a fraction of lr

    void validate() const;
    // Linear warmup, then cosine decay to lr * final_lr_ratio at total_steps.
    double lr_at(int step, int total_steps) const;
};

struct TrainConfig {
    ModelConfig model;
    Objective objective = Objective::ntp;
    mtp::MtpConfig mtp;
    double sample_fraction = 0.01;  // negative-sampling fraction of the vocab
    semantic::MaskingConfig masking;
    OptimConfig optim;
    int batch = 16;
    int steps = 500;
    int eval_every = 0;  // 0: evaluate only after the final step
    int log_every = 50;
    std::uint64_t seed = 1;
    int threads = 1;  // 0: hardware concurrency
    int eval_k = 10;
    int eval_user_cap = 0;

    void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct MetricRow {
    int step = 0;
    std::string split;   // "train" or "validation"
    std::string task;    // "A"/"B"/"C" or "-" for aggregate rows
    std::string metric;  // "loss", "lr", "mrr", "hit", "ndcg"
    double value = 0.0;
};

std::string metrics_to_csv(const std::vector<MetricRow>& rows);

struct TrainResult {
    int steps_run = 0;
    double first_loss = 0.0;  // batch loss under the initial parameters
    double final_loss = 0.0;  // batch loss at the last step
    std::array<double, 3> best_val_mrr = {0.0, 0.0, 0.0};  // per task, "all" slice
    double best_val_mrr_mean = 0.0;
    std::vector<MetricRow> metrics;
};

// Initial parameters for cfg.model, seeded from cfg.seed and snapped to the
// storage precision so step 0 equals a checkpoint round-trip.
ParamSet init_params(const TrainConfig& cfg);

// Runs the loop on `params` in place. Gradients are accumulated per example
// and merged in batch order, so results are independent of thread count.
// On a non-finite loss, the last finished step's parameters are written to
// `checkpoint_out + ".last-good"` (when a path is given) and the trainer
// throws NumericError naming it.
TrainResult train(const TrainConfig& cfg, const world::DatasetPair& data, ParamSet& params,
                  const std::string& checkpoint_out = "");

struct LadderRung {
    std::string label;
    ModelConfig model;
};

// Backbone sizes spanning roughly 3k to 150k parameters; embedding dim,
// vocabulary, and decoding setup are pinned to the base config so rungs vary
// only the backbone.
std::vector<LadderRung> default_ladder(const ModelConfig& base);

struct SweepPoint {
    std::string label;
    std::int64_t n_backbone = 0;
    std::array<double, 3> best_mrr = {0.0, 0.0, 0.0};
    double final_loss = 0.0;
    bool failed = false;
    std::string error;
};

// Trains every rung to the shared budget; a failed rung is recorded and the
// sweep continues.
std::vector<SweepPoint> sweep(const TrainConfig& base, const world::DatasetPair& data,
                              const std::vector<LadderRung>& ladder);

// Rows (task, n, p, label), one per task per non-failed rung; the input
// format of the scaling fit.
std::string sweep_to_csv(const std::vector<SweepPoint>& points);

}  // namespace genrec::train

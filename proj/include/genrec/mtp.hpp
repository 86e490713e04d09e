#pragma once

// Multi-token prediction: weighted future-target label sets with exponential
// time decay, and the single-pass weighted loss over a shared candidate set.

#include <cstdint>
#include <span>
#include <vector>

#include "genrec/decoder.hpp"
#include "genrec/world.hpp"

namespace genrec::mtp {

enum class RewardWeighting { unit, reward };
std::string to_string(RewardWeighting w);
RewardWeighting reward_weighting_from_string(const std::string& s);

struct MtpConfig {
    int window = 5;                        // K, max targets per context
    double half_life_seconds = 3600.0;     // beta
    std::int64_t horizon_seconds = 48 * 3600;
    RewardWeighting weighting = RewardWeighting::unit;

    void validate() const;
};

struct MtpLabel {
    int item = 0;
    std::int64_t t = 0;
    double r = 1.0;
    double w = 1.0;
};

struct MtpLabelSet {
    std::vector<MtpLabel> entries;
    std::int64_t t_context = 0;
};

// r * 2^(-(t - t_context) / beta): exact halving every beta seconds.
double decay_weight(double r, std::int64_t t, std::int64_t t_context, double half_life_seconds);

// First K high-value events within the horizon; empty sets are legal and
// simply skipped by the trainer.
MtpLabelSet build_label_set(std::span<const world::Event> future, std::int64_t t_context,
                            const MtpConfig& config);

// Weighted cross-entropy over one shared candidate-logit vector. Every label
// item must appear among the candidates.
double mtp_loss(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
                const MtpLabelSet& labels, std::span<const decoder::Candidate> candidates,
                const semantic::FeatureTable& feats, ParamSet* grads, double* d_hidden,
                std::vector<double>* logits_out = nullptr);

}  // namespace genrec::mtp

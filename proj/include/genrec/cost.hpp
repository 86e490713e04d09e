#pragma once

// Analytic training-FLOPs-per-token model for the output layer study.
//
// Convention used throughout: a dense block contributes 48*L*d^2 + 8*L*S*d
// FLOPs per token (forward ~ 2 FLOPs per MAC, backward ~ 2x forward), and
// every decode-side parameter costs 12 FLOPs per token under the same
// forward/backward accounting. These are paper-style estimates, never
// measured runtime.

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/common.hpp"

namespace genrec::cost {

enum class DecodeMode { full, sampled, projected, sampled_projected };

std::string to_string(DecodeMode mode);
DecodeMode decode_mode_from_string(const std::string& name);

struct CostQuery {
    int layers = 6;
    int width = 1024;
    int seq_len = 512;
    std::int64_t vocab = 1'000'000;
    DecodeMode mode = DecodeMode::full;
    double sample_fraction = 0.01;
    int n_positives = 1;

    void validate() const;
};

double backbone_flops_per_token(int layers, int width, int seq_len);
double decode_flops_per_token(const CostQuery& q);
double total_flops_per_token(const CostQuery& q);

struct SweepRow {
    std::int64_t vocab;
    DecodeMode mode;
    double flops_per_token;
};

// One row per (V, mode); CSV emission is handled by the CLI.
std::vector<SweepRow> sweep(const CostQuery& base, const std::vector<std::int64_t>& vocab_grid,
                            const std::vector<DecodeMode>& modes);

}  // namespace genrec::cost

#pragma once

// Output layer: candidate scoring through the shared projection head and the
// semantic title tower, uniform target-rejecting negative sampling, and the
// weighted cross-entropy core that realizes both NTP and MTP losses.

#include <cstdint>
#include <span>
#include <vector>

#include "genrec/model.hpp"
#include "genrec/semantic.hpp"

namespace genrec::decoder {

// A candidate column: `oov` forces the OOV embedding on the item side
// (cold titles or output-side masking).
struct Candidate {
    int id = 0;
    bool oov = false;
};

// A supervision target pointing at a candidate column. Duplicate targets on
// the same column are legal and contribute their weights additively.
struct Target {
    int cand_index = 0;
    double weight = 1.0;
};

// ceil(fraction * vocab) ids drawn uniformly without replacement from
// {0..vocab-1} minus the target, via a partial Fisher-Yates pass.
std::vector<int> sample_negatives(int vocab, double fraction, int target, Rng& rng);

// Same scheme with a set of excluded ids (deduplicated label sets).
std::vector<int> sample_negatives_excluding(int vocab, double fraction,
                                            std::span<const int> exclude, Rng& rng);

// Scores all candidates once against one hidden state and returns the
// weighted cross-entropy sum(w_i * -log softmax(s)[y_i]). With `grads`
// non-null, exact parameter gradients are accumulated and dL/dh is added
// into `d_hidden`. `logits_out` (optional) receives the candidate scores.
double weighted_ce_loss(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
                        std::span<const Candidate> candidates, std::span<const Target> targets,
                        const semantic::FeatureTable& feats, ParamSet* grads, double* d_hidden,
                        std::vector<double>* logits_out = nullptr);

// Single-target cross-entropy over the given candidate set; the target id
// must be a candidate. Realized as weighted_ce_loss with one unit target.
double ntp_loss(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
                int target_id, std::span<const Candidate> candidates,
                const semantic::FeatureTable& feats, ParamSet* grads, double* d_hidden,
                std::vector<double>* logits_out = nullptr);

// Precomputed item-side vectors for every catalog title, in-vocab titles via
// their ID rows and the rest via the OOV path. One build per checkpoint.
struct CandidateMatrix {
    int n = 0;
    int dw = 0;
    std::vector<double> v;  // n x dw
};
CandidateMatrix build_candidate_matrix(const ModelConfig& cfg, const ParamSet& params,
                                       const semantic::FeatureTable& feats);

// scores[i] = g(h)^T v_i for every catalog title.
void score_all(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
               const CandidateMatrix& matrix, std::vector<double>& scores);

// Number of candidate-score evaluations since the last reset; lets tests
// assert the single-decoding-pass contract.
std::int64_t score_eval_count();
void reset_score_eval_count();

}  // namespace genrec::decoder

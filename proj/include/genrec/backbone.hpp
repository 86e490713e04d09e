#pragma once

// Causal pre-norm transformer with fused event tokens and a handwritten
// backward pass over cached activations.

#include <array>
#include <vector>

#include "genrec/model.hpp"
#include "genrec/semantic.hpp"

namespace genrec::backbone {

// One window of events resolved against the catalog. `oov` marks events that
// must route through the OOV embedding (cold titles or input-side masking).
struct EventWindow {
    std::vector<int> items;
    std::vector<unsigned char> oov;
    std::vector<std::array<int, 3>> ctx;

    int len() const { return static_cast<int>(items.size()); }
    void push(int item, bool is_oov, const std::array<int, 3>& context) {
        items.push_back(item);
        oov.push_back(is_oov ? 1 : 0);
        ctx.push_back(context);
    }
};

struct LayerCache {
    std::vector<double> in;     // block input
    std::vector<double> n1;     // LN1 output
    std::vector<double> mean1, rstd1;
    std::vector<double> q, k, v;
    std::vector<double> probs;  // heads * S * S attention weights
    std::vector<double> att;    // concatenated head contexts
    std::vector<double> in2;    // input to the feed-forward sublayer
    std::vector<double> n2;
    std::vector<double> mean2, rstd2;
    std::vector<double> u1, g1;  // pre/post activation of the hidden layer
};

struct Cache {
    int len = 0;
    std::vector<double> x;  // tokens plus positional rows
    std::vector<LayerCache> layers;
    std::vector<double> fin_in;
    std::vector<double> meanf, rstdf;
};

// ID/OOV row + semantic projection + context rows, then the optional
// embed-to-width adapter. Positional rows are added by forward().
void embed_events(const ModelConfig& cfg, const ParamSet& params, const EventWindow& window,
                  const semantic::FeatureTable& feats, std::vector<double>& tokens);

// hidden[t] depends only on tokens[0..t].
void forward(const ModelConfig& cfg, const ParamSet& params, const std::vector<double>& tokens,
             int len, Cache& cache, std::vector<double>& hidden);

// Accumulates parameter gradients and returns token gradients.
void backward(const ModelConfig& cfg, const ParamSet& params, const Cache& cache,
              const std::vector<double>& d_hidden, ParamSet& grads,
              std::vector<double>& d_tokens);

// Routes token gradients into the embedding tensors.
void embed_backward(const ModelConfig& cfg, const ParamSet& params, const EventWindow& window,
                    const semantic::FeatureTable& feats, const std::vector<double>& d_tokens,
                    ParamSet& grads);

}  // namespace genrec::backbone

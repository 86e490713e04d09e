#include "genrec/cost.hpp"

#include <cmath>

namespace genrec::cost {

namespace {
constexpr double kFlopsPerDecodeParam = 12.0;
}

std::string to_string(DecodeMode mode) {
    switch (mode) {
        case DecodeMode::full: return "full";
        case DecodeMode::sampled: return "sampled";
        case DecodeMode::projected: return "projected";
        case DecodeMode::sampled_projected: return "sampled+projected";
    }
    throw InternalError("unknown decode mode");
}

DecodeMode decode_mode_from_string(const std::string& name) {
    const std::string n = lowercase(name);
    if (n == "full") return DecodeMode::full;
    if (n == "sampled") return DecodeMode::sampled;
    if (n == "projected") return DecodeMode::projected;
    if (n == "sampled+projected" || n == "sampled_projected") return DecodeMode::sampled_projected;
    throw ConfigError("unknown decode mode: " + name);
}

void CostQuery::validate() const {
    if (layers < 1 || width < 1 || seq_len < 1) throw ConfigError("cost query dims must be >= 1");
    if (width % 8 != 0) throw ConfigError("width must be a multiple of 8");
    if (vocab < 2) throw ConfigError("vocab must be >= 2");
    if (!(sample_fraction > 0.0) || sample_fraction > 1.0)
        throw ConfigError("sample fraction must lie in (0,1]");
    if (n_positives < 1) throw ConfigError("n_positives must be >= 1");
    const bool samples = mode == DecodeMode::sampled || mode == DecodeMode::sampled_projected;
    if (samples && sample_fraction * static_cast<double>(vocab) < 1.0)
        throw ConfigError("sample fraction * vocab must be >= 1");
}

double backbone_flops_per_token(int layers, int width, int seq_len) {
    if (layers < 1 || width < 1 || seq_len < 1) throw ConfigError("dims must be >= 1");
    const double L = layers, d = width, S = seq_len;
    return 48.0 * L * d * d + 8.0 * L * S * d;
}

double decode_flops_per_token(const CostQuery& q) {
    q.validate();
    const double d = q.width;
    const double proj = d / 8.0;
    const double V = static_cast<double>(q.vocab);
    const double sampled_set =
        std::ceil(q.sample_fraction * V) + static_cast<double>(q.n_positives);
    double decode_params = 0.0;
    switch (q.mode) {
        case DecodeMode::full: decode_params = d * V; break;
        case DecodeMode::sampled: decode_params = d * sampled_set; break;
        case DecodeMode::projected: decode_params = d * proj + proj * V; break;
        case DecodeMode::sampled_projected: decode_params = d * proj + proj * sampled_set; break;
    }
    return kFlopsPerDecodeParam * decode_params;
}

double total_flops_per_token(const CostQuery& q) {
    return backbone_flops_per_token(q.layers, q.width, q.seq_len) + decode_flops_per_token(q);
}

std::vector<SweepRow> sweep(const CostQuery& base, const std::vector<std::int64_t>& vocab_grid,
                            const std::vector<DecodeMode>& modes) {
    std::vector<SweepRow> rows;
    rows.reserve(vocab_grid.size() * modes.size());
    for (std::int64_t v : vocab_grid) {
        for (DecodeMode m : modes) {
            CostQuery q = base;
            q.vocab = v;
            q.mode = m;
            rows.push_back({v, m, total_flops_per_token(q)});
        }
    }
    return rows;
}

}  // namespace genrec::cost

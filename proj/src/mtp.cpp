#include "genrec/mtp.hpp"

#include <cmath>
#include <limits>

namespace genrec::mtp {

std::string to_string(RewardWeighting w) {
    return w == RewardWeighting::unit ? "unit" : "reward";
}

RewardWeighting reward_weighting_from_string(const std::string& s) {
    if (s == "unit") return RewardWeighting::unit;
    if (s == "reward") return RewardWeighting::reward;
    throw ConfigError("unknown reward weighting: " + s);
}

void MtpConfig::validate() const {
    if (window < 1) throw ConfigError("mtp window must be >= 1");
    if (!(half_life_seconds > 0.0)) throw ConfigError("half life must be > 0");
    if (horizon_seconds <= 0) throw ConfigError("mtp horizon must be > 0");
}

double decay_weight(double r, std::int64_t t, std::int64_t t_context,
                    double half_life_seconds) {
    return r * std::exp2(-static_cast<double>(t - t_context) / half_life_seconds);
}

MtpLabelSet build_label_set(std::span<const world::Event> future, std::int64_t t_context,
                            const MtpConfig& config) {
    config.validate();
    MtpLabelSet set;
    set.t_context = t_context;
    std::int64_t prev = std::numeric_limits<std::int64_t>::min();
    for (const world::Event& ev : future) {
        if (ev.timestamp < prev) throw DataError("future events must be time-sorted");
        prev = ev.timestamp;
        if (ev.timestamp < t_context) continue;
        if (ev.timestamp > t_context + config.horizon_seconds) break;
        if (!ev.high_value) continue;
        MtpLabel label;
        label.item = ev.item;
        label.t = ev.timestamp;
        label.r = config.weighting == RewardWeighting::unit ? 1.0 : ev.reward;
        label.w = decay_weight(label.r, label.t, t_context, config.half_life_seconds);
        set.entries.push_back(label);
        if (static_cast<int>(set.entries.size()) == config.window) break;
    }
    return set;
}

double mtp_loss(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
                const MtpLabelSet& labels, std::span<const decoder::Candidate> candidates,
                const semantic::FeatureTable& feats, ParamSet* grads, double* d_hidden,
                std::vector<double>* logits_out) {
    if (labels.entries.empty()) throw InternalError("mtp_loss called with an empty label set");
    std::vector<decoder::Target> targets;
    targets.reserve(labels.entries.size());
    for (const MtpLabel& label : labels.entries) {
        int idx = -1;
        for (size_t i = 0; i < candidates.size(); ++i)
            if (candidates[i].id == label.item) idx = static_cast<int>(i);
        if (idx < 0) throw InternalError("mtp label missing from the candidate set");
        targets.push_back({idx, label.w});
    }
    return decoder::weighted_ce_loss(cfg, params, hidden, candidates, targets, feats, grads,
                                     d_hidden, logits_out);
}

}  // namespace genrec::mtp

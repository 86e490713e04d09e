#include "genrec/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <thread>

#include "genrec/backbone.hpp"
#include "genrec/decoder.hpp"
#include "json.hpp"

namespace genrec::train {

using nlohmann::json;

std::string to_string(Objective o) { return o == Objective::ntp ? "ntp" : "mtp"; }

Objective objective_from_string(const std::string& s) {
    if (s == "ntp") return Objective::ntp;
    if (s == "mtp") return Objective::mtp;
    throw ConfigError("unknown objective '" + s + "' (expected ntp or mtp)");
}

void OptimConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("optim: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optim: beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optim: beta2 must be in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("optim: eps must be > 0");
    if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be >= 0");
    if (warmup_steps < 0) throw ConfigError("optim: warmup_steps must be >= 0");
    if (!(final_lr_ratio > 0.0 && final_lr_ratio <= 1.0)) {
        throw ConfigError("optim: final_lr_ratio must be in (0,1]");
    }
}

double OptimConfig::lr_at(int step, int total_steps) const {
    if (warmup_steps > 0 && step <= warmup_steps) {
        return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    const int span = total_steps - warmup_steps;
    if (span <= 0) return lr;
    const double progress =
        std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return lr * (final_lr_ratio + (1.0 - final_lr_ratio) * cosine);
}

void TrainConfig::validate() const {
    model.validate();
    mtp.validate();
    masking.validate();
    optim.validate();
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
        throw ConfigError("train: sample_fraction must be in (0,1]");
    }
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
    if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
    if (threads < 0) throw ConfigError("train: threads must be >= 0");
    if (eval_k < 1) throw ConfigError("train: eval_k must be >= 1");
    if (eval_user_cap < 0) throw ConfigError("train: eval_user_cap must be >= 0");
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["model"] = json::parse(model_config_to_json(cfg.model));
    j["objective"] = to_string(cfg.objective);
    j["mtp"] = {{"window", cfg.mtp.window},
                {"half_life_seconds", cfg.mtp.half_life_seconds},
                {"horizon_seconds", cfg.mtp.horizon_seconds},
                {"weighting", mtp::to_string(cfg.mtp.weighting)}};
    j["sample_fraction"] = cfg.sample_fraction;
    j["masking"] = {{"p_mask", cfg.masking.p_mask},
                    {"side", semantic::to_string(cfg.masking.side)}};
    j["optim"] = {{"lr", cfg.optim.lr},
                  {"beta1", cfg.optim.beta1},
                  {"beta2", cfg.optim.beta2},
                  {"eps", cfg.optim.eps},
                  {"weight_decay", cfg.optim.weight_decay},
                  {"warmup_steps", cfg.optim.warmup_steps},
                  {"final_lr_ratio", cfg.optim.final_lr_ratio}};
    j["batch"] = cfg.batch;
    j["steps"] = cfg.steps;
    j["eval_every"] = cfg.eval_every;
    j["log_every"] = cfg.log_every;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["eval_k"] = cfg.eval_k;
    j["eval_user_cap"] = cfg.eval_user_cap;
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: invalid JSON: ") + e.what());
    }
    TrainConfig cfg;
    try {
        if (j.contains("model")) cfg.model = model_config_from_json(j["model"].dump());
        cfg.objective = objective_from_string(j.value("objective", to_string(cfg.objective)));
        if (j.contains("mtp")) {
            const json& m = j["mtp"];
            cfg.mtp.window = m.value("window", cfg.mtp.window);
            cfg.mtp.half_life_seconds = m.value("half_life_seconds", cfg.mtp.half_life_seconds);
            cfg.mtp.horizon_seconds = m.value("horizon_seconds", cfg.mtp.horizon_seconds);
            cfg.mtp.weighting = mtp::reward_weighting_from_string(
                m.value("weighting", mtp::to_string(cfg.mtp.weighting)));
        }
        cfg.sample_fraction = j.value("sample_fraction", cfg.sample_fraction);
        if (j.contains("masking")) {
            const json& m = j["masking"];
            cfg.masking.p_mask = m.value("p_mask", cfg.masking.p_mask);
            cfg.masking.side = semantic::mask_side_from_string(
                m.value("side", semantic::to_string(cfg.masking.side)));
        }
        if (j.contains("optim")) {
            const json& o = j["optim"];
            cfg.optim.lr = o.value("lr", cfg.optim.lr);
            cfg.optim.beta1 = o.value("beta1", cfg.optim.beta1);
            cfg.optim.beta2 = o.value("beta2", cfg.optim.beta2);
            cfg.optim.eps = o.value("eps", cfg.optim.eps);
            cfg.optim.weight_decay = o.value("weight_decay", cfg.optim.weight_decay);
            cfg.optim.warmup_steps = o.value("warmup_steps", cfg.optim.warmup_steps);
            cfg.optim.final_lr_ratio = o.value("final_lr_ratio", cfg.optim.final_lr_ratio);
        }
        cfg.batch = j.value("batch", cfg.batch);
        cfg.steps = j.value("steps", cfg.steps);
        cfg.eval_every = j.value("eval_every", cfg.eval_every);
        cfg.log_every = j.value("log_every", cfg.log_every);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.threads = j.value("threads", cfg.threads);
        cfg.eval_k = j.value("eval_k", cfg.eval_k);
        cfg.eval_user_cap = j.value("eval_user_cap", cfg.eval_user_cap);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
    std::string out = "step,split,task,metric,value\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + ',' + r.split + ',' + r.task + ',' + r.metric + ',' +
               format_double(r.value) + '\n';
    }
    return out;
}

ParamSet init_params(const TrainConfig& cfg) {
    ParamSet params = ParamSet::build(cfg.model, mix_seed(cfg.seed, fnv1a("init")));
    params.snap_to_precision();
    return params;
}

namespace {

struct ExampleScratch {
    ParamSet grads;
    std::vector<double> tokens, hidden, d_hidden, d_tokens;
    backbone::Cache cache;
    double loss = 0.0;
    std::int64_t scored = 0;
};

// One sampled example: a window ending at a random position with at least one
// following event, every local position scored against its own future.
void run_example(const TrainConfig& cfg, const world::Dataset& train_split,
                 const semantic::FeatureTable& feats, const ParamSet& params,
                 const std::vector<int>& eligible, std::uint64_t example_seed,
                 ExampleScratch& s) {
    s.loss = 0.0;
    s.scored = 0;
    Rng rng(example_seed);
    const int user = eligible[static_cast<std::size_t>(rng.below(eligible.size()))];
    const auto& hist = train_split.histories[user];
    const int len = static_cast<int>(hist.size());
    const int end = static_cast<int>(rng.below(static_cast<std::uint64_t>(len - 1)));
    const int start = std::max(0, end - cfg.model.seq_len + 1);
    const int n = end - start + 1;

    backbone::EventWindow window;
    for (int i = start; i <= end; ++i) {
        const auto& ev = hist[i];
        const bool masked = semantic::mask_decision(cfg.masking, rng, /*is_input=*/true);
        window.push(ev.item, masked || ev.item >= cfg.model.vocab, ev.context);
    }
    backbone::embed_events(cfg.model, params, window, feats, s.tokens);
    backbone::forward(cfg.model, params, s.tokens, n, s.cache, s.hidden);
    s.d_hidden.assign(s.hidden.size(), 0.0);

    std::vector<int> uniq;
    std::vector<decoder::Candidate> cands;
    for (int p = 0; p < n; ++p) {
        const int g = start + p;
        mtp::MtpLabelSet labels;
        labels.t_context = hist[g].timestamp;
        if (cfg.objective == Objective::ntp) {
            // Next-event target at zero delay, so its weight is exactly 1.
            mtp::MtpLabel lab;
            lab.item = hist[g + 1].item;
            lab.t = hist[g].timestamp;
            lab.r = 1.0;
            lab.w = 1.0;
            labels.entries.push_back(lab);
        } else {
            const std::span<const world::Event> future(hist.data() + g + 1,
                                                       static_cast<std::size_t>(len - g - 1));
            labels = mtp::build_label_set(future, hist[g].timestamp, cfg.mtp);
            if (labels.entries.empty()) continue;
        }
        uniq.clear();
        for (const auto& lab : labels.entries) {
            if (std::find(uniq.begin(), uniq.end(), lab.item) == uniq.end()) {
                uniq.push_back(lab.item);
            }
        }
        cands.clear();
        for (int id : uniq) {
            const bool masked = semantic::mask_decision(cfg.masking, rng, /*is_input=*/false);
            cands.push_back({id, masked || id >= cfg.model.vocab});
        }
        for (int id : decoder::sample_negatives_excluding(cfg.model.vocab, cfg.sample_fraction,
                                                          uniq, rng)) {
            cands.push_back({id, false});
        }
        s.loss += mtp::mtp_loss(cfg.model, params, s.hidden.data() +
                                    static_cast<std::size_t>(p) * cfg.model.width,
                                labels, cands, feats, &s.grads,
                                s.d_hidden.data() + static_cast<std::size_t>(p) * cfg.model.width);
        ++s.scored;
    }
    if (s.scored == 0) return;
    backbone::backward(cfg.model, params, s.cache, s.d_hidden, s.grads, s.d_tokens);
    backbone::embed_backward(cfg.model, params, window, feats, s.d_tokens, s.grads);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const world::DatasetPair& data, ParamSet& params,
                  const std::string& checkpoint_out) {
    cfg.validate();
    if (data.train.catalog.in_vocab_count != cfg.model.vocab) {
        throw DataError("train: model vocab " + std::to_string(cfg.model.vocab) +
                        " does not match catalog in-vocab count " +
                        std::to_string(data.train.catalog.in_vocab_count));
    }
    const semantic::FeatureTable feats = semantic::FeatureTable::build(data.train.catalog);
    if (feats.dim != cfg.model.feat_dim()) {
        throw DataError("train: catalog feature width does not match model config");
    }
    std::vector<int> eligible;
    for (int u = 0; u < data.train.n_users(); ++u) {
        if (data.train.histories[u].size() >= 2) eligible.push_back(u);
    }
    if (eligible.empty()) throw DataError("train: no user has two training events");

    TrainResult result;
    const auto record_eval = [&](int step_no) {
        const eval::EvalReport rep = eval::evaluate(cfg.model, params, data.train,
                                                    data.validation, cfg.eval_k,
                                                    cfg.eval_user_cap);
        static const char* kMetrics[3] = {"mrr", "hit", "ndcg"};
        double mean_mrr = 0.0;
        for (int t = 0; t < world::kNumTasks; ++t) {
            const auto task = static_cast<world::Task>(t);
            const std::string task_name(1, world::task_tag(task));
            for (const char* metric : kMetrics) {
                result.metrics.push_back(
                    {step_no, "validation", task_name, metric, rep.value(task, "all", 0, metric)});
            }
            const double mrr = rep.value(task, "all", 0, "mrr");
            mean_mrr += mrr / world::kNumTasks;
            result.best_val_mrr[t] = std::max(result.best_val_mrr[t], mrr);
        }
        result.best_val_mrr_mean = std::max(result.best_val_mrr_mean, mean_mrr);
    };

    if (cfg.steps == 0) {
        record_eval(0);
        return result;
    }

    const int nthreads =
        cfg.threads > 0 ? cfg.threads
                        : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    std::vector<ExampleScratch> scratch(cfg.batch);
    for (auto& s : scratch) s.grads = ParamSet::zeros(cfg.model);
    ParamSet m_state = ParamSet::zeros(cfg.model);
    ParamSet v_state = ParamSet::zeros(cfg.model);
    ParamSet last_good = params;
    const std::uint64_t example_base = mix_seed(cfg.seed, fnv1a("example"));

    const auto abort_numeric = [&](const std::string& what) {
        std::string msg = what;
        if (!checkpoint_out.empty()) {
            const std::string path = checkpoint_out + ".last-good";
            save_checkpoint(last_good, train_config_to_json(cfg), path);
            msg += "; last good checkpoint: " + path;
        }
        throw NumericError(msg);
    };

    for (int step = 1; step <= cfg.steps; ++step) {
        for (auto& s : scratch) s.grads.fill(0.0);
        const std::uint64_t first_id =
            static_cast<std::uint64_t>(step - 1) * static_cast<std::uint64_t>(cfg.batch);
        const auto worker = [&](int tid) {
            for (int b = tid; b < cfg.batch; b += nthreads) {
                run_example(cfg, data.train, feats, params, eligible,
                            mix_seed(example_base, first_id + static_cast<std::uint64_t>(b)),
                            scratch[b]);
            }
        };
        if (nthreads == 1 || cfg.batch == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            const int used = std::min(nthreads, cfg.batch);
            pool.reserve(used);
            for (int t = 0; t < used; ++t) pool.emplace_back(worker, t);
            for (auto& th : pool) th.join();
        }

        double batch_loss = 0.0;
        std::int64_t total = 0;
        for (const auto& s : scratch) {
            batch_loss += s.loss;
            total += s.scored;
        }
        if (total > 0) batch_loss /= static_cast<double>(total);
        if (!std::isfinite(batch_loss)) {
            abort_numeric("train: non-finite loss at step " + std::to_string(step));
        }
        if (step == 1) result.first_loss = batch_loss;
        result.final_loss = batch_loss;

        if (total > 0) {
            const double inv_total = 1.0 / static_cast<double>(total);
            const double lr_t = cfg.optim.lr_at(step, cfg.steps);
            const double bc1 = 1.0 - std::pow(cfg.optim.beta1, step);
            const double bc2 = 1.0 - std::pow(cfg.optim.beta2, step);
            const std::size_t n_tensors = params.tensors().size();
            for (std::size_t j = 0; j < n_tensors; ++j) {
                Tensor& w = params.tensors()[j];
                double* m = m_state.tensors()[j].v.data();
                double* v = v_state.tensors()[j].v.data();
                const double wd = w.shape.size() >= 2 ? cfg.optim.weight_decay : 0.0;
                for (std::size_t i = 0; i < w.v.size(); ++i) {
                    // Gradients merge in fixed batch order, independent of
                    // the thread count.
                    double g = 0.0;
                    for (const auto& s : scratch) g += s.grads.tensors()[j].v[i];
                    g *= inv_total;
                    m[i] = cfg.optim.beta1 * m[i] + (1.0 - cfg.optim.beta1) * g;
                    v[i] = cfg.optim.beta2 * v[i] + (1.0 - cfg.optim.beta2) * g * g;
                    const double mh = m[i] / bc1;
                    const double vh = v[i] / bc2;
                    w.v[i] -= lr_t * (mh / (std::sqrt(vh) + cfg.optim.eps) + wd * w.v[i]);
                }
            }
            params.snap_to_precision();
            try {
                params.check_finite();
            } catch (const NumericError& e) {
                abort_numeric(std::string("train: ") + e.what() + " at step " +
                              std::to_string(step));
            }
        }
        last_good = params;

        if (step % cfg.log_every == 0 || step == 1 || step == cfg.steps) {
            result.metrics.push_back({step, "train", "-", "loss", batch_loss});
        }
        if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && step != cfg.steps) {
            record_eval(step);
        }
    }
    record_eval(cfg.steps);
    result.steps_run = cfg.steps;
    return result;
}

std::vector<LadderRung> default_ladder(const ModelConfig& base) {
    struct Shape {
        const char* label;
        int layers, width, heads;
    };
    static const Shape kShapes[] = {
        {"L1-d16", 1, 16, 2}, {"L2-d16", 2, 16, 2}, {"L2-d32", 2, 32, 4},
        {"L2-d48", 2, 48, 4}, {"L2-d64", 2, 64, 4}, {"L3-d64", 3, 64, 4},
    };
    std::vector<LadderRung> out;
    for (const auto& s : kShapes) {
        ModelConfig m = base;
        m.layers = s.layers;
        m.width = s.width;
        m.heads = s.heads;
        // Pin the embedding dim so embeddings and decoding are identical
        // across rungs and only the backbone varies.
        m.embed_dim = base.emb();
        m.validate();
        out.push_back({s.label, m});
    }
    return out;
}

std::vector<SweepPoint> sweep(const TrainConfig& base, const world::DatasetPair& data,
                              const std::vector<LadderRung>& ladder) {
    if (ladder.size() < 3) throw ConfigError("sweep: at least 3 rungs required");
    std::vector<SweepPoint> out;
    out.reserve(ladder.size());
    for (const auto& rung : ladder) {
        SweepPoint pt;
        pt.label = rung.label;
        TrainConfig cfg = base;
        cfg.model = rung.model;
        try {
            cfg.validate();
            pt.n_backbone = param_count(cfg.model, Scope::backbone);
            ParamSet params = init_params(cfg);
            const TrainResult res = train(cfg, data, params);
            pt.best_mrr = res.best_val_mrr;
            pt.final_loss = res.final_loss;
        } catch (const std::exception& e) {
            pt.failed = true;
            pt.error = e.what();
        }
        out.push_back(std::move(pt));
    }
    return out;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
    std::string out = "task,n,p,label\n";
    for (int t = 0; t < world::kNumTasks; ++t) {
        const char tag = world::task_tag(static_cast<world::Task>(t));
        for (const auto& pt : points) {
            if (pt.failed) continue;
            out += tag;
            out += ',' + std::to_string(pt.n_backbone) + ',' + format_double(pt.best_mrr[t]) +
                   ',' + pt.label + '\n';
        }
    }
    return out;
}

}  // namespace genrec::train

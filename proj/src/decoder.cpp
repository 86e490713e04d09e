#include "genrec/decoder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "genrec/nn.hpp"

namespace genrec::decoder {

namespace {
std::atomic<std::int64_t> g_score_evals{0};

int negative_count(int vocab, double fraction) {
    if (vocab < 2) throw ConfigError("vocab must be >= 2 for negative sampling");
    if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("sampling fraction must be in (0,1]");
    if (fraction * vocab < 1.0)
        throw ConfigError("sampling fraction picks no negatives at this vocab");
    return static_cast<int>(std::ceil(fraction * vocab));
}
}  // namespace

std::vector<int> sample_negatives_excluding(int vocab, double fraction,
                                            std::span<const int> exclude, Rng& rng) {
    const int want = negative_count(vocab, fraction);
    std::vector<int> allowed;
    allowed.reserve(static_cast<size_t>(vocab));
    for (int i = 0; i < vocab; ++i)
        if (std::find(exclude.begin(), exclude.end(), i) == exclude.end()) allowed.push_back(i);
    const int n = std::min<int>(want, static_cast<int>(allowed.size()));
    for (int i = 0; i < n; ++i) {
        const int j = i + static_cast<int>(rng.below(allowed.size() - static_cast<size_t>(i)));
        std::swap(allowed[static_cast<size_t>(i)], allowed[static_cast<size_t>(j)]);
    }
    allowed.resize(static_cast<size_t>(n));
    return allowed;
}

std::vector<int> sample_negatives(int vocab, double fraction, int target, Rng& rng) {
    const int ex[1] = {target};
    return sample_negatives_excluding(vocab, fraction, std::span<const int>(ex, 1), rng);
}

double weighted_ce_loss(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
                        std::span<const Candidate> candidates, std::span<const Target> targets,
                        const semantic::FeatureTable& feats, ParamSet* grads, double* d_hidden,
                        std::vector<double>* logits_out) {
    const int nc = static_cast<int>(candidates.size());
    if (nc < 1) throw InternalError("empty candidate set");
    for (int i = 0; i < nc; ++i)
        for (int j = i + 1; j < nc; ++j)
            if (candidates[static_cast<size_t>(i)].id == candidates[static_cast<size_t>(j)].id)
                throw InternalError("duplicate candidate id " +
                                    std::to_string(candidates[static_cast<size_t>(i)].id));
    for (const Target& t : targets)
        if (t.cand_index < 0 || t.cand_index >= nc)
            throw InternalError("target index outside the candidate set");

    const int e = cfg.emb();
    const int dz = cfg.dz();
    const int hp = cfg.psi_width();
    const int dw = cfg.decode_width();

    std::vector<double> u(static_cast<size_t>(dw));
    semantic::project_user(cfg, params, hidden, u.data());

    // One scoring pass: every candidate is evaluated exactly once.
    std::vector<double> zs(static_cast<size_t>(nc) * static_cast<size_t>(dz));
    std::vector<double> a1s(static_cast<size_t>(nc) * static_cast<size_t>(hp));
    std::vector<double> g1s(a1s.size());
    std::vector<double> vs(static_cast<size_t>(nc) * static_cast<size_t>(dw));
    std::vector<double> logits(static_cast<size_t>(nc));
    for (int c = 0; c < nc; ++c) {
        const Candidate& cand = candidates[static_cast<size_t>(c)];
        if (cand.id >= cfg.vocab && !cand.oov)
            throw InternalError("candidate outside the vocabulary without OOV routing");
        double* z = zs.data() + static_cast<long>(c) * dz;
        semantic::phi_sem(cfg, params, feats.row(cand.id), z);
        const double* e_id = semantic::resolve_id_embedding(cfg, params, cand.id, cand.oov);
        semantic::title_vector(cfg, params, e_id, z, vs.data() + static_cast<long>(c) * dw,
                               a1s.data() + static_cast<long>(c) * hp,
                               g1s.data() + static_cast<long>(c) * hp);
        double s = 0.0;
        const double* v = vs.data() + static_cast<long>(c) * dw;
        for (int j = 0; j < dw; ++j) s += u[static_cast<size_t>(j)] * v[j];
        logits[static_cast<size_t>(c)] = s;
    }
    g_score_evals.fetch_add(nc, std::memory_order_relaxed);
    if (logits_out != nullptr) *logits_out = logits;

    double max_logit = logits[0];
    for (double s : logits) max_logit = std::max(max_logit, s);
    double lse = 0.0;
    for (double s : logits) lse += std::exp(s - max_logit);
    lse = max_logit + std::log(lse);
    if (!std::isfinite(lse)) throw NumericError("non-finite logits in candidate scoring");

    double total_weight = 0.0, loss = 0.0;
    for (const Target& t : targets) {
        total_weight += t.weight;
        loss += t.weight * (lse - logits[static_cast<size_t>(t.cand_index)]);
    }
    if (grads == nullptr) return loss;

    // dL/ds_c = W * softmax_c - sum of weights targeting c.
    std::vector<double> dlogits(static_cast<size_t>(nc));
    for (int c = 0; c < nc; ++c)
        dlogits[static_cast<size_t>(c)] = total_weight * std::exp(logits[static_cast<size_t>(c)] - lse);
    for (const Target& t : targets) dlogits[static_cast<size_t>(t.cand_index)] -= t.weight;

    std::vector<double> du(static_cast<size_t>(dw), 0.0);
    std::vector<double> dv(static_cast<size_t>(dw));
    std::vector<double> dg1(static_cast<size_t>(hp));
    std::vector<double> da1(static_cast<size_t>(hp));
    std::vector<double> dz_buf(static_cast<size_t>(dz));
    for (int c = 0; c < nc; ++c) {
        const double g = dlogits[static_cast<size_t>(c)];
        const double* v = vs.data() + static_cast<long>(c) * dw;
        for (int j = 0; j < dw; ++j) {
            du[static_cast<size_t>(j)] += g * v[j];
            dv[static_cast<size_t>(j)] = g * u[static_cast<size_t>(j)];
        }

        const Candidate& cand = candidates[static_cast<size_t>(c)];
        const double* g1 = g1s.data() + static_cast<long>(c) * hp;
        const double* a1 = a1s.data() + static_cast<long>(c) * hp;
        std::fill(dg1.begin(), dg1.end(), 0.0);
        nn::affine_backward(g1, params.at("psi.w2").data(), dv.data(), hp, dw,
                            grads->at("psi.w2").data(), grads->at("psi.b2").data(), dg1.data());
        for (int o = 0; o < hp; ++o)
            da1[static_cast<size_t>(o)] = dg1[static_cast<size_t>(o)] * nn::gelu_grad(a1[o]);

        // Split the concat input of psi back into its two halves.
        const double* e_id = semantic::resolve_id_embedding(cfg, params, cand.id, cand.oov);
        const double* w1 = params.at("psi.w1").data();
        double* dw1 = grads->at("psi.w1").data();
        double* db1 = grads->at("psi.b1").data();
        for (int o = 0; o < hp; ++o) db1[static_cast<size_t>(o)] += da1[static_cast<size_t>(o)];
        double* de_id = (cand.oov || cand.id >= cfg.vocab)
                            ? grads->at("embed.oov").data()
                            : grads->at("embed.id").data() + static_cast<long>(cand.id) * e;
        for (int i = 0; i < e; ++i) {
            const double* row = w1 + static_cast<long>(i) * hp;
            double* drow = dw1 + static_cast<long>(i) * hp;
            const double xi = e_id[i];
            double acc = 0.0;
            for (int o = 0; o < hp; ++o) {
                drow[o] += xi * da1[static_cast<size_t>(o)];
                acc += row[o] * da1[static_cast<size_t>(o)];
            }
            de_id[i] += acc;
        }
        const double* z = zs.data() + static_cast<long>(c) * dz;
        for (int i = 0; i < dz; ++i) {
            const double* row = w1 + static_cast<long>(e + i) * hp;
            double* drow = dw1 + static_cast<long>(e + i) * hp;
            const double xi = z[i];
            double acc = 0.0;
            for (int o = 0; o < hp; ++o) {
                drow[o] += xi * da1[static_cast<size_t>(o)];
                acc += row[o] * da1[static_cast<size_t>(o)];
            }
            dz_buf[static_cast<size_t>(i)] = acc;
        }
        nn::affine_backward(feats.row(cand.id), params.at("phi.w").data(), dz_buf.data(),
                            cfg.feat_dim(), dz, grads->at("phi.w").data(),
                            grads->at("phi.b").data(), nullptr);
    }

    if (cfg.head == DecodeHead::full) {
        if (d_hidden != nullptr)
            for (int j = 0; j < dw; ++j) d_hidden[j] += du[static_cast<size_t>(j)];
    } else {
        nn::affine_backward(hidden, params.at("head.w").data(), du.data(), cfg.width, dw,
                            grads->at("head.w").data(), nullptr, d_hidden);
    }
    return loss;
}

double ntp_loss(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
                int target_id, std::span<const Candidate> candidates,
                const semantic::FeatureTable& feats, ParamSet* grads, double* d_hidden,
                std::vector<double>* logits_out) {
    int idx = -1;
    for (size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i].id == target_id) idx = static_cast<int>(i);
    if (idx < 0) throw InternalError("target id missing from the candidate set");
    const Target t{idx, 1.0};
    return weighted_ce_loss(cfg, params, hidden, candidates, std::span<const Target>(&t, 1),
                            feats, grads, d_hidden, logits_out);
}

CandidateMatrix build_candidate_matrix(const ModelConfig& cfg, const ParamSet& params,
                                       const semantic::FeatureTable& feats) {
    CandidateMatrix m;
    m.n = feats.rows;
    m.dw = cfg.decode_width();
    m.v.resize(static_cast<size_t>(m.n) * static_cast<size_t>(m.dw));
    std::vector<double> z(static_cast<size_t>(cfg.dz()));
    std::vector<double> a1(static_cast<size_t>(cfg.psi_width()));
    std::vector<double> g1(a1.size());
    for (int id = 0; id < m.n; ++id) {
        semantic::phi_sem(cfg, params, feats.row(id), z.data());
        const double* e_id = semantic::resolve_id_embedding(cfg, params, id, id >= cfg.vocab);
        semantic::title_vector(cfg, params, e_id, z.data(),
                               m.v.data() + static_cast<long>(id) * m.dw, a1.data(), g1.data());
    }
    return m;
}

void score_all(const ModelConfig& cfg, const ParamSet& params, const double* hidden,
               const CandidateMatrix& matrix, std::vector<double>& scores) {
    std::vector<double> u(static_cast<size_t>(matrix.dw));
    semantic::project_user(cfg, params, hidden, u.data());
    scores.assign(static_cast<size_t>(matrix.n), 0.0);
    for (int i = 0; i < matrix.n; ++i) {
        const double* v = matrix.v.data() + static_cast<long>(i) * matrix.dw;
        double s = 0.0;
        for (int j = 0; j < matrix.dw; ++j) s += u[static_cast<size_t>(j)] * v[j];
        scores[static_cast<size_t>(i)] = s;
    }
    g_score_evals.fetch_add(matrix.n, std::memory_order_relaxed);
}

std::int64_t score_eval_count() { return g_score_evals.load(std::memory_order_relaxed); }
void reset_score_eval_count() { g_score_evals.store(0, std::memory_order_relaxed); }

}  // namespace genrec::decoder

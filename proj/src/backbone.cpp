#include "genrec/backbone.hpp"

#include <cmath>

#include "genrec/nn.hpp"

namespace genrec::backbone {

namespace {
constexpr double kLnEps = 1e-5;

void layer_norm_forward(const double* x, const double* gamma, const double* beta, int len, int d,
                        double* y, double* means, double* rstds) {
    for (int t = 0; t < len; ++t) {
        const double* xt = x + static_cast<long>(t) * d;
        double* yt = y + static_cast<long>(t) * d;
        double mean = 0.0;
        for (int i = 0; i < d; ++i) mean += xt[i];
        mean /= d;
        double var = 0.0;
        for (int i = 0; i < d; ++i) var += (xt[i] - mean) * (xt[i] - mean);
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        means[t] = mean;
        rstds[t] = rstd;
        for (int i = 0; i < d; ++i) yt[i] = gamma[i] * ((xt[i] - mean) * rstd) + beta[i];
    }
}

// dx, dgamma, dbeta accumulated from dy; x is the pre-norm input.
void layer_norm_backward(const double* x, const double* gamma, const double* dy,
                         const double* means, const double* rstds, int len, int d, double* dx,
                         double* dgamma, double* dbeta) {
    for (int t = 0; t < len; ++t) {
        const double* xt = x + static_cast<long>(t) * d;
        const double* dyt = dy + static_cast<long>(t) * d;
        double* dxt = dx + static_cast<long>(t) * d;
        const double mean = means[t];
        const double rstd = rstds[t];
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
            const double xhat = (xt[i] - mean) * rstd;
            const double dxhat = dyt[i] * gamma[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dgamma[i] += dyt[i] * xhat;
            dbeta[i] += dyt[i];
        }
        const double inv_d = 1.0 / d;
        for (int i = 0; i < d; ++i) {
            const double xhat = (xt[i] - mean) * rstd;
            const double dxhat = dyt[i] * gamma[i];
            dxt[i] += rstd * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
    }
}

// y[t] = x[t] W + b over all positions; W is (in, out) row-major.
void linear_forward(const double* x, const double* w, const double* b, int len, int in, int out,
                    double* y) {
    for (int t = 0; t < len; ++t)
        nn::affine_forward(x + static_cast<long>(t) * in, w, b, in, out,
                           y + static_cast<long>(t) * out);
}

void linear_backward(const double* x, const double* w, const double* dy, int len, int in, int out,
                     double* dw, double* db, double* dx) {
    for (int t = 0; t < len; ++t)
        nn::affine_backward(x + static_cast<long>(t) * in, w, dy + static_cast<long>(t) * out, in,
                            out, dw, db, dx != nullptr ? dx + static_cast<long>(t) * in : nullptr);
}

int ctx_offset(const ModelConfig& cfg, int field, int value) {
    int base = 0;
    for (int f = 0; f < field; ++f) base += cfg.ctx_cards[static_cast<size_t>(f)];
    if (value < 0 || value >= cfg.ctx_cards[static_cast<size_t>(field)])
        throw DataError("context value out of range for field " + std::to_string(field));
    return base + value;
}

}  // namespace

void embed_events(const ModelConfig& cfg, const ParamSet& params, const EventWindow& window,
                  const semantic::FeatureTable& feats, std::vector<double>& tokens) {
    const int len = window.len();
    if (len < 1 || len > cfg.seq_len) throw DataError("window length outside [1, seq_len]");
    if (static_cast<int>(window.ctx.size()) != len || static_cast<int>(window.oov.size()) != len)
        throw InternalError("event window field lengths disagree");
    if (static_cast<int>(cfg.ctx_cards.size()) != 3)
        throw ConfigError("this generator produces exactly 3 context fields");
    if (feats.dim != cfg.feat_dim()) throw DataError("feature table width mismatch");

    const int e = cfg.emb();
    const int d = cfg.width;
    const bool adapted = params.has("embed.adapter");
    tokens.assign(static_cast<size_t>(len) * static_cast<size_t>(d), 0.0);
    std::vector<double> acc(static_cast<size_t>(e));

    for (int t = 0; t < len; ++t) {
        const int item = window.items[static_cast<size_t>(t)];
        const bool oov = window.oov[static_cast<size_t>(t)] != 0;
        if (item >= cfg.vocab && !oov)
            throw DataError("item id outside the vocabulary without OOV routing: " +
                            std::to_string(item));
        const double* e_id = semantic::resolve_id_embedding(cfg, params, item, oov);
        nn::affine_forward(feats.row(item), params.at("embed.sem.w").data(),
                           params.at("embed.sem.b").data(), cfg.feat_dim(), e, acc.data());
        for (int i = 0; i < e; ++i) acc[static_cast<size_t>(i)] += e_id[i];
        const double* ctx_table = params.at("embed.ctx").data();
        for (int f = 0; f < 3; ++f) {
            const double* row =
                ctx_table + static_cast<long>(ctx_offset(cfg, f, window.ctx[static_cast<size_t>(t)][static_cast<size_t>(f)])) * e;
            for (int i = 0; i < e; ++i) acc[static_cast<size_t>(i)] += row[i];
        }
        double* out = tokens.data() + static_cast<long>(t) * d;
        if (adapted)
            nn::affine_forward(acc.data(), params.at("embed.adapter").data(), nullptr, e, d, out);
        else
            for (int i = 0; i < d; ++i) out[i] = acc[static_cast<size_t>(i)];
    }
}

void forward(const ModelConfig& cfg, const ParamSet& params, const std::vector<double>& tokens,
             int len, Cache& cache, std::vector<double>& hidden) {
    const int d = cfg.width;
    const int nh = cfg.heads;
    const int dh = d / nh;
    const int ff = cfg.ff_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (static_cast<int>(tokens.size()) != len * d) throw InternalError("token shape mismatch");
    if (len < 1 || len > cfg.seq_len) throw DataError("sequence length outside [1, seq_len]");

    cache.len = len;
    cache.x = tokens;
    const double* pos = params.at("embed.pos").data();
    for (int t = 0; t < len; ++t)
        for (int i = 0; i < d; ++i)
            cache.x[static_cast<size_t>(t * d + i)] += pos[static_cast<long>(t) * d + i];

    const size_t sd = static_cast<size_t>(len) * static_cast<size_t>(d);
    cache.layers.assign(static_cast<size_t>(cfg.layers), LayerCache{});
    std::vector<double> h = cache.x;

    for (int l = 0; l < cfg.layers; ++l) {
        LayerCache& lc = cache.layers[static_cast<size_t>(l)];
        const std::string p = "layer." + std::to_string(l) + ".";
        lc.in = h;
        lc.n1.resize(sd);
        lc.mean1.resize(static_cast<size_t>(len));
        lc.rstd1.resize(static_cast<size_t>(len));
        layer_norm_forward(lc.in.data(), params.at(p + "ln1.g").data(),
                           params.at(p + "ln1.b").data(), len, d, lc.n1.data(), lc.mean1.data(),
                           lc.rstd1.data());

        lc.q.resize(sd);
        lc.k.resize(sd);
        lc.v.resize(sd);
        linear_forward(lc.n1.data(), params.at(p + "attn.wq").data(),
                       params.at(p + "attn.bq").data(), len, d, d, lc.q.data());
        linear_forward(lc.n1.data(), params.at(p + "attn.wk").data(),
                       params.at(p + "attn.bk").data(), len, d, d, lc.k.data());
        linear_forward(lc.n1.data(), params.at(p + "attn.wv").data(),
                       params.at(p + "attn.bv").data(), len, d, d, lc.v.data());

        lc.probs.assign(static_cast<size_t>(nh) * static_cast<size_t>(len) * static_cast<size_t>(len), 0.0);
        lc.att.assign(sd, 0.0);
        for (int hh = 0; hh < nh; ++hh) {
            const int off = hh * dh;
            double* probs = lc.probs.data() + static_cast<size_t>(hh) * static_cast<size_t>(len) * static_cast<size_t>(len);
            for (int t = 0; t < len; ++t) {
                double* row = probs + static_cast<long>(t) * len;
                double maxs = -1e300;
                for (int s = 0; s <= t; ++s) {
                    double dot = 0.0;
                    const double* qt = lc.q.data() + static_cast<long>(t) * d + off;
                    const double* ks = lc.k.data() + static_cast<long>(s) * d + off;
                    for (int j = 0; j < dh; ++j) dot += qt[j] * ks[j];
                    row[s] = dot * scale;
                    maxs = std::max(maxs, row[s]);
                }
                double total = 0.0;
                for (int s = 0; s <= t; ++s) {
                    row[s] = std::exp(row[s] - maxs);
                    total += row[s];
                }
                const double inv = 1.0 / total;
                double* at = lc.att.data() + static_cast<long>(t) * d + off;
                for (int s = 0; s <= t; ++s) {
                    row[s] *= inv;
                    const double* vs = lc.v.data() + static_cast<long>(s) * d + off;
                    for (int j = 0; j < dh; ++j) at[j] += row[s] * vs[j];
                }
            }
        }

        lc.in2 = lc.in;
        {
            std::vector<double> proj(sd);
            linear_forward(lc.att.data(), params.at(p + "attn.wo").data(),
                           params.at(p + "attn.bo").data(), len, d, d, proj.data());
            for (size_t i = 0; i < sd; ++i) lc.in2[i] += proj[i];
        }

        lc.n2.resize(sd);
        lc.mean2.resize(static_cast<size_t>(len));
        lc.rstd2.resize(static_cast<size_t>(len));
        layer_norm_forward(lc.in2.data(), params.at(p + "ln2.g").data(),
                           params.at(p + "ln2.b").data(), len, d, lc.n2.data(), lc.mean2.data(),
                           lc.rstd2.data());

        lc.u1.resize(static_cast<size_t>(len) * static_cast<size_t>(ff));
        lc.g1.resize(lc.u1.size());
        linear_forward(lc.n2.data(), params.at(p + "ff.w1").data(), params.at(p + "ff.b1").data(),
                       len, d, ff, lc.u1.data());
        for (size_t i = 0; i < lc.u1.size(); ++i) lc.g1[i] = nn::gelu(lc.u1[i]);

        h = lc.in2;
        {
            std::vector<double> proj(sd);
            linear_forward(lc.g1.data(), params.at(p + "ff.w2").data(),
                           params.at(p + "ff.b2").data(), len, ff, d, proj.data());
            for (size_t i = 0; i < sd; ++i) h[i] += proj[i];
        }
    }

    cache.fin_in = h;
    cache.meanf.resize(static_cast<size_t>(len));
    cache.rstdf.resize(static_cast<size_t>(len));
    hidden.resize(sd);
    layer_norm_forward(cache.fin_in.data(), params.at("final_ln.g").data(),
                       params.at("final_ln.b").data(), len, d, hidden.data(), cache.meanf.data(),
                       cache.rstdf.data());
    for (double v : hidden)
        if (!std::isfinite(v)) throw NumericError("non-finite activation in final layer norm");
}

void backward(const ModelConfig& cfg, const ParamSet& params, const Cache& cache,
              const std::vector<double>& d_hidden, ParamSet& grads,
              std::vector<double>& d_tokens) {
    const int len = cache.len;
    const int d = cfg.width;
    const int nh = cfg.heads;
    const int dh = d / nh;
    const int ff = cfg.ff_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const size_t sd = static_cast<size_t>(len) * static_cast<size_t>(d);
    if (d_hidden.size() != sd) throw InternalError("upstream gradient shape mismatch");

    std::vector<double> dh_cur(sd, 0.0);
    layer_norm_backward(cache.fin_in.data(), params.at("final_ln.g").data(), d_hidden.data(),
                        cache.meanf.data(), cache.rstdf.data(), len, d, dh_cur.data(),
                        grads.at("final_ln.g").data(), grads.at("final_ln.b").data());

    std::vector<double> dn2(sd), du1, dg1, datt(sd), dn1(sd), dq(sd), dk(sd), dv(sd), dimm(sd);
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[static_cast<size_t>(l)];
        const std::string p = "layer." + std::to_string(l) + ".";

        // Feed-forward sublayer: h = in2 + W2 gelu(W1 n2 + b1) + b2.
        dg1.assign(static_cast<size_t>(len) * static_cast<size_t>(ff), 0.0);
        linear_backward(lc.g1.data(), params.at(p + "ff.w2").data(), dh_cur.data(), len, ff, d,
                        grads.at(p + "ff.w2").data(), grads.at(p + "ff.b2").data(), dg1.data());
        du1.resize(dg1.size());
        for (size_t i = 0; i < dg1.size(); ++i) du1[i] = dg1[i] * nn::gelu_grad(lc.u1[i]);
        std::fill(dn2.begin(), dn2.end(), 0.0);
        linear_backward(lc.n2.data(), params.at(p + "ff.w1").data(), du1.data(), len, d, ff,
                        grads.at(p + "ff.w1").data(), grads.at(p + "ff.b1").data(), dn2.data());
        // dh_cur already carries the residual path into in2.
        layer_norm_backward(lc.in2.data(), params.at(p + "ln2.g").data(), dn2.data(),
                            lc.mean2.data(), lc.rstd2.data(), len, d, dh_cur.data(),
                            grads.at(p + "ln2.g").data(), grads.at(p + "ln2.b").data());

        // Attention sublayer: in2 = in + Wo att + bo.
        std::fill(datt.begin(), datt.end(), 0.0);
        linear_backward(lc.att.data(), params.at(p + "attn.wo").data(), dh_cur.data(), len, d, d,
                        grads.at(p + "attn.wo").data(), grads.at(p + "attn.bo").data(),
                        datt.data());

        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        for (int hh = 0; hh < nh; ++hh) {
            const int off = hh * dh;
            const double* probs = lc.probs.data() +
                                  static_cast<size_t>(hh) * static_cast<size_t>(len) * static_cast<size_t>(len);
            for (int t = 0; t < len; ++t) {
                const double* prow = probs + static_cast<long>(t) * len;
                const double* dat = datt.data() + static_cast<long>(t) * d + off;
                // dp[s] = datt . v[s]; ds = p * (dp - sum(dp * p)).
                double dot_sum = 0.0;
                for (int s = 0; s <= t; ++s) {
                    const double* vs = lc.v.data() + static_cast<long>(s) * d + off;
                    double dp = 0.0;
                    for (int j = 0; j < dh; ++j) {
                        dp += dat[j] * vs[j];
                        // dv accumulation folded here to reuse the pass.
                    }
                    dimm[static_cast<size_t>(s)] = dp;
                    dot_sum += dp * prow[s];
                }
                for (int s = 0; s <= t; ++s) {
                    const double ds = prow[s] * (dimm[static_cast<size_t>(s)] - dot_sum) * scale;
                    const double* qt = lc.q.data() + static_cast<long>(t) * d + off;
                    const double* ks = lc.k.data() + static_cast<long>(s) * d + off;
                    double* dqt = dq.data() + static_cast<long>(t) * d + off;
                    double* dks = dk.data() + static_cast<long>(s) * d + off;
                    double* dvs = dv.data() + static_cast<long>(s) * d + off;
                    for (int j = 0; j < dh; ++j) {
                        dqt[j] += ds * ks[j];
                        dks[j] += ds * qt[j];
                        dvs[j] += prow[s] * dat[j];
                    }
                }
            }
        }

        std::fill(dn1.begin(), dn1.end(), 0.0);
        linear_backward(lc.n1.data(), params.at(p + "attn.wq").data(), dq.data(), len, d, d,
                        grads.at(p + "attn.wq").data(), grads.at(p + "attn.bq").data(),
                        dn1.data());
        linear_backward(lc.n1.data(), params.at(p + "attn.wk").data(), dk.data(), len, d, d,
                        grads.at(p + "attn.wk").data(), grads.at(p + "attn.bk").data(),
                        dn1.data());
        linear_backward(lc.n1.data(), params.at(p + "attn.wv").data(), dv.data(), len, d, d,
                        grads.at(p + "attn.wv").data(), grads.at(p + "attn.bv").data(),
                        dn1.data());
        layer_norm_backward(lc.in.data(), params.at(p + "ln1.g").data(), dn1.data(),
                            lc.mean1.data(), lc.rstd1.data(), len, d, dh_cur.data(),
                            grads.at(p + "ln1.g").data(), grads.at(p + "ln1.b").data());
    }

    d_tokens = dh_cur;
    double* dpos = grads.at("embed.pos").data();
    for (int t = 0; t < len; ++t)
        for (int i = 0; i < d; ++i) dpos[static_cast<long>(t) * d + i] += dh_cur[static_cast<size_t>(t * d + i)];
}

void embed_backward(const ModelConfig& cfg, const ParamSet& params, const EventWindow& window,
                    const semantic::FeatureTable& feats, const std::vector<double>& d_tokens,
                    ParamSet& grads) {
    const int len = window.len();
    const int e = cfg.emb();
    const int d = cfg.width;
    if (static_cast<int>(d_tokens.size()) != len * d)
        throw InternalError("token gradient shape mismatch");
    const bool adapted = params.has("embed.adapter");
    std::vector<double> dacc(static_cast<size_t>(e));
    std::vector<double> acc(static_cast<size_t>(e));

    for (int t = 0; t < len; ++t) {
        const int item = window.items[static_cast<size_t>(t)];
        const bool oov = window.oov[static_cast<size_t>(t)] != 0;
        const double* dtok = d_tokens.data() + static_cast<long>(t) * d;
        if (adapted) {
            // Rebuild the pre-adapter sum to form the adapter weight gradient.
            const double* e_id = semantic::resolve_id_embedding(cfg, params, item, oov);
            nn::affine_forward(feats.row(item), params.at("embed.sem.w").data(),
                               params.at("embed.sem.b").data(), cfg.feat_dim(), e, acc.data());
            for (int i = 0; i < e; ++i) acc[static_cast<size_t>(i)] += e_id[i];
            const double* ctx_table = params.at("embed.ctx").data();
            for (int f = 0; f < 3; ++f) {
                const double* row = ctx_table +
                                    static_cast<long>(ctx_offset(cfg, f, window.ctx[static_cast<size_t>(t)][static_cast<size_t>(f)])) * e;
                for (int i = 0; i < e; ++i) acc[static_cast<size_t>(i)] += row[i];
            }
            std::fill(dacc.begin(), dacc.end(), 0.0);
            nn::affine_backward(acc.data(), params.at("embed.adapter").data(), dtok, e, d,
                                grads.at("embed.adapter").data(), nullptr, dacc.data());
        } else {
            for (int i = 0; i < e; ++i) dacc[static_cast<size_t>(i)] = dtok[i];
        }

        double* de_id = (oov || item >= cfg.vocab)
                            ? grads.at("embed.oov").data()
                            : grads.at("embed.id").data() + static_cast<long>(item) * e;
        for (int i = 0; i < e; ++i) de_id[i] += dacc[static_cast<size_t>(i)];
        nn::affine_backward(feats.row(item), params.at("embed.sem.w").data(), dacc.data(),
                            cfg.feat_dim(), e, grads.at("embed.sem.w").data(),
                            grads.at("embed.sem.b").data(), nullptr);
        double* dctx = grads.at("embed.ctx").data();
        for (int f = 0; f < 3; ++f) {
            double* row = dctx + static_cast<long>(ctx_offset(cfg, f, window.ctx[static_cast<size_t>(t)][static_cast<size_t>(f)])) * e;
            for (int i = 0; i < e; ++i) row[i] += dacc[static_cast<size_t>(i)];
        }
    }
}

}  // namespace genrec::backbone

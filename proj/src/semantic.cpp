#include "genrec/semantic.hpp"

#include "genrec/nn.hpp"

namespace genrec::semantic {

FeatureTable FeatureTable::build(const world::TitleCatalog& catalog) {
    FeatureTable table;
    table.rows = catalog.size();
    if (table.rows == 0) throw DataError("cannot build features for an empty catalog");
    const world::Title& first = catalog.titles.front();
    table.dim = static_cast<int>(first.graph_vec.size() + first.lang_vec.size() +
                                 first.ann_vec.size());
    table.data.resize(static_cast<size_t>(table.rows) * static_cast<size_t>(table.dim));
    for (int id = 0; id < table.rows; ++id) {
        const world::Title& t = catalog.titles[static_cast<size_t>(id)];
        double* out = table.data.data() + static_cast<size_t>(id) * static_cast<size_t>(table.dim);
        for (double x : t.graph_vec) *out++ = x;
        for (double x : t.lang_vec) *out++ = x;
        for (double x : t.ann_vec) *out++ = x;
    }
    return table;
}

const double* FeatureTable::row(int id) const {
    if (id < 0 || id >= rows) throw DataError("feature row out of range: " + std::to_string(id));
    return data.data() + static_cast<size_t>(id) * static_cast<size_t>(dim);
}

void phi_sem(const ModelConfig& cfg, const ParamSet& params, const double* features,
             double* out_z) {
    nn::affine_forward(features, params.at("phi.w").data(), params.at("phi.b").data(),
                       cfg.feat_dim(), cfg.dz(), out_z);
}

const double* resolve_id_embedding(const ModelConfig& cfg, const ParamSet& params, int id,
                                   bool force_oov) {
    if (force_oov || id >= cfg.vocab || id < 0) return params.at("embed.oov").data();
    return params.at("embed.id").data() + static_cast<size_t>(id) * static_cast<size_t>(cfg.emb());
}

void title_vector(const ModelConfig& cfg, const ParamSet& params, const double* e_id,
                  const double* z, double* out_v, double* scratch_a1, double* scratch_g1) {
    const int e = cfg.emb();
    const int dz = cfg.dz();
    const int hp = cfg.psi_width();
    const int dw = cfg.decode_width();
    const double* w1 = params.at("psi.w1").data();
    // Concatenated input is fed as two strided halves of the same affine map.
    for (int o = 0; o < hp; ++o) scratch_a1[o] = params.at("psi.b1").data()[o];
    for (int i = 0; i < e; ++i) {
        const double xi = e_id[i];
        const double* row = w1 + static_cast<long>(i) * hp;
        for (int o = 0; o < hp; ++o) scratch_a1[o] += xi * row[o];
    }
    for (int i = 0; i < dz; ++i) {
        const double xi = z[i];
        const double* row = w1 + static_cast<long>(e + i) * hp;
        for (int o = 0; o < hp; ++o) scratch_a1[o] += xi * row[o];
    }
    for (int o = 0; o < hp; ++o) scratch_g1[o] = nn::gelu(scratch_a1[o]);
    nn::affine_forward(scratch_g1, params.at("psi.w2").data(), params.at("psi.b2").data(), hp, dw,
                       out_v);
}

void project_user(const ModelConfig& cfg, const ParamSet& params, const double* h,
                  double* out_u) {
    const int dw = cfg.decode_width();
    if (cfg.head == DecodeHead::full) {
        for (int j = 0; j < dw; ++j) out_u[j] = h[j];
        return;
    }
    // No bias: scaling h scales every score, leaving rankings unchanged.
    nn::affine_forward(h, params.at("head.w").data(), nullptr, cfg.width, dw, out_u);
}

double score(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw InternalError("score: dim mismatch");
    double s = 0.0;
    for (size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

std::string to_string(MaskSide side) {
    switch (side) {
        case MaskSide::input: return "input";
        case MaskSide::output: return "output";
        case MaskSide::either_uniform: return "either";
    }
    throw InternalError("bad mask side");
}

MaskSide mask_side_from_string(const std::string& s) {
    if (s == "input") return MaskSide::input;
    if (s == "output") return MaskSide::output;
    if (s == "either" || s == "either-uniform" || s == "either_uniform")
        return MaskSide::either_uniform;
    throw ConfigError("unknown mask side: " + s);
}

void MaskingConfig::validate() const {
    if (p_mask < 0.0 || p_mask > 1.0) throw ConfigError("p_mask must be in [0,1]");
}

bool mask_decision(const MaskingConfig& cfg, Rng& rng, bool is_input) {
    if (cfg.p_mask <= 0.0) return false;
    const bool covered = cfg.side == MaskSide::either_uniform ||
                         (cfg.side == MaskSide::input) == is_input;
    // Draw regardless of coverage so the stream does not depend on the side
    // policy, only on the occurrence sequence.
    const bool hit = rng.bernoulli(cfg.p_mask);
    return covered && hit;
}

}  // namespace genrec::semantic

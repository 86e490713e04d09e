#pragma once

// Semantic title tower and cold-start scoring: z = phi_sem(features),
// ID/OOV resolution, v = psi(id embedding, z), s = g(h)^T v, plus the
// collaborative-embedding masking policy used during training.

#include <cstdint>
#include <span>
#include <vector>

#include "genrec/common.hpp"
#include "genrec/model.hpp"
#include "genrec/world.hpp"

namespace genrec::semantic {

// Dense (catalog size x feat_dim) matrix of concatenated (graph, lang, ann)
// vectors; one build per dataset, shared read-only everywhere.
struct FeatureTable {
    int rows = 0;
    int dim = 0;
    std::vector<double> data;

    static FeatureTable build(const world::TitleCatalog& catalog);
    const double* row(int id) const;
};

// z = phi_sem(features); out_z has cfg.dz() entries.
void phi_sem(const ModelConfig& cfg, const ParamSet& params, const double* features,
             double* out_z);

// In-vocab ids resolve to their table row, everything else (cold titles,
// masked instances) to the single shared OOV vector.
const double* resolve_id_embedding(const ModelConfig& cfg, const ParamSet& params, int id,
                                   bool force_oov = false);

// v = psi(e_id, z): concat -> linear -> GELU -> linear to decode width.
// Scratch buffers must hold psi_width() entries each.
void title_vector(const ModelConfig& cfg, const ParamSet& params, const double* e_id,
                  const double* z, double* out_v, double* scratch_a1, double* scratch_g1);

// u = g(h): the shared projection head (identity under DecodeHead::full).
void project_user(const ModelConfig& cfg, const ParamSet& params, const double* h,
                  double* out_u);

double score(std::span<const double> u, std::span<const double> v);

enum class MaskSide { input, output, either_uniform };
std::string to_string(MaskSide side);
MaskSide mask_side_from_string(const std::string& s);

struct MaskingConfig {
    double p_mask = 0.0;
    MaskSide side = MaskSide::either_uniform;
    void validate() const;
};

// One decision per event occurrence; `is_input` names the side the
// occurrence lives on (context token vs scored target). A policy that does
// not cover the occurrence's side never masks it.
bool mask_decision(const MaskingConfig& cfg, Rng& rng, bool is_input);

}  // namespace genrec::semantic

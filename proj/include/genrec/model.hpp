#pragma once

// Model configuration, the named-tensor parameter registry, parameter
// accounting by scope, and the binary checkpoint format.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "genrec/common.hpp"

namespace genrec {

enum class Precision { f32, f64 };
enum class DecodeHead { full, projected };

std::string to_string(Precision p);
std::string to_string(DecodeHead m);
Precision precision_from_string(const std::string& s);
DecodeHead decode_head_from_string(const std::string& s);

struct ModelConfig {
    int layers = 2;
    int width = 32;        // d, multiple of 8
    int heads = 2;
    int seq_len = 64;      // S
    int vocab = 1000;      // |V|: in-vocabulary titles with ID rows
    int embed_dim = 0;     // item/context embedding dim E; 0 means width.
                           // Scaling ladders pin E while width varies.
    int proj_factor = 8;   // projected head is E / proj_factor
    int graph_dim = 8;
    int lang_dim = 8;
    int ann_dim = 4;
    int sem_dim = 0;       // d_z; 0 means E / 2
    int psi_hidden = 0;    // psi tower hidden width; 0 means E
    std::vector<int> ctx_cards = {6, 4, 4};  // per-context-field cardinalities
    Precision precision = Precision::f32;
    DecodeHead head = DecodeHead::projected;

    void validate() const;
    int emb() const { return embed_dim > 0 ? embed_dim : width; }
    int dz() const { return sem_dim > 0 ? sem_dim : emb() / 2; }
    int psi_width() const { return psi_hidden > 0 ? psi_hidden : emb(); }
    int feat_dim() const { return graph_dim + lang_dim + ann_dim; }
    int decode_width() const { return head == DecodeHead::projected ? emb() / proj_factor : width; }
    int ctx_rows() const;
    int ff_dim() const { return 4 * width; }
};

enum class Scope { backbone, embeddings, decoding };
std::string to_string(Scope s);

struct TensorSpec {
    std::string name;
    Scope scope;
    std::vector<int> shape;
    std::int64_t size() const;
};

// Single source of truth for which tensors exist; parameter counts and
// allocation both derive from it, so the scopes partition the set exactly.
std::vector<TensorSpec> tensor_layout(const ModelConfig& cfg);

std::int64_t param_count(const ModelConfig& cfg, Scope scope);
std::int64_t param_count_total(const ModelConfig& cfg);

struct Tensor {
    std::string name;
    Scope scope;
    std::vector<int> shape;
    std::vector<double> v;

    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
};

class ParamSet {
public:
    ParamSet() = default;

    static ParamSet build(const ModelConfig& cfg, std::uint64_t seed);
    static ParamSet zeros(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    void fill(double value);
    void check_finite() const;
    // Round every value to the storage precision; keeps in-memory state
    // identical to what a checkpoint round-trip reproduces.
    void snap_to_precision();

private:
    ModelConfig cfg_;
    std::vector<Tensor> tensors_;
    std::map<std::string, int> index_;
};

// Checkpoint: one text header line (JSON: config + tensor table), '\n',
// then raw little-endian arrays in header order. dtype follows config
// precision; round-trips are bit-exact.
void save_checkpoint(const ParamSet& params, const std::string& extra_json,
                     const std::string& path);
ParamSet load_checkpoint(const std::string& path, std::string* extra_json = nullptr);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace genrec

#include "genrec/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace genrec {

using nlohmann::json;

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }
std::string to_string(DecodeHead m) { return m == DecodeHead::full ? "full" : "projected"; }

Precision precision_from_string(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw ConfigError("unknown precision: " + s);
}

DecodeHead decode_head_from_string(const std::string& s) {
    if (s == "full") return DecodeHead::full;
    if (s == "projected") return DecodeHead::projected;
    throw ConfigError("unknown decode head: " + s);
}

std::string to_string(Scope s) {
    switch (s) {
        case Scope::backbone: return "backbone";
        case Scope::embeddings: return "embeddings";
        case Scope::decoding: return "decoding";
    }
    throw InternalError("bad scope");
}

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (width < 8 || width % 8 != 0) throw ConfigError("width must be a positive multiple of 8");
    if (heads < 1 || width % heads != 0) throw ConfigError("heads must divide width");
    if (seq_len < 2) throw ConfigError("seq_len must be >= 2");
    if (vocab < 1) throw ConfigError("vocab must be >= 1");
    if (embed_dim < 0) throw ConfigError("embed_dim must be >= 0");
    if (emb() < 8 || emb() % 8 != 0) throw ConfigError("embed dim must be a positive multiple of 8");
    if (proj_factor < 1 || emb() % proj_factor != 0)
        throw ConfigError("proj_factor must divide the embed dim");
    if (graph_dim < 1 || lang_dim < 1 || ann_dim < 1)
        throw ConfigError("semantic feature dims must be >= 1");
    if (sem_dim < 0 || psi_hidden < 0) throw ConfigError("sem_dim/psi_hidden must be >= 0");
    if (ctx_cards.empty()) throw ConfigError("ctx_cards must be non-empty");
    for (int c : ctx_cards)
        if (c < 1) throw ConfigError("every context cardinality must be >= 1");
}

int ModelConfig::ctx_rows() const {
    return std::accumulate(ctx_cards.begin(), ctx_cards.end(), 0);
}

std::int64_t TensorSpec::size() const {
    std::int64_t n = 1;
    for (int s : shape) n *= s;
    return n;
}

std::vector<TensorSpec> tensor_layout(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.width;
    const int e = cfg.emb();
    const int dz = cfg.dz();
    const int dw = cfg.decode_width();
    const int hp = cfg.psi_width();
    const int ff = cfg.ff_dim();

    std::vector<TensorSpec> out;
    auto add = [&out](std::string name, Scope scope, std::vector<int> shape) {
        out.push_back({std::move(name), scope, std::move(shape)});
    };

    add("embed.id", Scope::embeddings, {cfg.vocab, e});
    add("embed.oov", Scope::embeddings, {e});
    add("embed.sem.w", Scope::embeddings, {cfg.feat_dim(), e});
    add("embed.sem.b", Scope::embeddings, {e});
    add("embed.ctx", Scope::embeddings, {cfg.ctx_rows(), e});
    // Only materialized when the token dim differs from the embed dim.
    if (e != d) add("embed.adapter", Scope::embeddings, {e, d});
    add("embed.pos", Scope::embeddings, {cfg.seq_len, d});

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layer." + std::to_string(l) + ".";
        add(p + "ln1.g", Scope::backbone, {d});
        add(p + "ln1.b", Scope::backbone, {d});
        add(p + "attn.wq", Scope::backbone, {d, d});
        add(p + "attn.bq", Scope::backbone, {d});
        add(p + "attn.wk", Scope::backbone, {d, d});
        add(p + "attn.bk", Scope::backbone, {d});
        add(p + "attn.wv", Scope::backbone, {d, d});
        add(p + "attn.bv", Scope::backbone, {d});
        add(p + "attn.wo", Scope::backbone, {d, d});
        add(p + "attn.bo", Scope::backbone, {d});
        add(p + "ln2.g", Scope::backbone, {d});
        add(p + "ln2.b", Scope::backbone, {d});
        add(p + "ff.w1", Scope::backbone, {d, ff});
        add(p + "ff.b1", Scope::backbone, {ff});
        add(p + "ff.w2", Scope::backbone, {ff, d});
        add(p + "ff.b2", Scope::backbone, {d});
    }
    add("final_ln.g", Scope::backbone, {d});
    add("final_ln.b", Scope::backbone, {d});

    // User-side projection has no bias: scaling the backbone state must
    // scale every score by the same factor.
    if (cfg.head == DecodeHead::projected) add("head.w", Scope::decoding, {d, dw});
    add("phi.w", Scope::decoding, {cfg.feat_dim(), dz});
    add("phi.b", Scope::decoding, {dz});
    add("psi.w1", Scope::decoding, {e + dz, hp});
    add("psi.b1", Scope::decoding, {hp});
    add("psi.w2", Scope::decoding, {hp, dw});
    add("psi.b2", Scope::decoding, {dw});
    return out;
}

std::int64_t param_count(const ModelConfig& cfg, Scope scope) {
    std::int64_t n = 0;
    for (const auto& t : tensor_layout(cfg))
        if (t.scope == scope) n += t.size();
    return n;
}

std::int64_t param_count_total(const ModelConfig& cfg) {
    std::int64_t n = 0;
    for (const auto& t : tensor_layout(cfg)) n += t.size();
    return n;
}

namespace {

bool is_matrix_weight(const TensorSpec& spec) {
    return spec.shape.size() == 2 && spec.name != "embed.id" && spec.name != "embed.ctx" &&
           spec.name != "embed.pos";
}

void init_tensor(Tensor& t, const TensorSpec& spec, std::uint64_t seed) {
    Rng rng(mix_seed(seed, fnv1a(spec.name)));
    if (spec.name.ends_with("ln1.g") || spec.name.ends_with("ln2.g") ||
        spec.name == "final_ln.g") {
        std::fill(t.v.begin(), t.v.end(), 1.0);
        return;
    }
    if (spec.name.ends_with(".b") || spec.name.ends_with(".b1") || spec.name.ends_with(".b2") ||
        spec.name.ends_with(".bq") || spec.name.ends_with(".bk") || spec.name.ends_with(".bv") ||
        spec.name.ends_with(".bo")) {
        std::fill(t.v.begin(), t.v.end(), 0.0);
        return;
    }
    if (is_matrix_weight(spec)) {
        const double std = 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
        for (double& x : t.v) x = std * rng.normal();
        return;
    }
    // Embedding tables and vectors.
    for (double& x : t.v) x = 0.1 * rng.normal();
}

}  // namespace

ParamSet ParamSet::zeros(const ModelConfig& cfg) {
    ParamSet ps;
    ps.cfg_ = cfg;
    for (const auto& spec : tensor_layout(cfg)) {
        Tensor t;
        t.name = spec.name;
        t.scope = spec.scope;
        t.shape = spec.shape;
        t.v.assign(static_cast<std::size_t>(spec.size()), 0.0);
        ps.index_[t.name] = static_cast<int>(ps.tensors_.size());
        ps.tensors_.push_back(std::move(t));
    }
    return ps;
}

ParamSet ParamSet::build(const ModelConfig& cfg, std::uint64_t seed) {
    ParamSet ps = zeros(cfg);
    const auto layout = tensor_layout(cfg);
    for (std::size_t i = 0; i < layout.size(); ++i) init_tensor(ps.tensors_[i], layout[i], seed);
    ps.snap_to_precision();
    return ps;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw InternalError("no tensor named " + name);
    return tensors_[static_cast<std::size_t>(it->second)];
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InternalError("no tensor named " + name);
    return tensors_[static_cast<std::size_t>(it->second)];
}

void ParamSet::fill(double value) {
    for (auto& t : tensors_) std::fill(t.v.begin(), t.v.end(), value);
}

void ParamSet::check_finite() const {
    for (const auto& t : tensors_)
        for (double x : t.v)
            if (!std::isfinite(x)) throw NumericError("non-finite value in tensor " + t.name);
}

void ParamSet::snap_to_precision() {
    if (cfg_.precision == Precision::f64) return;
    for (auto& t : tensors_)
        for (double& x : t.v) x = static_cast<double>(static_cast<float>(x));
}

std::string model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["layers"] = cfg.layers;
    j["width"] = cfg.width;
    j["heads"] = cfg.heads;
    j["seq_len"] = cfg.seq_len;
    j["vocab"] = cfg.vocab;
    j["embed_dim"] = cfg.embed_dim;
    j["proj_factor"] = cfg.proj_factor;
    j["graph_dim"] = cfg.graph_dim;
    j["lang_dim"] = cfg.lang_dim;
    j["ann_dim"] = cfg.ann_dim;
    j["sem_dim"] = cfg.sem_dim;
    j["psi_hidden"] = cfg.psi_hidden;
    j["ctx_cards"] = cfg.ctx_cards;
    j["precision"] = to_string(cfg.precision);
    j["head"] = to_string(cfg.head);
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig cfg;
    cfg.layers = j.at("layers").get<int>();
    cfg.width = j.at("width").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.seq_len = j.at("seq_len").get<int>();
    cfg.vocab = j.at("vocab").get<int>();
    cfg.embed_dim = j.value("embed_dim", 0);
    cfg.proj_factor = j.at("proj_factor").get<int>();
    cfg.graph_dim = j.at("graph_dim").get<int>();
    cfg.lang_dim = j.at("lang_dim").get<int>();
    cfg.ann_dim = j.at("ann_dim").get<int>();
    cfg.sem_dim = j.at("sem_dim").get<int>();
    cfg.psi_hidden = j.at("psi_hidden").get<int>();
    cfg.ctx_cards = j.at("ctx_cards").get<std::vector<int>>();
    cfg.precision = precision_from_string(j.at("precision").get<std::string>());
    cfg.head = decode_head_from_string(j.at("head").get<std::string>());
    cfg.validate();
    return cfg;
}

namespace {
constexpr char kMagic[] = "genrec-ckpt-v1\n";

template <typename T>
void write_raw(std::ostream& os, const std::vector<double>& v) {
    std::vector<T> buf(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) buf[i] = static_cast<T>(v[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(T)));
}

template <typename T>
void read_raw(std::istream& is, std::vector<double>& v) {
    std::vector<T> buf(v.size());
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(T)));
    if (!is) throw DataError("checkpoint truncated");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(buf[i]);
}
}  // namespace

void save_checkpoint(const ParamSet& params, const std::string& extra_json,
                     const std::string& path) {
    json header;
    header["config"] = json::parse(model_config_to_json(params.config()));
    header["dtype"] = to_string(params.config().precision);
    header["extra"] = extra_json.empty() ? json(nullptr) : json::parse(extra_json);
    json table = json::array();
    for (const auto& t : params.tensors()) {
        json row;
        row["name"] = t.name;
        row["scope"] = to_string(t.scope);
        row["shape"] = t.shape;
        table.push_back(row);
    }
    header["tensors"] = table;
    const std::string head = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic) - 1);
    const std::uint64_t len = head.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& t : params.tensors()) {
        if (params.config().precision == Precision::f32)
            write_raw<float>(os, t.v);
        else
            write_raw<double>(os, t.v);
    }
    if (!os) throw DataError("failed writing checkpoint: " + path);
}

ParamSet load_checkpoint(const std::string& path, std::string* extra_json) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[sizeof(kMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw DataError("not a checkpoint file: " + path);
    std::uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is || len > (1ull << 30)) throw DataError("corrupt checkpoint header: " + path);
    std::string head(len, '\0');
    is.read(head.data(), static_cast<std::streamsize>(len));
    if (!is) throw DataError("corrupt checkpoint header: " + path);

    json header = json::parse(head, nullptr, false);
    if (header.is_discarded()) throw DataError("corrupt checkpoint header: " + path);
    ModelConfig cfg = model_config_from_json(header.at("config").dump());
    if (extra_json != nullptr) {
        const json& extra = header.at("extra");
        *extra_json = extra.is_null() ? std::string() : extra.dump();
    }

    ParamSet ps = ParamSet::zeros(cfg);
    const auto& table = header.at("tensors");
    if (table.size() != ps.tensors().size()) throw DataError("checkpoint tensor table mismatch");
    for (std::size_t i = 0; i < ps.tensors().size(); ++i) {
        Tensor& t = ps.tensors()[i];
        const auto& row = table[i];
        if (row.at("name").get<std::string>() != t.name ||
            row.at("shape").get<std::vector<int>>() != t.shape)
            throw DataError("checkpoint tensor table mismatch at " + t.name);
        if (cfg.precision == Precision::f32)
            read_raw<float>(is, t.v);
        else
            read_raw<double>(is, t.v);
    }
    char trailing;
    if (is.read(&trailing, 1)) throw DataError("trailing bytes in checkpoint: " + path);
    return ps;
}

}  // namespace genrec

// Python bindings for the main operations: cost model, scaling fits,
// parameter counting, negative sampling, MTP weights, ranking metrics, and a
// synthetic-world summary hook.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "genrec/common.hpp"
#include "genrec/cost.hpp"
#include "genrec/decoder.hpp"
#include "genrec/eval.hpp"
#include "genrec/model.hpp"
#include "genrec/mtp.hpp"
#include "genrec/scaling.hpp"
#include "genrec/world.hpp"

namespace py = pybind11;
using namespace genrec;

namespace {

cost::CostQuery make_query(int layers, int width, int seq_len, std::int64_t vocab,
                           const std::string& mode, double fraction, int n_positives) {
    cost::CostQuery q;
    q.layers = layers;
    q.width = width;
    q.seq_len = seq_len;
    q.vocab = vocab;
    q.mode = cost::decode_mode_from_string(mode);
    q.sample_fraction = fraction;
    q.n_positives = n_positives;
    q.validate();
    return q;
}

std::vector<scaling::ScalingPoint> to_points(
    const std::vector<std::pair<double, double>>& pairs) {
    std::vector<scaling::ScalingPoint> pts;
    pts.reserve(pairs.size());
    for (const auto& [n, p] : pairs) pts.push_back({n, p});
    return pts;
}

py::dict offset_dict(const scaling::OffsetFit& fit) {
    py::dict d;
    d["p0"] = fit.p0;
    d["n0"] = fit.n0;
    d["a"] = fit.a;
    d["rmse"] = fit.rmse;
    return d;
}

py::dict log_dict(const scaling::LogFit& fit) {
    py::dict d;
    d["slope"] = fit.slope;
    d["intercept"] = fit.intercept;
    d["rmse"] = fit.rmse;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Generative recommender scaling study core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("width", &ModelConfig::width)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("seq_len", &ModelConfig::seq_len)
        .def_readwrite("vocab", &ModelConfig::vocab)
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("proj_factor", &ModelConfig::proj_factor)
        .def_readwrite("graph_dim", &ModelConfig::graph_dim)
        .def_readwrite("lang_dim", &ModelConfig::lang_dim)
        .def_readwrite("ann_dim", &ModelConfig::ann_dim)
        .def("validate", &ModelConfig::validate);

    m.def("param_count", [](const ModelConfig& cfg, const std::string& scope) {
        cfg.validate();
        if (scope == "backbone") return param_count(cfg, Scope::backbone);
        if (scope == "embeddings") return param_count(cfg, Scope::embeddings);
        if (scope == "decoding") return param_count(cfg, Scope::decoding);
        if (scope == "total") return param_count_total(cfg);
        throw ConfigError("unknown scope: " + scope);
    });

    m.def("backbone_flops_per_token", &cost::backbone_flops_per_token);
    m.def(
        "decode_flops_per_token",
        [](int layers, int width, int seq_len, std::int64_t vocab, const std::string& mode,
           double fraction, int n_positives) {
            return cost::decode_flops_per_token(
                make_query(layers, width, seq_len, vocab, mode, fraction, n_positives));
        },
        py::arg("layers") = 6, py::arg("width") = 1024, py::arg("seq_len") = 512,
        py::arg("vocab") = 1'000'000, py::arg("mode") = "full", py::arg("fraction") = 0.01,
        py::arg("n_positives") = 1);
    m.def(
        "total_flops_per_token",
        [](int layers, int width, int seq_len, std::int64_t vocab, const std::string& mode,
           double fraction, int n_positives) {
            return cost::total_flops_per_token(
                make_query(layers, width, seq_len, vocab, mode, fraction, n_positives));
        },
        py::arg("layers") = 6, py::arg("width") = 1024, py::arg("seq_len") = 512,
        py::arg("vocab") = 1'000'000, py::arg("mode") = "full", py::arg("fraction") = 0.01,
        py::arg("n_positives") = 1);

    m.def("fit_offset", [](const std::vector<std::pair<double, double>>& pairs) {
        return offset_dict(scaling::fit_offset(scaling::dedupe_points(to_points(pairs))));
    });
    m.def("fit_log", [](const std::vector<std::pair<double, double>>& pairs) {
        return log_dict(scaling::fit_log(scaling::dedupe_points(to_points(pairs))));
    });
    m.def("compare_fits", [](const std::vector<std::pair<double, double>>& pairs) {
        const auto cmp = scaling::compare_fits(scaling::dedupe_points(to_points(pairs)));
        py::dict d;
        d["offset"] = offset_dict(cmp.offset);
        d["log"] = log_dict(cmp.log);
        d["rmse_reduction"] = cmp.rmse_reduction;
        return d;
    });

    m.def(
        "sample_negatives",
        [](int vocab, double fraction, int target, std::uint64_t seed) {
            Rng rng(seed);
            return decoder::sample_negatives(vocab, fraction, target, rng);
        },
        py::arg("vocab"), py::arg("fraction"), py::arg("target"), py::arg("seed") = 1);

    m.def("decay_weight", &mtp::decay_weight, py::arg("r"), py::arg("t"), py::arg("t_context"),
          py::arg("half_life_seconds"));

    m.def(
        "rank_metrics",
        [](const std::vector<double>& scores, const std::vector<int>& ids, int target, int k) {
            const auto r = eval::rank_metrics(scores, ids, target, k);
            py::dict d;
            d["rank"] = r.rank;
            d["mrr"] = r.mrr;
            d["hit"] = r.hit;
            d["ndcg"] = r.ndcg;
            return d;
        },
        py::arg("scores"), py::arg("ids"), py::arg("target"), py::arg("k") = 10);

    m.def(
        "world_summary",
        [](std::uint64_t seed, int users, int vocab) {
            world::WorldConfig w;
            w.n_users = users;
            w.vocab_size = vocab;
            w.validate();
            const auto data = world::generate_dataset(w, seed);
            py::dict d;
            d["titles"] = data.train.catalog.titles.size();
            d["in_vocab"] = data.train.catalog.in_vocab_count;
            d["cold"] = data.train.catalog.cold_ids.size();
            d["users"] = data.train.n_users();
            d["train_events"] = data.train.event_count();
            d["validation_events"] = data.validation.event_count();
            return d;
        },
        py::arg("seed") = 1, py::arg("users") = 8, py::arg("vocab") = 200);
}

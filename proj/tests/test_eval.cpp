#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "genrec/common.hpp"
#include "genrec/eval.hpp"
#include "genrec/model.hpp"
#include "genrec/world.hpp"

using namespace genrec;
using namespace genrec::eval;

namespace {

// Brute-force reference: sort (score desc, id asc) and find the target.
RankMetrics brute_rank(const std::vector<double>& scores, const std::vector<int>& ids,
                       int target, int k) {
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    RankMetrics m;
    for (size_t pos = 0; pos < order.size(); ++pos) {
        if (ids[order[pos]] == target) {
            m.rank = static_cast<int>(pos) + 1;
            break;
        }
    }
    m.mrr = 1.0 / m.rank;
    m.hit = m.rank <= k ? 1.0 : 0.0;
    m.ndcg = m.rank <= k ? 1.0 / std::log2(1.0 + m.rank) : 0.0;
    return m;
}

ModelConfig eval_model(const world::WorldConfig& wcfg) {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.width = 16;
    cfg.heads = 2;
    cfg.seq_len = 8;
    cfg.vocab = wcfg.in_vocab_count();
    cfg.graph_dim = wcfg.graph_dim;
    cfg.lang_dim = wcfg.lang_dim;
    cfg.ann_dim = wcfg.ann_dim;
    cfg.ctx_cards = wcfg.ctx_cards();
    return cfg;
}

}  // namespace

TEST_CASE("rank metrics match a brute-force reference") {
    Rng rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 5 + static_cast<int>(rng.below(16));
        std::vector<int> ids(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i * 3 + 1;
        // Quantized scores force plenty of ties.
        std::vector<double> scores(static_cast<size_t>(n));
        for (double& s : scores) s = static_cast<double>(rng.below(5)) * 0.5;
        const int target = ids[static_cast<size_t>(rng.below(static_cast<std::uint64_t>(n)))];
        const int k = 1 + static_cast<int>(rng.below(5));

        const RankMetrics got = rank_metrics(scores, ids, target, k);
        const RankMetrics want = brute_rank(scores, ids, target, k);
        CHECK(got.rank == want.rank);
        CHECK(got.mrr == doctest::Approx(want.mrr).epsilon(1e-15));
        CHECK(got.hit == want.hit);
        CHECK(got.ndcg == doctest::Approx(want.ndcg).epsilon(1e-15));
    }
}

TEST_CASE("rank metric definitions at fixed ranks") {
    // Scores descending by construction: ranks are positional.
    const std::vector<double> scores = {9.0, 7.0, 5.0, 3.0, 1.0};
    const std::vector<int> ids = {10, 11, 12, 13, 14};

    RankMetrics top = rank_metrics(scores, ids, 10, 3);
    CHECK(top.rank == 1);
    CHECK(top.mrr == 1.0);
    CHECK(top.hit == 1.0);
    CHECK(top.ndcg == 1.0);

    RankMetrics fourth = rank_metrics(scores, ids, 13, 3);
    CHECK(fourth.rank == 4);
    CHECK(fourth.mrr == 0.25);
    CHECK(fourth.hit == 0.0);  // outside k=3
    CHECK(fourth.ndcg == 0.0);

    RankMetrics fourth10 = rank_metrics(scores, ids, 13, 10);
    CHECK(fourth10.hit == 1.0);
    CHECK(fourth10.ndcg == doctest::Approx(1.0 / std::log2(5.0)).epsilon(1e-15));

    // All-equal scores: ties resolve by ascending id, so the rank is the
    // number of smaller ids plus one.
    const std::vector<double> flat(7, 0.5);
    const std::vector<int> flat_ids = {3, 1, 4, 0, 6, 5, 2};
    for (int target = 0; target < 7; ++target) {
        const RankMetrics m = rank_metrics(flat, flat_ids, target, 7);
        CHECK(m.rank == target + 1);
        CHECK(m.mrr == doctest::Approx(1.0 / (target + 1)).epsilon(1e-15));
    }

    // Dense variant: candidate i is id i.
    const std::vector<double> dense = {0.1, 0.9, 0.3, 0.9};
    const RankMetrics d = rank_metrics_dense(dense, 3, 2);
    CHECK(d.rank == 2);  // ties with id 1, loses by id
    CHECK(d.mrr == 0.5);
    CHECK(d.hit == 1.0);

    // Improving the target score never lowers the metrics.
    std::vector<double> improving = {0.4, 0.2, 0.8, 0.1};
    double prev_mrr = 0.0;
    for (double bump = 0.0; bump <= 1.0; bump += 0.1) {
        std::vector<double> s = improving;
        s[1] += bump;
        const RankMetrics m = rank_metrics_dense(s, 1, 2);
        CHECK(m.mrr >= prev_mrr);
        prev_mrr = m.mrr;
    }

    CHECK_THROWS_AS(rank_metrics(scores, ids, 99, 3), DataError);  // target missing
    const std::vector<int> dup_ids = {10, 11, 10, 13, 14};
    CHECK_THROWS_AS(rank_metrics(scores, dup_ids, 10, 3), DataError);
    CHECK_THROWS_AS(rank_metrics(scores, ids, 10, 0), ConfigError);
    const std::vector<double> short_scores = {1.0};
    CHECK_THROWS_AS(rank_metrics(short_scores, ids, 10, 3), InternalError);  // caller bug
}

TEST_CASE("eval report accessors and serializations") {
    EvalReport report;
    report.rows.push_back({world::Task::A, "all", 0, "mrr", 0.125, 40});
    report.rows.push_back({world::Task::A, "all", 0, "hit", 0.5, 40});
    report.rows.push_back({world::Task::B, "cold_start", 3600, "mrr", 0.25, 7});
    report.skipped_users = 3;

    CHECK(report.value(world::Task::A, "all", 0, "mrr") == 0.125);
    CHECK(report.count(world::Task::B, "cold_start", 3600, "mrr") == 7);
    CHECK_THROWS_AS(report.value(world::Task::C, "all", 0, "mrr"), InternalError);

    const std::string csv = report.to_csv();
    CHECK(csv.rfind("task,slice,delay,metric,value,count\n", 0) == 0);
    CHECK(csv.find("A,all,0,mrr,0.125,40") != std::string::npos);
    CHECK(csv.find("B,cold_start,3600,mrr,0.25,7") != std::string::npos);

    const std::string json = report.to_json();
    CHECK(json.find("\"skipped_users\": 3") != std::string::npos);
    CHECK(json.find("\"cold_start\"") != std::string::npos);

    EvalConfig ok;
    ok.delays = {0, 3600, 7200};
    ok.validate();
    EvalConfig bad;
    bad.delays = {3600};
    CHECK_THROWS_AS(bad.validate(), ConfigError);  // must start at zero
    bad.delays = {0, 7200, 3600};
    CHECK_THROWS_AS(bad.validate(), ConfigError);  // ascending
    bad.delays = {};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = EvalConfig{};
    bad.k = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("replay at delay zero is the standard evaluation") {
    world::WorldConfig wcfg;
    wcfg.vocab_size = 120;
    wcfg.cold_fraction = 0.1;
    wcfg.n_users = 40;
    const world::DatasetPair data = world::generate_dataset(wcfg, 31);

    const ModelConfig mcfg = eval_model(wcfg);
    ParamSet params = ParamSet::build(mcfg, 32);

    EvalConfig ecfg;
    ecfg.k = 10;
    const EvalReport a = replay_staleness(mcfg, params, data.train, data.validation, ecfg);
    const EvalReport b = evaluate(mcfg, params, data.train, data.validation, 10);

    REQUIRE(a.rows.size() == b.rows.size());
    CHECK(a.skipped_users == b.skipped_users);
    for (size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].task == b.rows[i].task);
        CHECK(a.rows[i].slice == b.rows[i].slice);
        CHECK(a.rows[i].delay == b.rows[i].delay);
        CHECK(a.rows[i].metric == b.rows[i].metric);
        CHECK(a.rows[i].value == b.rows[i].value);  // bitwise
        CHECK(a.rows[i].count == b.rows[i].count);
    }
}

TEST_CASE("replay populations and slices are consistent") {
    world::WorldConfig wcfg;
    wcfg.vocab_size = 150;
    wcfg.cold_fraction = 0.1;
    wcfg.n_users = 60;
    const world::DatasetPair data = world::generate_dataset(wcfg, 41);

    const ModelConfig mcfg = eval_model(wcfg);
    ParamSet params = ParamSet::build(mcfg, 42);

    EvalConfig ecfg;
    ecfg.delays = {0, 6 * 3600, 24 * 3600};
    const EvalReport report = replay_staleness(mcfg, params, data.train, data.validation, ecfg);

    // 3 tasks x 2 slices x 3 delays x 3 metrics.
    CHECK(report.rows.size() == 54);

    for (int t = 0; t < 3; ++t) {
        const auto task = static_cast<world::Task>(t);
        // Fixed population: the same user set is scored at every delay.
        const auto base = report.count(task, "all", 0, "mrr");
        for (std::int64_t delay : ecfg.delays) {
            CHECK(report.count(task, "all", delay, "mrr") == base);
            // Metrics within a cell share one population.
            CHECK(report.count(task, "all", delay, "hit") ==
                  report.count(task, "all", delay, "mrr"));
            CHECK(report.count(task, "cold_start", delay, "mrr") <=
                  report.count(task, "all", delay, "mrr"));
            for (const char* metric : {"mrr", "hit", "ndcg"}) {
                const double v = report.value(task, "all", delay, metric);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
        CHECK(base > 0);
    }

    // MRR of evaluated cells stays strictly positive (a rank is always found).
    for (const EvalRow& row : report.rows)
        if (row.metric == "mrr" && row.count > 0) CHECK(row.value > 0.0);

    // Cold-start slice only exists because cold titles can be targets; the
    // task-A cold counts must not exceed the number of cold titles times the
    // population.
    CHECK(report.count(world::Task::A, "cold_start", 0, "mrr") <=
          report.count(world::Task::A, "all", 0, "mrr"));
}

TEST_CASE("model and dataset mismatches are rejected") {
    world::WorldConfig wcfg;
    wcfg.vocab_size = 80;
    wcfg.n_users = 10;
    const world::DatasetPair data = world::generate_dataset(wcfg, 51);

    ModelConfig mcfg = eval_model(wcfg);
    mcfg.vocab = wcfg.in_vocab_count() + 8;  // wrong vocabulary
    ParamSet params = ParamSet::build(mcfg, 52);
    CHECK_THROWS_AS(evaluate(mcfg, params, data.train, data.validation), DataError);

    ModelConfig bad_feats = eval_model(wcfg);
    bad_feats.ann_dim = wcfg.ann_dim + 4;  // feature width mismatch
    ParamSet params2 = ParamSet::build(bad_feats, 53);
    CHECK_THROWS_AS(evaluate(bad_feats, params2, data.train, data.validation), DataError);
}

TEST_CASE("users without context or target are skipped with a count") {
    world::WorldConfig wcfg;
    wcfg.vocab_size = 80;
    wcfg.n_users = 12;
    world::DatasetPair data = world::generate_dataset(wcfg, 61);

    const ModelConfig mcfg = eval_model(wcfg);
    ParamSet params = ParamSet::build(mcfg, 62);

    const EvalReport before = evaluate(mcfg, params, data.train, data.validation);

    // Erase one user's training history: no context, so they are skipped.
    data.train.histories[3].clear();
    const EvalReport after = evaluate(mcfg, params, data.train, data.validation);
    CHECK(after.skipped_users == before.skipped_users + 1);
    for (int t = 0; t < 3; ++t)
        CHECK(after.count(static_cast<world::Task>(t), "all", 0, "mrr") <=
              before.count(static_cast<world::Task>(t), "all", 0, "mrr"));

    // A user cap restricts the evaluated population.
    const EvalReport capped = evaluate(mcfg, params, data.train, data.validation, 10, 4);
    std::int64_t total = 0;
    for (int t = 0; t < 3; ++t)
        total += capped.count(static_cast<world::Task>(t), "all", 0, "mrr");
    CHECK(total <= 3 * 4);
}

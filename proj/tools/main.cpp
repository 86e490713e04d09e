// genrec: one executable for the full workflow — synthetic data generation,
// training, scaling sweeps, evaluation, staleness replay, scaling-law fits,
// the decoding cost model, and plain-text report rendering.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "genrec/common.hpp"
#include "genrec/cost.hpp"
#include "genrec/eval.hpp"
#include "genrec/manifest.hpp"
#include "genrec/model.hpp"
#include "genrec/scaling.hpp"
#include "genrec/train.hpp"
#include "genrec/world.hpp"
#include "json.hpp"

namespace {

using namespace genrec;
using nlohmann::json;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

std::string format_duration(std::int64_t seconds) {
    if (seconds != 0 && seconds % 86400 == 0) return std::to_string(seconds / 86400) + "d";
    if (seconds != 0 && seconds % 3600 == 0) return std::to_string(seconds / 3600) + "h";
    if (seconds != 0 && seconds % 60 == 0) return std::to_string(seconds / 60) + "m";
    return std::to_string(seconds) + "s";
}

int resolve_threads(int flag_value) {
    if (flag_value >= 0) return flag_value;
    if (const char* env = std::getenv("GENREC_THREADS")) {
        try {
            return std::max(0, std::stoi(env));
        } catch (const std::exception&) {
            throw ConfigError(std::string("GENREC_THREADS is not an integer: ") + env);
        }
    }
    return 1;
}

json world_config_json(const world::WorldConfig& w) {
    json j;
    j["vocab_size"] = w.vocab_size;
    j["cold_fraction"] = w.cold_fraction;
    j["latent_dim"] = w.latent_dim;
    j["graph_dim"] = w.graph_dim;
    j["lang_dim"] = w.lang_dim;
    j["ann_dim"] = w.ann_dim;
    j["semantic_noise"] = w.semantic_noise;
    j["n_users"] = w.n_users;
    j["horizon"] = w.horizon;
    j["cutoff"] = w.cutoff;
    j["high_value_threshold"] = w.high_value_threshold;
    j["task_mix"] = w.task_mix;
    j["pool_frac"] = w.pool_frac;
    j["taste_temp"] = w.taste_temp;
    j["taste_noise"] = w.taste_noise;
    j["cold_boost"] = w.cold_boost;
    j["cluster_size"] = w.cluster_size;
    j["cluster_noise"] = w.cluster_noise;
    j["bucket_seconds"] = w.bucket_seconds;
    j["schedule_cycle"] = w.schedule_cycle;
    j["schedule_window"] = w.schedule_window;
    j["window_decay"] = w.window_decay;
    j["schedule_noise"] = w.schedule_noise;
    j["binge_prob"] = w.binge_prob;
    j["session_gap_mean"] = w.session_gap_mean;
    j["session_gap_min"] = w.session_gap_min;
    j["event_gap_mean"] = w.event_gap_mean;
    j["session_len_base"] = w.session_len_base;
    j["session_len_mean"] = w.session_len_mean;
    j["pages"] = w.pages;
    j["countries"] = w.countries;
    return j;
}

world::DatasetPair load_dataset_dir(const std::string& dir, manifest::RunManifest& m) {
    const std::string cat_path = dir + "/catalog.tsv";
    const std::string train_path = dir + "/train_events.tsv";
    const std::string valid_path = dir + "/validation_events.tsv";
    world::TitleCatalog catalog = world::load_catalog(cat_path);
    world::DatasetPair data;
    data.train = world::load_events(train_path, catalog);
    data.validation = world::load_events(valid_path, catalog);
    m.add_input(cat_path);
    m.add_input(train_path);
    m.add_input(valid_path);
    return data;
}

// Flat key=value config files for the generation/training subcommands.
// Values fill in options that were not given on the command line, so
// explicit flags always win. Applied from the subcommand callback, before
// the bound argument structs are read.
void apply_flat_config(CLI::App* cmd, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        CLI::Option* op = cmd->get_option_no_throw("--" + key);
        if (op == nullptr) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown option: " + key);
        }
        if (op->count() > 0) continue;
        op->add_result(value);
        op->run_callback();
    }
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    for (const auto& piece : split(text, ',')) {
        try {
            out.push_back(std::stoi(piece));
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": not an integer: " + piece);
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
    return out;
}

std::vector<std::int64_t> parse_delays(const std::string& text) {
    std::vector<std::int64_t> out;
    for (const auto& piece : split(text, ',')) out.push_back(parse_duration_seconds(piece));
    return out;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string out_dir;
    std::uint64_t seed = 1;
    world::WorldConfig w;
    std::string vocab_str, horizon_str, cutoff_str;
    std::string config_path;
};

void run_gen_data(const GenDataArgs& a) {
    Timer timer;
    world::WorldConfig w = a.w;
    if (!a.vocab_str.empty()) w.vocab_size = static_cast<int>(parse_count(a.vocab_str));
    if (!a.horizon_str.empty()) w.horizon = parse_duration_seconds(a.horizon_str);
    if (!a.cutoff_str.empty()) w.cutoff = parse_duration_seconds(a.cutoff_str);
    w.validate();
    std::filesystem::create_directories(a.out_dir);
    const world::DatasetPair data = world::generate_dataset(w, a.seed);
    const std::string cat_path = a.out_dir + "/catalog.tsv";
    const std::string train_path = a.out_dir + "/train_events.tsv";
    const std::string valid_path = a.out_dir + "/validation_events.tsv";
    world::write_catalog(data.train.catalog, cat_path);
    world::write_events(data.train, train_path);
    world::write_events(data.validation, valid_path);

    manifest::RunManifest m;
    m.command = "gen-data";
    m.config_json = world_config_json(w).dump();
    m.seed = a.seed;
    m.add_output(cat_path);
    m.add_output(train_path);
    m.add_output(valid_path);
    m.duration_seconds = timer.seconds();
    manifest::write_manifest(m, a.out_dir + "/dataset");

    for (const auto& warn : data.train.warnings) std::cout << "warning: " << warn << "\n";
    for (const auto& warn : data.validation.warnings) std::cout << "warning: " << warn << "\n";
    std::cout << "catalog: " << data.train.catalog.titles.size() << " titles ("
              << data.train.catalog.in_vocab_count << " in-vocab, "
              << data.train.catalog.cold_ids.size() << " cold)\n"
              << "users: " << data.train.n_users() << "\n"
              << "train events: " << data.train.event_count() << "\n"
              << "validation events: " << data.validation.event_count() << "\n"
              << "wrote " << cat_path << ", " << train_path << ", " << valid_path << "\n";
}

// ------------------------------------------------------------- train/sweep

struct TrainArgs {
    std::string data_dir, out_path, metrics_path;
    train::TrainConfig cfg;
    std::string objective = "ntp";
    std::string weighting = "unit";
    std::string half_life_str, mtp_horizon_str;
    std::string mask_side = "either_uniform";
    std::string precision = "f32";
    std::string head = "projected";
    std::string ctx_cards_str;
    std::string config_path;
    int threads = -1;
};

void add_train_options(CLI::App* cmd, const std::shared_ptr<TrainArgs>& a) {
    cmd->add_option("--data", a->data_dir, "Dataset directory from gen-data")->required();
    cmd->add_option("--layers", a->cfg.model.layers, "Transformer layers");
    cmd->add_option("--width", a->cfg.model.width, "Hidden width d (multiple of 8)");
    cmd->add_option("--heads", a->cfg.model.heads, "Attention heads");
    cmd->add_option("--seq", a->cfg.model.seq_len, "Context window length");
    cmd->add_option("--embed-dim", a->cfg.model.embed_dim,
                    "Item embedding dim E (0: same as width)");
    cmd->add_option("--proj-factor", a->cfg.model.proj_factor,
                    "Projected decode width is E / this");
    cmd->add_option("--sem-dim", a->cfg.model.sem_dim, "Semantic tower dim (0: E/2)");
    cmd->add_option("--psi-hidden", a->cfg.model.psi_hidden, "Title tower hidden dim (0: E)");
    cmd->add_option("--precision", a->precision, "Parameter storage: f32 or f64");
    cmd->add_option("--head", a->head, "Decode head: full or projected");
    cmd->add_option("--ctx-cards", a->ctx_cards_str,
                    "Context field cardinalities, e.g. 6,4,4");
    cmd->add_option("--objective", a->objective, "ntp or mtp");
    cmd->add_option("--mtp-window", a->cfg.mtp.window, "Max future targets K");
    cmd->add_option("--half-life-seconds", a->half_life_str,
                    "Decay half-life (durations like 1h accepted)");
    cmd->add_option("--mtp-horizon", a->mtp_horizon_str, "Future-target horizon (e.g. 48h)");
    cmd->add_option("--reward-weighting", a->weighting, "unit or reward");
    cmd->add_option("--sample-fraction", a->cfg.sample_fraction,
                    "Negative-sampling fraction of the vocabulary");
    cmd->add_option("--mask-prob", a->cfg.masking.p_mask, "Collaborative-embedding mask rate");
    cmd->add_option("--mask-side", a->mask_side, "input, output, or either_uniform");
    cmd->add_option("--lr", a->cfg.optim.lr, "Peak learning rate");
    cmd->add_option("--weight-decay", a->cfg.optim.weight_decay, "Decoupled weight decay");
    cmd->add_option("--warmup", a->cfg.optim.warmup_steps, "Warmup steps");
    cmd->add_option("--batch", a->cfg.batch, "Examples per step");
    cmd->add_option("--steps", a->cfg.steps, "Optimizer steps");
    cmd->add_option("--eval-every", a->cfg.eval_every, "Validation cadence (0: end only)");
    cmd->add_option("--log-every", a->cfg.log_every, "Train-loss log cadence");
    cmd->add_option("--seed", a->cfg.seed, "Master seed");
    cmd->add_option("--threads", a->threads, "Worker threads (0: all cores)");
    cmd->add_option("--eval-k", a->cfg.eval_k, "Cutoff k for hit/ndcg");
    cmd->add_option("--eval-user-cap", a->cfg.eval_user_cap, "Evaluate at most this many users");
    cmd->add_option("--config", a->config_path, "Flat key=value config file; flags override");
}

train::TrainConfig resolve_train_config(const TrainArgs& a, const world::TitleCatalog& catalog) {
    train::TrainConfig cfg = a.cfg;
    cfg.model.vocab = catalog.in_vocab_count;
    cfg.model.precision = precision_from_string(a.precision);
    cfg.model.head = decode_head_from_string(a.head);
    if (!a.ctx_cards_str.empty()) {
        cfg.model.ctx_cards = parse_int_list(a.ctx_cards_str, "ctx-cards");
    }
    cfg.objective = train::objective_from_string(a.objective);
    cfg.mtp.weighting = mtp::reward_weighting_from_string(a.weighting);
    if (!a.half_life_str.empty()) {
        cfg.mtp.half_life_seconds =
            static_cast<double>(parse_duration_seconds(a.half_life_str));
    }
    if (!a.mtp_horizon_str.empty()) {
        cfg.mtp.horizon_seconds = parse_duration_seconds(a.mtp_horizon_str);
    }
    cfg.masking.side = semantic::mask_side_from_string(a.mask_side);
    cfg.threads = resolve_threads(a.threads);
    cfg.validate();
    return cfg;
}

void run_train(const TrainArgs& a) {
    Timer timer;
    manifest::RunManifest m;
    m.command = "train";
    const world::DatasetPair data = load_dataset_dir(a.data_dir, m);
    const train::TrainConfig cfg = resolve_train_config(a, data.train.catalog);
    ParamSet params = train::init_params(cfg);
    const train::TrainResult res = train::train(cfg, data, params, a.out_path);
    save_checkpoint(params, train::train_config_to_json(cfg), a.out_path);
    const std::string metrics_path =
        a.metrics_path.empty() ? a.out_path + ".metrics.csv" : a.metrics_path;
    write_text_file(metrics_path, train::metrics_to_csv(res.metrics));

    m.config_json = train::train_config_to_json(cfg);
    m.seed = cfg.seed;
    m.add_output(a.out_path);
    m.add_output(metrics_path);
    m.duration_seconds = timer.seconds();
    manifest::write_manifest(m, a.out_path);

    std::cout << "steps: " << res.steps_run << "\n"
              << "loss: " << format_double(res.first_loss) << " -> "
              << format_double(res.final_loss) << "\n";
    for (int t = 0; t < world::kNumTasks; ++t) {
        std::cout << "best val mrr " << world::task_tag(static_cast<world::Task>(t)) << ": "
                  << format_double(res.best_val_mrr[t]) << "\n";
    }
    std::cout << "checkpoint: " << a.out_path << "\nmetrics: " << metrics_path << "\n";
}

void run_sweep(const TrainArgs& a) {
    Timer timer;
    manifest::RunManifest m;
    m.command = "sweep";
    const world::DatasetPair data = load_dataset_dir(a.data_dir, m);
    const train::TrainConfig cfg = resolve_train_config(a, data.train.catalog);
    const auto ladder = train::default_ladder(cfg.model);
    const auto points = train::sweep(cfg, data, ladder);
    write_text_file(a.out_path, train::sweep_to_csv(points));

    m.config_json = train::train_config_to_json(cfg);
    m.seed = cfg.seed;
    m.add_output(a.out_path);
    m.duration_seconds = timer.seconds();
    manifest::write_manifest(m, a.out_path);

    for (const auto& pt : points) {
        if (pt.failed) {
            std::cout << pt.label << ": failed (" << pt.error << ")\n";
            continue;
        }
        std::cout << pt.label << ": n=" << pt.n_backbone;
        for (int t = 0; t < world::kNumTasks; ++t) {
            std::cout << " mrr" << world::task_tag(static_cast<world::Task>(t)) << "="
                      << format_double(pt.best_mrr[t]);
        }
        std::cout << "\n";
    }
    std::cout << "points: " << a.out_path << "\n";
}

// ------------------------------------------------------------- eval/replay

struct EvalArgs {
    std::string ckpt_path, data_dir, out_path;
    std::string delays_str = "0";
    std::string format = "csv";
    int k = 10;
    int user_cap = 0;
};

void run_eval(const EvalArgs& a, bool replay) {
    Timer timer;
    manifest::RunManifest m;
    m.command = replay ? "replay" : "eval";
    std::string extra;
    const ParamSet params = load_checkpoint(a.ckpt_path, &extra);
    m.add_input(a.ckpt_path);
    const world::DatasetPair data = load_dataset_dir(a.data_dir, m);

    eval::EvalConfig ec;
    ec.k = a.k;
    ec.user_cap = a.user_cap;
    ec.delays = replay ? parse_delays(a.delays_str) : std::vector<std::int64_t>{0};
    const eval::EvalReport report =
        eval::replay_staleness(params.config(), params, data.train, data.validation, ec);

    if (a.format != "csv" && a.format != "json") {
        throw ConfigError("eval: --format must be csv or json");
    }
    write_text_file(a.out_path, a.format == "csv" ? report.to_csv() : report.to_json());

    json cfgj;
    cfgj["checkpoint"] = a.ckpt_path;
    cfgj["model"] = json::parse(model_config_to_json(params.config()));
    if (!extra.empty()) cfgj["train"] = json::parse(extra);
    cfgj["k"] = ec.k;
    cfgj["user_cap"] = ec.user_cap;
    cfgj["delays"] = ec.delays;
    m.config_json = cfgj.dump();
    m.add_output(a.out_path);
    m.duration_seconds = timer.seconds();
    manifest::write_manifest(m, a.out_path);

    for (int t = 0; t < world::kNumTasks; ++t) {
        const auto task = static_cast<world::Task>(t);
        std::cout << "task " << world::task_tag(task) << " mrr:";
        for (std::int64_t d : ec.delays) {
            std::cout << " " << format_duration(d) << "="
                      << format_double(report.value(task, "all", d, "mrr"));
        }
        std::cout << "\n";
    }
    std::cout << "report: " << a.out_path << "\n";
}

// ------------------------------------------------------------- fit-scaling

struct FitArgs {
    std::string points_path, out_path, curves_path;
};

std::map<char, std::vector<scaling::ScalingPoint>> read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("task,n,p", 0) != 0) {
        throw DataError("scaling points file must start with header task,n,p: " + path);
    }
    std::map<char, std::vector<scaling::ScalingPoint>> by_task;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() < 3) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected task,n,p");
        }
        if (fields[0].size() != 1) {
            throw DataError(path + ":" + std::to_string(line_no) + ": bad task tag");
        }
        world::task_from_tag(fields[0][0]);  // validates
        scaling::ScalingPoint pt;
        try {
            pt.n = std::stod(fields[1]);
            pt.p = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric n or p");
        }
        by_task[fields[0][0]].push_back(pt);
    }
    if (by_task.empty()) throw DataError("no scaling points in " + path);
    return by_task;
}

void run_fit_scaling(const FitArgs& a) {
    Timer timer;
    manifest::RunManifest m;
    m.command = "fit-scaling";
    const auto by_task = read_points_csv(a.points_path);
    m.add_input(a.points_path);

    std::string fit_csv =
        "task,p0,n0,a,rmse_offset,slope,intercept,rmse_log,rmse_reduction\n";
    std::string curves_csv = "task,n,p_offset,p_log\n";
    for (const auto& [tag, raw] : by_task) {
        const auto pts = scaling::dedupe_points(raw);
        const scaling::FitComparison cmp = scaling::compare_fits(pts);
        fit_csv += tag;
        fit_csv += ',' + format_double(cmp.offset.p0) + ',' + format_double(cmp.offset.n0) +
                   ',' + format_double(cmp.offset.a) + ',' + format_double(cmp.offset.rmse) +
                   ',' + format_double(cmp.log.slope) + ',' + format_double(cmp.log.intercept) +
                   ',' + format_double(cmp.log.rmse) + ',' +
                   format_double(cmp.rmse_reduction) + '\n';
        const double n_lo = pts.front().n;
        const double n_hi = pts.back().n * 2.0;
        const int samples = 60;
        for (int i = 0; i < samples; ++i) {
            const double f = static_cast<double>(i) / (samples - 1);
            const double n = n_lo * std::pow(n_hi / n_lo, f);
            curves_csv += tag;
            curves_csv += ',' + format_double(n) + ',' + format_double(cmp.offset.predict(n)) +
                          ',' + format_double(cmp.log.predict(n)) + '\n';
        }
        std::cout << "task " << tag << ": P0=" << format_double(cmp.offset.p0)
                  << " N0=" << format_double(cmp.offset.n0)
                  << " a=" << format_double(cmp.offset.a)
                  << " rmse=" << format_double(cmp.offset.rmse) << " vs log rmse="
                  << format_double(cmp.log.rmse) << " (reduction "
                  << format_double(cmp.rmse_reduction * 100.0) << "%)\n";
    }
    write_text_file(a.out_path, fit_csv);
    const std::string curves_path =
        a.curves_path.empty() ? a.out_path + ".curves.csv" : a.curves_path;
    write_text_file(curves_path, curves_csv);

    m.add_output(a.out_path);
    m.add_output(curves_path);
    m.duration_seconds = timer.seconds();
    manifest::write_manifest(m, a.out_path);
    std::cout << "fits: " << a.out_path << "\ncurves: " << curves_path << "\n";
}

// -------------------------------------------------------------- cost-model

struct CostArgs {
    cost::CostQuery base;
    std::string vocab_str = "1e6";
    std::string mode = "all";
    std::string grid_str;
    std::string out_path;
};

void run_cost_model(const CostArgs& a) {
    Timer timer;
    cost::CostQuery base = a.base;
    base.vocab = parse_count(a.vocab_str);
    std::vector<cost::DecodeMode> modes;
    if (a.mode == "all") {
        modes = {cost::DecodeMode::full, cost::DecodeMode::sampled, cost::DecodeMode::projected,
                 cost::DecodeMode::sampled_projected};
    } else {
        modes = {cost::decode_mode_from_string(a.mode)};
    }
    std::vector<std::int64_t> grid;
    if (a.grid_str.empty()) {
        grid = {base.vocab};
    } else {
        for (const auto& piece : split(a.grid_str, ',')) grid.push_back(parse_count(piece));
    }

    std::string csv = "vocab,mode,backbone_flops,decode_flops,total_flops,reduction_vs_full\n";
    for (std::int64_t v : grid) {
        cost::CostQuery full = base;
        full.vocab = v;
        full.mode = cost::DecodeMode::full;
        full.validate();
        const double full_total = cost::total_flops_per_token(full);
        for (const auto mode : modes) {
            cost::CostQuery q = full;
            q.mode = mode;
            q.validate();
            const double backbone =
                cost::backbone_flops_per_token(q.layers, q.width, q.seq_len);
            const double decode = cost::decode_flops_per_token(q);
            const double total = cost::total_flops_per_token(q);
            csv += std::to_string(v) + ',' + cost::to_string(mode) + ',' +
                   format_double(backbone) + ',' + format_double(decode) + ',' +
                   format_double(total) + ',' + format_double(full_total / total) + '\n';
        }
    }
    std::cout << csv;
    if (!a.out_path.empty()) {
        write_text_file(a.out_path, csv);
        manifest::RunManifest m;
        m.command = "cost-model";
        json cfgj;
        cfgj["layers"] = base.layers;
        cfgj["width"] = base.width;
        cfgj["seq_len"] = base.seq_len;
        cfgj["vocab"] = base.vocab;
        cfgj["mode"] = a.mode;
        cfgj["sample_fraction"] = base.sample_fraction;
        cfgj["n_positives"] = base.n_positives;
        m.config_json = cfgj.dump();
        m.add_output(a.out_path);
        m.duration_seconds = timer.seconds();
        manifest::write_manifest(m, a.out_path);
    }
}

// ------------------------------------------------------------------ report

struct ReportArgs {
    std::string fit_path, sweep_path, cost_path;
    std::vector<std::string> replay_paths;
    std::string labels_str;
    std::string out_path;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& header_prefix) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind(header_prefix, 0) != 0) {
        throw DataError(path + ": expected header starting with " + header_prefix);
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty()) rows.push_back(split(line, ','));
    }
    return rows;
}

std::string pad(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string fmt3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string render_fit_table(const std::string& path) {
    const auto rows = read_csv(path, "task,p0,n0,a,rmse_offset");
    std::string out = "Scaling-law fit comparison (RMSE x 1e-3)\n";
    out += pad("task", 6) + pad("P0", 10) + pad("offset", 10) + pad("log", 10) + "reduction\n";
    for (const auto& r : rows) {
        if (r.size() < 9) throw DataError(path + ": short row");
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-6s%-10.3f%-10.2f%-10.2f%.1f%%\n", r[0].c_str(),
                      std::stod(r[1]), std::stod(r[4]) * 1e3, std::stod(r[7]) * 1e3,
                      std::stod(r[8]) * 100.0);
        out += buf;
    }
    return out;
}

std::string render_sweep_table(const std::string& path) {
    const auto rows = read_csv(path, "task,n,p");
    std::string out = "Best validation MRR by backbone size\n";
    out += pad("task", 6) + pad("n", 12) + pad("mrr", 10) + "label\n";
    for (const auto& r : rows) {
        if (r.size() < 3) throw DataError(path + ": short row");
        out += pad(r[0], 6) + pad(r[1], 12) + pad(fmt3(std::stod(r[2])), 10) +
               (r.size() > 3 ? r[3] : "") + "\n";
    }
    return out;
}

std::string render_replay_tables(const std::vector<std::string>& paths,
                                 const std::string& labels_str) {
    auto labels = labels_str.empty() ? std::vector<std::string>{} : split(labels_str, ',');
    std::string out = "Staleness replay, MRR (all slice)\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto rows = read_csv(paths[i], "task,slice,delay,metric,value");
        // delay -> per-task value
        std::vector<std::int64_t> delays;
        std::map<std::pair<char, std::int64_t>, double> mrr;
        for (const auto& r : rows) {
            if (r.size() < 6) throw DataError(paths[i] + ": short row");
            if (r[1] != "all" || r[3] != "mrr") continue;
            const std::int64_t d = std::stoll(r[2]);
            if (std::find(delays.begin(), delays.end(), d) == delays.end()) delays.push_back(d);
            mrr[{r[0][0], d}] = std::stod(r[4]);
        }
        std::sort(delays.begin(), delays.end());
        out += "[" + (i < labels.size() ? labels[i] : paths[i]) + "]\n";
        out += pad("task", 6);
        for (std::int64_t d : delays) out += pad("d=" + format_duration(d), 12);
        out += "\n";
        for (int t = 0; t < world::kNumTasks; ++t) {
            const char tag = world::task_tag(static_cast<world::Task>(t));
            out += pad(std::string(1, tag), 6);
            for (std::int64_t d : delays) {
                const auto it = mrr.find({tag, d});
                out += pad(it == mrr.end() ? std::string("-") : fmt3(it->second), 12);
            }
            out += "\n";
        }
    }
    return out;
}

std::string render_cost_table(const std::string& path) {
    const auto rows = read_csv(path, "vocab,mode");
    std::string out = "Training FLOPs per token by decoding mode\n";
    out += pad("vocab", 12) + pad("mode", 20) + pad("total", 14) + "reduction\n";
    for (const auto& r : rows) {
        if (r.size() < 6) throw DataError(path + ": short row");
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-12s%-20s%-14.4g%.1fx\n", r[0].c_str(), r[1].c_str(),
                      std::stod(r[4]), std::stod(r[5]));
        out += buf;
    }
    return out;
}

void run_report(const ReportArgs& a) {
    Timer timer;
    manifest::RunManifest m;
    m.command = "report";
    std::string out;
    if (!a.fit_path.empty()) {
        out += render_fit_table(a.fit_path);
        m.add_input(a.fit_path);
        out += "\n";
    }
    if (!a.sweep_path.empty()) {
        out += render_sweep_table(a.sweep_path);
        m.add_input(a.sweep_path);
        out += "\n";
    }
    if (!a.replay_paths.empty()) {
        out += render_replay_tables(a.replay_paths, a.labels_str);
        for (const auto& p : a.replay_paths) m.add_input(p);
        out += "\n";
    }
    if (!a.cost_path.empty()) {
        out += render_cost_table(a.cost_path);
        m.add_input(a.cost_path);
        out += "\n";
    }
    if (out.empty()) {
        throw ConfigError("report: nothing to render; pass --fit, --sweep, --replay or --cost");
    }
    std::cout << out;
    if (!a.out_path.empty()) {
        write_text_file(a.out_path, out);
        json cfgj;
        cfgj["labels"] = a.labels_str;
        m.config_json = cfgj.dump();
        m.add_output(a.out_path);
        m.duration_seconds = timer.seconds();
        manifest::write_manifest(m, a.out_path);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generative recommender scaling study: synthetic world, trainer, "
                 "staleness replay, scaling-law fits, decoding cost model"};
    app.require_subcommand(1);

    auto ga = std::make_shared<GenDataArgs>();
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic interaction dataset");
    gen->add_option("--out", ga->out_dir, "Output directory")->required();
    gen->add_option("--seed", ga->seed, "Master seed");
    gen->add_option("--users", ga->w.n_users, "Number of users");
    gen->add_option("--vocab", ga->vocab_str, "Catalog size incl. cold titles (1k style ok)");
    gen->add_option("--cold-fraction", ga->w.cold_fraction, "Fraction launched after cutoff");
    gen->add_option("--horizon", ga->horizon_str, "Total simulated span (e.g. 14d)");
    gen->add_option("--cutoff", ga->cutoff_str, "Train/validation boundary (e.g. 10d)");
    gen->add_option("--config", ga->config_path, "Flat key=value config file; flags override");
    gen->callback([ga, gen] {
        apply_flat_config(gen, ga->config_path);
        run_gen_data(*ga);
    });

    auto ta = std::make_shared<TrainArgs>();
    auto* tr = app.add_subcommand("train", "Train one model and write a checkpoint");
    add_train_options(tr, ta);
    tr->add_option("--out", ta->out_path, "Checkpoint output path")->required();
    tr->add_option("--metrics", ta->metrics_path, "Metric log path (default <out>.metrics.csv)");
    tr->callback([ta, tr] {
        apply_flat_config(tr, ta->config_path);
        run_train(*ta);
    });

    auto sa = std::make_shared<TrainArgs>();
    auto* sw = app.add_subcommand("sweep", "Train the model-size ladder and emit scaling points");
    add_train_options(sw, sa);
    sw->add_option("--out", sa->out_path, "Scaling points CSV path")->required();
    sw->callback([sa, sw] {
        apply_flat_config(sw, sa->config_path);
        run_sweep(*sa);
    });

    auto ea = std::make_shared<EvalArgs>();
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint at delay 0");
    ev->add_option("--ckpt", ea->ckpt_path, "Checkpoint path")->required();
    ev->add_option("--data", ea->data_dir, "Dataset directory")->required();
    ev->add_option("--out", ea->out_path, "Report output path")->required();
    ev->add_option("--format", ea->format, "csv or json");
    ev->add_option("--k", ea->k, "Cutoff k for hit/ndcg");
    ev->add_option("--user-cap", ea->user_cap, "Evaluate at most this many users");
    ev->callback([ea] { run_eval(*ea, /*replay=*/false); });

    auto ra = std::make_shared<EvalArgs>();
    auto* rp = app.add_subcommand("replay", "Staleness replay at increasing delays");
    rp->add_option("--ckpt", ra->ckpt_path, "Checkpoint path")->required();
    rp->add_option("--data", ra->data_dir, "Dataset directory")->required();
    rp->add_option("--out", ra->out_path, "Report output path")->required();
    rp->add_option("--delays", ra->delays_str, "Comma list starting at 0, e.g. 0,24h,48h");
    rp->add_option("--format", ra->format, "csv or json");
    rp->add_option("--k", ra->k, "Cutoff k for hit/ndcg");
    rp->add_option("--user-cap", ra->user_cap, "Evaluate at most this many users");
    rp->callback([ra] { run_eval(*ra, /*replay=*/true); });

    auto fa = std::make_shared<FitArgs>();
    auto* fs = app.add_subcommand("fit-scaling", "Fit offset power law and log baseline");
    fs->add_option("--points", fa->points_path, "Input CSV (task,n,p)")->required();
    fs->add_option("--out", fa->out_path, "Fit table CSV path")->required();
    fs->add_option("--curves", fa->curves_path, "Curve samples CSV (default <out>.curves.csv)");
    fs->callback([fa] { run_fit_scaling(*fa); });

    auto ca = std::make_shared<CostArgs>();
    auto* cm = app.add_subcommand("cost-model", "Analytic training-FLOPs table");
    cm->add_option("--layers", ca->base.layers, "Backbone layers");
    cm->add_option("--d,--width", ca->base.width, "Hidden width");
    cm->add_option("--seq", ca->base.seq_len, "Sequence length");
    cm->add_option("--vocab", ca->vocab_str, "Output vocabulary size (1e6 style ok)");
    cm->add_option("--mode", ca->mode, "full, sampled, projected, sampled+projected, or all");
    cm->add_option("--fraction", ca->base.sample_fraction, "Sampled-softmax fraction");
    cm->add_option("--n-pos", ca->base.n_positives, "Positives per context");
    cm->add_option("--vocab-grid", ca->grid_str, "Comma list of vocab sizes to sweep");
    cm->add_option("--out", ca->out_path, "Optional CSV output path");
    cm->callback([ca] { run_cost_model(*ca); });

    auto pa = std::make_shared<ReportArgs>();
    auto* re = app.add_subcommand("report", "Render plain-text tables from emitted CSVs");
    re->add_option("--fit", pa->fit_path, "fit-scaling output CSV");
    re->add_option("--sweep", pa->sweep_path, "sweep points CSV");
    re->add_option("--replay", pa->replay_paths, "replay/eval report CSVs");
    re->add_option("--labels", pa->labels_str, "Comma labels for the replay tables");
    re->add_option("--cost", pa->cost_path, "cost-model CSV");
    re->add_option("--out", pa->out_path, "Also write the rendered text here");
    re->callback([pa] { run_report(*pa); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const genrec::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const genrec::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const genrec::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

#include "genrec/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace genrec::world {

char task_tag(Task t) {
    switch (t) {
        case Task::A: return 'A';
        case Task::B: return 'B';
        case Task::C: return 'C';
    }
    throw InternalError("bad task");
}

Task task_from_tag(char tag) {
    if (tag == 'A') return Task::A;
    if (tag == 'B') return Task::B;
    if (tag == 'C') return Task::C;
    throw DataError(std::string("unknown task tag: ") + tag);
}

int WorldConfig::in_vocab_count() const {
    return vocab_size - static_cast<int>(std::llround(cold_fraction * vocab_size));
}

namespace {

std::array<int, 3> pool_sizes(const WorldConfig& cfg) {
    const int v_in = cfg.in_vocab_count();
    const int na = static_cast<int>(std::llround(cfg.pool_frac[0] * v_in));
    const int nb = static_cast<int>(std::llround(cfg.pool_frac[1] * v_in));
    return {na, nb, v_in - na - nb};
}

}  // namespace

void WorldConfig::validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (cold_fraction < 0.0 || cold_fraction >= 1.0)
        throw ConfigError("cold_fraction must be in [0,1)");
    if (latent_dim < 1 || graph_dim < 1 || lang_dim < 1 || ann_dim < 1)
        throw ConfigError("feature dims must be >= 1");
    if (semantic_noise < 0.0) throw ConfigError("semantic_noise must be >= 0");
    if (n_users < 1) throw ConfigError("n_users must be >= 1");
    if (horizon <= 0) throw ConfigError("horizon must be > 0");
    if (cutoff <= 0 || cutoff > horizon)
        throw ConfigError("cutoff must lie inside (0, horizon]");
    if (high_value_threshold < 0.0 || high_value_threshold > 1.0)
        throw ConfigError("high_value_threshold must be in [0,1]");

    double mix_total = 0.0;
    for (double m : task_mix) {
        if (m < 0.0) throw ConfigError("task_mix entries must be >= 0");
        mix_total += m;
    }
    if (!(mix_total > 0.0)) throw ConfigError("task_mix must have positive total");
    double frac_total = 0.0;
    for (double f : pool_frac) {
        if (f < 0.0) throw ConfigError("pool_frac entries must be >= 0");
        frac_total += f;
    }
    if (frac_total > 1.0 + 1e-9) throw ConfigError("pool_frac must sum to <= 1");

    const auto pools = pool_sizes(*this);
    for (int k = 0; k < kNumTasks; ++k)
        if (task_mix[static_cast<size_t>(k)] > 0.0 && pools[static_cast<size_t>(k)] < 1)
            throw ConfigError("task with positive mix has an empty item pool");
    if (task_mix[1] > 0.0 && (cluster_size < 1 || cluster_size > pools[1]))
        throw ConfigError("cluster_size must be in [1, B-pool size]");
    if (task_mix[2] > 0.0) {
        if (schedule_cycle < 1 || schedule_cycle > pools[2])
            throw ConfigError("schedule_cycle must be in [1, C-pool size]");
        if (schedule_window < 1 || schedule_window > schedule_cycle)
            throw ConfigError("schedule_window must be in [1, schedule_cycle]");
        if (window_decay <= 0.0 || window_decay > 1.0)
            throw ConfigError("window_decay must be in (0,1]");
    }
    if (bucket_seconds < 1) throw ConfigError("bucket_seconds must be >= 1");
    for (double p : binge_prob)
        if (p < 0.0 || p > 1.0) throw ConfigError("binge_prob entries must be in [0,1]");
    for (double p : {taste_noise, cluster_noise, schedule_noise})
        if (p < 0.0 || p > 1.0) throw ConfigError("noise mixing weights must be in [0,1]");
    if (taste_temp <= 0.0) throw ConfigError("taste_temp must be > 0");
    if (decoy_count < 0) throw ConfigError("decoy_count must be >= 0");
    if (decoy_count > 0)
        for (int k = 0; k < kNumTasks; ++k)
            if (task_mix[static_cast<size_t>(k)] > 0.0 &&
                decoy_count > pools[static_cast<size_t>(k)])
                throw ConfigError("decoy_count exceeds a task pool size");
    if (session_gap_mean <= 0.0 || event_gap_mean <= 0.0 || session_gap_min < 0)
        throw ConfigError("session gap parameters must be positive");
    if (session_len_base < 1 || session_len_mean < 0.0)
        throw ConfigError("session length parameters invalid");
    if (pages < 1 || countries < 1) throw ConfigError("context cardinalities must be >= 1");
}

const Title& TitleCatalog::at(int id) const {
    if (id < 0 || id >= size()) throw DataError("title id out of range: " + std::to_string(id));
    return titles[static_cast<size_t>(id)];
}

std::vector<double> TitleCatalog::features(int id) const {
    const Title& t = at(id);
    std::vector<double> f;
    f.reserve(t.graph_vec.size() + t.lang_vec.size() + t.ann_vec.size());
    f.insert(f.end(), t.graph_vec.begin(), t.graph_vec.end());
    f.insert(f.end(), t.lang_vec.begin(), t.lang_vec.end());
    f.insert(f.end(), t.ann_vec.begin(), t.ann_vec.end());
    return f;
}

std::int64_t Dataset::event_count() const {
    std::int64_t n = 0;
    for (const auto& h : histories) n += static_cast<std::int64_t>(h.size());
    return n;
}

namespace {

// vecs[i] = M[i] . latent + noise
std::vector<double> noisy_image(const std::vector<std::vector<double>>& map,
                                const std::vector<double>& latent, double noise, Rng& rng) {
    std::vector<double> out(map.size());
    for (size_t i = 0; i < map.size(); ++i) {
        double s = 0.0;
        for (size_t j = 0; j < latent.size(); ++j) s += map[i][j] * latent[j];
        out[i] = s + noise * rng.normal();
    }
    return out;
}

std::vector<std::vector<double>> random_map(int rows, int cols, Rng& rng) {
    std::vector<std::vector<double>> m(static_cast<size_t>(rows),
                                       std::vector<double>(static_cast<size_t>(cols)));
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (auto& row : m)
        for (double& x : row) x = scale * rng.normal();
    return m;
}

}  // namespace

TitleCatalog generate_catalog(const WorldConfig& config, std::uint64_t seed) {
    config.validate();
    const int v_in = config.in_vocab_count();
    const auto pools = pool_sizes(config);

    Rng crng(mix_seed(seed, fnv1a("catalog")));
    const auto graph_map = random_map(config.graph_dim, config.latent_dim, crng);
    const auto lang_map = random_map(config.lang_dim, config.latent_dim, crng);
    const auto ann_map = random_map(config.ann_dim, config.latent_dim, crng);

    const std::int64_t cold_span =
        std::min<std::int64_t>(2 * 86400, config.horizon - config.cutoff);

    TitleCatalog cat;
    cat.in_vocab_count = v_in;
    cat.titles.resize(static_cast<size_t>(config.vocab_size));
    for (int id = 0; id < config.vocab_size; ++id) {
        Rng trng = crng.fork(static_cast<std::uint64_t>(id));
        Title& t = cat.titles[static_cast<size_t>(id)];
        t.id = id;
        t.in_vocab = id < v_in;
        t.latent.resize(static_cast<size_t>(config.latent_dim));
        for (double& x : t.latent) x = trng.normal();
        t.graph_vec = noisy_image(graph_map, t.latent, config.semantic_noise, trng);
        t.lang_vec = noisy_image(lang_map, t.latent, config.semantic_noise, trng);
        t.ann_vec = noisy_image(ann_map, t.latent, config.semantic_noise, trng);
        if (t.in_vocab) {
            t.launch_time = 0;
            t.pool = id < pools[0] ? 0 : (id < pools[0] + pools[1] ? 1 : 2);
        } else {
            // Launched strictly after the cutoff; Task-A pool.
            t.launch_time = config.cutoff + 1 +
                            static_cast<std::int64_t>(trng.below(
                                static_cast<std::uint64_t>(std::max<std::int64_t>(1, cold_span))));
            t.pool = 0;
        }
        if (t.in_vocab)
            cat.pool_ids[static_cast<size_t>(t.pool)].push_back(id);
        else
            cat.cold_ids.push_back(id);
    }
    std::sort(cat.cold_ids.begin(), cat.cold_ids.end(), [&cat](int a, int b) {
        const auto& ta = cat.titles[static_cast<size_t>(a)];
        const auto& tb = cat.titles[static_cast<size_t>(b)];
        return ta.launch_time != tb.launch_time ? ta.launch_time < tb.launch_time : a < b;
    });

    if (config.task_mix[2] > 0.0) {
        std::vector<int> c_pool = cat.pool_ids[2];
        for (int i = 0; i < config.schedule_cycle; ++i) {
            const auto j = i + static_cast<int>(crng.below(c_pool.size() - static_cast<size_t>(i)));
            std::swap(c_pool[static_cast<size_t>(i)], c_pool[static_cast<size_t>(j)]);
        }
        cat.schedule.assign(c_pool.begin(), c_pool.begin() + config.schedule_cycle);
    }
    return cat;
}

namespace {

int poisson(Rng& rng, double lambda) {
    const double limit = std::exp(-lambda);
    double p = 1.0;
    int k = 0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

// Static per-user generator profile; holds the Task-A weight tables so each
// emission is a binary search rather than a full softmax.
struct UserProfile {
    int user_id = 0;
    std::vector<double> taste;
    std::vector<int> cluster;
    int country = 0;
    std::vector<double> warm_prefix;  // cumulative taste weights over the A pool
    std::vector<double> cold_prefix;  // cumulative boosted weights, launch order
};

// Mutable session state; cheap to snapshot for oracle rollouts.
struct SessionState {
    Rng rng;
    std::int64_t t = 0;
    int events_left = 0;
    std::array<int, 3> last_in_session = {-1, -1, -1};
};

double taste_weight(const WorldConfig& cfg, const UserProfile& prof, const Title& title,
                    bool cold) {
    double dot = 0.0;
    for (size_t j = 0; j < prof.taste.size(); ++j) dot += prof.taste[j] * title.latent[j];
    return std::exp(dot / cfg.taste_temp + (cold ? cfg.cold_boost : 0.0));
}

UserProfile make_profile(std::uint64_t user_seed, const TitleCatalog& cat,
                         const WorldConfig& cfg, int user_id, Rng& rng) {
    (void)user_seed;
    UserProfile prof;
    prof.user_id = user_id;
    prof.taste.resize(static_cast<size_t>(cfg.latent_dim));
    for (double& x : prof.taste) x = rng.normal();
    prof.country = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.countries)));

    if (cfg.task_mix[1] > 0.0) {
        std::vector<int> pool = cat.pool_ids[1];
        for (int i = 0; i < cfg.cluster_size; ++i) {
            const auto j = i + static_cast<int>(rng.below(pool.size() - static_cast<size_t>(i)));
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
        }
        prof.cluster.assign(pool.begin(), pool.begin() + cfg.cluster_size);
    }

    if (cfg.task_mix[0] > 0.0) {
        double acc = 0.0;
        prof.warm_prefix.reserve(cat.pool_ids[0].size());
        for (int id : cat.pool_ids[0]) {
            acc += taste_weight(cfg, prof, cat.titles[static_cast<size_t>(id)], false);
            prof.warm_prefix.push_back(acc);
        }
        acc = 0.0;
        prof.cold_prefix.reserve(cat.cold_ids.size());
        for (int id : cat.cold_ids) {
            acc += taste_weight(cfg, prof, cat.titles[static_cast<size_t>(id)], true);
            prof.cold_prefix.push_back(acc);
        }
    }
    return prof;
}

int launched_cold_count(const TitleCatalog& cat, std::int64_t t) {
    int lo = 0, hi = static_cast<int>(cat.cold_ids.size());
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (cat.titles[static_cast<size_t>(cat.cold_ids[static_cast<size_t>(mid)])].launch_time <=
            t)
            lo = mid + 1;
        else
            hi = mid;
    }
    return lo;
}

int prefix_draw(const std::vector<double>& prefix, int n, double r) {
    // First index with prefix value > r, restricted to the first n entries.
    int lo = 0, hi = n - 1;
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (prefix[static_cast<size_t>(mid)] > r)
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;
}

// Uniform draw for the noise branch: over the pool's decoy span when
// configured, otherwise the whole pool (plus launched cold titles for A).
int noise_item(const WorldConfig& cfg, const TitleCatalog& cat, int pool_idx, int n_cold,
               Rng& rng) {
    const auto& pool = cat.pool_ids[static_cast<size_t>(pool_idx)];
    if (cfg.decoy_count > 0)
        return pool[static_cast<size_t>(rng.below(static_cast<std::uint64_t>(cfg.decoy_count)))];
    const int n_warm = static_cast<int>(pool.size());
    const int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_warm + n_cold)));
    return idx < n_warm ? pool[static_cast<size_t>(idx)]
                        : cat.cold_ids[static_cast<size_t>(idx - n_warm)];
}

int emit_taste(const WorldConfig& cfg, const TitleCatalog& cat, const UserProfile& prof,
               SessionState& st, bool& noise_draw) {
    const int n_warm = static_cast<int>(cat.pool_ids[0].size());
    const int n_cold = launched_cold_count(cat, st.t);
    if (st.rng.bernoulli(cfg.taste_noise)) {
        noise_draw = true;
        return noise_item(cfg, cat, 0, n_cold, st.rng);
    }
    const double warm_total = prof.warm_prefix.empty() ? 0.0 : prof.warm_prefix.back();
    const double cold_total =
        n_cold > 0 ? prof.cold_prefix[static_cast<size_t>(n_cold - 1)] : 0.0;
    const double r = st.rng.uniform() * (warm_total + cold_total);
    if (r < warm_total || n_cold == 0)
        return cat.pool_ids[0][static_cast<size_t>(
            prefix_draw(prof.warm_prefix, n_warm, std::min(r, warm_total)))];
    return cat.cold_ids[static_cast<size_t>(
        prefix_draw(prof.cold_prefix, n_cold, r - warm_total))];
}

int emit_cluster(const WorldConfig& cfg, const TitleCatalog& cat, const UserProfile& prof,
                 SessionState& st, bool& noise_draw) {
    if (st.rng.bernoulli(cfg.cluster_noise)) {
        noise_draw = true;
        return noise_item(cfg, cat, 1, 0, st.rng);
    }
    return prof.cluster[static_cast<size_t>(st.rng.below(prof.cluster.size()))];
}

int emit_schedule(const WorldConfig& cfg, const TitleCatalog& cat, SessionState& st,
                  bool& noise_draw) {
    if (st.rng.bernoulli(cfg.schedule_noise)) {
        noise_draw = true;
        return noise_item(cfg, cat, 2, 0, st.rng);
    }
    const int slot = static_cast<int>((st.t / cfg.bucket_seconds) %
                                      static_cast<std::int64_t>(cfg.schedule_cycle));
    int offset = 0;
    if (cfg.schedule_window > 1) {
        double w = 1.0, total = 0.0;
        for (int j = 0; j < cfg.schedule_window; ++j, w *= cfg.window_decay) total += w;
        double r = st.rng.uniform() * total;
        w = 1.0;
        for (int j = 0; j < cfg.schedule_window - 1; ++j, w *= cfg.window_decay) {
            if (r < w) break;
            r -= w;
            ++offset;
        }
    }
    return cat.schedule[static_cast<size_t>((slot + offset) % cfg.schedule_cycle)];
}

Event step(const WorldConfig& cfg, const TitleCatalog& cat, const UserProfile& prof,
           SessionState& st) {
    if (st.events_left == 0) {
        st.t += cfg.session_gap_min +
                static_cast<std::int64_t>(std::llround(st.rng.exponential(cfg.session_gap_mean)));
        st.events_left = cfg.session_len_base + poisson(st.rng, cfg.session_len_mean);
        st.last_in_session = {-1, -1, -1};
    } else {
        st.t += 1 + static_cast<std::int64_t>(std::llround(st.rng.exponential(cfg.event_gap_mean)));
    }

    const int task = st.rng.categorical(std::span<const double>(cfg.task_mix));
    int item;
    bool noise_draw = false;
    const int last = st.last_in_session[static_cast<size_t>(task)];
    if (last >= 0 && st.rng.bernoulli(cfg.binge_prob[static_cast<size_t>(task)])) {
        item = last;
    } else if (task == 0) {
        item = emit_taste(cfg, cat, prof, st, noise_draw);
    } else if (task == 1) {
        item = emit_cluster(cfg, cat, prof, st, noise_draw);
    } else {
        item = emit_schedule(cfg, cat, st, noise_draw);
    }

    Event ev;
    ev.user_id = prof.user_id;
    ev.item = item;
    ev.timestamp = st.t;
    // Watch-value tracks how the item was chosen: organic draws (taste, cluster,
    // schedule, binge) clear the high-value threshold, uniform-noise draws land
    // below it. High-value events are therefore the predictable subset.
    const double u = st.rng.uniform();
    ev.reward = noise_draw ? 0.9 * cfg.high_value_threshold * u
                           : cfg.high_value_threshold + (1.0 - cfg.high_value_threshold) * u;
    ev.high_value = ev.reward >= cfg.high_value_threshold;
    ev.context = {static_cast<int>((st.t / cfg.bucket_seconds) %
                                   static_cast<std::int64_t>(cfg.schedule_cycle)),
                  static_cast<int>(st.rng.below(static_cast<std::uint64_t>(cfg.pages))),
                  prof.country};
    ev.task = static_cast<Task>(task);

    st.last_in_session[static_cast<size_t>(task)] = item;
    --st.events_left;
    return ev;
}

}  // namespace

std::vector<Event> generate_history(std::uint64_t user_seed, const TitleCatalog& catalog,
                                    std::int64_t horizon, const WorldConfig& config,
                                    int user_id) {
    if (horizon <= 0) throw ConfigError("horizon must be > 0");
    SessionState st{Rng(user_seed)};
    const UserProfile prof = make_profile(user_seed, catalog, config, user_id, st.rng);
    std::vector<Event> events;
    for (;;) {
        Event ev = step(config, catalog, prof, st);
        if (ev.timestamp >= horizon) break;
        events.push_back(std::move(ev));
    }
    return events;
}

DatasetPair generate_dataset(const WorldConfig& config, std::uint64_t seed) {
    config.validate();
    TitleCatalog catalog = generate_catalog(config, seed);
    const std::uint64_t user_base = mix_seed(seed, fnv1a("user"));

    DatasetPair out;
    out.train.catalog = catalog;
    out.train.cutoff_time = config.cutoff;
    out.train.split = Split::train;
    out.train.histories.resize(static_cast<size_t>(config.n_users));
    out.validation.catalog = std::move(catalog);
    out.validation.cutoff_time = config.cutoff;
    out.validation.split = Split::validation;
    out.validation.histories.resize(static_cast<size_t>(config.n_users));

    for (int u = 0; u < config.n_users; ++u) {
        const auto history = generate_history(mix_seed(user_base, static_cast<std::uint64_t>(u)),
                                              out.train.catalog, config.horizon, config, u);
        auto& train = out.train.histories[static_cast<size_t>(u)];
        auto& valid = out.validation.histories[static_cast<size_t>(u)];
        for (const Event& ev : history)
            (ev.timestamp <= config.cutoff ? train : valid).push_back(ev);
    }
    if (out.validation.event_count() == 0)
        out.validation.warnings.push_back("validation split is empty (cutoff == horizon?)");
    return out;
}

std::optional<Event> first_high_value_after(const std::vector<Event>& history, Task task,
                                            std::int64_t after) {
    for (const Event& ev : history)
        if (ev.timestamp > after && ev.high_value && ev.task == task) return ev;
    return std::nullopt;
}

namespace {

void write_vector(std::string& line, const std::vector<double>& v) {
    for (size_t i = 0; i < v.size(); ++i) {
        if (i > 0) line.push_back(',');
        line += format_double(v[i]);
    }
}

std::vector<double> parse_vector(const std::string& text, int expect, const char* what) {
    const auto parts = split(text, ',');
    if (static_cast<int>(parts.size()) != expect)
        throw DataError(std::string("bad ") + what + " vector width");
    std::vector<double> out(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) out[i] = std::stod(parts[i]);
    return out;
}

}  // namespace

void write_catalog(const TitleCatalog& catalog, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    const Title& first = catalog.titles.at(0);
    os << "#genrec-catalog v1 vocab=" << catalog.size() << " in_vocab=" << catalog.in_vocab_count
       << " dims=" << first.graph_vec.size() << ',' << first.lang_vec.size() << ','
       << first.ann_vec.size() << " fields=id,launch_time,in_vocab,graph_vec,lang_vec,ann_vec\n";
    for (const Title& t : catalog.titles) {
        std::string line = std::to_string(t.id);
        line += '\t';
        line += std::to_string(t.launch_time);
        line += '\t';
        line += t.in_vocab ? '1' : '0';
        line += '\t';
        write_vector(line, t.graph_vec);
        line += '\t';
        write_vector(line, t.lang_vec);
        line += '\t';
        write_vector(line, t.ann_vec);
        os << line << '\n';
    }
    if (!os) throw DataError("failed writing catalog: " + path);
}

namespace {

std::string header_field(const std::string& header, const std::string& key) {
    const auto pos = header.find(" " + key + "=");
    if (pos == std::string::npos) throw DataError("missing header field: " + key);
    const auto start = pos + key.size() + 2;
    auto end = header.find(' ', start);
    if (end == std::string::npos) end = header.size();
    return header.substr(start, end - start);
}

}  // namespace

TitleCatalog load_catalog(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open catalog: " + path);
    std::string header;
    if (!std::getline(is, header) || header.rfind("#genrec-catalog v1 ", 0) != 0)
        throw DataError("not a v1 catalog file: " + path);
    const int vocab = static_cast<int>(parse_count(header_field(header, "vocab")));
    const int in_vocab = static_cast<int>(parse_count(header_field(header, "in_vocab")));
    const auto dims = parse_vector(header_field(header, "dims"), 3, "dims");

    TitleCatalog cat;
    cat.in_vocab_count = in_vocab;
    cat.titles.reserve(static_cast<size_t>(vocab));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cols = split(line, '\t');
        if (cols.size() != 6) throw DataError("catalog row needs 6 columns");
        Title t;
        t.id = std::stoi(cols[0]);
        t.launch_time = std::stoll(cols[1]);
        t.in_vocab = cols[2] == "1";
        t.graph_vec = parse_vector(cols[3], static_cast<int>(dims[0]), "graph");
        t.lang_vec = parse_vector(cols[4], static_cast<int>(dims[1]), "lang");
        t.ann_vec = parse_vector(cols[5], static_cast<int>(dims[2]), "ann");
        if (t.id != static_cast<int>(cat.titles.size()))
            throw DataError("catalog ids must be dense and ascending");
        if (t.in_vocab != (t.id < in_vocab))
            throw DataError("catalog in_vocab flags must match the header split");
        cat.titles.push_back(std::move(t));
    }
    if (static_cast<int>(cat.titles.size()) != vocab)
        throw DataError("catalog row count does not match header");
    for (const Title& t : cat.titles)
        if (!t.in_vocab) cat.cold_ids.push_back(t.id);
    return cat;
}

void write_events(const Dataset& dataset, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "#genrec-events v1 split="
       << (dataset.split == Split::train ? "train" : "validation")
       << " cutoff=" << dataset.cutoff_time << " users=" << dataset.n_users()
       << " fields=user_id,item,timestamp,reward,high_value,context,task\n";
    for (const auto& history : dataset.histories) {
        for (const Event& ev : history) {
            os << ev.user_id << '\t' << ev.item << '\t' << ev.timestamp << '\t'
               << format_double(ev.reward) << '\t' << (ev.high_value ? '1' : '0') << '\t'
               << ev.context[0] << ',' << ev.context[1] << ',' << ev.context[2] << '\t'
               << task_tag(ev.task) << '\n';
        }
    }
    if (!os) throw DataError("failed writing events: " + path);
}

Dataset load_events(const std::string& path, const TitleCatalog& catalog) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open events: " + path);
    std::string header;
    if (!std::getline(is, header) || header.rfind("#genrec-events v1 ", 0) != 0)
        throw DataError("not a v1 events file: " + path);

    Dataset ds;
    ds.catalog = catalog;
    ds.split = header_field(header, "split") == "train" ? Split::train : Split::validation;
    ds.cutoff_time = std::stoll(header_field(header, "cutoff"));
    ds.histories.resize(static_cast<size_t>(parse_count(header_field(header, "users"))));

    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cols = split(line, '\t');
        if (cols.size() != 7) throw DataError("event row needs 7 columns");
        Event ev;
        ev.user_id = std::stoi(cols[0]);
        ev.item = std::stoi(cols[1]);
        ev.timestamp = std::stoll(cols[2]);
        ev.reward = std::stod(cols[3]);
        ev.high_value = cols[4] == "1";
        const auto ctx = split(cols[5], ',');
        if (ctx.size() != 3) throw DataError("event context needs 3 fields");
        for (int i = 0; i < 3; ++i) ev.context[static_cast<size_t>(i)] = std::stoi(ctx[static_cast<size_t>(i)]);
        ev.task = task_from_tag(cols[6].empty() ? '?' : cols[6][0]);
        if (ev.user_id < 0 || ev.user_id >= ds.n_users())
            throw DataError("event user_id out of range");
        if (ev.item < 0 || ev.item >= catalog.size()) throw DataError("event item out of range");
        auto& h = ds.histories[static_cast<size_t>(ev.user_id)];
        if (!h.empty() && ev.timestamp <= h.back().timestamp)
            throw DataError("event timestamps must strictly increase per user");
        h.push_back(std::move(ev));
    }
    return ds;
}

BayesReport bayes_oracle_mrr(const WorldConfig& config, std::uint64_t seed,
                             const std::vector<std::int64_t>& delays, int rollouts,
                             int max_users) {
    config.validate();
    if (delays.empty()) throw ConfigError("delays must be non-empty");
    for (size_t i = 0; i < delays.size(); ++i) {
        if (delays[i] < 0) throw ConfigError("delays must be >= 0");
        if (i > 0 && delays[i] <= delays[i - 1]) throw ConfigError("delays must be ascending");
    }
    if (rollouts < 1) throw ConfigError("rollouts must be >= 1");

    const TitleCatalog catalog = generate_catalog(config, seed);
    const std::uint64_t user_base = mix_seed(seed, fnv1a("user"));
    const int n_users = max_users > 0 ? std::min(max_users, config.n_users) : config.n_users;
    const std::int64_t max_delay = delays.back();
    const std::int64_t rollout_end = config.cutoff + max_delay + 4 * 86400;
    const size_t nd = delays.size();

    BayesReport report;
    for (int k = 0; k < kNumTasks; ++k) {
        report.mrr[static_cast<size_t>(k)].assign(nd, 0.0);
        report.counts[static_cast<size_t>(k)].assign(nd, 0);
    }

    std::vector<std::vector<std::vector<int>>> counts(
        3, std::vector<std::vector<int>>(nd, std::vector<int>(static_cast<size_t>(catalog.size()))));

    for (int u = 0; u < n_users; ++u) {
        const std::uint64_t user_seed = mix_seed(user_base, static_cast<std::uint64_t>(u));
        SessionState st{Rng(user_seed)};
        const UserProfile prof = make_profile(user_seed, catalog, config, u, st.rng);

        // Replay the user's own trajectory, snapshotting state at the cutoff.
        std::vector<Event> future;
        SessionState at_cutoff = st;
        bool snapped = false;
        for (;;) {
            SessionState before = st;
            Event ev = step(config, catalog, prof, st);
            if (!snapped && ev.timestamp > config.cutoff) {
                at_cutoff = before;
                snapped = true;
            }
            if (ev.timestamp >= config.horizon) break;
            if (ev.timestamp > config.cutoff) future.push_back(std::move(ev));
        }
        if (!snapped) at_cutoff = st;

        for (auto& per_task : counts)
            for (auto& per_delay : per_task) std::fill(per_delay.begin(), per_delay.end(), 0);

        for (int r = 0; r < rollouts; ++r) {
            SessionState sim = at_cutoff;
            sim.rng = at_cutoff.rng.fork(0x726f6c6cull + static_cast<std::uint64_t>(r));
            std::array<std::vector<bool>, 3> found;
            for (auto& f : found) f.assign(nd, false);
            int remaining = static_cast<int>(nd) * kNumTasks;
            while (remaining > 0 && sim.t < rollout_end) {
                const Event ev = step(config, catalog, prof, sim);
                if (!ev.high_value) continue;
                const auto task = static_cast<size_t>(ev.task);
                for (size_t d = 0; d < nd; ++d) {
                    if (found[task][d] || ev.timestamp <= config.cutoff + delays[d]) continue;
                    found[task][d] = true;
                    ++counts[task][d][static_cast<size_t>(ev.item)];
                    --remaining;
                }
            }
        }

        for (int k = 0; k < kNumTasks; ++k) {
            for (size_t d = 0; d < nd; ++d) {
                const auto target = first_high_value_after(future, static_cast<Task>(k),
                                                           config.cutoff + delays[d]);
                if (!target) continue;
                const auto& c = counts[static_cast<size_t>(k)][d];
                const int ct = c[static_cast<size_t>(target->item)];
                int rank = 1;
                for (int i = 0; i < catalog.size(); ++i) {
                    if (c[static_cast<size_t>(i)] > ct ||
                        (c[static_cast<size_t>(i)] == ct && i < target->item))
                        ++rank;
                }
                report.mrr[static_cast<size_t>(k)][d] += 1.0 / rank;
                report.counts[static_cast<size_t>(k)][d] += 1;
            }
        }
    }

    for (int k = 0; k < kNumTasks; ++k)
        for (size_t d = 0; d < nd; ++d)
            if (report.counts[static_cast<size_t>(k)][d] > 0)
                report.mrr[static_cast<size_t>(k)][d] /= report.counts[static_cast<size_t>(k)][d];
    return report;
}

}  // namespace genrec::world

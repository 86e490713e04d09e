#pragma once

// Synthetic behavior worlds: item catalogs with semantic features, three
// task-category event generators with designed predictability ceilings,
// train/validation splits, file I/O, and a Monte Carlo Bayes oracle.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "genrec/common.hpp"

namespace genrec::world {

enum class Task : int { A = 0, B = 1, C = 2 };
constexpr int kNumTasks = 3;
char task_tag(Task t);
Task task_from_tag(char tag);

struct WorldConfig {
    int vocab_size = 1000;            // total catalog size, cold titles included
    double cold_fraction = 0.05;      // titles launched after the cutoff
    int latent_dim = 8;
    int graph_dim = 8;
    int lang_dim = 8;
    int ann_dim = 4;
    double semantic_noise = 0.3;

    int n_users = 300;
    std::int64_t horizon = 14 * 86400;
    std::int64_t cutoff = 10 * 86400;
    double high_value_threshold = 0.5;

    std::array<double, 3> task_mix = {0.4, 0.3, 0.3};
    std::array<double, 3> pool_frac = {0.40, 0.30, 0.30};

    // Task A: stationary per-user taste over its pool, heavily noised.
    double taste_temp = 2.0;       // divisor on taste logits
    double taste_noise = 0.5;      // probability of a uniform draw
    double cold_boost = 1.0;       // logit bonus for launched cold titles

    // Noise draws land uniformly on the first decoy_count titles of the task
    // pool instead of the whole pool when positive. Concentrated low-value
    // traffic gives unfiltered objectives a mode-level handicap.
    int decoy_count = 0;

    // Task B: short-memory repetition plus a per-user item cluster.
    int cluster_size = 8;
    double cluster_noise = 0.15;   // probability of a uniform pool draw

    // Task C: global availability schedule over wall-clock buckets.
    std::int64_t bucket_seconds = 8 * 3600;
    int schedule_cycle = 6;        // period = bucket_seconds * schedule_cycle
    int schedule_window = 2;       // items visible per bucket
    double window_decay = 0.25;    // geometric weight ratio inside the window
    double schedule_noise = 0.06;  // probability of a uniform pool draw

    // Within-session repetition probability per task.
    std::array<double, 3> binge_prob = {0.0, 0.85, 0.5};

    // Session shape.
    double session_gap_mean = 5400.0;   // seconds, on top of the minimum
    std::int64_t session_gap_min = 600;
    double event_gap_mean = 240.0;
    int session_len_base = 3;
    double session_len_mean = 3.0;      // Poisson part on top of the base

    int pages = 4;
    int countries = 4;

    void validate() const;
    int in_vocab_count() const;
    int cold_count() const { return vocab_size - in_vocab_count(); }
    int feat_dim() const { return graph_dim + lang_dim + ann_dim; }
    // Context field cardinalities: schedule slot, page, country.
    std::vector<int> ctx_cards() const { return {schedule_cycle, pages, countries}; }
};

struct Title {
    int id = 0;
    std::int64_t launch_time = 0;
    bool in_vocab = true;
    std::vector<double> graph_vec;
    std::vector<double> lang_vec;
    std::vector<double> ann_vec;
    // Hidden generator state; never fed to the model, only to oracles.
    std::vector<double> latent;
    int pool = 0;  // task pool index, generator-internal
};

struct TitleCatalog {
    std::vector<Title> titles;
    int in_vocab_count = 0;
    std::array<std::vector<int>, 3> pool_ids;  // in-vocab ids per task pool
    std::vector<int> cold_ids;                 // all in the Task-A pool, launch-sorted
    std::vector<int> schedule;                 // Task-C bucket -> title id

    int size() const { return static_cast<int>(titles.size()); }
    const Title& at(int id) const;
    // Concatenated (graph, lang, ann) features of one title.
    std::vector<double> features(int id) const;
};

struct Event {
    int user_id = 0;
    int item = 0;
    std::int64_t timestamp = 0;
    double reward = 0.0;
    bool high_value = false;
    std::array<int, 3> context = {0, 0, 0};  // slot, page, country
    Task task = Task::A;
};

enum class Split { train, validation };

struct Dataset {
    TitleCatalog catalog;
    std::vector<std::vector<Event>> histories;  // indexed by user id
    std::int64_t cutoff_time = 0;
    Split split = Split::train;
    std::vector<std::string> warnings;

    int n_users() const { return static_cast<int>(histories.size()); }
    std::int64_t event_count() const;
};

TitleCatalog generate_catalog(const WorldConfig& config, std::uint64_t seed);

std::vector<Event> generate_history(std::uint64_t user_seed, const TitleCatalog& catalog,
                                    std::int64_t horizon, const WorldConfig& config,
                                    int user_id = 0);

struct DatasetPair {
    Dataset train;
    Dataset validation;
};
DatasetPair generate_dataset(const WorldConfig& config, std::uint64_t seed);

// File formats (self-describing headers, tab-separated rows).
void write_catalog(const TitleCatalog& catalog, const std::string& path);
TitleCatalog load_catalog(const std::string& path);
void write_events(const Dataset& dataset, const std::string& path);
Dataset load_events(const std::string& path, const TitleCatalog& catalog);

// First high-value event of `task` strictly after `after` in a time-sorted
// history; nullopt when none exists.
std::optional<Event> first_high_value_after(const std::vector<Event>& history, Task task,
                                            std::int64_t after);

// Monte Carlo Bayes oracle: replays each user to the cutoff, then rolls the
// true generator forward under forked randomness to estimate the conditional
// distribution of the first high-value item per task at each delay, and
// scores the dataset's actual future against that ranking.
struct BayesReport {
    // mrr[task][delay index]; counts aligned.
    std::array<std::vector<double>, 3> mrr;
    std::array<std::vector<int>, 3> counts;
};
BayesReport bayes_oracle_mrr(const WorldConfig& config, std::uint64_t seed,
                             const std::vector<std::int64_t>& delays, int rollouts,
                             int max_users = 0);

}  // namespace genrec::world

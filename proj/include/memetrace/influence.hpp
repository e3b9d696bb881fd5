#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetrace/corpus.hpp"

namespace memetrace::influence {

/// Dense row-major square matrix, entry (s, d).
struct Matrix {
    std::size_t n = 0;
    std::vector<double> data;

    Matrix() = default;
    explicit Matrix(std::size_t size, double fill = 0.0) : n(size), data(size * size, fill) {}
    double& operator()(std::size_t s, std::size_t d) { return data[s * n + d]; }
    double operator()(std::size_t s, std::size_t d) const { return data[s * n + d]; }
};

struct Event {
    double t = 0.0;  // days
    std::size_t k = 0;
};

struct EventLog {
    std::vector<std::string> process_names;
    std::vector<Event> events;  // nondecreasing t
    double t_start = 0.0;
    double t_end = 0.0;

    std::size_t K() const { return process_names.size(); }
    std::vector<std::size_t> counts() const;
    /// Throws InvalidArgument on out-of-order or out-of-horizon events, bad
    /// process indices, duplicate names or an empty horizon.
    void validate() const;
};

/// Exponential impulse truncated to (0, max_lag] and renormalized.
struct ExponentialKernel {
    double tau = 1.0;
    double max_lag = 3.0;

    double density(double lag) const;
    /// Mass of (0, min(lag, max_lag)].
    double mass(double lag) const;
    void validate() const;
};

struct HawkesModel {
    std::vector<double> lambda0;  // events/day
    Matrix W;                     // W(s, d): expected extra events on d per event on s
    ExponentialKernel kernel;

    std::size_t K() const { return lambda0.size(); }
    void validate() const;
};

/// Largest eigenvalue modulus.
double spectral_radius(const Matrix& W);

/// Conditional intensity of process k at time t given the events of `history` before t.
double rate(const HawkesModel& model, std::size_t k, double t, const EventLog& history);

/// Ogata thinning on (t_start, t_end). Throws InvalidArgument when W is not
/// subcritical.
EventLog simulate(const HawkesModel& model, double t_start, double t_end, std::uint64_t seed,
                  std::vector<std::string> process_names = {});

// ---------------------------------------------------------------------------
// Gibbs sampler

/// Gamma(shape, rate) priors.
struct Prior {
    double lambda_shape = 1.0;
    double lambda_rate = 1.0;
    double w_shape = 1.0;
    double w_rate = 1.0;
};

struct GibbsConfig {
    std::size_t draws = 1500;
    std::size_t burn_in = 500;
    ExponentialKernel kernel;
    Prior prior;
    std::uint64_t seed = 1;
    /// Forces W to zero: every event is background.
    bool background_only = false;

    nlohmann::json to_json() const;
    static GibbsConfig from_json(const nlohmann::json& j);
};

inline constexpr std::int32_t kBackground = -1;

struct PosteriorSample {
    std::vector<double> lambda0;
    Matrix W;
    /// Parent event index of each event, kBackground for immigrants.
    std::vector<std::int32_t> parent;
};

struct HawkesFit {
    GibbsConfig config;
    std::vector<std::string> process_names;
    std::size_t event_count = 0;
    std::vector<PosteriorSample> samples;  // post burn-in
    std::vector<double> lambda0_mean;
    Matrix W_mean;
    double spectral_radius = 0.0;  // of W_mean; >= 1 is flagged, not rejected
    /// Largest relative gap between the posterior means of the two chain halves.
    double split_chain_gap = 0.0;
    bool converged = false;
};

/// Throws InvalidArgument when the log is empty or draws <= burn_in.
HawkesFit fit_gibbs(const EventLog& events, const GibbsConfig& config);

nlohmann::json fit_to_json(const HawkesFit& fit);

// ---------------------------------------------------------------------------
// Attribution

enum class Normalization { dest_percent, source_normalized };
/// chain: credit the process where the event's ancestor chain starts.
/// direct: credit the immediate parent's process.
enum class Origin { chain, direct };

struct InfluenceMatrix {
    Normalization mode = Normalization::dest_percent;
    Origin origin = Origin::chain;
    std::vector<std::string> process_names;
    /// NaN where the normalizing event count is zero.
    Matrix values;
    /// Background share per destination, in the same units as `values`.
    std::vector<double> background;
    std::vector<std::size_t> event_counts;
};

/// Expected attributed event counts averaged over posterior samples.
InfluenceMatrix attribution_matrix(const HawkesFit& fit, const EventLog& events, Normalization mode,
                                   Origin origin = Origin::chain);

/// Attributed counts of one parent assignment: counts(s, d) plus background per d.
struct AttributionCounts {
    Matrix edges;
    std::vector<double> background;
};
AttributionCounts attribute(const EventLog& events, std::span<const std::int32_t> parent, Origin origin);

void write_influence_csv(std::ostream& out, const InfluenceMatrix& m);

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// sup |F_a - F_b| over all points. Any nonempty samples.
double ks_statistic(std::span<const double> a, std::span<const double> b);
/// Asymptotic Kolmogorov survival function Q(lambda).
double kolmogorov_survival(double lambda);
/// Two-sample test; each sample needs at least 5 points.
KsResult ks_test(std::span<const double> a, std::span<const double> b);
/// One-sample test against a continuous CDF; needs at least 5 points.
KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf);

struct InfluenceComparison {
    std::size_t source = 0;
    std::size_t dest = 0;
    KsResult ks;
    bool significant = false;  // p < 0.01
};

/// KS test over the per-cluster values of entry (s, d). Entries that are
/// undefined (NaN) are dropped; each side then needs at least 5 values.
InfluenceComparison compare_influence(std::span<const InfluenceMatrix> group_a,
                                      std::span<const InfluenceMatrix> group_b, std::size_t s, std::size_t d);

void write_ks_table(std::ostream& out, std::span<const InfluenceComparison> rows,
                    const std::vector<std::string>& process_names);

// ---------------------------------------------------------------------------
// Event logs from corpora and files

/// Events for the given posts, one process per listed community (posts from
/// other communities are skipped). Times are days since `origin_ts`. Posts that
/// share a timestamp are jittered uniformly within +-0.5 of `resolution_seconds`.
EventLog events_from_posts(const corpus::Corpus& corpus, std::span<const std::size_t> posts,
                           const std::vector<std::string>& communities, std::int64_t origin_ts, double t_end,
                           std::uint64_t seed, double resolution_seconds = 1.0);

/// <stem>.csv holds `t_days,process_index`; <stem>.json names processes and horizon.
void write_event_log(const EventLog& log, const std::filesystem::path& stem);
EventLog read_event_log(const std::filesystem::path& stem);

}  // namespace memetrace::influence

#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetrace/corpus.hpp"

namespace memetrace::trends {

/// Daily counts of posts containing a term within one community.
struct TermSeries {
    std::string term;
    std::string community;
    std::vector<std::int64_t> days;  // contiguous UTC day indices
    std::vector<std::size_t> counts;
    std::vector<std::size_t> totals;
    std::vector<double> fraction;  // counts / totals, 0 where totals == 0

    std::size_t size() const { return days.size(); }
};

/// Covers every day from the community's first to its last post.
/// Throws InvalidArgument for an unknown community.
TermSeries build_term_series(const corpus::Corpus& corpus, std::string_view term, std::string_view community);

/// Series of posts per day whose index is in `matching` (sorted post indices).
TermSeries build_series_from_posts(const corpus::Corpus& corpus, std::span<const std::size_t> matching,
                                   std::string_view label, std::string_view community);

/// Centered moving average of `fraction` with truncated edges.
TermSeries rolling_mean(const TermSeries& series, int window);
std::vector<double> rolling_mean(std::span<const double> values, int window);

inline constexpr double kInfiniteRatio = std::numeric_limits<double>::infinity();

/// Mean fraction over the last `edge_window` days divided by the mean over the
/// first `edge_window` days. 1.0 when both are zero, +inf when only the first is.
double increase_ratio(const TermSeries& series, std::size_t edge_window);

// ---------------------------------------------------------------------------
// Changepoints under a normal model with per-segment mean and variance.

inline constexpr double kVarianceFloor = 1e-12;
inline constexpr std::size_t kMinSegmentLength = 2;

/// O(1) segment cost n * (log(2*pi) + log(max(var, floor)) + 1) via prefix sums.
class NormalMeanVarCost {
public:
    explicit NormalMeanVarCost(std::span<const double> values, double variance_floor = kVarianceFloor);

    /// Cost of the half-open segment [begin, end).
    double operator()(std::size_t begin, std::size_t end) const;
    double mean(std::size_t begin, std::size_t end) const;
    /// Biased (MLE) variance of [begin, end).
    double variance(std::size_t begin, std::size_t end) const;
    std::size_t size() const { return s1_.size() - 1; }

private:
    double offset_ = 0.0;
    double floor_;
    std::vector<double> s1_;
    std::vector<double> s2_;
};

struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;
    double mean = 0.0;
    double variance = 0.0;
};

/// Result of a single-penalty segmentation.
struct Segmentation {
    std::vector<std::size_t> changepoints;  // start index of every segment but the first
    std::vector<Segment> segments;
    double penalty = 0.0;
    double total_cost = 0.0;  // sum of segment costs + penalty * #changepoints
};

/// Exact penalized segmentation by PELT. Requires |values| >= 4, penalty > 0
/// and no NaN.
Segmentation pelt_segment(std::span<const double> values, double penalty);

struct RankedChangepoint {
    std::size_t index = 0;
    std::size_t rank = 0;  // 1 = most significant
    double first_penalty = 0.0;
    double pre_mean = 0.0;   // in the segmentation where it first appears
    double post_mean = 0.0;
};

struct ChangepointSet {
    std::vector<std::size_t> indices;      // sorted ascending
    std::vector<RankedChangepoint> ranked; // by first_penalty desc, then index asc
    std::vector<Segment> segments;         // segments induced by `indices`
};

/// 25 geometric steps from 50*log(n) down to 0.5*log(n).
std::vector<double> default_penalty_schedule(std::size_t n);

/// Runs PELT for every penalty of a strictly decreasing schedule and ranks each
/// changepoint by the largest penalty at which it appears.
ChangepointSet rank_changepoints(std::span<const double> values, std::span<const double> penalties);

// ---------------------------------------------------------------------------
// Exports

/// CSV: day,count,total,fraction,smoothed_fraction
void write_series_csv(std::ostream& out, const TermSeries& raw, const TermSeries& smoothed);

/// JSON array of {date, rank, first_penalty, pre_mean, post_mean}.
nlohmann::json changepoints_to_json(const ChangepointSet& set, const TermSeries& series);

}  // namespace memetrace::trends

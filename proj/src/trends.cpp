#include "memetrace/trends.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "memetrace/common.hpp"

namespace memetrace::trends {

// ---------------------------------------------------------------------------
// Series

TermSeries build_series_from_posts(const corpus::Corpus& corpus, std::span<const std::size_t> matching,
                                   std::string_view label, std::string_view community) {
    if (!corpus.has_community(community))
        throw InvalidArgument("unknown community '" + std::string(community) + "'");

    std::int64_t first = 0, last = -1;
    bool any = false;
    for (const auto& [day, per_comm] : corpus.date_index()) {
        if (!per_comm.contains(std::string(community))) continue;
        if (!any) first = day;
        last = day;
        any = true;
    }

    TermSeries s;
    s.term = std::string(label);
    s.community = std::string(community);
    const auto n = static_cast<std::size_t>(last - first + 1);
    s.days.resize(n);
    s.counts.assign(n, 0);
    s.totals.assign(n, 0);
    s.fraction.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) s.days[i] = first + static_cast<std::int64_t>(i);

    for (const auto& [day, per_comm] : corpus.date_index()) {
        auto it = per_comm.find(std::string(community));
        if (it != per_comm.end()) s.totals[static_cast<std::size_t>(day - first)] = it->second;
    }
    for (std::size_t idx : matching) {
        const auto& p = corpus.post(idx);
        if (p.community != community) continue;
        ++s.counts[static_cast<std::size_t>(utc_day(p.timestamp) - first)];
    }
    for (std::size_t i = 0; i < n; ++i)
        s.fraction[i] = s.totals[i] ? static_cast<double>(s.counts[i]) / static_cast<double>(s.totals[i]) : 0.0;
    return s;
}

TermSeries build_term_series(const corpus::Corpus& corpus, std::string_view term, std::string_view community) {
    return build_series_from_posts(corpus, corpus.posts_with(term), term, community);
}

std::vector<double> rolling_mean(std::span<const double> values, int window) {
    if (window < 1 || window % 2 == 0)
        throw InvalidArgument(fmt::format("rolling window must be a positive odd day count, got {}", window));
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const auto n = static_cast<std::ptrdiff_t>(values.size());
    std::vector<double> out(values.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, i - half);
        const auto hi = std::min<std::ptrdiff_t>(n - 1, i + half);
        double sum = 0.0;
        for (auto k = lo; k <= hi; ++k) sum += values[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

TermSeries rolling_mean(const TermSeries& series, int window) {
    TermSeries out = series;
    out.fraction = rolling_mean(series.fraction, window);
    return out;
}

double increase_ratio(const TermSeries& series, std::size_t edge_window) {
    if (edge_window == 0) throw InvalidArgument("edge window must be >= 1");
    if (series.size() < 2 * edge_window)
        throw InvalidArgument(fmt::format("series of {} days is too short for edge window {}", series.size(),
                                          edge_window));
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < edge_window; ++i) {
        head += series.fraction[i];
        tail += series.fraction[series.size() - edge_window + i];
    }
    head /= static_cast<double>(edge_window);
    tail /= static_cast<double>(edge_window);
    if (head == 0.0) return tail == 0.0 ? 1.0 : kInfiniteRatio;
    return tail / head;
}

// ---------------------------------------------------------------------------
// Cost

NormalMeanVarCost::NormalMeanVarCost(std::span<const double> values, double variance_floor)
    : floor_(variance_floor), s1_(values.size() + 1, 0.0), s2_(values.size() + 1, 0.0) {
    // Centering keeps the prefix-sum variance well conditioned.
    if (!values.empty()) {
        double sum = 0.0;
        for (double v : values) sum += v;
        offset_ = sum / static_cast<double>(values.size());
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = values[i] - offset_;
        s1_[i + 1] = s1_[i] + x;
        s2_[i + 1] = s2_[i] + x * x;
    }
}

double NormalMeanVarCost::mean(std::size_t begin, std::size_t end) const {
    return (s1_[end] - s1_[begin]) / static_cast<double>(end - begin) + offset_;
}

double NormalMeanVarCost::variance(std::size_t begin, std::size_t end) const {
    const double n = static_cast<double>(end - begin);
    const double a = s1_[end] - s1_[begin];
    const double b = s2_[end] - s2_[begin];
    return std::max(0.0, (b - a * a / n) / n);
}

double NormalMeanVarCost::operator()(std::size_t begin, std::size_t end) const {
    static const double log_two_pi = std::log(2.0 * std::numbers::pi);
    const double n = static_cast<double>(end - begin);
    return n * (log_two_pi + std::log(std::max(variance(begin, end), floor_)) + 1.0);
}

// ---------------------------------------------------------------------------
// PELT

namespace {

void check_input(std::span<const double> values, double penalty) {
    if (values.size() < 2 * kMinSegmentLength)
        throw InvalidArgument(fmt::format("changepoint search needs at least {} values, got {}",
                                          2 * kMinSegmentLength, values.size()));
    if (!(penalty > 0.0) || !std::isfinite(penalty))
        throw InvalidArgument("penalty must be a positive finite number");
    for (double v : values)
        if (std::isnan(v)) throw InvalidArgument("NaN in changepoint input");
}

std::vector<Segment> segments_for(const NormalMeanVarCost& cost, std::span<const std::size_t> cps) {
    std::vector<Segment> segs;
    std::size_t begin = 0;
    auto push = [&](std::size_t end) {
        segs.push_back({begin, end, cost.mean(begin, end), cost.variance(begin, end)});
        begin = end;
    };
    for (std::size_t cp : cps) push(cp);
    push(cost.size());
    return segs;
}

Segmentation pelt_with_cost(const NormalMeanVarCost& cost, double penalty) {
    const std::size_t n = cost.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    constexpr std::size_t L = kMinSegmentLength;

    std::vector<double> best(n + 1, inf);
    std::vector<std::size_t> last(n + 1, 0);
    best[0] = -penalty;

    std::vector<std::size_t> candidates{0};
    // Candidates found dominated at time t stay usable for t + L - 1 more steps,
    // since t itself cannot end a segment before t + L.
    std::vector<std::vector<std::size_t>> retire(n + 1);

    for (std::size_t t = L; t <= n; ++t) {
        if (t >= 2 * L) {
            auto& dead = retire[t - L];
            if (!dead.empty()) {
                std::erase_if(candidates, [&](std::size_t c) {
                    return std::binary_search(dead.begin(), dead.end(), c);
                });
                dead.clear();
                dead.shrink_to_fit();
            }
        }

        double f = inf;
        std::size_t arg = 0;
        for (std::size_t tau : candidates) {
            if (t - tau < L) continue;
            const double v = best[tau] + cost(tau, t) + penalty;
            if (v < f) {
                f = v;
                arg = tau;
            }
        }
        best[t] = f;
        last[t] = arg;

        const double slack = 1e-10 * (1.0 + std::abs(f));
        auto& dead = retire[t];
        for (std::size_t tau : candidates) {
            if (t - tau < L) continue;
            if (best[tau] + cost(tau, t) > f + slack) dead.push_back(tau);
        }
        if (std::isfinite(f)) candidates.push_back(t);
    }

    Segmentation seg;
    seg.penalty = penalty;
    seg.total_cost = best[n];
    for (std::size_t t = n; t > 0; t = last[t])
        if (last[t] > 0) seg.changepoints.push_back(last[t]);
    std::reverse(seg.changepoints.begin(), seg.changepoints.end());
    seg.segments = segments_for(cost, seg.changepoints);
    return seg;
}

}  // namespace

Segmentation pelt_segment(std::span<const double> values, double penalty) {
    check_input(values, penalty);
    return pelt_with_cost(NormalMeanVarCost(values), penalty);
}

std::vector<double> default_penalty_schedule(std::size_t n) {
    constexpr int steps = 25;
    const double logn = std::log(static_cast<double>(std::max<std::size_t>(n, 2)));
    const double hi = 50.0 * logn, lo = 0.5 * logn;
    std::vector<double> out(steps);
    for (int i = 0; i < steps; ++i)
        out[static_cast<std::size_t>(i)] = hi * std::pow(lo / hi, static_cast<double>(i) / (steps - 1));
    return out;
}

ChangepointSet rank_changepoints(std::span<const double> values, std::span<const double> penalties) {
    if (penalties.size() < 2) throw InvalidArgument("penalty schedule needs at least 2 entries");
    for (std::size_t i = 1; i < penalties.size(); ++i)
        if (!(penalties[i] < penalties[i - 1]))
            throw InvalidArgument("penalty schedule must be strictly decreasing");
    check_input(values, penalties.back());

    const NormalMeanVarCost cost(values);
    std::vector<RankedChangepoint> found;  // in order of first appearance
    std::vector<bool> seen(values.size(), false);
    for (double beta : penalties) {
        check_input(values, beta);
        const Segmentation seg = pelt_with_cost(cost, beta);
        for (std::size_t k = 0; k < seg.changepoints.size(); ++k) {
            const std::size_t cp = seg.changepoints[k];
            if (seen[cp]) continue;
            seen[cp] = true;
            found.push_back({cp, 0, beta, seg.segments[k].mean, seg.segments[k + 1].mean});
        }
    }

    std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        if (a.first_penalty != b.first_penalty) return a.first_penalty > b.first_penalty;
        return a.index < b.index;
    });
    ChangepointSet out;
    for (std::size_t r = 0; r < found.size(); ++r) {
        found[r].rank = r + 1;
        out.indices.push_back(found[r].index);
    }
    std::sort(out.indices.begin(), out.indices.end());
    out.ranked = std::move(found);
    out.segments = segments_for(cost, out.indices);
    return out;
}

// ---------------------------------------------------------------------------
// Exports

void write_series_csv(std::ostream& out, const TermSeries& raw, const TermSeries& smoothed) {
    out << "day,count,total,fraction,smoothed_fraction\n";
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out << fmt::format("{},{},{},{:.10g},{:.10g}\n", format_day(raw.days[i]), raw.counts[i], raw.totals[i],
                           raw.fraction[i], smoothed.fraction[i]);
    }
}

nlohmann::json changepoints_to_json(const ChangepointSet& set, const TermSeries& series) {
    auto arr = nlohmann::json::array();
    for (const auto& cp : set.ranked) {
        arr.push_back({{"date", format_day(series.days.at(cp.index))},
                       {"rank", cp.rank},
                       {"first_penalty", cp.first_penalty},
                       {"pre_mean", cp.pre_mean},
                       {"post_mean", cp.post_mean}});
    }
    return arr;
}

}  // namespace memetrace::trends

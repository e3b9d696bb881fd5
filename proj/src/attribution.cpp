#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "memetrace/common.hpp"
#include "memetrace/csv.hpp"
#include "memetrace/influence.hpp"

namespace memetrace::influence {

AttributionCounts attribute(const EventLog& events, std::span<const std::int32_t> parent, Origin origin) {
    const std::size_t K = events.K(), N = events.events.size();
    if (parent.size() != N) throw InvalidArgument("parent assignment does not match the event log");
    AttributionCounts out{Matrix(K), std::vector<double>(K, 0.0)};
    std::vector<std::size_t> root(N);
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t d = events.events[i].k;
        if (parent[i] == kBackground) {
            root[i] = i;
            out.background[d] += 1;
            continue;
        }
        const auto p = static_cast<std::size_t>(parent[i]);
        if (p >= i) throw InvalidArgument("parent must precede its child");
        root[i] = root[p];
        const std::size_t s = events.events[origin == Origin::chain ? root[i] : p].k;
        out.edges(s, d) += 1;
    }
    return out;
}

InfluenceMatrix attribution_matrix(const HawkesFit& fit, const EventLog& events, Normalization mode, Origin origin) {
    if (fit.event_count != events.events.size() || fit.process_names != events.process_names)
        throw InvalidArgument("fit was not produced from this event log");
    if (fit.samples.empty()) throw InvalidArgument("fit has no posterior samples");
    const std::size_t K = events.K();
    Matrix mean(K);
    std::vector<double> bg(K, 0.0);
    const double S = static_cast<double>(fit.samples.size());
    for (const auto& s : fit.samples) {
        const auto c = attribute(events, s.parent, origin);
        // integer counts: the sums stay exact
        for (std::size_t x = 0; x < K * K; ++x) mean.data[x] += c.edges.data[x];
        for (std::size_t k = 0; k < K; ++k) bg[k] += c.background[k];
    }
    for (auto& x : mean.data) x /= S;
    for (auto& x : bg) x /= S;

    InfluenceMatrix m;
    m.mode = mode;
    m.origin = origin;
    m.process_names = events.process_names;
    m.event_counts = events.counts();
    m.values = Matrix(K);
    m.background.assign(K, 0.0);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double scale = mode == Normalization::dest_percent ? 100.0 : 1.0;
    for (std::size_t d = 0; d < K; ++d) {
        const auto nd = static_cast<double>(m.event_counts[d]);
        m.background[d] = nd > 0 ? scale * bg[d] / nd : nan;
        for (std::size_t s = 0; s < K; ++s) {
            const auto norm = static_cast<double>(m.event_counts[mode == Normalization::dest_percent ? d : s]);
            m.values(s, d) = norm > 0 ? scale * mean(s, d) / norm : nan;
        }
    }
    return m;
}

namespace {

std::string cell(double v) { return std::isnan(v) ? std::string() : fmt::format("{:.10g}", v); }

}  // namespace

void write_influence_csv(std::ostream& out, const InfluenceMatrix& m) {
    std::vector<std::string> header = {"source"};
    header.insert(header.end(), m.process_names.begin(), m.process_names.end());
    csv::write_record(out, header);
    for (std::size_t s = 0; s < m.process_names.size(); ++s) {
        std::vector<std::string> row = {m.process_names[s]};
        for (std::size_t d = 0; d < m.process_names.size(); ++d) row.push_back(cell(m.values(s, d)));
        csv::write_record(out, row);
    }
    std::vector<std::string> row = {"background"};
    for (double b : m.background) row.push_back(cell(b));
    csv::write_record(out, row);
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

double ks_statistic(std::span<const double> a_in, std::span<const double> b_in) {
    if (a_in.empty() || b_in.empty()) throw InvalidArgument("KS statistic needs nonempty samples");
    std::vector<double> a(a_in.begin(), a_in.end()), b(b_in.begin(), b_in.end());
    for (double x : a)
        if (std::isnan(x)) throw InvalidArgument("KS sample contains NaN");
    for (double x : b)
        if (std::isnan(x)) throw InvalidArgument("KS sample contains NaN");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    return d;
}

double kolmogorov_survival(double lambda) {
    if (!(lambda > 0.0)) return 1.0;
    if (lambda < 1.18) {
        // Jacobi-transformed series converges fast for small lambda
        const double y = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
        double cdf = 0.0;
        for (int j = 1; j <= 50; ++j) {
            const double term = std::exp(-static_cast<double>((2 * j - 1) * (2 * j - 1)) * y);
            cdf += term;
            if (term < 1e-17 * cdf) break;
        }
        cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double q = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        q += (j % 2 ? 2.0 : -2.0) * term;
        if (term < 1e-17) break;
    }
    return std::clamp(q, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 5 || b.size() < 5) throw InvalidArgument("KS test needs at least 5 points per sample");
    KsResult r;
    r.statistic = ks_statistic(a, b);
    const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
    r.p_value = kolmogorov_survival(std::sqrt(n * m / (n + m)) * r.statistic);
    return r;
}

KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf) {
    if (sample.size() < 5) throw InvalidArgument("KS test needs at least 5 points");
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

InfluenceComparison compare_influence(std::span<const InfluenceMatrix> group_a, std::span<const InfluenceMatrix> group_b,
                                      std::size_t s, std::size_t d) {
    auto collect = [&](std::span<const InfluenceMatrix> g) {
        std::vector<double> v;
        for (const auto& m : g) {
            if (s >= m.values.n || d >= m.values.n) throw InvalidArgument("influence pair out of range");
            if (m.mode != g.front().mode || m.mode != group_a.front().mode)
                throw InvalidArgument("influence matrices use different normalizations");
            if (!std::isnan(m.values(s, d))) v.push_back(m.values(s, d));
        }
        return v;
    };
    if (group_a.empty() || group_b.empty()) throw InvalidArgument("compare_influence needs fits in both groups");
    const auto a = collect(group_a), b = collect(group_b);
    InfluenceComparison c;
    c.source = s;
    c.dest = d;
    c.ks = ks_test(a, b);
    c.significant = c.ks.p_value < 0.01;
    return c;
}

void write_ks_table(std::ostream& out, std::span<const InfluenceComparison> rows,
                    const std::vector<std::string>& process_names) {
    csv::write_record(out, {"source", "dest", "D", "p", "significant"});
    for (const auto& r : rows)
        csv::write_record(out, {process_names.at(r.source), process_names.at(r.dest), fmt::format("{:.10g}", r.ks.statistic),
                                fmt::format("{:.10g}", r.ks.p_value), r.significant ? "true" : "false"});
}

}  // namespace memetrace::influence

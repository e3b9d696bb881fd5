#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "memetrace/common.hpp"
#include "memetrace/influence.hpp"

namespace memetrace::influence {

nlohmann::json GibbsConfig::to_json() const {
    return {{"draws", draws},
            {"burn_in", burn_in},
            {"seed", seed},
            {"background_only", background_only},
            {"kernel", {{"family", "truncated_exponential"}, {"tau", kernel.tau}, {"max_lag", kernel.max_lag}}},
            {"prior",
             {{"lambda_shape", prior.lambda_shape},
              {"lambda_rate", prior.lambda_rate},
              {"w_shape", prior.w_shape},
              {"w_rate", prior.w_rate}}}};
}

GibbsConfig GibbsConfig::from_json(const nlohmann::json& j) {
    GibbsConfig c;
    c.draws = j.value("draws", c.draws);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.seed = j.value("seed", c.seed);
    c.background_only = j.value("background_only", c.background_only);
    if (j.contains("kernel")) {
        c.kernel.tau = j["kernel"].value("tau", c.kernel.tau);
        c.kernel.max_lag = j["kernel"].value("max_lag", c.kernel.max_lag);
    }
    if (j.contains("prior")) {
        const auto& p = j["prior"];
        c.prior.lambda_shape = p.value("lambda_shape", c.prior.lambda_shape);
        c.prior.lambda_rate = p.value("lambda_rate", c.prior.lambda_rate);
        c.prior.w_shape = p.value("w_shape", c.prior.w_shape);
        c.prior.w_rate = p.value("w_rate", c.prior.w_rate);
    }
    return c;
}

namespace {

// Candidate parents of every event in compressed rows.
struct Candidates {
    std::vector<std::size_t> offset;  // size N + 1
    std::vector<std::uint32_t> parent;
    std::vector<double> density;
};

Candidates candidate_parents(const EventLog& log, const ExponentialKernel& ker) {
    Candidates c;
    c.offset.reserve(log.events.size() + 1);
    c.offset.push_back(0);
    std::size_t first = 0;
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const double t = log.events[i].t;
        while (first < i && t - log.events[first].t > ker.max_lag) ++first;
        for (std::size_t j = first; j < i; ++j) {
            const double g = ker.density(t - log.events[j].t);
            if (g > 0.0) {
                c.parent.push_back(static_cast<std::uint32_t>(j));
                c.density.push_back(g);
            }
        }
        c.offset.push_back(c.parent.size());
    }
    return c;
}

double gamma_draw(std::mt19937_64& rng, double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

HawkesFit fit_gibbs(const EventLog& events, const GibbsConfig& config) {
    events.validate();
    config.kernel.validate();
    if (events.events.empty()) throw InvalidArgument("cannot fit an empty event log");
    if (config.draws <= config.burn_in) throw InvalidArgument("draws must exceed burn_in");
    const auto& pr = config.prior;
    if (!(pr.lambda_shape > 0 && pr.lambda_rate > 0 && pr.w_shape > 0 && pr.w_rate > 0))
        throw InvalidArgument("prior hyperparameters must be positive");

    const std::size_t K = events.K();
    const std::size_t N = events.events.size();
    const double T = events.t_end - events.t_start;
    const auto cand = candidate_parents(events, config.kernel);
    const auto counts = events.counts();

    // kernel mass each source event can place inside the horizon
    std::vector<double> exposure(K, 0.0);
    for (const auto& e : events.events) exposure[e.k] += config.kernel.mass(events.t_end - e.t);

    // one engine per parameter, keyed by process names, so relabeling processes relabels draws
    std::mt19937_64 parent_rng(derive_seed(config.seed, "parents"));
    std::vector<std::mt19937_64> lambda_rng, w_rng;
    for (std::size_t k = 0; k < K; ++k) lambda_rng.emplace_back(derive_seed(config.seed, "lambda0/" + events.process_names[k]));
    for (std::size_t s = 0; s < K; ++s)
        for (std::size_t d = 0; d < K; ++d)
            w_rng.emplace_back(derive_seed(config.seed, "W/" + events.process_names[s] + "/" + events.process_names[d]));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> lambda0(K);
    for (std::size_t k = 0; k < K; ++k) lambda0[k] = (static_cast<double>(counts[k]) + pr.lambda_shape) / (T + pr.lambda_rate);
    Matrix W(K, config.background_only ? 0.0 : 0.1);

    HawkesFit fit;
    fit.config = config;
    fit.process_names = events.process_names;
    fit.event_count = N;
    fit.samples.reserve(config.draws - config.burn_in);

    std::vector<std::int32_t> parent(N);
    std::vector<double> n_bg(K);
    Matrix n_sd(K);
    for (std::size_t it = 0; it < config.draws; ++it) {
        std::fill(n_bg.begin(), n_bg.end(), 0.0);
        std::fill(n_sd.data.begin(), n_sd.data.end(), 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            const std::size_t k = events.events[i].k;
            double total = lambda0[k];
            if (!config.background_only)
                for (std::size_t c = cand.offset[i]; c < cand.offset[i + 1]; ++c)
                    total += W(events.events[cand.parent[c]].k, k) * cand.density[c];
            double u = unit(parent_rng) * total;
            std::int32_t pick = kBackground;
            if (!config.background_only && u >= lambda0[k]) {
                u -= lambda0[k];
                for (std::size_t c = cand.offset[i]; c < cand.offset[i + 1]; ++c) {
                    const double w = W(events.events[cand.parent[c]].k, k) * cand.density[c];
                    pick = static_cast<std::int32_t>(cand.parent[c]);
                    if (u < w) break;
                    u -= w;
                }
            }
            parent[i] = pick;
            if (pick == kBackground) n_bg[k] += 1;
            else n_sd(events.events[static_cast<std::size_t>(pick)].k, k) += 1;
        }
        for (std::size_t k = 0; k < K; ++k) lambda0[k] = gamma_draw(lambda_rng[k], pr.lambda_shape + n_bg[k], pr.lambda_rate + T);
        if (!config.background_only)
            for (std::size_t s = 0; s < K; ++s)
                for (std::size_t d = 0; d < K; ++d)
                    W(s, d) = gamma_draw(w_rng[s * K + d], pr.w_shape + n_sd(s, d), pr.w_rate + exposure[s]);
        if (it >= config.burn_in) fit.samples.push_back({lambda0, W, parent});
    }

    const std::size_t S = fit.samples.size();
    fit.lambda0_mean.assign(K, 0.0);
    fit.W_mean = Matrix(K);
    for (const auto& s : fit.samples) {
        for (std::size_t k = 0; k < K; ++k) fit.lambda0_mean[k] += s.lambda0[k] / static_cast<double>(S);
        for (std::size_t x = 0; x < K * K; ++x) fit.W_mean.data[x] += s.W.data[x] / static_cast<double>(S);
    }
    fit.spectral_radius = spectral_radius(fit.W_mean);

    // split-chain check: compare the means of the two halves
    const std::size_t half = S / 2;
    double gap = 0.0;
    if (half > 0) {
        auto half_gap = [&](auto get, double mean) {
            double a = 0, b = 0;
            for (std::size_t i = 0; i < half; ++i) a += get(fit.samples[i]);
            for (std::size_t i = S - half; i < S; ++i) b += get(fit.samples[i]);
            return std::abs(a - b) / static_cast<double>(half) / std::max(std::abs(mean), 0.05);
        };
        for (std::size_t k = 0; k < K; ++k)
            gap = std::max(gap, half_gap([k](const PosteriorSample& s) { return s.lambda0[k]; }, fit.lambda0_mean[k]));
        for (std::size_t x = 0; x < K * K; ++x)
            gap = std::max(gap, half_gap([x](const PosteriorSample& s) { return s.W.data[x]; }, fit.W_mean.data[x]));
    }
    fit.split_chain_gap = gap;
    fit.converged = gap <= 0.1;
    return fit;
}

nlohmann::json fit_to_json(const HawkesFit& fit) {
    const std::size_t K = fit.process_names.size();
    auto summarize = [&](auto get) {
        std::vector<double> v;
        for (const auto& s : fit.samples) v.push_back(get(s));
        double mean = 0;
        for (double x : v) mean += x / static_cast<double>(v.size());
        return std::array<double, 3>{mean, quantile(v, 0.025), quantile(v, 0.975)};
    };
    nlohmann::json lam = {{"mean", nlohmann::json::array()}, {"ci_low", nlohmann::json::array()}, {"ci_high", nlohmann::json::array()}};
    for (std::size_t k = 0; k < K; ++k) {
        const auto q = summarize([k](const PosteriorSample& s) { return s.lambda0[k]; });
        lam["mean"].push_back(q[0]);
        lam["ci_low"].push_back(q[1]);
        lam["ci_high"].push_back(q[2]);
    }
    nlohmann::json w = {{"mean", nlohmann::json::array()}, {"ci_low", nlohmann::json::array()}, {"ci_high", nlohmann::json::array()}};
    for (std::size_t s = 0; s < K; ++s) {
        nlohmann::json m = nlohmann::json::array(), lo = m, hi = m;
        for (std::size_t d = 0; d < K; ++d) {
            const auto q = summarize([&](const PosteriorSample& p) { return p.W(s, d); });
            m.push_back(q[0]);
            lo.push_back(q[1]);
            hi.push_back(q[2]);
        }
        w["mean"].push_back(m);
        w["ci_low"].push_back(lo);
        w["ci_high"].push_back(hi);
    }
    return {{"process_names", fit.process_names},
            {"event_count", fit.event_count},
            {"samples", fit.samples.size()},
            {"config", fit.config.to_json()},
            {"seed", fit.config.seed},
            {"lambda0", lam},
            {"W", w},
            {"spectral_radius", fit.spectral_radius},
            {"stable", fit.spectral_radius < 1.0},
            {"split_chain_gap", fit.split_chain_gap},
            {"converged", fit.converged}};
}

}  // namespace memetrace::influence

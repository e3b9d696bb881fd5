#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "memetrace/common.hpp"
#include "memetrace/influence.hpp"

namespace memetrace::influence {

std::vector<std::size_t> EventLog::counts() const {
    std::vector<std::size_t> c(K(), 0);
    for (const auto& e : events) ++c.at(e.k);
    return c;
}

void EventLog::validate() const {
    if (process_names.empty()) throw InvalidArgument("event log needs at least one process");
    if (std::set<std::string>(process_names.begin(), process_names.end()).size() != process_names.size())
        throw InvalidArgument("process names must be unique");
    if (!(t_end > t_start)) throw InvalidArgument("event log horizon is empty");
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.k >= K()) throw InvalidArgument(fmt::format("event {} has process index {} >= {}", i, e.k, K()));
        if (!(e.t > t_start && e.t < t_end)) throw InvalidArgument(fmt::format("event {} at t={} lies outside the horizon", i, e.t));
        if (i && e.t < events[i - 1].t) throw InvalidArgument(fmt::format("event {} is out of time order", i));
    }
}

void ExponentialKernel::validate() const {
    if (!(tau > 0.0) || !(max_lag > 0.0) || !std::isfinite(tau) || !std::isfinite(max_lag))
        throw InvalidArgument("kernel tau and max_lag must be positive");
}

double ExponentialKernel::density(double lag) const {
    if (!(lag > 0.0) || lag > max_lag) return 0.0;
    return std::exp(-lag / tau) / (tau * -std::expm1(-max_lag / tau));
}

double ExponentialKernel::mass(double lag) const {
    if (!(lag > 0.0)) return 0.0;
    return std::expm1(-std::min(lag, max_lag) / tau) / std::expm1(-max_lag / tau);
}

void HawkesModel::validate() const {
    kernel.validate();
    if (lambda0.empty()) throw InvalidArgument("model needs at least one process");
    if (W.n != lambda0.size() || W.data.size() != W.n * W.n) throw InvalidArgument("W must be K x K");
    for (double l : lambda0)
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("background rates must be finite and >= 0");
    for (double w : W.data)
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("weights must be finite and >= 0");
}

double spectral_radius(const Matrix& W) {
    if (W.n == 0) return 0.0;
    Eigen::MatrixXd m(W.n, W.n);
    for (std::size_t s = 0; s < W.n; ++s)
        for (std::size_t d = 0; d < W.n; ++d) m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(d)) = W(s, d);
    const Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double rate(const HawkesModel& model, std::size_t k, double t, const EventLog& history) {
    if (k >= model.K()) throw InvalidArgument("process index out of range");
    if (history.t_end > history.t_start && (t < history.t_start || t > history.t_end))
        throw InvalidArgument("rate queried outside the horizon");
    double r = model.lambda0[k];
    for (const auto& e : history.events) {
        if (e.t >= t) break;
        r += model.W(e.k, k) * model.kernel.density(t - e.t);
    }
    return r;
}

EventLog simulate(const HawkesModel& model, double t_start, double t_end, std::uint64_t seed,
                  std::vector<std::string> process_names) {
    model.validate();
    if (!(t_end > t_start)) throw InvalidArgument("simulation horizon is empty");
    const std::size_t K = model.K();
    const double rho = spectral_radius(model.W);
    if (rho >= 1.0) throw InvalidArgument(fmt::format("W is not subcritical (spectral radius {:.4g})", rho));
    if (process_names.empty())
        for (std::size_t k = 0; k < K; ++k) process_names.push_back(fmt::format("p{}", k));
    if (process_names.size() != K) throw InvalidArgument("process name count differs from K");

    EventLog log;
    log.process_names = std::move(process_names);
    log.t_start = t_start;
    log.t_end = t_end;

    const auto& ker = model.kernel;
    const double peak = 1.0 / (ker.tau * -std::expm1(-ker.max_lag / ker.tau));
    std::vector<double> out_weight(K, 0.0);
    for (std::size_t s = 0; s < K; ++s)
        for (std::size_t d = 0; d < K; ++d) out_weight[s] += model.W(s, d);
    double base = 0.0;
    for (double l : model.lambda0) base += l;

    std::mt19937_64 rng(derive_seed(seed, "simulate"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::deque<Event> window;
    std::vector<double> lam(K);
    double t = t_start;
    for (;;) {
        while (!window.empty() && t - window.front().t > ker.max_lag) window.pop_front();
        // the kernel is nonincreasing on [0, max_lag], so the intensity just after t bounds it until the next event
        double bound = base;
        for (const auto& e : window) bound += out_weight[e.k] * peak * std::exp(-(t - e.t) / ker.tau);
        if (!(bound > 0.0)) break;
        t += std::exponential_distribution<double>(bound)(rng);
        if (t >= t_end) break;
        double total = 0.0;
        for (std::size_t d = 0; d < K; ++d) {
            double r = model.lambda0[d];
            for (const auto& e : window) r += model.W(e.k, d) * ker.density(t - e.t);
            lam[d] = r;
            total += r;
        }
        const double u = unit(rng) * bound;
        if (u >= total || t <= t_start) continue;
        double acc = 0.0;
        std::size_t pick = K - 1;
        for (std::size_t d = 0; d < K; ++d) {
            acc += lam[d];
            if (u < acc) {
                pick = d;
                break;
            }
        }
        log.events.push_back({t, pick});
        window.push_back({t, pick});
    }
    return log;
}

}  // namespace memetrace::influence

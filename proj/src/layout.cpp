#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "memetrace/common.hpp"
#include "memetrace/graph.hpp"

namespace memetrace::semantics {

namespace {

// Quadtree over node positions for the Barnes-Hut repulsion approximation.
class QuadTree {
public:
    QuadTree(const std::vector<Point>& pos, const std::vector<double>& mass) : pos_(pos), mass_(mass) {
        double x0 = pos[0].x, x1 = x0, y0 = pos[0].y, y1 = y0;
        for (const auto& p : pos) {
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y);
            y1 = std::max(y1, p.y);
        }
        const double size = std::max({x1 - x0, y1 - y0, 1e-9});
        nodes_.push_back(Cell{x0, y0, size});
        for (std::size_t i = 0; i < pos.size(); ++i) insert(0, i, 0);
    }

    // Adds the repulsion felt by node i to (fx, fy).
    void repulse(std::size_t i, double kr, double theta, double& fx, double& fy) const { visit(0, i, kr, theta, fx, fy); }

private:
    struct Cell {
        double x0, y0, size;
        double mass = 0.0, cx = 0.0, cy = 0.0;
        int child = -1;  // index of first of 4 children
        long body = -1;  // single node stored in a leaf
    };

    static constexpr int kMaxDepth = 40;

    void insert(std::size_t c, std::size_t i, int depth) {
        const Point p = pos_[i];
        const double m = mass_[i];
        {
            Cell& cell = nodes_[c];
            cell.cx = (cell.cx * cell.mass + p.x * m) / (cell.mass + m);
            cell.cy = (cell.cy * cell.mass + p.y * m) / (cell.mass + m);
            cell.mass += m;
        }
        if (nodes_[c].child < 0) {
            if (nodes_[c].body < 0 && nodes_[c].mass == m) {
                nodes_[c].body = static_cast<long>(i);
                return;
            }
            if (depth >= kMaxDepth) return;  // coincident points: keep aggregated
            split(c);
            const long old = nodes_[c].body;
            nodes_[c].body = -1;
            if (old >= 0) insert_child(c, static_cast<std::size_t>(old), depth);
        }
        insert_child(c, i, depth);
    }

    void insert_child(std::size_t c, std::size_t i, int depth) {
        const Cell& cell = nodes_[c];
        const double half = cell.size / 2;
        const int q = (pos_[i].x >= cell.x0 + half ? 1 : 0) + (pos_[i].y >= cell.y0 + half ? 2 : 0);
        insert(static_cast<std::size_t>(cell.child + q), i, depth + 1);
    }

    void split(std::size_t c) {
        const Cell cell = nodes_[c];
        const double half = cell.size / 2;
        nodes_[c].child = static_cast<int>(nodes_.size());
        nodes_.push_back(Cell{cell.x0, cell.y0, half});
        nodes_.push_back(Cell{cell.x0 + half, cell.y0, half});
        nodes_.push_back(Cell{cell.x0, cell.y0 + half, half});
        nodes_.push_back(Cell{cell.x0 + half, cell.y0 + half, half});
    }

    void visit(std::size_t c, std::size_t i, double kr, double theta, double& fx, double& fy) const {
        const Cell& cell = nodes_[c];
        if (cell.mass == 0.0 || cell.body == static_cast<long>(i)) return;
        const double dx = pos_[i].x - cell.cx, dy = pos_[i].y - cell.cy;
        const double d2 = dx * dx + dy * dy;
        const bool leaf = cell.child < 0;
        if (leaf || cell.size * cell.size < theta * theta * d2) {
            if (d2 <= 0.0) return;
            const double f = kr * mass_[i] * cell.mass / d2;
            fx += dx * f;
            fy += dy * f;
            return;
        }
        for (int q = 0; q < 4; ++q) visit(static_cast<std::size_t>(cell.child + q), i, kr, theta, fx, fy);
    }

    const std::vector<Point>& pos_;
    const std::vector<double>& mass_;
    std::vector<Cell> nodes_;
};

}  // namespace

std::vector<Point> layout(const SimilarityGraph& graph, const LayoutConfig& config) {
    const std::size_t n = graph.size();
    if (n == 0) return {};
    if (n == 1) return {Point{0.0, 0.0}};

    std::mt19937_64 rng(derive_seed(config.seed, "layout"));
    const double spread = std::sqrt(static_cast<double>(n)) * 10.0;
    std::uniform_real_distribution<double> init(-spread, spread);
    std::vector<Point> pos(n);
    for (auto& p : pos) {
        p.x = init(rng);
        p.y = init(rng);
    }

    const auto deg = graph.degrees();
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i) mass[i] = static_cast<double>(deg[i]) + 1.0;

    const double kr = config.scaling;
    const double kg = config.gravity;
    const bool barnes_hut = n > config.barnes_hut_threshold;

    std::vector<Point> force(n), prev(n);
    double speed = 1.0, speed_efficiency = 1.0;

    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        prev.swap(force);
        std::fill(force.begin(), force.end(), Point{});

        if (barnes_hut) {
            QuadTree tree(pos, mass);
            for (std::size_t i = 0; i < n; ++i) tree.repulse(i, kr, config.barnes_hut_theta, force[i].x, force[i].y);
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    const double dx = pos[i].x - pos[j].x, dy = pos[i].y - pos[j].y;
                    const double d2 = dx * dx + dy * dy;
                    if (d2 <= 0.0) continue;
                    const double f = kr * mass[i] * mass[j] / d2;
                    force[i].x += dx * f;
                    force[i].y += dy * f;
                    force[j].x -= dx * f;
                    force[j].y -= dy * f;
                }
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            const double d = std::hypot(pos[i].x, pos[i].y);
            if (d <= 0.0) continue;
            const double f = kg * mass[i] / d;
            force[i].x -= pos[i].x * f;
            force[i].y -= pos[i].y * f;
        }

        for (const auto& e : graph.edges) {
            const double dx = pos[e.u].x - pos[e.v].x, dy = pos[e.u].y - pos[e.v].y;
            force[e.u].x -= dx * e.weight;
            force[e.u].y -= dy * e.weight;
            force[e.v].x += dx * e.weight;
            force[e.v].y += dy * e.weight;
        }

        if (iter == 0) prev = force;

        // adaptive global speed
        double swinging = 0.0, traction = 0.0;
        std::vector<double> swing(n);
        for (std::size_t i = 0; i < n; ++i) {
            swing[i] = mass[i] * std::hypot(force[i].x - prev[i].x, force[i].y - prev[i].y);
            swinging += swing[i];
            traction += mass[i] * 0.5 * std::hypot(force[i].x + prev[i].x, force[i].y + prev[i].y);
        }
        const double nd = static_cast<double>(n);
        const double estimated_jt = 0.05 * std::sqrt(nd);
        double jt = config.jitter_tolerance *
                    std::max(std::sqrt(estimated_jt), std::min(10.0, estimated_jt * traction / (nd * nd)));
        if (traction > 0.0 && swinging / traction > 2.0) {
            if (speed_efficiency > 0.05) speed_efficiency *= 0.5;
            jt = std::max(jt, config.jitter_tolerance);
        }
        if (swinging > 0.0) {
            const double target = jt * speed_efficiency * traction / swinging;
            if (swinging > jt * traction) {
                if (speed_efficiency > 0.05) speed_efficiency *= 0.7;
            } else if (speed < 1000) {
                speed_efficiency *= 1.3;
            }
            speed += std::min(target - speed, 0.5 * speed);
        }

        for (std::size_t i = 0; i < n; ++i) {
            const double factor = speed / (1.0 + std::sqrt(speed * swing[i]));
            pos[i].x += force[i].x * factor;
            pos[i].y += force[i].y * factor;
        }
    }
    return pos;
}

}  // namespace memetrace::semantics

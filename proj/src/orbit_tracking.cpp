#include "qtt/orbit_tracking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>

#include <Eigen/Dense>

namespace qtt {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<double> grid(double lo, double hi, double step) {
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

}  // namespace

std::vector<double> CoarseScanConfig::altitudes() const { return grid(a_min, a_max, a_step); }
std::vector<double> CoarseScanConfig::inclinations() const { return grid(theta_min, theta_max, theta_step); }

void validate(const CoarseScanConfig& cfg) {
    if (!(cfg.a_step > 0.0) || !(cfg.theta_step > 0.0)) throw std::invalid_argument("scan steps must be positive");
    if (!(cfg.a_max >= cfg.a_min) || !(cfg.a_min > 0.0)) throw std::invalid_argument("invalid scan altitude range");
    if (!(cfg.theta_max >= cfg.theta_min) || cfg.theta_min < 0.0 || cfg.theta_max > std::numbers::pi) {
        throw std::invalid_argument("invalid scan inclination range");
    }
    if (cfg.scan_acquisitions == 0) throw std::invalid_argument("scan_acquisitions must be >= 1");
    validate(cfg.correlation);
}

bool CoarseScanResult::island_contiguous() const {
    const std::size_t na = altitudes.size();
    const std::size_t nt = inclinations.size();
    std::vector<std::uint8_t> seen(found.size(), 0);
    std::size_t components = 0;
    for (std::size_t start = 0; start < found.size(); ++start) {
        if (!found[start] || seen[start]) continue;
        ++components;
        std::vector<std::size_t> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t c = stack.back();
            stack.pop_back();
            const auto ti = static_cast<std::int64_t>(c / na);
            const auto ai = static_cast<std::int64_t>(c % na);
            for (std::int64_t dt = -1; dt <= 1; ++dt) {
                for (std::int64_t da = -1; da <= 1; ++da) {
                    const std::int64_t t2 = ti + dt;
                    const std::int64_t a2 = ai + da;
                    if (t2 < 0 || a2 < 0 || t2 >= static_cast<std::int64_t>(nt) || a2 >= static_cast<std::int64_t>(na)) {
                        continue;
                    }
                    const auto n = static_cast<std::size_t>(t2) * na + static_cast<std::size_t>(a2);
                    if (found[n] && !seen[n]) {
                        seen[n] = 1;
                        stack.push_back(n);
                    }
                }
            }
        }
    }
    return components == 1;
}

namespace {

// Delay of one cell as a quadratic per acquisition, in picoseconds of send time.
class PiecewiseQuadratic {
public:
    PiecewiseQuadratic(const OrbitParams& orbit, LinkDirection direction, Picos epoch, Picos begin, Picos end,
                       Picos piece)
        : begin_(begin), piece_(piece) {
        for (Picos b = begin; b < end; b += piece) {
            const Picos e = std::min(b + piece, end);
            const double half = 0.5 * static_cast<double>((e - b).count);
            const double mid = static_cast<double>(b.count) + half;
            auto delay = [&](double t_ps) {
                return propagation_delay(orbit, (t_ps - static_cast<double>(epoch.count)) * 1e-12, direction) * 1e12;
            };
            const double d0 = delay(static_cast<double>(b.count));
            const double d1 = delay(mid);
            const double d2 = delay(static_cast<double>(e.count));
            pieces_.push_back({mid, half, d1, 0.5 * (d2 - d0), 0.5 * (d2 - 2.0 * d1 + d0)});
        }
        inv_piece_ = 1.0 / static_cast<double>(piece.count);
        last_ = static_cast<double>(pieces_.size() - 1);
    }

    double operator()(Picos t) const {
        const double pos = static_cast<double>((t - begin_).count) * inv_piece_;
        const double k = std::clamp(pos, 0.0, last_);
        const Piece& p = pieces_[static_cast<std::size_t>(k)];
        const double u = (static_cast<double>(t.count) - p.mid) / p.half;
        return p.c0 + u * (p.c1 + u * p.c2);
    }

private:
    struct Piece {
        double mid, half, c0, c1, c2;
    };
    Picos begin_;
    Picos piece_;
    double inv_piece_ = 0.0;
    double last_ = 0.0;
    std::vector<Piece> pieces_;
};

struct LineFit {
    double slope = 0.0;
    double value_at_ref = 0.0;
};

// Residual offset (receive - local) against local time over the coincidences.
LineFit fit_residual_line(const std::vector<Picos>& local, const std::vector<Picos>& shifted,
                          const std::vector<IndexPair>& pairs, Picos t_ref) {
    double sx = 0.0, sy = 0.0;
    for (const IndexPair& p : pairs) {
        sx += static_cast<double>((local[p.local] - t_ref).count);
        sy += static_cast<double>((shifted[p.receive] - local[p.local]).count);
    }
    const double n = static_cast<double>(pairs.size());
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const IndexPair& p : pairs) {
        const double dx = static_cast<double>((local[p.local] - t_ref).count) - mx;
        sxx += dx * dx;
        sxy += dx * (static_cast<double>((shifted[p.receive] - local[p.local]).count) - my);
    }
    LineFit f;
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    f.value_at_ref = my - f.slope * mx;
    return f;
}

}  // namespace

CoarseScanResult coarse_scan(const std::vector<Picos>& local_all, const std::vector<Picos>& receive_all,
                             LinkDirection direction, const CoarseScanConfig& cfg, const PassGeometry& pass,
                             Picos begin, Picos end) {
    validate(cfg);
    if (!(begin < end)) throw std::invalid_argument("coarse scan window is empty");
    CoarseScanResult res;
    res.altitudes = cfg.altitudes();
    res.inclinations = cfg.inclinations();
    const std::size_t cells = res.altitudes.size() * res.inclinations.size();
    res.peak_height.assign(cells, 0);
    res.found.assign(cells, 0);
    res.significance.assign(cells, 0.0);
    res.residual_tau.assign(cells, 0);
    res.residual_rate.assign(cells, 0.0);

    const auto local = slice_tags(local_all, begin, end);
    // Receive tags lag by one light time (a few ms for LEO).
    const auto receive = slice_tags(receive_all, begin, end + picos_from_seconds(0.02));
    const Picos t_ref{begin.count + (end - begin).count / 2};
    const Picos piece = std::min(end - begin, picos_from_seconds(1.0));
    const double center_a = 0.5 * (res.altitudes.front() + res.altitudes.back());
    if (local.empty() || receive.empty()) throw ScanFailedError(0.0);

    bool any = false;
    std::size_t best = 0;
    std::vector<Picos> shifted(receive.size());
    for (std::size_t ti = 0; ti < res.inclinations.size(); ++ti) {
        for (std::size_t ai = 0; ai < res.altitudes.size(); ++ai) {
            const PiecewiseQuadratic model(pass.with(res.altitudes[ai], res.inclinations[ti]), direction, pass.epoch,
                                           begin, end, piece);
            for (std::size_t i = 0; i < receive.size(); ++i) {
                const Picos r = receive[i];
                Picos s = r - round_picos(model(r));
                s = r - round_picos(model(s));
                if (i > 0 && s < shifted[i - 1]) s = shifted[i - 1];
                shifted[i] = s;
            }
            const CorrelationResult cr = correlate(local, shifted, cfg.correlation);
            const std::size_t c = res.cell(ti, ai);
            res.peak_height[c] = cr.peak_height;
            res.significance[c] = cr.significance;
            res.found[c] = cr.found ? 1 : 0;
            res.max_significance = std::max(res.max_significance, cr.significance);
            if (!cr.found) continue;
            const LineFit line = fit_residual_line(local, shifted, cr.coincidence_indices, t_ref);
            res.residual_tau[c] = round_picos(line.value_at_ref).count;
            res.residual_rate[c] = line.slope;
            const bool better = !any || cr.peak_height > res.peak_height[best] ||
                                (cr.peak_height == res.peak_height[best] &&
                                 std::fabs(res.altitudes[ai] - center_a) <
                                     std::fabs(res.altitudes[best % res.altitudes.size()] - center_a));
            if (better) {
                any = true;
                best = c;
                res.best_tau = cr.tau;
            }
        }
    }
    if (!any) throw ScanFailedError(res.max_significance);
    res.best_theta_index = best / res.altitudes.size();
    res.best_a_index = best % res.altitudes.size();
    return res;
}

TwoWayCell select_two_way_cell(const CoarseScanResult& alpha, const CoarseScanResult& beta, const PassGeometry& pass,
                               Picos t_ref) {
    if (alpha.altitudes != beta.altitudes || alpha.inclinations != beta.inclinations) {
        throw std::invalid_argument("two-way cell selection needs scans over the same grid");
    }
    const double t = seconds_from_picos(t_ref - pass.epoch);
    const double h = 0.5;
    auto round_trip = [&](double a, double theta, double at) {
        const OrbitParams o = pass.with(a, theta);
        return (propagation_delay(o, at, LinkDirection::Downlink) + propagation_delay(o, at, LinkDirection::Uplink)) *
               1e12;
    };
    auto range_and_rate = [&](double a, double theta) {
        const double lo = round_trip(a, theta, t - h);
        const double hi = round_trip(a, theta, t + h);
        return std::pair{round_trip(a, theta, t), (hi - lo) / (2.0 * h * 1e12)};
    };
    const double a_step = alpha.altitudes.size() > 1 ? alpha.altitudes[1] - alpha.altitudes[0] : 1.0;
    const double th_step = alpha.inclinations.size() > 1 ? alpha.inclinations[1] - alpha.inclinations[0] : 1e-3;

    TwoWayCell best;
    bool any = false;
    for (std::size_t ti = 0; ti < alpha.inclinations.size(); ++ti) {
        for (std::size_t ai = 0; ai < alpha.altitudes.size(); ++ai) {
            const std::size_t c = alpha.cell(ti, ai);
            if (!alpha.found[c] || !beta.found[c]) continue;
            const double a = alpha.altitudes[ai];
            const double th = alpha.inclinations[ti];
            const double d_range = static_cast<double>(alpha.residual_tau[c] + beta.residual_tau[c]);
            const double d_rate = alpha.residual_rate[c] + beta.residual_rate[c];
            const auto base = range_and_rate(a, th);
            const auto da = range_and_rate(a + a_step, th);
            const auto dt = range_and_rate(a, th + th_step);
            Eigen::Matrix2d jac;
            jac << da.first - base.first, dt.first - base.first, da.second - base.second, dt.second - base.second;
            const Eigen::Vector2d steps = jac.colPivHouseholderQr().solve(Eigen::Vector2d(d_range, d_rate));
            const double dist = steps.norm();
            if (!std::isfinite(dist)) continue;
            if (!any || dist < best.distance_steps) {
                any = true;
                best = {ai, ti, d_range, d_rate, dist};
            }
        }
    }
    if (!any) throw ScanFailedError(std::min(alpha.max_significance, beta.max_significance));
    return best;
}

double OrbitFitState::correlation(int i, int j) const {
    const double vi = covariance[static_cast<std::size_t>(i * 4 + i)];
    const double vj = covariance[static_cast<std::size_t>(j * 4 + j)];
    if (!(vi > 0.0) || !(vj > 0.0)) return 0.0;
    return covariance[static_cast<std::size_t>(i * 4 + j)] / std::sqrt(vi * vj);
}

double fitted_offset_ps(const OrbitFitState& state, LinkDirection direction, const PassGeometry& pass, Picos t) {
    const OrbitParams orbit = pass.with(state.a_fit, state.theta_fit);
    return propagation_delay(orbit, seconds_from_picos(t - pass.epoch), direction) * 1e12 +
           state.m * static_cast<double>(t.count) + state.b_ps;
}

namespace {

struct LinearSolution {
    double m = 0.0;
    double b = 0.0;
    double rss = 0.0;
};

class SeparableProblem {
public:
    SeparableProblem(const std::vector<FitPoint>& points, LinkDirection direction, const PassGeometry& pass,
                     double table_step)
        : points_(points), direction_(direction), pass_(pass), table_step_(table_step) {
        lo_ = points.front().t_local - picos_from_seconds(0.1);
        hi_ = points.back().t_local + picos_from_seconds(0.1);
        const DelayTable grid(pass_.orbit_template, direction_, pass_.epoch, lo_, hi_, table_step_);
        stencils_.reserve(points.size());
        for (const FitPoint& p : points) stencils_.push_back(grid.stencil(p.t_local));
        x_.reserve(points.size());
        for (const FitPoint& p : points) x_.push_back(static_cast<double>(p.t_local.count));
        double sum = 0.0;
        for (double x : x_) sum += x;
        x_mean_ = sum / static_cast<double>(x_.size());
    }

    std::vector<double> delays(double a, double theta) const {
        const DelayTable table(pass_.with(a, theta), direction_, pass_.epoch, lo_, hi_, table_step_);
        std::vector<double> out;
        out.reserve(points_.size());
        for (const DelayTable::Stencil& st : stencils_) out.push_back(table.evaluate(st));
        return out;
    }

    // Exact least squares for (m, b) given the delays.
    LinearSolution solve_linear(const std::vector<double>& delay) const {
        double sy = 0.0;
        const std::size_t n = points_.size();
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<double>(points_[i].tau.count) - delay[i];
            sy += y[i];
        }
        const double y_mean = sy / static_cast<double>(n);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = x_[i] - x_mean_;
            sxx += dx * dx;
            sxy += dx * (y[i] - y_mean);
        }
        LinearSolution s;
        s.m = sxx > 0.0 ? sxy / sxx : 0.0;
        s.b = y_mean - s.m * x_mean_;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - s.m * x_[i] - s.b;
            s.rss += r * r;
        }
        return s;
    }

    const std::vector<double>& x() const { return x_; }
    const std::vector<FitPoint>& points() const { return points_; }

private:
    const std::vector<FitPoint>& points_;
    LinkDirection direction_;
    const PassGeometry& pass_;
    double table_step_;
    Picos lo_{0}, hi_{0};
    std::vector<DelayTable::Stencil> stencils_;
    std::vector<double> x_;
    double x_mean_ = 0.0;
};

constexpr double kStepA = 1.0;      // m, finite-difference step
constexpr double kStepTheta = 1e-5;  // rad

struct NormalEquations {
    Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
};

NormalEquations build_normal(const SeparableProblem& prob, double a, double theta, const std::vector<double>& t0,
                             const LinearSolution& lin) {
    const auto ta = prob.delays(a + kStepA, theta);
    const auto tt = prob.delays(a, theta + kStepTheta);
    NormalEquations ne;
    const auto& pts = prob.points();
    const auto& x = prob.x();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Eigen::Vector4d row;
        row << (ta[i] - t0[i]) / kStepA, (tt[i] - t0[i]) / kStepTheta, x[i], 1.0;
        const double r = static_cast<double>(pts[i].tau.count) - t0[i] - lin.m * x[i] - lin.b;
        ne.a.noalias() += row * row.transpose();
        ne.g.noalias() += row * r;
    }
    return ne;
}

OrbitFitState fit_once(const OrbitFitState& start, LinkDirection direction, const PassGeometry& pass,
                       const FitOptions& options, const std::vector<FitPoint>& points) {
    if (points.front().t_local == points.back().t_local) {
        throw DegenerateGeometryError("orbit fit: all coincidences share one timestamp");
    }
    const SeparableProblem prob(points, direction, pass, options.table_step);

    double a = start.a_fit;
    double theta = start.theta_fit;
    std::vector<double> t0 = prob.delays(a, theta);
    LinearSolution lin = prob.solve_linear(t0);
    double lambda = 1e-3;
    int iterations = 0;
    bool converged = false;

    while (iterations < options.max_iterations && !converged) {
        ++iterations;
        const NormalEquations ne = build_normal(prob, a, theta, t0, lin);
        const Eigen::Vector4d d = ne.a.diagonal().cwiseSqrt();
        if ((d.array() <= 0.0).any()) throw DegenerateGeometryError("orbit fit: zero Jacobian column");
        const Eigen::Matrix4d scaled = ne.a.array() / (d * d.transpose()).array();
        const Eigen::Vector4d g_scaled = ne.g.array() / d.array();
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(scaled);
        if (eig.eigenvalues()(0) <= 1e-15 * eig.eigenvalues()(3)) {
            throw DegenerateGeometryError("orbit fit: singular normal equations");
        }

        bool accepted = false;
        while (!accepted) {
            Eigen::Matrix4d damped = scaled;
            damped.diagonal().array() += lambda;
            const Eigen::Vector4d step = damped.ldlt().solve(g_scaled).array() / d.array();
            const double a_new = std::max(1.0, a + step(0));
            const double theta_new = std::clamp(theta + step(1), 0.0, std::numbers::pi);
            auto t_new = prob.delays(a_new, theta_new);
            const LinearSolution lin_new = prob.solve_linear(t_new);
            if (lin_new.rss <= lin.rss) {
                const bool small = (std::fabs(a_new - a) < 1.0 && std::fabs(theta_new - theta) < 1e-5 * kDeg &&
                                    std::fabs(lin_new.m - lin.m) < 1e-13 && std::fabs(lin_new.b - lin.b) < 0.1) ||
                                   lin.rss - lin_new.rss <= 1e-9 * lin.rss;
                a = a_new;
                theta = theta_new;
                t0 = std::move(t_new);
                lin = lin_new;
                lambda = std::max(lambda * 0.1, 1e-12);
                accepted = true;
                converged = small;
            } else {
                lambda *= 10.0;
                if (lambda > 1e12) {
                    // No downhill step exists at working precision: a minimum.
                    converged = true;
                    break;
                }
            }
        }
    }

    OrbitFitState out = start;
    out.accumulated_coincidences = points;
    out.a_fit = a;
    out.theta_fit = theta;
    out.m = lin.m;
    out.b_ps = lin.b;
    out.iterations = iterations;
    out.converged = converged;
    const double n = static_cast<double>(points.size());
    out.residual_rms_ps = std::sqrt(lin.rss / n);

    const NormalEquations fin = build_normal(prob, a, theta, t0, lin);
    const Eigen::Vector4d d = fin.a.diagonal().cwiseSqrt();
    const Eigen::Matrix4d scaled = fin.a.array() / (d * d.transpose()).array();
    const Eigen::Matrix4d inv_scaled = scaled.ldlt().solve(Eigen::Matrix4d::Identity());
    const double s2 = points.size() > 4 ? lin.rss / (n - 4.0) : 0.0;
    const Eigen::Matrix4d cov = s2 * (inv_scaled.array() / (d * d.transpose()).array()).matrix();
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) out.covariance[static_cast<std::size_t>(i * 4 + j)] = cov(i, j);
    }
    return out;
}

}  // namespace

OrbitFitState precise_fit(const OrbitFitState& state, LinkDirection direction, const PassGeometry& pass,
                          const FitOptions& options) {
    if (state.accumulated_coincidences.size() < options.min_points) {
        throw std::invalid_argument("orbit fit needs at least " + std::to_string(options.min_points) +
                                    " coincidences");
    }
    std::vector<FitPoint> points = state.accumulated_coincidences;
    std::stable_sort(points.begin(), points.end(),
                     [](const FitPoint& x, const FitPoint& y) { return x.t_local < y.t_local; });

    OrbitFitState fitted = fit_once(state, direction, pass, options, points);

    // Accidentals inside the coincidence window contaminate the set; drop gross residuals and refit.
    std::vector<FitPoint> kept;
    kept.reserve(points.size());
    const OrbitParams orbit = pass.with(fitted.a_fit, fitted.theta_fit);
    const DelayTable table(orbit, direction, pass.epoch, points.front().t_local - picos_from_seconds(0.1),
                           points.back().t_local + picos_from_seconds(0.1), options.table_step);
    for (const FitPoint& p : points) {
        const double model = table.delay_ps(p.t_local) + fitted.m * static_cast<double>(p.t_local.count) + fitted.b_ps;
        if (std::fabs(static_cast<double>(p.tau.count) - model) <= options.outlier_threshold_ps) kept.push_back(p);
    }
    if (kept.size() != points.size() && kept.size() >= options.min_points) {
        fitted = fit_once(fitted, direction, pass, options, kept);
    }
    return fitted;
}

namespace {

struct DirectionTrack {
    LinkDirection direction = LinkDirection::Downlink;
    const std::vector<Picos>* local = nullptr;
    const std::vector<Picos>* receive = nullptr;
    OrbitFitState state;
    std::optional<Picos> sync_center;
    bool drift_locked = false;
};

struct Measurement {
    bool found = false;
    double residual_ps = 0.0;
};

CorrelationConfig tracking_config(const AcquisitionConfig& cfg, const std::optional<Picos>& center, Picos fallback) {
    CorrelationConfig c = cfg.correlation;
    c.search_center = center.value_or(fallback);
    if (center) c.search_halfwidth = cfg.track_halfwidth;
    return c;
}

}  // namespace

TrackingResult run_tracked_sync(const SiteStreams& streams, const AcquisitionConfig& cfg,
                                const CoarseScanConfig& scan_cfg, const PassGeometry& pass,
                                const FitOptions& fit_options) {
    validate(cfg);
    validate(scan_cfg);
    const Picos t_a = picos_from_seconds(cfg.acquisition_time);
    Picos last{0};
    for (Channel ch : {Channel::AliceLocal, Channel::BobLocal}) {
        if (!streams[ch].empty()) last = std::max(last, streams[ch].tags.back());
    }
    const auto count = static_cast<std::size_t>(
        std::floor(static_cast<double>(last.count) / static_cast<double>(t_a.count) + 0.5));

    TrackingResult result;
    const Picos scan_end{t_a.count * static_cast<std::int64_t>(scan_cfg.scan_acquisitions)};
    result.scan_alpha = coarse_scan(streams.alice_local.tags, streams.bob_receive.tags, LinkDirection::Downlink,
                                    scan_cfg, pass, Picos{0}, scan_end);
    result.scan_beta = coarse_scan(streams.bob_local.tags, streams.alice_receive.tags, LinkDirection::Uplink,
                                   scan_cfg, pass, Picos{0}, scan_end);

    std::array<DirectionTrack, 2> tracks;
    tracks[0].direction = LinkDirection::Downlink;
    tracks[0].local = &streams.alice_local.tags;
    tracks[0].receive = &streams.bob_receive.tags;
    tracks[1].direction = LinkDirection::Uplink;
    tracks[1].local = &streams.bob_local.tags;
    tracks[1].receive = &streams.alice_receive.tags;
    const Picos scan_center{scan_end.count / 2};
    result.start_cell = select_two_way_cell(result.scan_alpha, result.scan_beta, pass, scan_center);
    const std::array<const CoarseScanResult*, 2> scans{&result.scan_alpha, &result.scan_beta};
    for (std::size_t j = 0; j < 2; ++j) {
        const std::size_t c = scans[j]->cell(result.start_cell.theta_index, result.start_cell.a_index);
        tracks[j].state.a_fit = scans[j]->altitudes[result.start_cell.a_index];
        tracks[j].state.theta_fit = scans[j]->inclinations[result.start_cell.theta_index];
        tracks[j].state.b_ps = static_cast<double>(scans[j]->residual_tau[c]);
    }

    int missed = 0;
    const Picos margin = picos_from_seconds(0.05);
    for (std::size_t k = 0; k < count; ++k) {
        const Picos begin{static_cast<std::int64_t>(k) * t_a.count};
        const Picos end = begin + t_a;
        const Picos mid = begin + Picos{t_a.count / 2};

        std::array<Measurement, 2> sync_meas;
        std::array<Measurement, 2> drift_meas;
        std::array<OrbitFitState, 2> prior;
        std::array<std::vector<FitPoint>, 2> new_points;

        for (std::size_t j = 0; j < 2; ++j) {
            DirectionTrack& tr = tracks[j];
            prior[j] = tr.state;
            const OrbitFitState& st = tr.state;
            const DelayTable table(pass.with(st.a_fit, st.theta_fit), tr.direction, pass.epoch, begin - margin,
                                   end + margin);
            auto full_model = [&](Picos t) {
                return table.delay_ps(t) + st.m * static_cast<double>(t.count) + st.b_ps;
            };
            auto orbit_model = [&](Picos t) { return table.delay_ps(t); };

            const auto local = slice_tags(*tr.local, begin, end);
            const Picos lag = round_picos(full_model(mid));
            const auto receive = slice_tags(*tr.receive, begin + lag, end + lag);
            if (local.empty() || receive.empty()) continue;

            // Synchronized: orbit and clock drift removed.
            const auto despread = remove_offset_model(receive, full_model);
            const CorrelationResult cs = correlate(local, despread, tracking_config(cfg, tr.sync_center, Picos{0}));
            if (cs.found) {
                sync_meas[j] = {true, static_cast<double>(cs.tau.count)};
                tr.sync_center = cs.tau;
                for (const IndexPair& p : cs.coincidence_indices) {
                    new_points[j].push_back({local[p.local], receive[p.receive] - local[p.local]});
                }
            } else {
                tr.sync_center.reset();
            }

            // Drifting: only the orbit removed.
            const auto orbit_removed = remove_offset_model(receive, orbit_model);
            // Centred on the clock part of the current fit, which moves with every refit of the orbit.
            std::optional<Picos> expected;
            if (tr.drift_locked) expected = round_picos(st.m * static_cast<double>(mid.count) + st.b_ps);
            const CorrelationResult cd = correlate(
                local, orbit_removed,
                tracking_config(cfg, expected, round_picos(st.m * static_cast<double>(mid.count) + st.b_ps)));
            drift_meas[j] = {cd.found, static_cast<double>(cd.tau.count)};
            tr.drift_locked = cd.found;
        }

        // Both records share one geometry, the mean of the two direction fits.
        const double a_common = 0.5 * (prior[0].a_fit + prior[1].a_fit);
        const double theta_common = 0.5 * (prior[0].theta_fit + prior[1].theta_fit);
        const OrbitParams common = pass.with(a_common, theta_common);
        const double mid_orbit_s = seconds_from_picos(mid - pass.epoch);
        const double tprop_alpha = propagation_delay(common, mid_orbit_s, LinkDirection::Downlink) * 1e12;
        const double tprop_beta = propagation_delay(common, mid_orbit_s, LinkDirection::Uplink) * 1e12;
        const double drift_estimate = 0.5 * (prior[0].m - prior[1].m);

        auto make_record = [&](const std::array<Measurement, 2>& meas, bool remove_drift) {
            SyncRecord rec;
            rec.acq_index = k;
            rec.t_mid = mid;
            rec.found_alpha = meas[0].found;
            rec.found_beta = meas[1].found;
            rec.drift_alpha = prior[0].m;
            rec.drift_beta = prior[1].m;
            std::array<double, 2> tau{};
            for (std::size_t j = 0; j < 2; ++j) {
                const OrbitParams own = pass.with(prior[j].a_fit, prior[j].theta_fit);
                double model = propagation_delay(own, mid_orbit_s, tracks[j].direction) * 1e12;
                if (remove_drift) model += prior[j].m * static_cast<double>(mid.count) + prior[j].b_ps;
                tau[j] = model + meas[j].residual_ps;
            }
            rec.tau_alpha = round_picos(tau[0]);
            rec.tau_beta = round_picos(tau[1]);
            if (rec.found()) {
                Picos delta = absolute_offset(rec.tau_alpha, rec.tau_beta, round_picos(tprop_alpha), round_picos(tprop_beta));
                if (remove_drift) delta -= round_picos(drift_estimate * static_cast<double>(mid.count));
                rec.delta = delta;
                rec.t_prop_measured = round_picos(0.5 * (tau[0] + tau[1]) + 0.5 * (tprop_alpha - tprop_beta));
            }
            return rec;
        };
        result.synchronized.push_back(make_record(sync_meas, true));
        result.drifting.push_back(make_record(drift_meas, false));

        if (sync_meas[0].found && sync_meas[1].found) {
            missed = 0;
        } else if (++missed > cfg.max_missed) {
            throw SyncLostError(k);
        }

        for (std::size_t j = 0; j < 2; ++j) {
            DirectionTrack& tr = tracks[j];
            auto& acc = tr.state.accumulated_coincidences;
            acc.insert(acc.end(), new_points[j].begin(), new_points[j].end());
            if (acc.size() < fit_options.min_points) continue;
            try {
                tr.state = precise_fit(tr.state, tr.direction, pass, fit_options);
            } catch (const DegenerateGeometryError&) {
                // Keep the previous estimate until the geometry resolves.
            }
        }

        FitSnapshot snap;
        snap.acq_index = k;
        snap.t_mid = mid;
        snap.alpha = {tracks[0].state.a_fit, tracks[0].state.theta_fit, tracks[0].state.m, tracks[0].state.b_ps};
        snap.beta = {tracks[1].state.a_fit, tracks[1].state.theta_fit, tracks[1].state.m, tracks[1].state.b_ps};
        snap.corr_a_m_alpha = tracks[0].state.correlation(0, 2);
        snap.corr_a_m_beta = tracks[1].state.correlation(0, 2);
        snap.points_alpha = tracks[0].state.accumulated_coincidences.size();
        snap.points_beta = tracks[1].state.accumulated_coincidences.size();
        result.history.push_back(snap);
    }
    result.final_alpha = tracks[0].state;
    result.final_beta = tracks[1].state;
    return result;
}

}  // namespace qtt

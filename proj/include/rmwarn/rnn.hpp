#pragma once

// Recurrent forecaster with a residual backward projector.
//
// A cell (Elman or GRU) maps (x_t, h_{t-1}) to h_t. The projector
// g(h) = h + W2 relu(W1 h + b1) + b2 reconstructs h_t from h_{t+1}; the mean
// squared reconstruction error over a trajectory is the RM loss. Two heads
// read h_t: a linear point forecast per lead and a two-layer perceptron
// emitting (logit pi0, mu, log sigma) per lead.
//
// All parameters live in one flat vector so that gradient descent,
// finite-difference checks and checkpoints share a single layout.

#include "rmwarn/error.hpp"
#include "rmwarn/forecast_dist.hpp"
#include "rmwarn/numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rmwarn {

enum class CellKind { elman, gru };

inline std::string to_string(CellKind k) { return k == CellKind::elman ? "elman" : "gru"; }

inline CellKind parse_cell_kind(std::string_view s) {
    if (s == "elman") return CellKind::elman;
    if (s == "gru") return CellKind::gru;
    throw ConfigError("unknown cell kind '" + std::string(s) + "'");
}

struct TensorSpec {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
    Eigen::Index size() const { return rows * cols; }
    std::string group() const { return name.substr(0, name.find('.')); }
};

struct ModelShape {
    CellKind cell = CellKind::elman;
    int input_dim = 1;
    int hidden_dim = 32;
    int head_hidden = 32;
    std::vector<int> leads{1};  // forecast offsets in steps

    int n_leads() const { return static_cast<int>(leads.size()); }
    bool operator==(const ModelShape&) const = default;
};

inline constexpr double kLogSigmaMin = -6.907755278982137;  // log(1e-3)
inline constexpr double kLogSigmaMax = 6.907755278982137;   // log(1e3)

class RmModel {
public:
    using Mat = Eigen::MatrixXd;
    using Vec = Eigen::VectorXd;
    using MapM = Eigen::Map<Mat>;
    using CMapM = Eigen::Map<const Mat>;
    using MapV = Eigen::Map<Vec>;
    using CMapV = Eigen::Map<const Vec>;

    // Tensor slots, fixed order. Elman uses the first three cell slots only.
    enum Slot : int {
        Wz, Uz, bz, Wr, Ur, br, Wn, Un, bn,  // GRU; Elman aliases Wz=Wx, Uz=Wh, bz=b
        W1, b1, W2, b2,
        Wy, by,
        A, a, C, c,
        kSlots
    };

    RmModel() = default;

    explicit RmModel(ModelShape shape) : shape_(std::move(shape)) {
        if (shape_.hidden_dim < 1 || shape_.input_dim < 1 || shape_.head_hidden < 1 || shape_.leads.empty())
            throw ConfigError("model dimensions must be positive");
        const Eigen::Index d = shape_.hidden_dim, n = shape_.input_dim, L = shape_.n_leads(), m = shape_.head_hidden;
        slot_.assign(kSlots, -1);
        auto add = [&](Slot s, std::string name, Eigen::Index r, Eigen::Index c) {
            slot_[s] = static_cast<int>(layout_.size());
            layout_.push_back({std::move(name), r, c, total_});
            total_ += r * c;
        };
        if (shape_.cell == CellKind::elman) {
            add(Wz, "cell.Wx", d, n);
            add(Uz, "cell.Wh", d, d);
            add(bz, "cell.b", d, 1);
        } else {
            add(Wz, "cell.Wz", d, n);
            add(Uz, "cell.Uz", d, d);
            add(bz, "cell.bz", d, 1);
            add(Wr, "cell.Wr", d, n);
            add(Ur, "cell.Ur", d, d);
            add(br, "cell.br", d, 1);
            add(Wn, "cell.Wn", d, n);
            add(Un, "cell.Un", d, d);
            add(bn, "cell.bn", d, 1);
        }
        add(W1, "proj.W1", d, d);
        add(b1, "proj.b1", d, 1);
        add(W2, "proj.W2", d, d);
        add(b2, "proj.b2", d, 1);
        add(Wy, "point.Wy", L, d);
        add(by, "point.by", L, 1);
        add(A, "dist.A", m, d);
        add(a, "dist.a", m, 1);
        add(C, "dist.C", 3 * L, m);
        add(c, "dist.c", 3 * L, 1);
        params_ = Vec::Zero(total_);
    }

    // Xavier-uniform weights, zero biases, zero W2/b2 (projector = identity).
    static RmModel initialized(ModelShape shape, std::uint64_t seed) {
        RmModel m(std::move(shape));
        Rng rng(seed);
        for (const auto& t : m.layout_) {
            if (t.cols == 1 || t.name == "proj.W2") continue;
            const double bound = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
            for (Eigen::Index i = 0; i < t.size(); ++i) m.params_[t.offset + i] = (2.0 * uniform01(rng) - 1.0) * bound;
        }
        return m;
    }

    const ModelShape& shape() const { return shape_; }
    CellKind cell_kind() const { return shape_.cell; }
    int hidden_dim() const { return shape_.hidden_dim; }
    int input_dim() const { return shape_.input_dim; }
    const std::vector<TensorSpec>& layout() const { return layout_; }
    Eigen::Index n_params() const { return total_; }

    Vec& params() { return params_; }
    const Vec& params() const { return params_; }

    const TensorSpec& spec(Slot s) const { return layout_[static_cast<std::size_t>(slot_[s])]; }
    bool has(Slot s) const { return slot_[s] >= 0; }

    CMapM m(Slot s) const { return view(params_, s); }
    MapM m(Slot s) { return view(params_, s); }
    CMapV v(Slot s) const {
        const auto& t = spec(s);
        return CMapV(params_.data() + t.offset, t.rows);
    }
    MapV v(Slot s) {
        const auto& t = spec(s);
        return MapV(params_.data() + t.offset, t.rows);
    }

    // Views into an arbitrary vector with this model's layout (e.g. a gradient).
    CMapM view(const Vec& flat, Slot s) const {
        const auto& t = spec(s);
        return CMapM(flat.data() + t.offset, t.rows, t.cols);
    }
    MapM view(Vec& flat, Slot s) const {
        const auto& t = spec(s);
        return MapM(flat.data() + t.offset, t.rows, t.cols);
    }

    const TensorSpec* find(std::string_view name) const {
        for (const auto& t : layout_)
            if (t.name == name) return &t;
        return nullptr;
    }

private:
    ModelShape shape_;
    std::vector<TensorSpec> layout_;
    std::vector<int> slot_;
    Eigen::Index total_ = 0;
    Vec params_;
};

using Slot = RmModel::Slot;

// ---------------------------------------------------------------------------
// Forward primitives

namespace detail {

inline Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
    return x.unaryExpr([](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid1(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

// Per-step cache for the backward pass.
struct CellCache {
    Eigen::VectorXd h_prev, h;
    Eigen::VectorXd z, r, n;  // GRU gates (Elman stores nothing extra; h = tanh(a))
};

}  // namespace detail

inline Eigen::VectorXd cell_forward(const RmModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                                    detail::CellCache* cache = nullptr) {
    if (!x.allFinite() || !h_prev.allFinite()) throw NumericError("cell_forward: non-finite input");
    Eigen::VectorXd h;
    if (model.cell_kind() == CellKind::elman) {
        h = (model.m(Slot::Wz) * x + model.m(Slot::Uz) * h_prev + model.v(Slot::bz)).array().tanh().matrix();
        if (cache) {
            cache->h_prev = h_prev;
            cache->h = h;
        }
    } else {
        const Eigen::VectorXd z = detail::sigmoid(model.m(Slot::Wz) * x + model.m(Slot::Uz) * h_prev + model.v(Slot::bz));
        const Eigen::VectorXd r = detail::sigmoid(model.m(Slot::Wr) * x + model.m(Slot::Ur) * h_prev + model.v(Slot::br));
        const Eigen::VectorXd n =
            (model.m(Slot::Wn) * x + model.m(Slot::Un) * r.cwiseProduct(h_prev) + model.v(Slot::bn)).array().tanh().matrix();
        h = (Eigen::VectorXd::Ones(z.size()) - z).cwiseProduct(h_prev) + z.cwiseProduct(n);
        if (cache) {
            cache->h_prev = h_prev;
            cache->h = h;
            cache->z = z;
            cache->r = r;
            cache->n = n;
        }
    }
    return h;
}

inline Eigen::VectorXd projector_apply(const RmModel& model, const Eigen::VectorXd& h) {
    const Eigen::VectorXd u = model.m(Slot::W1) * h + model.v(Slot::b1);
    return h + model.m(Slot::W2) * u.cwiseMax(0.0) + model.v(Slot::b2);
}

struct HeadOutput {
    Eigen::VectorXd point;  // per lead
    std::vector<TwoPartDist> dist;
    Eigen::VectorXd hidden;  // tanh layer of the distribution head
    Eigen::VectorXd raw;     // (logit, mu, log sigma) per lead, unclamped
};

inline HeadOutput heads_forward(const RmModel& model, const Eigen::VectorXd& h) {
    HeadOutput out;
    out.point = model.m(Slot::Wy) * h + model.v(Slot::by);
    out.hidden = (model.m(Slot::A) * h + model.v(Slot::a)).array().tanh().matrix();
    out.raw = model.m(Slot::C) * out.hidden + model.v(Slot::c);
    const int L = model.shape().n_leads();
    out.dist.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        const double ls = std::clamp(out.raw[3 * l + 2], kLogSigmaMin, kLogSigmaMax);
        out.dist[static_cast<std::size_t>(l)] = {detail::sigmoid1(out.raw[3 * l]), out.raw[3 * l + 1], std::exp(ls)};
    }
    return out;
}

// Hidden states stored column-wise: h.col(t) is the state after consuming input t.
struct HiddenTrajectory {
    Eigen::MatrixXd h;
    Eigen::Index length() const { return h.cols(); }
};

struct ForwardResult {
    HiddenTrajectory trajectory;
    Eigen::MatrixXd point;                       // n_leads x T
    std::vector<std::vector<TwoPartDist>> dist;  // [lead][t]
};

// inputs: input_dim x T. h_0 = 0.
inline ForwardResult forward_pass(const RmModel& model, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != model.input_dim()) throw NumericError("forward_pass: input dimension mismatch");
    if (inputs.cols() < 2) throw NumericError("forward_pass: need at least two time steps");
    const Eigen::Index T = inputs.cols();
    const int L = model.shape().n_leads();
    ForwardResult out;
    out.trajectory.h.resize(model.hidden_dim(), T);
    out.point.resize(L, T);
    out.dist.assign(static_cast<std::size_t>(L), std::vector<TwoPartDist>(static_cast<std::size_t>(T)));
    Eigen::VectorXd h = Eigen::VectorXd::Zero(model.hidden_dim());
    for (Eigen::Index t = 0; t < T; ++t) {
        h = cell_forward(model, inputs.col(t), h);
        if (!h.allFinite()) throw NumericError("forward_pass: non-finite hidden state");
        out.trajectory.h.col(t) = h;
        const auto head = heads_forward(model, h);
        out.point.col(t) = head.point;
        for (int l = 0; l < L; ++l) out.dist[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] = head.dist[static_cast<std::size_t>(l)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// RM loss

// Mean of ||h_t - g(h_{t+1})||^2 over consecutive pairs of the given columns.
inline double rm_loss(const Eigen::MatrixXd& states, const RmModel& model) {
    if (states.cols() < 2) throw NumericError("rm_loss: need at least two states");
    double s = 0.0;
    for (Eigen::Index t = 0; t + 1 < states.cols(); ++t)
        s += (states.col(t) - projector_apply(model, states.col(t + 1))).squaredNorm();
    return s / static_cast<double>(states.cols() - 1);
}

inline double rm_loss(const HiddenTrajectory& traj, const RmModel& model) { return rm_loss(traj.h, model); }

// Aggregate squared defect, (T - 1) * rm_loss.
inline double rm_q_hat(const HiddenTrajectory& traj, const RmModel& model) {
    double s = 0.0;
    for (Eigen::Index t = 0; t + 1 < traj.length(); ++t)
        s += (traj.h.col(t) - projector_apply(model, traj.h.col(t + 1))).squaredNorm();
    return s;
}

// Sliding-window form over a buffer of the W most recent states.
inline double rm_loss_windowed(const Eigen::MatrixXd& buffer, const RmModel& model) {
    if (buffer.cols() < 2) throw NumericError("rm_loss_windowed: buffer must hold at least two states");
    return rm_loss(buffer, model);
}

// Fixed-capacity ring buffer of hidden states for online use.
class HiddenRing {
public:
    HiddenRing(int hidden_dim, int capacity) : buf_(hidden_dim, capacity) {
        if (capacity < 2) throw NumericError("HiddenRing: capacity must be >= 2");
    }
    void push(const Eigen::VectorXd& h) {
        buf_.col(head_) = h;
        head_ = (head_ + 1) % buf_.cols();
        size_ = std::min<Eigen::Index>(size_ + 1, buf_.cols());
    }
    Eigen::Index size() const { return size_; }
    // Oldest-to-newest copy of the retained states.
    Eigen::MatrixXd ordered() const {
        Eigen::MatrixXd out(buf_.rows(), size_);
        const Eigen::Index start = size_ < buf_.cols() ? 0 : head_;
        for (Eigen::Index i = 0; i < size_; ++i) out.col(i) = buf_.col((start + i) % buf_.cols());
        return out;
    }
    double loss(const RmModel& model) const { return rm_loss_windowed(ordered(), model); }

private:
    Eigen::MatrixXd buf_;
    Eigen::Index head_ = 0;
    Eigen::Index size_ = 0;
};

// ---------------------------------------------------------------------------
// Training configuration and schedule

struct TrainConfig {
    int epochs = 30;         // K
    int warmup = 5;          // K0
    double lambda0 = 0.1;
    double gamma = 0.1;
    double learning_rate = 0.01;
    double clip_norm = 5.0;
    std::uint64_t seed = 1;
    int rm_window = 0;       // 0 = full sequence
    int seq_len = 64;        // training chunk length
    double nll_weight = 1.0;
    double point_weight = 0.1;

    void validate() const {
        // warmup == epochs is accepted: a run that never enables the RM term.
        if (epochs < 1 || warmup < 0 || warmup > epochs) throw ConfigError("train: require 0 <= warmup <= epochs, epochs >= 1");
        if (lambda0 < 0.0) throw ConfigError("train: lambda0 must be >= 0");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must lie in (0, 1]");
        if (learning_rate < 0.0) throw ConfigError("train: learning rate must be >= 0");
        if (seq_len < 2) throw ConfigError("train: seq_len must be >= 2");
        if (rm_window == 1 || rm_window < 0) throw ConfigError("train: rm_window must be 0 or >= 2");
    }
};

// lambda_k = lambda0 * gamma^((k - K0) / (K - K0)) for k > K0, zero during warm-up.
inline double lambda_schedule(int k, const TrainConfig& cfg) {
    if (k <= cfg.warmup) return 0.0;
    if (cfg.lambda0 == 0.0) return 0.0;
    const double frac = static_cast<double>(k - cfg.warmup) / static_cast<double>(cfg.epochs - cfg.warmup);
    // Evaluated in base 10 so decimal constants land on the nearest double (0.1 * 0.1 would not).
    return std::pow(10.0, std::log10(cfg.lambda0) + frac * std::log10(cfg.gamma));
}

// Mean two-part NLL over unmasked targets (NaN marks a masked target).
inline double task_loss(std::span<const TwoPartDist> dists, std::span<const double> targets) {
    if (dists.size() != targets.size()) throw NumericError("task_loss: misaligned inputs");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
        if (std::isnan(targets[i])) continue;
        s += negative_log_likelihood(dists[i], targets[i]);
        ++n;
    }
    if (n == 0) throw EmptyBatchError("task_loss: every target is masked");
    return s / static_cast<double>(n);
}

// Training examples. inputs: input_dim x T; targets: n_leads x T aligned with
// the issue time (targets(l, t) = P at t + lead_l), NaN where unavailable.
struct TrainData {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
};

struct LossParts {
    double task = 0.0;
    double nll = 0.0;
    double point = 0.0;
    double rm = 0.0;
    double total = 0.0;
    std::size_t n_targets = 0;
};

struct LossWeights {
    double nll = 1.0;
    double point = 0.1;
    double lambda = 0.0;
    int rm_window = 0;
};

// Loss on one sequence and, when grad != nullptr, its gradient by BPTT.
// Sequences without any unmasked target contribute only the RM term.
inline LossParts sequence_loss(const RmModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                               const LossWeights& w, Eigen::VectorXd* grad) {
    using Eigen::VectorXd;
    const Eigen::Index T = inputs.cols();
    const int d = model.hidden_dim();
    const int L = model.shape().n_leads();
    if (T < 2) throw NumericError("sequence_loss: need at least two steps");
    if (targets.cols() != T || targets.rows() != L) throw NumericError("sequence_loss: target shape mismatch");

    std::vector<detail::CellCache> cache(static_cast<std::size_t>(T));
    std::vector<HeadOutput> heads(static_cast<std::size_t>(T));
    VectorXd h = VectorXd::Zero(d);
    for (Eigen::Index t = 0; t < T; ++t) {
        h = cell_forward(model, inputs.col(t), h, &cache[static_cast<std::size_t>(t)]);
        heads[static_cast<std::size_t>(t)] = heads_forward(model, h);
    }

    LossParts parts;
    for (Eigen::Index t = 0; t < T; ++t)
        for (int l = 0; l < L; ++l)
            if (!std::isnan(targets(l, t))) ++parts.n_targets;
    const double inv_n = parts.n_targets ? 1.0 / static_cast<double>(parts.n_targets) : 0.0;

    // RM pairs: the last W states when windowed, else the whole sequence.
    const Eigen::Index first_pair =
        (w.rm_window >= 2 && w.rm_window < T) ? T - static_cast<Eigen::Index>(w.rm_window) : 0;
    const double inv_pairs = 1.0 / static_cast<double>(T - 1 - first_pair);

    if (grad) grad->setZero(model.n_params());
    std::vector<VectorXd> dh(static_cast<std::size_t>(T), VectorXd::Zero(d));

    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& head = heads[static_cast<std::size_t>(t)];
        VectorXd d_point = VectorXd::Zero(L);
        VectorXd d_raw = VectorXd::Zero(3 * L);
        bool any = false;
        for (int l = 0; l < L; ++l) {
            const double y = targets(l, t);
            if (std::isnan(y)) continue;
            any = true;
            const double logit = head.raw[3 * l];
            const double mu = head.raw[3 * l + 1];
            const double ls_raw = head.raw[3 * l + 2];
            const double ls = std::clamp(ls_raw, kLogSigmaMin, kLogSigmaMax);
            const double pi0 = detail::sigmoid1(logit);
            double nll = 0.0;
            if (y <= 0.0) {
                nll = detail::softplus(-logit);
                d_raw[3 * l] = (pi0 - 1.0) * w.nll * inv_n;
            } else {
                const double sigma = std::exp(ls);
                const double zz = (std::log(y) - mu) / sigma;
                nll = detail::softplus(logit) + std::log(y) + ls + 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * zz * zz;
                d_raw[3 * l] = pi0 * w.nll * inv_n;
                d_raw[3 * l + 1] = -zz / sigma * w.nll * inv_n;
                if (ls_raw > kLogSigmaMin && ls_raw < kLogSigmaMax) d_raw[3 * l + 2] = (1.0 - zz * zz) * w.nll * inv_n;
            }
            const double e = head.point[l] - y;
            parts.nll += nll * inv_n;
            parts.point += e * e * inv_n;
            d_point[l] = 2.0 * e * w.point * inv_n;
        }
        if (!any || !grad) continue;
        auto& g = *grad;
        const VectorXd& ht = cache[static_cast<std::size_t>(t)].h;
        model.view(g, Slot::Wy).noalias() += d_point * ht.transpose();
        model.view(g, Slot::by) += d_point;
        model.view(g, Slot::C).noalias() += d_raw * head.hidden.transpose();
        model.view(g, Slot::c) += d_raw;
        const VectorXd du = (model.m(Slot::C).transpose() * d_raw).cwiseProduct(
            (VectorXd::Ones(head.hidden.size()) - head.hidden.cwiseProduct(head.hidden)));
        model.view(g, Slot::A).noalias() += du * ht.transpose();
        model.view(g, Slot::a) += du;
        dh[static_cast<std::size_t>(t)].noalias() += model.m(Slot::Wy).transpose() * d_point + model.m(Slot::A).transpose() * du;
    }
    parts.task = w.nll * parts.nll + w.point * parts.point;

    for (Eigen::Index t = first_pair; t + 1 < T; ++t) {
        const VectorXd& cur = cache[static_cast<std::size_t>(t)].h;
        const VectorXd& nxt = cache[static_cast<std::size_t>(t + 1)].h;
        const VectorXd u = model.m(Slot::W1) * nxt + model.v(Slot::b1);
        const VectorXd relu = u.cwiseMax(0.0);
        const VectorXd e = cur - (nxt + model.m(Slot::W2) * relu + model.v(Slot::b2));
        parts.rm += e.squaredNorm() * inv_pairs;
        if (!grad || w.lambda == 0.0) continue;
        auto& g = *grad;
        const VectorXd de = 2.0 * w.lambda * inv_pairs * e;  // d/d(h_t)
        const VectorXd dgv = -de;                             // d/d(g(h_{t+1}))
        model.view(g, Slot::W2).noalias() += dgv * relu.transpose();
        model.view(g, Slot::b2) += dgv;
        VectorXd s = model.m(Slot::W2).transpose() * dgv;
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (u[i] <= 0.0) s[i] = 0.0;
        model.view(g, Slot::W1).noalias() += s * nxt.transpose();
        model.view(g, Slot::b1) += s;
        dh[static_cast<std::size_t>(t)] += de;
        dh[static_cast<std::size_t>(t + 1)].noalias() += dgv + model.m(Slot::W1).transpose() * s;
    }
    parts.total = parts.task + w.lambda * parts.rm;
    if (!grad) return parts;

    // Backpropagation through time.
    auto& g = *grad;
    VectorXd carry = VectorXd::Zero(d);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const auto& cc = cache[static_cast<std::size_t>(t)];
        const VectorXd dht = dh[static_cast<std::size_t>(t)] + carry;
        const VectorXd& x = inputs.col(t);
        if (model.cell_kind() == CellKind::elman) {
            const VectorXd da = dht.cwiseProduct(VectorXd::Ones(d) - cc.h.cwiseProduct(cc.h));
            model.view(g, Slot::Wz).noalias() += da * x.transpose();
            model.view(g, Slot::Uz).noalias() += da * cc.h_prev.transpose();
            model.view(g, Slot::bz) += da;
            carry.noalias() = model.m(Slot::Uz).transpose() * da;
        } else {
            const VectorXd ones = VectorXd::Ones(d);
            const VectorXd dz = dht.cwiseProduct(cc.n - cc.h_prev);
            const VectorXd dn = dht.cwiseProduct(cc.z);
            VectorXd dprev = dht.cwiseProduct(ones - cc.z);
            const VectorXd dan = dn.cwiseProduct(ones - cc.n.cwiseProduct(cc.n));
            const VectorXd rh = cc.r.cwiseProduct(cc.h_prev);
            model.view(g, Slot::Wn).noalias() += dan * x.transpose();
            model.view(g, Slot::Un).noalias() += dan * rh.transpose();
            model.view(g, Slot::bn) += dan;
            const VectorXd drh = model.m(Slot::Un).transpose() * dan;
            const VectorXd dr = drh.cwiseProduct(cc.h_prev);
            dprev += drh.cwiseProduct(cc.r);
            const VectorXd daz = dz.cwiseProduct(cc.z.cwiseProduct(ones - cc.z));
            model.view(g, Slot::Wz).noalias() += daz * x.transpose();
            model.view(g, Slot::Uz).noalias() += daz * cc.h_prev.transpose();
            model.view(g, Slot::bz) += daz;
            dprev.noalias() += model.m(Slot::Uz).transpose() * daz;
            const VectorXd dar = dr.cwiseProduct(cc.r.cwiseProduct(ones - cc.r));
            model.view(g, Slot::Wr).noalias() += dar * x.transpose();
            model.view(g, Slot::Ur).noalias() += dar * cc.h_prev.transpose();
            model.view(g, Slot::br) += dar;
            dprev.noalias() += model.m(Slot::Ur).transpose() * dar;
            carry = dprev;
        }
    }
    return parts;
}

// Sets output biases to the training climatology: logit of the dry fraction,
// log-moments of wet amounts, and the mean for the point head.
inline void init_output_bias(RmModel& model, const Eigen::MatrixXd& targets) {
    const int L = model.shape().n_leads();
    for (int l = 0; l < L; ++l) {
        std::vector<double> logs, all;
        std::size_t dry = 0;
        for (Eigen::Index t = 0; t < targets.cols(); ++t) {
            const double y = targets(l, t);
            if (std::isnan(y)) continue;
            all.push_back(y);
            if (y <= 0.0) ++dry;
            else logs.push_back(std::log(y));
        }
        if (all.empty()) continue;
        const double p = std::clamp(static_cast<double>(dry) / static_cast<double>(all.size()), 1e-3, 1.0 - 1e-3);
        auto c = model.v(Slot::c);
        c[3 * l] = std::log(p / (1.0 - p));
        if (logs.size() >= 2) {
            c[3 * l + 1] = mean_of(logs);
            c[3 * l + 2] = std::clamp(std::log(sd_of(logs)), kLogSigmaMin, kLogSigmaMax);
        }
        model.v(Slot::by)[l] = mean_of(all);
    }
}

struct EpochLog {
    int epoch = 0;
    double task = 0.0;
    double rm = 0.0;
    double lambda = 0.0;
};

struct TrainResult {
    RmModel model;
    std::vector<EpochLog> log;
};

// Contiguous [start, end) chunks of at least two steps.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> make_chunks(Eigen::Index T, int seq_len) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    for (Eigen::Index s = 0; s < T; s += seq_len) {
        const Eigen::Index e = std::min<Eigen::Index>(T, s + seq_len);
        if (e - s >= 2) out.emplace_back(s, e);
    }
    return out;
}

// Gradient descent on L_task + lambda_k * L_RM with per-sequence global-norm
// clipping. Chunk order is shuffled per epoch from the seed.
inline TrainResult train(RmModel model, const TrainData& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.inputs.rows() != model.input_dim()) throw ConfigError("train: input dimension mismatch");
    const auto chunks = make_chunks(data.inputs.cols(), cfg.seq_len);
    if (chunks.empty()) throw DataError("train: series too short");
    TrainResult result;
    std::vector<std::size_t> order(chunks.size());
    Eigen::VectorXd grad(model.n_params());
    for (int k = 1; k <= cfg.epochs; ++k) {
        const double lambda = lambda_schedule(k, cfg);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(k)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

        EpochLog entry{k, 0.0, 0.0, lambda};
        const LossWeights w{cfg.nll_weight, cfg.point_weight, lambda, cfg.rm_window};
        for (auto idx : order) {
            const auto [s, e] = chunks[idx];
            const auto parts = sequence_loss(model, data.inputs.middleCols(s, e - s), data.targets.middleCols(s, e - s), w, &grad);
            if (!std::isfinite(parts.total) || !grad.allFinite()) throw TrainingError(k, "non-finite loss");
            const double norm = grad.norm();
            if (norm > cfg.clip_norm) grad *= cfg.clip_norm / norm;
            model.params() -= cfg.learning_rate * grad;
            entry.task += parts.task / static_cast<double>(chunks.size());
            entry.rm += parts.rm / static_cast<double>(chunks.size());
        }
        if (!std::isfinite(entry.task) || !std::isfinite(entry.rm)) throw TrainingError(k, "non-finite loss");
        result.log.push_back(entry);
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::vector<std::pair<std::string, double>> per_group;  // max relative error per parameter group
};

// Relative error |a - n| / max(|a|, |n|, 1e-6) against central differences.
inline GradCheckResult gradient_check(const RmModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                      const LossWeights& w, double step = 1e-5) {
    Eigen::VectorXd analytic;
    sequence_loss(model, inputs, targets, w, &analytic);
    RmModel probe = model;
    GradCheckResult out;
    for (const auto& t : model.layout()) {
        double group_max = 0.0;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const Eigen::Index k = t.offset + i;
            const double orig = probe.params()[k];
            probe.params()[k] = orig + step;
            const double fp = sequence_loss(probe, inputs, targets, w, nullptr).total;
            probe.params()[k] = orig - step;
            const double fm = sequence_loss(probe, inputs, targets, w, nullptr).total;
            probe.params()[k] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
            const double rel = std::abs(analytic[k] - numeric) / denom;
            group_max = std::max(group_max, rel);
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst_tensor = t.name;
            }
        }
        const auto grp = t.group();
        auto it = std::find_if(out.per_group.begin(), out.per_group.end(), [&](const auto& p) { return p.first == grp; });
        if (it == out.per_group.end()) out.per_group.emplace_back(grp, group_max);
        else it->second = std::max(it->second, group_max);
    }
    return out;
}

}  // namespace rmwarn

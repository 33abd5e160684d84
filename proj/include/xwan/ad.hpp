#pragma once

// Scalar tape-based reverse-mode automatic differentiation with optional
// forward-mode tangents. Tangent arithmetic is recorded on the tape as
// ordinary nodes, so a reverse sweep started from a tangent node yields
// gradients of directional derivatives (forward-over-reverse). This is the
// only second-order machinery in the library and it is enough for every
// term of the weak form.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xwan::ad {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Op : std::uint8_t {
    Const,
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    PowInt,  // integer exponent stored in the second parent slot
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
    Relu,
    Sqrt,
};

/// Forward evaluation hit an invalid input (div by zero, log of non-positive,
/// sqrt of negative). Carries the id of the offending node.
class DomainError : public std::runtime_error {
public:
    DomainError(const std::string& what, NodeId node)
        : std::runtime_error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
    NodeId node() const { return node_; }

private:
    NodeId node_;
};

/// Append-only record of scalar operations. Parents always have smaller ids,
/// so a single descending sweep performs reverse-mode differentiation.
/// A tape is single-owner while recording; once recording stops it is
/// immutable and safe to read from any thread.
class Tape {
public:
    Tape() = default;

    void reserve(std::size_t n) {
        op_.reserve(n);
        pa_.reserve(n);
        pb_.reserve(n);
        val_.reserve(n);
        tn_.reserve(n);
    }

    /// Drop all nodes but keep capacity (cheap reuse between iterations).
    void clear() {
        op_.clear();
        pa_.clear();
        pb_.clear();
        val_.clear();
        tn_.clear();
        leaves_.clear();
        tangent_ranges_.clear();
        tangent_active_ = false;
    }

    std::size_t size() const { return op_.size(); }

    double value(NodeId id) const { return val_[static_cast<std::size_t>(id)]; }
    Op op(NodeId id) const { return static_cast<Op>(op_[static_cast<std::size_t>(id)]); }

    // --- recording -----------------------------------------------------

    NodeId constant(double v) { return push(Op::Const, kNoNode, kNoNode, v); }

    NodeId leaf(double v) {
        NodeId id = push(Op::Leaf, kNoNode, kNoNode, v);
        leaves_.push_back(id);
        return id;
    }

    /// Leaf carrying a tangent seed; only meaningful while tangent mode is on.
    NodeId input(double v, double tangent_seed) {
        if (!tangent_active_) throw std::logic_error("ad: input() requires tangent mode");
        NodeId id = push(Op::Leaf, kNoNode, kNoNode, v);
        leaves_.push_back(id);
        if (tangent_seed != 0.0) tn_[static_cast<std::size_t>(id)] = constant(tangent_seed);
        return id;
    }

    /// Seeded constant: differentiated along in forward mode but kept out of
    /// the leaf list (no reverse adjoint wanted).
    NodeId seeded(double v, double tangent_seed) {
        if (!tangent_active_) throw std::logic_error("ad: seeded() requires tangent mode");
        NodeId id = push(Op::Const, kNoNode, kNoNode, v);
        if (tangent_seed != 0.0) tn_[static_cast<std::size_t>(id)] = constant(tangent_seed);
        return id;
    }

    NodeId add(NodeId a, NodeId b) {
        NodeId z = push(Op::Add, a, b, val_at(a) + val_at(b));
        if (tangent_active_) {
            NodeId da = tn(a), db = tn(b);
            set_tn(z, (da == kNoNode) ? db : (db == kNoNode ? da : push(Op::Add, da, db, val_at(da) + val_at(db))));
        }
        return z;
    }

    NodeId sub(NodeId a, NodeId b) {
        NodeId z = push(Op::Sub, a, b, val_at(a) - val_at(b));
        if (tangent_active_) {
            NodeId da = tn(a), db = tn(b);
            NodeId dz = kNoNode;
            if (da != kNoNode && db != kNoNode)
                dz = push(Op::Sub, da, db, val_at(da) - val_at(db));
            else if (da != kNoNode)
                dz = da;
            else if (db != kNoNode)
                dz = push(Op::Neg, db, kNoNode, -val_at(db));
            set_tn(z, dz);
        }
        return z;
    }

    NodeId mul(NodeId a, NodeId b) {
        NodeId z = push(Op::Mul, a, b, val_at(a) * val_at(b));
        if (tangent_active_) {
            NodeId da = tn(a), db = tn(b);
            NodeId t1 = (da != kNoNode) ? push(Op::Mul, da, b, val_at(da) * val_at(b)) : kNoNode;
            NodeId t2 = (db != kNoNode) ? push(Op::Mul, a, db, val_at(a) * val_at(db)) : kNoNode;
            set_tn(z, (t1 == kNoNode) ? t2 : (t2 == kNoNode ? t1 : push(Op::Add, t1, t2, val_at(t1) + val_at(t2))));
        }
        return z;
    }

    NodeId div(NodeId a, NodeId b) {
        if (val_at(b) == 0.0) throw DomainError("ad: division by zero", static_cast<NodeId>(size()));
        NodeId z = push(Op::Div, a, b, val_at(a) / val_at(b));
        if (tangent_active_) {
            // dz = (da - z*db) / b
            NodeId da = tn(a), db = tn(b);
            NodeId num = kNoNode;
            if (db != kNoNode) {
                NodeId zdb = push(Op::Mul, z, db, val_at(z) * val_at(db));
                num = (da != kNoNode) ? push(Op::Sub, da, zdb, val_at(da) - val_at(zdb))
                                      : push(Op::Neg, zdb, kNoNode, -val_at(zdb));
            } else {
                num = da;
            }
            set_tn(z, num == kNoNode ? kNoNode : push(Op::Div, num, b, val_at(num) / val_at(b)));
        }
        return z;
    }

    NodeId neg(NodeId a) {
        NodeId z = push(Op::Neg, a, kNoNode, -val_at(a));
        if (tangent_active_) {
            NodeId da = tn(a);
            set_tn(z, da == kNoNode ? kNoNode : push(Op::Neg, da, kNoNode, -val_at(da)));
        }
        return z;
    }

    NodeId pow_int(NodeId a, int n) {
        double va = val_at(a);
        if (va == 0.0 && n < 0) throw DomainError("ad: zero base with negative exponent", static_cast<NodeId>(size()));
        NodeId z = push(Op::PowInt, a, static_cast<NodeId>(n), std::pow(va, n));
        if (tangent_active_) {
            NodeId da = tn(a);
            NodeId dz = kNoNode;
            if (da != kNoNode && n != 0) {
                if (n == 1) {
                    dz = da;
                } else {
                    // dz = n * a^(n-1) * da
                    NodeId p = push(Op::PowInt, a, static_cast<NodeId>(n - 1), std::pow(va, n - 1));
                    NodeId s = push(Op::Mul, constant(static_cast<double>(n)), p,
                                    static_cast<double>(n) * val_at(p));
                    dz = push(Op::Mul, s, da, val_at(s) * val_at(da));
                }
            }
            set_tn(z, dz);
        }
        return z;
    }

    NodeId exp(NodeId a) {
        NodeId z = push(Op::Exp, a, kNoNode, std::exp(val_at(a)));
        chain1(z, a, z);  // dz = z * da
        return z;
    }

    NodeId log(NodeId a) {
        if (val_at(a) <= 0.0) throw DomainError("ad: log of non-positive value", static_cast<NodeId>(size()));
        NodeId z = push(Op::Log, a, kNoNode, std::log(val_at(a)));
        if (tangent_active_) {
            NodeId da = tn(a);
            set_tn(z, da == kNoNode ? kNoNode : push(Op::Div, da, a, val_at(da) / val_at(a)));
        }
        return z;
    }

    NodeId sin(NodeId a) {
        NodeId z = push(Op::Sin, a, kNoNode, std::sin(val_at(a)));
        if (tangent_active_) {
            NodeId da = tn(a);
            if (da == kNoNode) {
                set_tn(z, kNoNode);
            } else {
                NodeId c = push(Op::Cos, a, kNoNode, std::cos(val_at(a)));
                set_tn(z, push(Op::Mul, c, da, val_at(c) * val_at(da)));
            }
        }
        return z;
    }

    NodeId cos(NodeId a) {
        NodeId z = push(Op::Cos, a, kNoNode, std::cos(val_at(a)));
        if (tangent_active_) {
            NodeId da = tn(a);
            if (da == kNoNode) {
                set_tn(z, kNoNode);
            } else {
                NodeId s = push(Op::Sin, a, kNoNode, std::sin(val_at(a)));
                NodeId ns = push(Op::Neg, s, kNoNode, -val_at(s));
                set_tn(z, push(Op::Mul, ns, da, val_at(ns) * val_at(da)));
            }
        }
        return z;
    }

    NodeId tanh(NodeId a) {
        NodeId z = push(Op::Tanh, a, kNoNode, std::tanh(val_at(a)));
        if (tangent_active_) {
            NodeId da = tn(a);
            if (da == kNoNode) {
                set_tn(z, kNoNode);
            } else {
                // dz = (1 - z^2) da
                NodeId zz = push(Op::Mul, z, z, val_at(z) * val_at(z));
                NodeId om = push(Op::Sub, constant(1.0), zz, 1.0 - val_at(zz));
                set_tn(z, push(Op::Mul, om, da, val_at(om) * val_at(da)));
            }
        }
        return z;
    }

    NodeId relu(NodeId a) {
        double va = val_at(a);
        NodeId z = push(Op::Relu, a, kNoNode, va > 0.0 ? va : 0.0);
        if (tangent_active_) {
            NodeId da = tn(a);
            // subgradient at 0 is 0
            set_tn(z, (da != kNoNode && va > 0.0) ? da : kNoNode);
        }
        return z;
    }

    NodeId sqrt(NodeId a) {
        if (val_at(a) < 0.0) throw DomainError("ad: sqrt of negative value", static_cast<NodeId>(size()));
        NodeId z = push(Op::Sqrt, a, kNoNode, std::sqrt(val_at(a)));
        if (tangent_active_) {
            NodeId da = tn(a);
            if (da == kNoNode) {
                set_tn(z, kNoNode);
            } else {
                NodeId twoz = push(Op::Add, z, z, 2.0 * val_at(z));
                set_tn(z, push(Op::Div, da, twoz, val_at(da) / val_at(twoz)));
            }
        }
        return z;
    }

    /// Generic dispatcher; `b` is the second operand id, or the exponent for
    /// PowInt. Used by property tests that enumerate primitives.
    NodeId record(Op kind, NodeId a = kNoNode, NodeId b = kNoNode) {
        switch (kind) {
            case Op::Add: return add(a, b);
            case Op::Sub: return sub(a, b);
            case Op::Mul: return mul(a, b);
            case Op::Div: return div(a, b);
            case Op::Neg: return neg(a);
            case Op::PowInt: return pow_int(a, static_cast<int>(b));
            case Op::Exp: return exp(a);
            case Op::Log: return log(a);
            case Op::Sin: return sin(a);
            case Op::Cos: return cos(a);
            case Op::Tanh: return tanh(a);
            case Op::Relu: return relu(a);
            case Op::Sqrt: return sqrt(a);
            default: throw std::logic_error("ad: record() expects a computational op");
        }
    }

    // --- tangent mode ----------------------------------------------------

    /// While active, every recorded node also gets its directional-derivative
    /// computation recorded as tape nodes. Nodes recorded earlier are treated
    /// as constants along the direction (zero tangent).
    void begin_tangent() {
        if (tangent_active_) throw std::logic_error("ad: tangent mode already active");
        tangent_active_ = true;
        tangent_ranges_.emplace_back(static_cast<NodeId>(size()), kNoNode);
    }

    void end_tangent() {
        if (!tangent_active_) throw std::logic_error("ad: tangent mode not active");
        tangent_active_ = false;
        tangent_ranges_.back().second = static_cast<NodeId>(size());
    }

    bool tangent_active() const { return tangent_active_; }

    /// Id of the node holding `id`'s tangent, or kNoNode if the tangent is
    /// identically zero / was never recorded.
    NodeId tangent_node(NodeId id) const { return tn_[static_cast<std::size_t>(id)]; }

    /// Directional derivative of the node's value, if the node was recorded
    /// during a tangent pass (all nodes of a pass carry tangents; a missing
    /// tangent node means exactly zero).
    std::optional<double> tangent(NodeId id) const {
        NodeId t = tn_[static_cast<std::size_t>(id)];
        if (t != kNoNode) return val_[static_cast<std::size_t>(t)];
        for (const auto& [lo, hi] : tangent_ranges_) {
            NodeId end = (hi == kNoNode) ? static_cast<NodeId>(size()) : hi;
            if (id >= lo && id < end) return 0.0;
        }
        return std::nullopt;
    }

    // --- reverse sweep ---------------------------------------------------

    /// Adjoints of every node with respect to `output`, by one descending
    /// sweep. The returned span is valid until the next backward/clear.
    std::span<const double> backward(NodeId output) {
        if (output < 0 || static_cast<std::size_t>(output) >= size())
            throw std::out_of_range("ad: backward output id out of range");
        adj_.assign(size(), 0.0);
        adj_[static_cast<std::size_t>(output)] = 1.0;
        for (NodeId id = output; id >= 0; --id) {
            const double az = adj_[static_cast<std::size_t>(id)];
            if (az == 0.0) continue;
            const NodeId a = pa_[static_cast<std::size_t>(id)];
            const NodeId b = pb_[static_cast<std::size_t>(id)];
            switch (static_cast<Op>(op_[static_cast<std::size_t>(id)])) {
                case Op::Const:
                case Op::Leaf: break;
                case Op::Add:
                    adj_[static_cast<std::size_t>(a)] += az;
                    adj_[static_cast<std::size_t>(b)] += az;
                    break;
                case Op::Sub:
                    adj_[static_cast<std::size_t>(a)] += az;
                    adj_[static_cast<std::size_t>(b)] -= az;
                    break;
                case Op::Mul:
                    adj_[static_cast<std::size_t>(a)] += az * val_at(b);
                    adj_[static_cast<std::size_t>(b)] += az * val_at(a);
                    break;
                case Op::Div:
                    adj_[static_cast<std::size_t>(a)] += az / val_at(b);
                    adj_[static_cast<std::size_t>(b)] -= az * val_at(id) / val_at(b);
                    break;
                case Op::Neg:
                    adj_[static_cast<std::size_t>(a)] -= az;
                    break;
                case Op::PowInt: {
                    const int n = static_cast<int>(b);
                    if (n != 0)
                        adj_[static_cast<std::size_t>(a)] += az * n * std::pow(val_at(a), n - 1);
                    break;
                }
                case Op::Exp:
                    adj_[static_cast<std::size_t>(a)] += az * val_at(id);
                    break;
                case Op::Log:
                    adj_[static_cast<std::size_t>(a)] += az / val_at(a);
                    break;
                case Op::Sin:
                    adj_[static_cast<std::size_t>(a)] += az * std::cos(val_at(a));
                    break;
                case Op::Cos:
                    adj_[static_cast<std::size_t>(a)] -= az * std::sin(val_at(a));
                    break;
                case Op::Tanh:
                    adj_[static_cast<std::size_t>(a)] += az * (1.0 - val_at(id) * val_at(id));
                    break;
                case Op::Relu:
                    if (val_at(a) > 0.0) adj_[static_cast<std::size_t>(a)] += az;
                    break;
                case Op::Sqrt:
                    adj_[static_cast<std::size_t>(a)] += az / (2.0 * val_at(id));
                    break;
            }
        }
        return adj_;
    }

    double adjoint(NodeId id) const { return adj_[static_cast<std::size_t>(id)]; }

    std::span<const NodeId> leaf_ids() const { return leaves_; }

    std::vector<double> leaf_adjoints() const {
        std::vector<double> g(leaves_.size());
        for (std::size_t i = 0; i < leaves_.size(); ++i) g[i] = adj_[static_cast<std::size_t>(leaves_[i])];
        return g;
    }

private:
    NodeId push(Op kind, NodeId a, NodeId b, double v) {
        op_.push_back(static_cast<std::uint8_t>(kind));
        pa_.push_back(a);
        pb_.push_back(b);
        val_.push_back(v);
        tn_.push_back(kNoNode);
        return static_cast<NodeId>(op_.size() - 1);
    }

    double val_at(NodeId id) const { return val_[static_cast<std::size_t>(id)]; }
    NodeId tn(NodeId id) const { return tn_[static_cast<std::size_t>(id)]; }
    void set_tn(NodeId id, NodeId t) { tn_[static_cast<std::size_t>(id)] = t; }

    // dz = w * da with w an existing node
    void chain1(NodeId z, NodeId a, NodeId w) {
        if (!tangent_active_) return;
        NodeId da = tn(a);
        set_tn(z, da == kNoNode ? kNoNode : push(Op::Mul, w, da, val_at(w) * val_at(da)));
    }

    std::vector<std::uint8_t> op_;
    std::vector<NodeId> pa_, pb_;
    std::vector<double> val_;
    std::vector<NodeId> tn_;
    std::vector<NodeId> leaves_;
    std::vector<std::pair<NodeId, NodeId>> tangent_ranges_;
    std::vector<double> adj_;
    bool tangent_active_ = false;
};

// --- expression convenience ------------------------------------------------

/// Lightweight handle pairing a tape with a node. Arithmetic on Vars records
/// onto the tape, which keeps model code close to the math.
struct Var {
    Tape* tape = nullptr;
    NodeId id = kNoNode;

    double value() const { return tape->value(id); }
};

inline Var make_var(Tape& t, NodeId id) { return Var{&t, id}; }
inline Var constant(Tape& t, double v) { return Var{&t, t.constant(v)}; }
inline Var leaf(Tape& t, double v) { return Var{&t, t.leaf(v)}; }

inline Var operator+(Var a, Var b) { return {a.tape, a.tape->add(a.id, b.id)}; }
inline Var operator-(Var a, Var b) { return {a.tape, a.tape->sub(a.id, b.id)}; }
inline Var operator*(Var a, Var b) { return {a.tape, a.tape->mul(a.id, b.id)}; }
inline Var operator/(Var a, Var b) { return {a.tape, a.tape->div(a.id, b.id)}; }
inline Var operator-(Var a) { return {a.tape, a.tape->neg(a.id)}; }

inline Var operator+(Var a, double c) { return a + constant(*a.tape, c); }
inline Var operator+(double c, Var a) { return constant(*a.tape, c) + a; }
inline Var operator-(Var a, double c) { return a - constant(*a.tape, c); }
inline Var operator-(double c, Var a) { return constant(*a.tape, c) - a; }
inline Var operator*(Var a, double c) { return a * constant(*a.tape, c); }
inline Var operator*(double c, Var a) { return constant(*a.tape, c) * a; }
inline Var operator/(Var a, double c) { return a / constant(*a.tape, c); }
inline Var operator/(double c, Var a) { return constant(*a.tape, c) / a; }

inline Var exp(Var a) { return {a.tape, a.tape->exp(a.id)}; }
inline Var log(Var a) { return {a.tape, a.tape->log(a.id)}; }
inline Var sin(Var a) { return {a.tape, a.tape->sin(a.id)}; }
inline Var cos(Var a) { return {a.tape, a.tape->cos(a.id)}; }
inline Var tanh(Var a) { return {a.tape, a.tape->tanh(a.id)}; }
inline Var relu(Var a) { return {a.tape, a.tape->relu(a.id)}; }
inline Var sqrt(Var a) { return {a.tape, a.tape->sqrt(a.id)}; }
inline Var pow_int(Var a, int n) { return {a.tape, a.tape->pow_int(a.id, n)}; }

/// max(a, floor) for non-negative floor, built from relu so it stays on tape.
inline Var clamp_below(Var a, double floor) { return floor + relu(a - floor); }

// --- second-mixed derivatives ----------------------------------------------

/// Gradient of a directional derivative: records `f` with the tangent seeded
/// along one input coordinate, then reverse-sweeps from the output's tangent
/// node. `params` become ordinary leaves, `inputs[direction]` carries seed 1.
/// Returns d/d(params)[ d f / d inputs[direction] ], one entry per parameter.
template <class F>
std::vector<double> forward_tangent_then_backward(F&& f, std::span<const double> params,
                                                  std::span<const double> inputs, std::size_t direction) {
    Tape tape;
    std::vector<Var> p;
    p.reserve(params.size());
    for (double v : params) p.push_back(leaf(tape, v));
    tape.begin_tangent();
    std::vector<Var> x;
    x.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
        x.push_back(make_var(tape, tape.input(inputs[i], i == direction ? 1.0 : 0.0)));
    Var out = f(tape, std::span<const Var>(p), std::span<const Var>(x));
    tape.end_tangent();

    NodeId dt = tape.tangent_node(out.id);
    std::vector<double> grad(params.size(), 0.0);
    if (dt == kNoNode) return grad;  // derivative identically zero
    tape.backward(dt);
    for (std::size_t i = 0; i < params.size(); ++i) grad[i] = tape.adjoint(p[i].id);
    return grad;
}

// --- finite-difference verification ------------------------------------------

/// Max over coordinates of |ad - fd| / max(1, |ad|), with central differences.
/// `f` maps (tape, leaves) to a scalar Var and must be smooth at `point`.
template <class F>
double grad_check(F&& f, std::span<const double> point, double step) {
    Tape tape;
    std::vector<Var> xs;
    xs.reserve(point.size());
    for (double v : point) xs.push_back(leaf(tape, v));
    Var out = f(tape, std::span<const Var>(xs));
    tape.backward(out.id);
    std::vector<double> ad(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) ad[i] = tape.adjoint(xs[i].id);

    auto eval = [&](std::span<const double> at) {
        Tape t;
        std::vector<Var> vs;
        vs.reserve(at.size());
        for (double v : at) vs.push_back(leaf(t, v));
        return f(t, std::span<const Var>(vs)).value();
    };

    double worst = 0.0;
    std::vector<double> shifted(point.begin(), point.end());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double xi = shifted[i];
        shifted[i] = xi + step;
        const double up = eval(shifted);
        shifted[i] = xi - step;
        const double dn = eval(shifted);
        shifted[i] = xi;
        const double fd = (up - dn) / (2.0 * step);
        const double rel = std::abs(ad[i] - fd) / std::max(1.0, std::abs(ad[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace xwan::ad

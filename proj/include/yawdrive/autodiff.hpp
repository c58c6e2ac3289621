#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// A Graph records every operation in creation order. backward() walks the
// tape in reverse and each op's closure accumulates input gradients from its
// output gradient. Parameters live outside the graph; their node gradients
// are added into Parameter::grad when the walk reaches them.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "yawdrive/tensor.hpp"

namespace yawdrive {

template <typename Scalar>
struct Parameter
{
    std::string name;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
};

/// Ordered, name-addressable parameter collection with stable addresses.
template <typename Scalar>
class ParameterSet
{
  public:
    Parameter<Scalar>& add(const std::string& name, Shape shape)
    {
        if (index_.count(name)) throw ShapeError("duplicate parameter " + name);
        index_[name] = params_.size();
        Tensor<Scalar> value(shape);
        Tensor<Scalar> grad(std::move(shape));
        params_.push_back({name, std::move(value), std::move(grad)});
        return params_.back();
    }

    Parameter<Scalar>& at(const std::string& name)
    {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("unknown parameter " + name);
        return params_[it->second];
    }
    const Parameter<Scalar>& at(const std::string& name) const
    {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("unknown parameter " + name);
        return params_[it->second];
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t size() const { return params_.size(); }
    Parameter<Scalar>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<Scalar>& operator[](std::size_t i) const { return params_[i]; }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad()
    {
        for (auto& p : params_) p.grad.set_zero();
    }

    Eigen::Index scalar_count() const
    {
        Eigen::Index n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b)
    {
        if (a.params_.size() != b.params_.size()) return false;
        for (std::size_t i = 0; i < a.params_.size(); ++i)
            if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) return false;
        return true;
    }

  private:
    std::deque<Parameter<Scalar>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Handle to a graph node.
struct Var
{
    int id = -1;
};

template <typename Scalar>
class Graph
{
  public:
    using TensorT = Tensor<Scalar>;
    using Backward = std::function<void(Graph&, Var out)>;

    /// When false, no backward closures are kept (inference).
    bool record = true;
    /// When true, ops with kinks (relu, L1) fold their active pattern into
    /// kink_digest so a finite-difference probe can detect crossings.
    bool track_kinks = false;
    std::uint64_t kink_digest = 0;

    Var constant(TensorT value) { return push(std::move(value), false, nullptr); }

    Var variable(TensorT value) { return push(std::move(value), record, nullptr); }

    Var param(Parameter<Scalar>& p) { return push(p.value, record, &p); }

    const TensorT& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    /// Gradient buffer of a node, zero-initialized on first access.
    TensorT& grad(Var v)
    {
        auto& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.grad.shape() != n.value.shape()) n.grad = TensorT(n.value.shape());
        return n.grad;
    }
    bool has_grad(Var v) const
    {
        const auto& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.grad.size() == n.value.size() && n.grad.shape() == n.value.shape();
    }

    /// Creates an op output. `backward` runs only when the output needs grad.
    Var op(TensorT value, std::initializer_list<Var> inputs, Backward backward)
    {
        bool needs = false;
        for (Var in : inputs) needs = needs || requires_grad(in);
        return op(std::move(value), needs, std::move(backward));
    }
    Var op(TensorT value, bool needs_grad, Backward backward)
    {
        const bool keep = record && needs_grad;
        Var v = push(std::move(value), keep, nullptr);
        if (keep) nodes_.back().backward = std::move(backward);
        return v;
    }

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients down the tape.
    void backward(Var loss)
    {
        if (value(loss).size() != 1) throw ShapeError("backward expects a scalar loss");
        grad(loss)[0] += Scalar(1);
        for (int id = loss.id; id >= 0; --id) {
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.requires_grad || !has_grad(Var{id})) continue;
            if (n.backward) n.backward(*this, Var{id});
            if (n.param) n.param->grad.data() += n.grad.data();
        }
    }

    void mix_digest(std::uint64_t v) { kink_digest = (kink_digest ^ v) * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL; }

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node
    {
        TensorT value;
        TensorT grad;
        Backward backward;
        Parameter<Scalar>* param = nullptr;
        bool requires_grad = false;
    };

    Var push(TensorT value, bool requires_grad, Parameter<Scalar>* param)
    {
        nodes_.push_back({std::move(value), TensorT(), nullptr, param, requires_grad});
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
};


} // namespace yawdrive

#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mgbp/ops.hpp"
#include "mgbp/tensor.hpp"

namespace mgbp::autograd {

// Handle to a tape entry.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

struct GradientMap {
    std::map<std::string, Tensor> grads;

    const Tensor& at(const std::string& name) const {
        auto it = grads.find(name);
        if (it == grads.end()) throw contract_error("no gradient recorded for '" + name + "'");
        return it->second;
    }
    bool contains(const std::string& name) const { return grads.count(name) != 0; }
};

// Reverse-mode record of a forward pass. Entries are appended in execution
// order (inputs always precede consumers) and each op stores the values its
// backward rule needs. One backward pass per recording; reset() starts over.
class Tape {
public:
    Var leaf(Tensor value, std::string name = "");

    const Tensor& value(Var v) const { return node(v).value; }
    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }
    void reset();

    Var conv(Var x, Var w, Var b, const ops::ConvSpec& spec);
    Var conv_transposed(Var x, Var w, Var b, const ops::ConvSpec& spec);
    Var relu(Var x);
    Var concat_channels(Var a, Var b);
    Var bicubic_resize(Var x, int factor, ops::ResizeDir dir);
    Var gaussian_blur(Var x, int ksize, double sigma);
    Var shift2d(Var x, int dy, int dx);
    Var crop_time(Var x, int64_t t_out);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var divide(Var a, Var b);
    Var add_scalar(Var a, double s);
    Var mul_scalar(Var a, double s);
    Var abs(Var a);
    Var sqrt_clamp0(Var a);
    Var softplus(Var a);
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var mean_per_item(Var a);

    // Propagates `cotangent` (shape must match the output value) back through
    // the record. Returns gradients for every named leaf; leaves the output
    // never reached get zeros. Marks the tape consumed.
    GradientMap backward(Var output, const Tensor& cotangent);

    // Gradient of a tape entry, valid after backward(); zeros if unreached.
    Tensor grad(Var v) const;

private:
    struct Node {
        Tensor value;
        std::string name;  // non-empty for named leaves
        std::function<void(Tape&, const Tensor&)> back;
    };

    const Node& node(Var v) const {
        if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
            throw contract_error("invalid tape variable");
        return nodes_[static_cast<size_t>(v.id)];
    }
    Var push(Tensor value, std::function<void(Tape&, const Tensor&)> back,
             std::string name = "");
    void accum(int32_t id, const Tensor& g);
    void check_open() const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool consumed_ = false;
};

using LeafMap = std::map<std::string, Var>;
using GraphFn = std::function<Var(Tape&, const LeafMap&)>;

LeafMap register_leaves(Tape& tape, const std::map<std::string, Tensor>& values);

struct Recording {
    Tensor output;
    Var output_var;
    Tape tape;
    LeafMap leaves;
};

// Runs `fn` over freshly registered leaves and returns the output together
// with the tape that recorded it.
Recording record_forward(const GraphFn& fn, const std::map<std::string, Tensor>& values);

// Central-difference check of the scalar function `fn` against the tape
// gradients. Samples `samples` coordinates (uniformly across all leaf
// elements, seeded) and returns the worst relative error.
double finite_diff_check(const GraphFn& fn, const std::map<std::string, Tensor>& values,
                         double h, uint64_t seed, int samples = 60);

}  // namespace mgbp::autograd

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace kean {

// One named parameter block plus its gradient, as exposed by the model in a
// fixed registration order.
struct ParamView {
    double* data = nullptr;
    const double* grad = nullptr;
    size_t size = 0;
    std::string name;
};

// AdamW: Adam with bias correction plus decoupled weight decay
// theta <- theta - lr*wd*theta. Moment buffers are lazily bound to the first
// step()'s parameter shapes and checked afterwards.
struct OptimizerState {
    long step_count = 0;
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Slot> slots;
};

inline void adamw_step(const std::vector<ParamView>& params, OptimizerState& st) {
    if (st.learning_rate < 0.0) throw std::invalid_argument("adamw_step: negative learning rate");
    if (st.slots.empty()) {
        st.slots.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            st.slots[i].m.assign(params[i].size, 0.0);
            st.slots[i].v.assign(params[i].size, 0.0);
        }
    }
    if (st.slots.size() != params.size())
        throw std::invalid_argument("adamw_step: parameter group count changed");

    st.step_count += 1;
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));

    for (size_t g = 0; g < params.size(); ++g) {
        const ParamView& p = params[g];
        OptimizerState::Slot& slot = st.slots[g];
        if (slot.m.size() != p.size)
            throw std::invalid_argument("adamw_step: shape changed for " + p.name);
        for (size_t i = 0; i < p.size; ++i) {
            double gi = p.grad[i];
            if (std::isnan(gi))
                throw std::runtime_error("adamw_step: NaN gradient in " + p.name + "[" +
                                         std::to_string(i) + "]");
            slot.m[i] = st.beta1 * slot.m[i] + (1.0 - st.beta1) * gi;
            slot.v[i] = st.beta2 * slot.v[i] + (1.0 - st.beta2) * gi * gi;
            double mhat = slot.m[i] / bc1;
            double vhat = slot.v[i] / bc2;
            double theta = p.data[i];
            p.data[i] = theta - st.learning_rate * st.weight_decay * theta -
                        st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
        }
    }
}

}  // namespace kean

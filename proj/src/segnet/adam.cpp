#include "fundus/segnet.hpp"

#include <cmath>

namespace fundus::segnet {

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
    if (params.size() != grads.size()) {
        throw SegnetError(SegnetError::Kind::shape_mismatch, "adam_step: parameter/gradient list lengths differ");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size()) {
            throw SegnetError(SegnetError::Kind::shape_mismatch,
                              "adam_step: buffer " + std::to_string(k) + " size differs from its gradient");
        }
    }
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
            state.m[k].assign(params[k].size(), 0.0);
            state.v[k].assign(params[k].size(), 0.0);
        }
    } else if (state.m.size() != params.size()) {
        throw SegnetError(SegnetError::Kind::shape_mismatch, "adam_step: optimiser state does not match parameters");
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        std::span<double> p = params[k];
        std::span<const double> g = grads[k];
        std::vector<double>& m = state.m[k];
        std::vector<double>& v = state.v[k];
        if (m.size() != p.size()) {
            throw SegnetError(SegnetError::Kind::shape_mismatch, "adam_step: moment buffer size mismatch");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

void adam_step(UNetModel& model, const UNetGradients& grads, AdamState& state) {
    if (model.base_channels != grads.base_channels || model.n_classes != grads.n_classes) {
        throw SegnetError(SegnetError::Kind::shape_mismatch, "adam_step: gradient set is for a different architecture");
    }
    std::vector<std::span<double>> p;
    std::vector<std::span<const double>> g;
    auto model_blocks = param_blocks(model);
    auto grad_blocks = param_blocks(grads);
    for (std::size_t k = 0; k < model_blocks.size(); ++k) {
        if (!model_blocks[k].trainable) continue;
        p.push_back(model_blocks[k].data);
        g.push_back(grad_blocks[k].data);
    }
    adam_step(p, g, state);
    ++model.revision;
}

}  // namespace fundus::segnet

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "msggan/autograd/variable.hpp"

namespace msggan {

// Single-writer optimizers over leaf parameters. Parameters without an
// accumulated gradient are left untouched by step().
template <typename T>
class Optimizer {
public:
    explicit Optimizer(std::vector<Variable<T>> params, T lr) : params_(std::move(params)), lr_(lr) {}
    virtual ~Optimizer() = default;

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    virtual void step() = 0;
    virtual std::string name() const = 0;

    // Mutable views of the moment buffers, for checkpointing.
    virtual std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() = 0;
    virtual std::uint64_t step_count() const = 0;
    virtual void set_step_count(std::uint64_t t) = 0;

    const std::vector<Variable<T>>& params() const { return params_; }

protected:
    std::vector<Variable<T>> params_;
    T lr_;
};

template <typename T>
class Adam final : public Optimizer<T> {
public:
    Adam(std::vector<Variable<T>> params, T lr, T beta1 = T{0}, T beta2 = T{0.99},
         T eps = T{1e-8})
        : Optimizer<T>(std::move(params), lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& p : this->params_) {
            m_.push_back(Tensor<T>::zeros(p.shape()));
            v_.push_back(Tensor<T>::zeros(p.shape()));
        }
    }

    void step() override {
        ++t_;
        const T bc1 = T{1} - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T{1} - std::pow(beta2_, static_cast<T>(t_));
        for (std::size_t i = 0; i < this->params_.size(); ++i) {
            auto& p = this->params_[i];
            if (!p.has_grad()) continue;
            const Tensor<T>& g = p.grad();
            Tensor<T>& val = p.value();
            for (std::size_t j = 0; j < val.numel(); ++j) {
                m_[i][j] = beta1_ * m_[i][j] + (T{1} - beta1_) * g[j];
                v_[i][j] = beta2_ * v_[i][j] + (T{1} - beta2_) * g[j] * g[j];
                const T mh = m_[i][j] / bc1;
                const T vh = v_[i][j] / bc2;
                val[j] -= this->lr_ * mh / (std::sqrt(vh) + eps_);
            }
        }
    }

    std::string name() const override { return "adam"; }

    std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() override {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (std::size_t i = 0; i < m_.size(); ++i) {
            out.emplace_back("m." + std::to_string(i), &m_[i]);
            out.emplace_back("v." + std::to_string(i), &v_[i]);
        }
        return out;
    }

    std::uint64_t step_count() const override { return t_; }
    void set_step_count(std::uint64_t t) override { t_ = t; }

private:
    T beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

template <typename T>
class RMSprop final : public Optimizer<T> {
public:
    RMSprop(std::vector<Variable<T>> params, T lr, T decay = T{0.99}, T eps = T{1e-8})
        : Optimizer<T>(std::move(params), lr), decay_(decay), eps_(eps) {
        for (auto& p : this->params_) v_.push_back(Tensor<T>::zeros(p.shape()));
    }

    void step() override {
        ++t_;
        for (std::size_t i = 0; i < this->params_.size(); ++i) {
            auto& p = this->params_[i];
            if (!p.has_grad()) continue;
            const Tensor<T>& g = p.grad();
            Tensor<T>& val = p.value();
            for (std::size_t j = 0; j < val.numel(); ++j) {
                v_[i][j] = decay_ * v_[i][j] + (T{1} - decay_) * g[j] * g[j];
                val[j] -= this->lr_ * g[j] / (std::sqrt(v_[i][j]) + eps_);
            }
        }
    }

    std::string name() const override { return "rmsprop"; }

    std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() override {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (std::size_t i = 0; i < v_.size(); ++i)
            out.emplace_back("v." + std::to_string(i), &v_[i]);
        return out;
    }

    std::uint64_t step_count() const override { return t_; }
    void set_step_count(std::uint64_t t) override { t_ = t; }

private:
    T decay_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> v_;
};

}  // namespace msggan

#pragma once

#include "leddam/matrix.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace leddam {

struct ParamTensor {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    void zero_grad() { grad.fill(0.0); }
};

/// Owns every learnable tensor of a model. Tensors live at stable addresses,
/// so modules keep `ParamTensor*` handles into the store. Iteration order is
/// registration order.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) noexcept = default;
    ParamStore& operator=(ParamStore&&) noexcept = default;

    /// Registers a tensor; a name may be registered only once.
    ParamTensor& add(std::string name, Matrix value, bool trainable = true);

    ParamTensor* find(std::string_view name);
    const ParamTensor* find(std::string_view name) const;
    ParamTensor& at(std::string_view name);
    const ParamTensor& at(std::string_view name) const;

    std::size_t size() const noexcept { return tensors_.size(); }
    ParamTensor& operator[](std::size_t i) { return *tensors_[i]; }
    const ParamTensor& operator[](std::size_t i) const { return *tensors_[i]; }

    void zero_grad();

    /// Number of scalars across trainable tensors.
    std::size_t trainable_scalar_count() const;

    std::vector<Matrix> snapshot() const;
    void restore(const std::vector<Matrix>& values);

private:
    std::vector<std::unique_ptr<ParamTensor>> tensors_;
};

} // namespace leddam

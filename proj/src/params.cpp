#include "leddam/params.hpp"

#include "leddam/errors.hpp"

namespace leddam {

ParamTensor& ParamStore::add(std::string name, Matrix value, bool trainable) {
    if (find(name) != nullptr) throw ConfigError("parameter '" + name + "' registered twice");
    auto p = std::make_unique<ParamTensor>();
    p->grad = Matrix(value.rows(), value.cols());
    p->name = std::move(name);
    p->value = std::move(value);
    p->trainable = trainable;
    tensors_.push_back(std::move(p));
    return *tensors_.back();
}

ParamTensor* ParamStore::find(std::string_view name) {
    for (auto& p : tensors_)
        if (p->name == name) return p.get();
    return nullptr;
}

const ParamTensor* ParamStore::find(std::string_view name) const {
    for (const auto& p : tensors_)
        if (p->name == name) return p.get();
    return nullptr;
}

ParamTensor& ParamStore::at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const ParamTensor& ParamStore::at(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

void ParamStore::zero_grad() {
    for (auto& p : tensors_) p->zero_grad();
}

std::size_t ParamStore::trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : tensors_)
        if (p->trainable) n += p->value.size();
    return n;
}

std::vector<Matrix> ParamStore::snapshot() const {
    std::vector<Matrix> out;
    out.reserve(tensors_.size());
    for (const auto& p : tensors_) out.push_back(p->value);
    return out;
}

void ParamStore::restore(const std::vector<Matrix>& values) {
    if (values.size() != tensors_.size()) {
        throw DimensionError("restore: snapshot has " + std::to_string(values.size()) + " tensors, store has " +
                             std::to_string(tensors_.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        require_same_shape(tensors_[i]->value, values[i], tensors_[i]->name.c_str());
        tensors_[i]->value = values[i];
    }
}

} // namespace leddam

#include "locrank/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "locrank/errors.hpp"

namespace locrank {

int numel_of(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        if (d < 0) throw ConfigError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
}

Tensor Tensor::zeros(std::vector<int> s) { return Tensor(std::move(s)); }

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> v) {
    if (numel_of(s) != static_cast<int>(v.size()))
        throw ConfigError("tensor literal: " + locrank::shape_str(s) + " does not hold " +
                          std::to_string(v.size()) + " values");
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(v);
    return t;
}

void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw RuntimeFailure("non-finite values in " + what);
}

std::string Tensor::shape_str() const { return locrank::shape_str(shape); }

}  // namespace locrank

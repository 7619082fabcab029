#pragma once

#include <string>
#include <vector>

namespace locrank {

// Dense row-major tensor of doubles. Shapes are small (rank <= 4) and all
// differentiable state in the project lives in these.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, double v);
    static Tensor scalar(double v);
    static Tensor from(std::vector<int> s, std::vector<double> v);

    int numel() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at(int i) { return data[static_cast<size_t>(i)]; }
    double at(int i) const { return data[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double& at(int i, int j, int k) {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double at(int i, int j, int k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double& at(int i, int j, int k, int l) {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }
    double at(int i, int j, int k, int l) const {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }

    void fill(double v);
    bool all_finite() const;
    // Throws RuntimeFailure naming `what` if any entry is NaN/Inf.
    void require_finite(const std::string& what) const;

    std::string shape_str() const;
};

int numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace locrank

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace vpvnet {

enum class TensorKind { weight, bias };

/// One tensor inside the flat parameter vector.
struct TensorSlot {
    std::size_t layer;   // linear layer ordinal in forward order
    TensorKind kind;
    std::size_t rows;
    std::size_t cols;    // 1 for biases
    std::size_t offset;  // first flat index; row-major within the tensor

    std::size_t size() const { return rows * cols; }
    std::size_t flat(std::size_t r, std::size_t c) const { return offset + r * cols + c; }
};

/// Deterministic mapping (layer, tensor, row, col) -> flat index.
struct ParamLayout {
    std::vector<TensorSlot> slots;

    std::size_t size() const { return slots.empty() ? 0 : slots.back().offset + slots.back().size(); }
    bool operator==(const ParamLayout& other) const;
};

/// Flat, ordered vector of all trainable parameters plus its layout.
struct ParamVector {
    Eigen::VectorXd values;
    ParamLayout layout;

    std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

}  // namespace vpvnet

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctcn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Bad or inconsistent input data / files (CLI exit code 3).
struct DataError : Error {
    using Error::Error;
};

// Numeric failure such as divergence or non-finite values (CLI exit code 4).
struct NumericError : Error {
    using Error::Error;
};

// Dense row-major matrix over a frame axis: row = frame, column = channel.
// All arithmetic is carried out in 64-bit; 32-bit is used only as a storage
// format in files.
class SeqMatrix {
public:
    SeqMatrix() = default;
    SeqMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const SeqMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace ctcn

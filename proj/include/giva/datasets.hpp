#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "giva/matrix.hpp"
#include "giva/nn.hpp"

namespace giva::datasets {

struct Dataset {
    Matrix inputs; // d x n, columns are examples
    nn::Targets targets;

    index_t size() const { return inputs.cols(); }
    index_t input_dim() const { return inputs.rows(); }
    nn::Batch batch(std::span<const index_t> idx) const;
    nn::Batch all() const;
};

struct TeacherStudentData {
    Dataset train;
    Dataset val;
    Matrix w_pt;       // m x d pretrained weight the learner starts from
    Matrix delta_star; // m x d hidden update, exact rank k, unit Frobenius norm
};

/// Regression task y = (W_pt + Delta*) x + noise * xi with x, xi standard
/// normal. k = 0 makes Delta* the zero matrix (pretrained weights already
/// optimal up to noise).
TeacherStudentData gen_teacher_student(index_t m, index_t d, index_t k, index_t n, double noise,
                                       std::uint64_t seed, double split = 0.8);

/// Gaussian class clusters with round-robin (stratified) labels.
std::pair<Dataset, Dataset> gen_blobs(index_t classes, index_t d, index_t n, double separation,
                                      std::uint64_t seed, double split = 0.8);

/// Numeric CSV with a header row; one column becomes the target, the rest
/// become features. Row order is preserved.
enum class CsvTask { regression, classification };
Dataset load_csv(const std::string& path, const std::string& target_column,
                 CsvTask task = CsvTask::regression);

/// Contiguous split; callers that need shuffling shuffle first.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double split);

} // namespace giva::datasets

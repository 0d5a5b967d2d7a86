#include "giva/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "giva/error.hpp"
#include "giva/linalg.hpp"
#include "giva/rng.hpp"

namespace giva::datasets {

namespace {

Matrix gather_cols(const Matrix& m, std::span<const index_t> idx) {
    Matrix out(m.rows(), idx.size());
    for (index_t j = 0; j < idx.size(); ++j) {
        if (idx[j] >= m.cols()) {
            throw DimensionError("gather: column index " + std::to_string(idx[j]) +
                                 " out of range");
        }
        for (index_t i = 0; i < m.rows(); ++i) {
            out(i, j) = m(i, idx[j]);
        }
    }
    return out;
}

} // namespace

nn::Batch Dataset::batch(std::span<const index_t> idx) const {
    nn::Batch b;
    b.inputs = gather_cols(inputs, idx);
    if (const auto* y = std::get_if<Matrix>(&targets)) {
        b.targets = gather_cols(*y, idx);
    } else {
        const auto& labels = std::get<std::vector<int>>(targets);
        std::vector<int> sub(idx.size());
        for (index_t j = 0; j < idx.size(); ++j) {
            sub[j] = labels[idx[j]];
        }
        b.targets = std::move(sub);
    }
    return b;
}

nn::Batch Dataset::all() const { return {inputs, targets}; }

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double split) {
    if (!(split > 0.0 && split < 1.0)) {
        throw ConfigError("split must be in (0, 1), got " + std::to_string(split));
    }
    const index_t n = ds.size();
    if (n < 2) {
        throw DataError("split: need at least 2 examples, have " + std::to_string(n));
    }
    index_t n_train = static_cast<index_t>(split * static_cast<double>(n));
    n_train = std::clamp<index_t>(n_train, 1, n - 1);
    std::vector<index_t> head(n_train), tail(n - n_train);
    for (index_t i = 0; i < n_train; ++i) {
        head[i] = i;
    }
    for (index_t i = n_train; i < n; ++i) {
        tail[i - n_train] = i;
    }
    auto to_dataset = [&](std::span<const index_t> idx) {
        nn::Batch b = ds.batch(idx);
        return Dataset{std::move(b.inputs), std::move(b.targets)};
    };
    return {to_dataset(head), to_dataset(tail)};
}

TeacherStudentData gen_teacher_student(index_t m, index_t d, index_t k, index_t n, double noise,
                                       std::uint64_t seed, double split) {
    if (m < 1 || d < 1) {
        throw DimensionError("gen_teacher_student: dims must be positive");
    }
    if (k > std::min(m, d)) {
        throw RankError("gen_teacher_student: k=" + std::to_string(k) + " exceeds min(m, d)=" +
                        std::to_string(std::min(m, d)));
    }
    if (n < 2) {
        throw DataError("gen_teacher_student: need n >= 2");
    }
    if (noise < 0.0) {
        throw ConfigError("gen_teacher_student: negative noise");
    }

    TeacherStudentData out;
    out.w_pt = gaussian_matrix(m, d, mix_seed(seed, 1), 1.0 / std::sqrt(double(d)));
    if (k == 0) {
        out.delta_star = Matrix(m, d);
    } else {
        Matrix low = matmul(gaussian_matrix(m, k, mix_seed(seed, 2)),
                            gaussian_matrix(k, d, mix_seed(seed, 3)));
        out.delta_star = scaled(low, 1.0 / linalg::frobenius_norm(low));
    }

    Matrix x = gaussian_matrix(d, n, mix_seed(seed, 4));
    Matrix y = matmul(add(out.w_pt, out.delta_star), x);
    if (noise > 0.0) {
        y = add(y, scaled(gaussian_matrix(m, n, mix_seed(seed, 5)), noise));
    }

    Dataset full{std::move(x), std::move(y)};
    auto [train, val] = split_dataset(full, split);
    out.train = std::move(train);
    out.val = std::move(val);
    return out;
}

std::pair<Dataset, Dataset> gen_blobs(index_t classes, index_t d, index_t n, double separation,
                                      std::uint64_t seed, double split) {
    if (classes < 2) {
        throw ConfigError("gen_blobs: need at least 2 classes");
    }
    if (d < 1 || n < 2 * classes) {
        throw DataError("gen_blobs: need n >= 2 per class");
    }
    Matrix centers = scaled(gaussian_matrix(d, classes, mix_seed(seed, 1)), separation);
    Matrix x = gaussian_matrix(d, n, mix_seed(seed, 2));
    std::vector<int> labels(n);
    for (index_t j = 0; j < n; ++j) {
        const index_t c = j % classes;
        labels[j] = static_cast<int>(c);
        for (index_t i = 0; i < d; ++i) {
            x(i, j) += centers(i, c);
        }
    }
    Dataset full{std::move(x), std::move(labels)};
    return split_dataset(full, split);
}

Dataset load_csv(const std::string& path, const std::string& target_column, CsvTask task) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("load_csv: cannot open '" + path + "'");
    }

    auto split_line = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            cells.emplace_back();
        }
        return cells;
    };

    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("load_csv: '" + path + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const std::vector<std::string> header = split_line(line);
    index_t target_idx = header.size();
    for (index_t i = 0; i < header.size(); ++i) {
        if (header[i] == target_column) {
            target_idx = i;
        }
    }
    if (target_idx == header.size()) {
        throw ParseError("load_csv: target column '" + target_column + "' not in header of '" +
                         path + "'");
    }
    if (header.size() < 2) {
        throw ParseError("load_csv: need at least one feature column besides the target");
    }

    std::vector<std::vector<double>> rows;
    index_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        }
        std::vector<double> row(cells.size());
        for (index_t i = 0; i < cells.size(); ++i) {
            const std::string& c = cells[i];
            const char* first = c.data();
            const char* last = c.data() + c.size();
            while (first != last && (*first == ' ' || *first == '\t')) {
                ++first;
            }
            while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) {
                --last;
            }
            auto [ptr, ec] = std::from_chars(first, last, row[i]);
            if (ec != std::errc() || ptr != last || first == last) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": cell '" + c +
                                 "' in column '" + header[i] + "' is not numeric");
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw DataError("load_csv: '" + path + "' has a header but no data rows");
    }

    const index_t n = rows.size();
    const index_t dfeat = header.size() - 1;
    Matrix inputs(dfeat, n);
    Matrix ytarget(1, n);
    std::vector<int> labels(n);
    for (index_t j = 0; j < n; ++j) {
        index_t fi = 0;
        for (index_t i = 0; i < header.size(); ++i) {
            if (i == target_idx) {
                continue;
            }
            inputs(fi++, j) = rows[j][i];
        }
        const double t = rows[j][target_idx];
        if (task == CsvTask::classification) {
            if (t < 0.0 || t != std::floor(t)) {
                throw DataError(path + ": row " + std::to_string(j + 2) + ": label " +
                                std::to_string(t) + " is not a non-negative integer");
            }
            labels[j] = static_cast<int>(t);
        } else {
            ytarget(0, j) = t;
        }
    }
    Dataset ds;
    ds.inputs = std::move(inputs);
    if (task == CsvTask::classification) {
        ds.targets = std::move(labels);
    } else {
        ds.targets = std::move(ytarget);
    }
    return ds;
}

} // namespace giva::datasets

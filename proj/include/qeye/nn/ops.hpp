#pragma once

#include <span>
#include <vector>

#include "qeye/nn/graph.hpp"
#include "qeye/random.hpp"

namespace qeye::nn {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1 x n row vector to every row of a.
Var add_row(Var a, Var row);
/// Multiplies row i of a by s(i, 0).
Var scale_rows(Var a, Var s);
/// Multiplies every row of a elementwise by the 1 x n vector `row`.
Var mul_row(Var a, Var row);

Var relu(Var a);
/// tanh-approximated GELU.
Var gelu(Var a);
Var tanh(Var a);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Row-wise softmax. Entries with key_valid[j] == false get weight exactly 0.
Var softmax_rows(Var x, std::span<const char> key_valid = {});

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// out.row(i) = a.row(i + offset), zero where out of range.
Var shift_rows(Var a, Eigen::Index offset);

/// Embedding lookup: out.row(i) = table.row(ids[i]).
Var embedding(Graph& g, Parameter& table, std::span<const int> ids);

/// Zeroes rows whose mask entry is 0 (the result does not depend on them).
Var mask_rows(Var a, std::span<const char> row_valid);
/// Mean over rows with row_valid != 0 -> 1 x cols.
Var mean_rows(Var a, std::span<const char> row_valid = {});
/// Max over rows with row_valid != 0 -> 1 x cols.
Var max_rows(Var a, std::span<const char> row_valid = {});

/// Per-row displacement scale min(|z_i| / |h_i| * beta, 1); 0 when |h_i| = 0.
Var displacement_scale(Var z, Var h, double beta);

Var dropout(Var a, double p, Rng& rng);

/// Mean cross-entropy of softmax(logits.row(i)) against targets[i].
Var cross_entropy(Var logits, std::span<const int> targets);

Var sum_all(Var a);

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits);

}  // namespace qeye::nn

#pragma once

#include <random>
#include <vector>

#include "chronoalign/ad/graph.hpp"

namespace chronoalign::ad {

// Differentiable primitives. Shapes are checked eagerly and violations throw
// std::invalid_argument. All operands of one call must live on the same graph.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
/// a (r x c) + row (1 x c) broadcast over rows.
Var add_row(Var a, Var row);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
/// Softmax over each row independently.
Var softmax_rows(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, int start, int count);
Var slice_rows(Var a, int start, int count);
Var transpose(Var a);
/// Rows of table selected by index; used for the fed-back label embedding.
Var gather_rows(Var table, const std::vector<int>& indices);
Var sum_all(Var a);

/// 1 x 1 Euclidean distance between two row vectors.
Var euclidean_distance(Var u, Var v);
/// out(i, j) = || a.row(i) - b.row(j) ||_2 for a (n x d), b (m x d).
Var pairwise_distances(Var a, Var b);

/// Inverted dropout: in training mode each element is zeroed with probability p
/// and survivors are scaled by 1 / (1 - p). Identity when !training or p == 0.
Var dropout(Var x, double p, bool training, std::mt19937_64& rng);

/// -log softmax(logits)[target] for a 1 x m logits row, log-sum-exp stabilized.
Var cross_entropy(Var logits, int target);

}  // namespace chronoalign::ad

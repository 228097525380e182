#pragma once

#include "gnnkit/graph.hpp"
#include "gnnkit/tensor.hpp"

// Closed-form limit of repeated propagation.  For a connected self-looped
// graph the operator powers converge to a rank-one matrix whose entries
// depend only on the endpoint degrees:
//
//   limit[i][j] = deg_sl[i]^r * deg_sl[j]^(1-r) / total_degree_mass
//
// where deg_sl are the self-looped degrees and the mass is their sum
// (2m + n for an unweighted graph).

namespace gnnkit {

// Dense N x N limit matrix.  Errors on graphs without self-loop provenance or
// on disconnected graphs, where the limit holds only per component.
Tensor stationary_limit(const Graph& g, double r);

// limit * X computed through the rank-one factorization, avoiding the dense
// N x N intermediate.
Tensor stationary_representation(const Graph& g, const Tensor& features,
                                 double r);

// Densifies a sparse operator (test and diagnostic use).
Tensor to_dense(const NormalizedAdjacency& adj);

}  // namespace gnnkit

#pragma once

// Brute-force reference implementations for tests. Nothing here includes the
// policy, rewards or selector code: inputs are plain vectors so the two
// implementations share no arithmetic.

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

double weighted_dot(const Vec& x, const Vec& diag, const Vec& y);
Vec softmax(const Vec& v);

/// Window-feasible permutations of 0..L-1: at every step the chosen mention
/// must be one of the W lowest-numbered unresolved ones. Lexicographic order.
/// Throws std::invalid_argument when L > 9.
std::vector<std::vector<std::size_t>> enumerate_orderings(std::size_t L, std::size_t W);

/// Same count by recursion on the number of unresolved mentions.
std::size_t count_orderings(std::size_t L, std::size_t W);

/// Sums quoted for a length-L flag pattern, computed from their definitions
/// by direct enumeration.
double r1_base(const std::vector<bool>& flags);
double r3_base(const std::vector<bool>& flags);
/// lambda = {TT, TF, FF, FT}; the initial state counts as correct.
double r2_base(const std::vector<bool>& flags, const std::array<double, 4>& lambda);
/// Coefficients of {TT, TF, FF, FT} in r2_base.
std::array<int, 4> transition_coefficients(const std::vector<bool>& flags);

/// Every flag pattern of length 7 consistent with the published values for
/// each of the three worked-example sequences.
struct WorkedExampleFlags {
  std::vector<std::vector<bool>> s1, s2, s3;
};
WorkedExampleFlags solve_worked_example_flags();

/// pi over the actions, recomputed in straight-line loops:
///   c_i = max_a  D_a . b3 . s_i
///   keep the K largest c (earlier index on ties), w = softmax(kept c)
///   logit_a = sum_j w_j  D_a . b4 . s_j,  pi = softmax(logit)
Vec recompute_policy_distribution(const Mat& history, const Mat& actions, const Vec& b3,
                                  const Vec& b4, std::size_t K);

/// [m; sum_j psi_j e_j] scaled as in the weighted concatenation.
Vec recompute_action_representation(const Vec& mention, const Vec& psi, const Mat& candidates);

/// f over a set of linked vectors: score each by its best candidate match,
/// keep K, softmax-weight. Empty -> zeros.
Vec recompute_linked_feature(const Mat& candidates, const Mat& linked, const Vec& diag,
                             std::size_t K);

/// Neighborhood coherence per candidate, rebuilding the neighborhood from the
/// adjacency list.
Vec recompute_neighborhood_scores(const Mat& candidates, const std::vector<std::string>& linked,
                                  const std::map<std::string, std::vector<std::string>>& edges,
                                  const std::map<std::string, Vec>& vectors, const Vec& b6,
                                  std::size_t K);

}  // namespace oracle

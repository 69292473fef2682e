#pragma once

// Synthetic instance families and the on-disk instance format.
//
// Objectives use Q = F Sigma F' + D with Sigma = H H'. Draw order from the
// generator is D, then H (row-major), then F (row-major), then c; each F entry
// consumes two draws (the sparsity coin, then the value).

#include "perspqp/core_model.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace perspqp {

enum class Family { Cardinality, GridPath };

const char* to_string(Family f);
Family parse_family(const std::string& s);

struct GenSpec {
  Family family = Family::Cardinality;
  Index n = 0;       // cardinality: number of variables
  Index grid_p = 0;  // grid path: rows
  Index grid_q = 0;  // grid path: columns
  Index r = 1;
  double alpha = 0.1;
  double omega = 1.0;
  std::uint64_t seed = 0;
  bool discrete = false;
};

/// std::mt19937_64 with a fixed mapping to doubles: uniform01 returns
/// (k + 0.5) 2^-53 for the top 53 bits k of a draw, so it never hits 0 or 1.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform01() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

 private:
  std::mt19937_64 eng_;
};

QuadraticFormd gen_quadratic(Index n, Index r, double alpha, Rng& rng);
/// c_i = -2 sqrt(Q_ii) U with U uniform on (0, 1).
Eigen::VectorXd gen_costs(const QuadraticFormd& q, Rng& rng);

/// sum x = floor(n/5), 0 <= x <= 1.
ConicInstanced gen_cardinality(const GenSpec& spec);
/// Unit flow from the top-left to the bottom-right node of a p x q grid with
/// right and down arcs; n = 2pq - p - q, one conservation row per node.
ConicInstanced gen_grid_path(const GenSpec& spec);

/// Dispatches on spec.family and checks that the LP relaxation is feasible.
ConicInstanced generate(const GenSpec& spec);

/// Arc index of the right arc leaving node (i, j) (0-based), and of the down arc.
Index grid_right_arc(Index p, Index q, Index i, Index j);
Index grid_down_arc(Index p, Index q, Index i, Index j);

/// Stable identifier used for file names and CSV ids.
std::string instance_id(const InstanceMeta& meta);

inline constexpr int kInstanceFormatVersion = 1;

std::string instance_to_string(const ConicInstanced& inst);
ConicInstanced instance_from_string(const std::string& text, const std::string& origin = "<string>");
void save_instance(const ConicInstanced& inst, const std::string& path);
ConicInstanced load_instance(const std::string& path);

}  // namespace perspqp

#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pcedtr {

// One subject's record from a two-stage trial with partial compliance.
// Stage-2 fields exist only for non-responders; responders continue their
// Stage-1 treatment and are never re-randomized.
struct Trajectory {
  std::string id;
  Eigen::VectorXd x0;               // baseline covariates, length m1
  int a1 = 1;                       // Stage-1 treatment, -1 or +1
  double d_obs1 = 0.0;              // observed Stage-1 compliance in [0,1]
  int s = 0;                        // responder indicator
  std::optional<Eigen::VectorXd> x1;  // intermediate covariates, iff s == 0
  std::optional<int> a2;              // Stage-2 treatment, iff s == 0
  std::optional<double> d_obs2;       // iff s == 0 and a2 == +1
  double y = 0.0;                   // outcome
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  int m1 = 0;
  int m2 = 0;
  int n() const { return static_cast<int>(trajectories.size()); }
};

// Treatment-sequence classification; the six rows correspond to
// (a1, s, a2) = (+1,1,-), (+1,0,+1), (+1,0,-1), (-1,1,-), (-1,0,+1), (-1,0,-1).
int classify_sequence(const Trajectory& t);

enum class SlotState { observed, latent, inert };

// Status of the four potential compliances D1..D4 for sequence k.
std::array<SlotState, 4> slot_states(int k);

// The latent compliance indices (0-based into D1..D4) for sequence k.
std::vector<int> latent_slots(int k);
std::vector<int> observed_slots(int k);
std::vector<int> inert_slots(int k);

// Coordinates that enter the copula and outcome model for sequence k:
// {D1,D2} for responders, plus D3 (k=2,3) or D4 (k=5,6).
const std::vector<int>& active_slots(int k);

// Throws ValidationError naming the violated invariant.
void validate(const Trajectory& t, int row = -1);
void validate(const Dataset& ds);

// CSV schema: id, x0_1..x0_m1, a1, d_obs1, s, x1_1..x1_m2, a2, d_obs2, y.
// Leading '#' lines are metadata comments and are skipped on read.
Dataset read_csv(std::istream& in);
Dataset read_csv_file(const std::string& path);
void write_csv(const Dataset& ds, std::ostream& out,
               const std::string& header_comment = "");
void write_csv_file(const Dataset& ds, const std::string& path,
                    const std::string& header_comment = "");

}  // namespace pcedtr

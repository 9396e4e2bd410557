// SPDX-License-Identifier: Apache-2.0
// Planar arrays and arrays of subarrays (AOSA): element layout, steering vectors,
// sector gains and subarray array factors with and without beam split.
#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "thzloc/dual.hpp"
#include "thzloc/geometry.hpp"

namespace thzloc {

enum class Role { BS, UE, RIS };

struct GainModel {
    enum class Kind { Omni, Sector };
    Kind kind = Kind::Omni;
    double G0 = 1.0;      // amplitude-squared gain inside the sector
    double phi_h = M_PI;  // azimuth half-power beamwidth
    double theta_h = M_PI; // elevation half-power beamwidth
};

// Grids are row-major with the local y axis fastest: element index = row * cols + col,
// local y grows with col and local z grows with row. Every array lies on its local YZ plane.
struct ArraySpec {
    Role role = Role::BS;
    Pose pose;
    int sa_rows = 1, sa_cols = 1; // subarray grid
    int ae_rows = 1, ae_cols = 1; // elements per subarray
    double ae_spacing = 5e-4;     // meters
    double sa_spacing = 0.0;      // meters; <= 0 selects contiguous tiling
    GainModel gain;

    int num_sa() const { return sa_rows * sa_cols; }
    int num_ae_per_sa() const { return ae_rows * ae_cols; }
    double sa_pitch() const;
    void validate() const; // throws ConfigError
};

struct SubarrayLayout {
    Vec3 center;                  // SA center, array-local frame
    std::vector<Vec3> ae_offsets; // element offsets relative to the SA center
};

std::vector<Vec3> centered_grid(int rows, int cols, double pitch);
std::vector<SubarrayLayout> element_positions(const ArraySpec &spec);
// All element positions in the array-local frame, SA by SA.
std::vector<Vec3> flat_element_positions(const ArraySpec &spec);

Eigen::VectorXcd steering_vector(const std::vector<Vec3> &positions, double f, const AnglePair &a);
Eigen::VectorXcd beamforming_vector(const std::vector<Vec3> &sa_positions, double f, const AnglePair &beam);
double sector_gain(const GainModel &g, const AnglePair &a);

// Reference (element-by-element) subarray array factor.
std::complex<double> array_factor(const std::vector<Vec3> &sa_positions, double f_k, double f_c,
                                  const AnglePair &steer, const AnglePair &beam, bool bse);

// Separable evaluation for centered uniform subarray grids. The per-axis sums are real
// because the grid is symmetric, so the array factor is real.
struct SubarrayGrid {
    std::vector<double> y; // per-column offsets
    std::vector<double> z; // per-row offsets
    double inv_sqrt_n = 1.0;

    SubarrayGrid() = default;
    SubarrayGrid(int rows, int cols, double pitch);
    bool trivial() const { return y.size() == 1 && z.size() == 1; }
};

// steer, beam: local direction vectors; fs: frequency applied to the steering phase,
// fb: frequency applied to the beam phase (fb = fs without beam split, fb = f_c with it).
template <class T>
T grid_array_factor(const SubarrayGrid &g, const Vec3T<T> &steer, const Vec3 &beam, double fs, double fb) {
    using std::cos;
    if (g.trivial()) return T(1.0);
    const double k = 2.0 * M_PI / kSpeedOfLight;
    const T uy = k * (fs * steer(1) - fb * beam(1));
    const T uz = k * (fs * steer(2) - fb * beam(2));
    T sy(0.0), sz(0.0);
    for (double y : g.y) sy += cos(uy * y);
    for (double z : g.z) sz += cos(uz * z);
    return sy * sz * g.inv_sqrt_n;
}

} // namespace thzloc

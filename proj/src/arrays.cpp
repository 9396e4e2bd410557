// SPDX-License-Identifier: Apache-2.0
#include "thzloc/arrays.hpp"

#include <algorithm>
#include <sstream>

#include "thzloc/errors.hpp"

namespace thzloc {

double ArraySpec::sa_pitch() const {
    if (sa_spacing > 0.0) return sa_spacing;
    return std::max(ae_rows, ae_cols) * ae_spacing;
}

void ArraySpec::validate() const {
    auto fail = [](const std::string &m) { throw ConfigError(m); };
    if (sa_rows < 1 || sa_cols < 1) fail("array: subarray counts must be >= 1");
    if (ae_rows < 1 || ae_cols < 1) fail("array: element counts must be >= 1");
    if (!(ae_spacing > 0.0)) fail("array: ae_spacing must be > 0");
    if (sa_spacing < 0.0) fail("array: sa_spacing must be >= 0 (0 = contiguous)");
    if (role == Role::RIS && (ae_rows != 1 || ae_cols != 1)) fail("array: RIS elements are 1x1 units");
    if (gain.kind == GainModel::Kind::Sector) {
        if (!(gain.G0 > 0.0)) fail("array: sector G0 must be > 0");
        if (!(gain.phi_h > 0.0 && gain.phi_h <= M_PI)) fail("array: sector phi_h must be in (0, pi]");
        if (!(gain.theta_h > 0.0 && gain.theta_h <= M_PI)) fail("array: sector theta_h must be in (0, pi]");
    }
    try {
        check_euler(pose.orientation);
    } catch (const DomainError &e) {
        fail(std::string("array orientation: ") + e.what());
    }
}

std::vector<Vec3> centered_grid(int rows, int cols, double pitch) {
    std::vector<Vec3> out;
    out.reserve(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out.emplace_back(0.0, (c - 0.5 * (cols - 1)) * pitch, (r - 0.5 * (rows - 1)) * pitch);
    return out;
}

std::vector<SubarrayLayout> element_positions(const ArraySpec &spec) {
    spec.validate();
    std::vector<Vec3> centers = centered_grid(spec.sa_rows, spec.sa_cols, spec.sa_pitch());
    std::vector<Vec3> offsets = centered_grid(spec.ae_rows, spec.ae_cols, spec.ae_spacing);
    std::vector<SubarrayLayout> out;
    out.reserve(centers.size());
    for (const Vec3 &c : centers) out.push_back({c, offsets});
    return out;
}

std::vector<Vec3> flat_element_positions(const ArraySpec &spec) {
    std::vector<Vec3> out;
    for (const auto &sa : element_positions(spec))
        for (const Vec3 &o : sa.ae_offsets) out.push_back(sa.center + o);
    return out;
}

Eigen::VectorXcd steering_vector(const std::vector<Vec3> &positions, double f, const AnglePair &a) {
    if (!(f > 0.0)) throw DomainError("steering_vector: frequency must be positive");
    const Vec3 t = direction_from_angles(a);
    const double k = 2.0 * M_PI * f / kSpeedOfLight;
    Eigen::VectorXcd v(positions.size());
    for (size_t q = 0; q < positions.size(); ++q) v(q) = expj(k * positions[q].dot(t));
    return v;
}

Eigen::VectorXcd beamforming_vector(const std::vector<Vec3> &sa_positions, double f, const AnglePair &beam) {
    return steering_vector(sa_positions, f, beam).conjugate();
}

double sector_gain(const GainModel &g, const AnglePair &a) {
    if (g.kind == GainModel::Kind::Omni) return 1.0;
    if (std::abs(a.azimuth) <= g.phi_h / 2.0 && std::abs(a.elevation) <= g.theta_h / 2.0) return std::sqrt(g.G0);
    return 0.0;
}

std::complex<double> array_factor(const std::vector<Vec3> &sa_positions, double f_k, double f_c,
                                  const AnglePair &steer, const AnglePair &beam, bool bse) {
    if (!(f_k > 0.0 && f_c > 0.0)) throw DomainError("array_factor: frequencies must be positive");
    const Vec3 ts = direction_from_angles(steer);
    const Vec3 tb = direction_from_angles(beam);
    const double fb = bse ? f_c : f_k;
    const double k = 2.0 * M_PI / kSpeedOfLight;
    std::complex<double> acc = 0.0;
    for (const Vec3 &p : sa_positions) acc += expj(k * (f_k * p.dot(ts) - fb * p.dot(tb)));
    return acc / std::sqrt(static_cast<double>(sa_positions.size()));
}

SubarrayGrid::SubarrayGrid(int rows, int cols, double pitch) {
    for (int c = 0; c < cols; ++c) y.push_back((c - 0.5 * (cols - 1)) * pitch);
    for (int r = 0; r < rows; ++r) z.push_back((r - 0.5 * (rows - 1)) * pitch);
    inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
}

} // namespace thzloc

#ifndef GWCOSAL_COLOR_HPP
#define GWCOSAL_COLOR_HPP

#include <array>

namespace gwcosal::pipeline {

// sRGB in [0,1] -> linear -> XYZ (D65) -> CIE Lab.
// White (1,1,1) maps to (100, 0, 0); black to (0, 0, 0).
std::array<double, 3> rgb_to_lab(double r, double g, double b);

// Rec. 601 luma of sRGB values in [0,1].
double luminance(double r, double g, double b);

} // namespace gwcosal::pipeline

#endif

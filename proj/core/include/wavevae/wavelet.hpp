#pragma once

#include <filesystem>
#include <vector>

#include "wavevae/tensor.hpp"

namespace wvae {

// One level of the orthonormal 2D Haar transform. For every 2x2 input block
// [[a,b],[c,d]]:
//   ll = (a+b+c+d)/2   approximation
//   lh = (a+b-c-d)/2   vertical-frequency detail
//   hl = (a-b+c-d)/2   horizontal-frequency detail
//   hh = (a-b-c+d)/2   diagonal detail
struct SubbandSet {
    Tensor ll, lh, hl, hh;  // each [B,C,H/2,W/2]
};

// Multi-level decomposition: levels[0] is the finest level (j=1) and each
// further level transforms the previous level's ll band.
struct WaveletPyramid {
    std::vector<SubbandSet> levels;
    Tensor base;  // the untouched input when depth() == 0

    int depth() const { return static_cast<int>(levels.size()); }
};

SubbandSet dwt2(const Tensor& x);
Tensor idwt2(const SubbandSet& s);

WaveletPyramid decompose(const Tensor& x, int levels);
Tensor reconstruct(const WaveletPyramid& p);

// Channel-stacked view [B,4C,h,w] in the fixed order [ll | lh | hl | hh].
Tensor stack_channels(const SubbandSet& s);
SubbandSet unstack_channels(const Tensor& stacked);

// Tile rectangles (in pixels) of the conventional coefficient layout for an
// extent x extent image at `levels` depth: the deepest ll in the top-left
// corner, and per level hl top-right, lh bottom-left, hh bottom-right.
struct Tile {
    int level;   // 1-based; the ll tile carries the deepest level
    char band;   // 'a' (ll), 'v' (lh), 'h' (hl), 'd' (hh)
    std::int64_t y, x, height, width;
};
std::vector<Tile> layout_tiles(std::int64_t height, std::int64_t width, int levels);

// Renders the pyramid into the tiled layout with values in [0,1]. The ll
// tile is scaled by 2^-J back to image range; detail tiles get a symmetric
// contrast stretch about 0 (0 maps to 0.5).
Tensor render_layout(const WaveletPyramid& p);

// Writes one WGT1 file per level (stacked channels) plus a one-line text
// manifest; returns the manifest path.
std::filesystem::path save_pyramid(const std::filesystem::path& dir, const std::string& stem,
                                   const WaveletPyramid& p);
WaveletPyramid load_pyramid(const std::filesystem::path& manifest);

}  // namespace wvae

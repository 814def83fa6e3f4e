#include "wavevae/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wavevae/error.hpp"
#include "wavevae/tensor_io.hpp"

namespace wvae {

namespace {

// Both directions apply the same symmetric orthonormal 4x4 matrix, so the
// transform is its own inverse and its own adjoint.
void haar_analysis(const float* x, std::int64_t B, std::int64_t C, std::int64_t H, std::int64_t W, float* y) {
    const std::int64_t h = H / 2, w = W / 2, band = C * h * w;
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            const float* src = x + (b * C + c) * H * W;
            float* ll = y + b * 4 * band + c * h * w;
            float* lh = ll + band;
            float* hl = lh + band;
            float* hh = hl + band;
            for (std::int64_t i = 0; i < h; ++i) {
                const float* r0 = src + 2 * i * W;
                const float* r1 = r0 + W;
                for (std::int64_t j = 0; j < w; ++j) {
                    const float a = r0[2 * j], bb = r0[2 * j + 1], cc = r1[2 * j], d = r1[2 * j + 1];
                    const std::int64_t k = i * w + j;
                    ll[k] = 0.5f * (a + bb + cc + d);
                    lh[k] = 0.5f * (a + bb - cc - d);
                    hl[k] = 0.5f * (a - bb + cc - d);
                    hh[k] = 0.5f * (a - bb - cc + d);
                }
            }
        }
    }
}

void haar_synthesis(const float* y, std::int64_t B, std::int64_t C, std::int64_t h, std::int64_t w, float* x) {
    const std::int64_t H = 2 * h, W = 2 * w, band = C * h * w;
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            float* dst = x + (b * C + c) * H * W;
            const float* ll = y + b * 4 * band + c * h * w;
            const float* lh = ll + band;
            const float* hl = lh + band;
            const float* hh = hl + band;
            for (std::int64_t i = 0; i < h; ++i) {
                float* r0 = dst + 2 * i * W;
                float* r1 = r0 + W;
                for (std::int64_t j = 0; j < w; ++j) {
                    const std::int64_t k = i * w + j;
                    const float s = ll[k], v = lh[k], hz = hl[k], d = hh[k];
                    r0[2 * j] = 0.5f * (s + v + hz + d);
                    r0[2 * j + 1] = 0.5f * (s + v - hz - d);
                    r1[2 * j] = 0.5f * (s - v + hz - d);
                    r1[2 * j + 1] = 0.5f * (s - v - hz + d);
                }
            }
        }
    }
}

void require_nchw(const Tensor& x, const char* op) {
    if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + shape_str(x.shape()));
}

Tensor analysis_op(const Tensor& x) {
    require_nchw(x, "dwt2");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0) {
        throw ShapeError("dwt2: extents must be even, got " + shape_str(x.shape()));
    }
    std::vector<float> out(static_cast<std::size_t>(x.numel()));
    haar_analysis(x.values().data(), B, C, H, W, out.data());
    return record_op("dwt2", Shape{B, 4 * C, H / 2, W / 2}, std::move(out), {x},
                     [B, C, H, W](std::span<const float> g, std::span<const std::span<float>> gi) {
                         std::vector<float> back(g.size());
                         haar_synthesis(g.data(), B, C, H / 2, W / 2, back.data());
                         for (std::size_t i = 0; i < back.size(); ++i) gi[0][i] += back[i];
                     });
}

Tensor synthesis_op(const Tensor& stacked) {
    require_nchw(stacked, "idwt2");
    const std::int64_t B = stacked.dim(0), C4 = stacked.dim(1), h = stacked.dim(2), w = stacked.dim(3);
    if (C4 % 4 != 0) throw ShapeError("idwt2: stacked channel count must be a multiple of 4");
    const std::int64_t C = C4 / 4;
    std::vector<float> out(static_cast<std::size_t>(stacked.numel()));
    haar_synthesis(stacked.values().data(), B, C, h, w, out.data());
    return record_op("idwt2", Shape{B, C, 2 * h, 2 * w}, std::move(out), {stacked},
                     [B, C, h, w](std::span<const float> g, std::span<const std::span<float>> gi) {
                         std::vector<float> back(g.size());
                         haar_analysis(g.data(), B, C, 2 * h, 2 * w, back.data());
                         for (std::size_t i = 0; i < back.size(); ++i) gi[0][i] += back[i];
                     });
}

}  // namespace

Tensor stack_channels(const SubbandSet& s) {
    const Shape& ref = s.ll.shape();
    for (const Tensor* t : {&s.lh, &s.hl, &s.hh}) {
        if (t->shape() != ref) {
            throw ShapeError("subbands differ in shape: " + shape_str(ref) + " vs " + shape_str(t->shape()));
        }
    }
    return concat({s.ll, s.lh, s.hl, s.hh}, 1);
}

SubbandSet unstack_channels(const Tensor& stacked) {
    require_nchw(stacked, "unstack_channels");
    const std::int64_t c4 = stacked.dim(1);
    if (c4 % 4 != 0) throw ShapeError("unstack_channels: channel count " + std::to_string(c4) + " is not a multiple of 4");
    const std::int64_t c = c4 / 4;
    return SubbandSet{narrow(stacked, 1, 0, c), narrow(stacked, 1, c, c), narrow(stacked, 1, 2 * c, c),
                      narrow(stacked, 1, 3 * c, c)};
}

SubbandSet dwt2(const Tensor& x) { return unstack_channels(analysis_op(x)); }

Tensor idwt2(const SubbandSet& s) { return synthesis_op(stack_channels(s)); }

WaveletPyramid decompose(const Tensor& x, int levels) {
    require_nchw(x, "decompose");
    if (levels < 0) throw ShapeError("decompose: negative level count");
    const std::int64_t div = std::int64_t{1} << levels;
    if (x.dim(2) % div != 0 || x.dim(3) % div != 0) {
        throw ShapeError("decompose: extents " + shape_str(x.shape()) + " not divisible by 2^" + std::to_string(levels));
    }
    WaveletPyramid p;
    if (levels == 0) {
        p.base = x;
        return p;
    }
    Tensor cur = x;
    for (int j = 0; j < levels; ++j) {
        p.levels.push_back(dwt2(cur));
        cur = p.levels.back().ll;
    }
    return p;
}

Tensor reconstruct(const WaveletPyramid& p) {
    if (p.levels.empty()) {
        if (!p.base.defined()) throw ShapeError("reconstruct: empty pyramid without base image");
        return p.base;
    }
    Tensor cur = idwt2(p.levels.back());
    for (int j = p.depth() - 2; j >= 0; --j) {
        const auto& lvl = p.levels[static_cast<std::size_t>(j)];
        if (lvl.lh.shape() != cur.shape()) {
            throw ShapeError("reconstruct: level " + std::to_string(j + 1) + " detail shape " + shape_str(lvl.lh.shape()) +
                             " does not match coarser reconstruction " + shape_str(cur.shape()));
        }
        cur = idwt2(SubbandSet{cur, lvl.lh, lvl.hl, lvl.hh});
    }
    return cur;
}

std::vector<Tile> layout_tiles(std::int64_t height, std::int64_t width, int levels) {
    std::vector<Tile> tiles;
    if (levels <= 0) {
        tiles.push_back(Tile{0, 'a', 0, 0, height, width});
        return tiles;
    }
    std::int64_t h = height, w = width;
    for (int j = 1; j <= levels; ++j) {
        h /= 2;
        w /= 2;
        tiles.push_back(Tile{j, 'h', 0, w, h, w});
        tiles.push_back(Tile{j, 'v', h, 0, h, w});
        tiles.push_back(Tile{j, 'd', h, w, h, w});
    }
    tiles.push_back(Tile{levels, 'a', 0, 0, h, w});
    return tiles;
}

Tensor render_layout(const WaveletPyramid& p) {
    if (p.levels.empty()) return clamp(p.base, 0.0f, 1.0f).detach();
    const Shape& fine = p.levels[0].ll.shape();
    const std::int64_t B = fine[0], C = fine[1], H = fine[2] * 2, W = fine[3] * 2;
    Tensor out(Shape{B, C, H, W}, 0.0f);
    auto dst = out.mutable_values();
    const int J = p.depth();
    for (const Tile& t : layout_tiles(H, W, J)) {
        const auto& lvl = p.levels[static_cast<std::size_t>(t.level - 1)];
        const Tensor& band = t.band == 'a' ? lvl.ll : t.band == 'v' ? lvl.lh : t.band == 'h' ? lvl.hl : lvl.hh;
        const auto src = band.values();
        for (std::int64_t bc = 0; bc < B * C; ++bc) {
            const float* plane = src.data() + bc * t.height * t.width;
            float scale;
            float offset;
            if (t.band == 'a') {
                scale = std::ldexp(1.0f, -J);
                offset = 0.0f;
            } else {
                float peak = 0.0f;
                for (std::int64_t i = 0; i < t.height * t.width; ++i) peak = std::max(peak, std::fabs(plane[i]));
                scale = peak > 0.0f ? 0.5f / peak : 0.0f;
                offset = 0.5f;
            }
            for (std::int64_t y = 0; y < t.height; ++y) {
                for (std::int64_t x = 0; x < t.width; ++x) {
                    const float v = offset + scale * plane[y * t.width + x];
                    dst[static_cast<std::size_t>((bc * H + t.y + y) * W + t.x + x)] = std::clamp(v, 0.0f, 1.0f);
                }
            }
        }
    }
    return out;
}

std::filesystem::path save_pyramid(const std::filesystem::path& dir, const std::string& stem,
                                   const WaveletPyramid& p) {
    std::filesystem::create_directories(dir);
    std::ostringstream line;
    line << "depth=" << p.depth();
    std::vector<std::string> files;
    std::vector<std::string> shapes;
    if (p.levels.empty()) {
        const std::string f = stem + "_base.wgt";
        save_tensor(dir / f, p.base);
        files.push_back(f);
        shapes.push_back(shape_str(p.base.shape()));
    }
    for (int j = 0; j < p.depth(); ++j) {
        NoGradGuard ng;
        const Tensor stacked = stack_channels(p.levels[static_cast<std::size_t>(j)]);
        const std::string f = stem + "_level" + std::to_string(j + 1) + ".wgt";
        save_tensor(dir / f, stacked);
        files.push_back(f);
        shapes.push_back(shape_str(stacked.shape()));
    }
    line << " order=ll,lh,hl,hh shapes=";
    for (std::size_t i = 0; i < shapes.size(); ++i) line << (i ? ";" : "") << shapes[i];
    line << " files=";
    for (std::size_t i = 0; i < files.size(); ++i) line << (i ? ";" : "") << files[i];
    const auto manifest = dir / (stem + ".manifest");
    std::ofstream os(manifest);
    if (!os) throw FormatError("cannot write " + manifest.string());
    os << line.str() << '\n';
    return manifest;
}

WaveletPyramid load_pyramid(const std::filesystem::path& manifest) {
    std::ifstream is(manifest);
    if (!is) throw FormatError("cannot open " + manifest.string());
    std::string line;
    std::getline(is, line);
    std::istringstream fields(line);
    std::string tok;
    int depth = -1;
    std::string order, files;
    while (fields >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw FormatError("pyramid manifest: malformed field '" + tok + "'");
        const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
        if (key == "depth") depth = std::stoi(value);
        if (key == "order") order = value;
        if (key == "files") files = value;
    }
    if (depth < 0 || order != "ll,lh,hl,hh" || files.empty()) throw FormatError("pyramid manifest: missing fields");
    std::vector<std::string> names;
    std::stringstream fs(files);
    for (std::string f; std::getline(fs, f, ';');) names.push_back(f);
    const auto dir = manifest.parent_path();
    WaveletPyramid p;
    if (depth == 0) {
        if (names.size() != 1) throw FormatError("pyramid manifest: depth 0 needs one base file");
        p.base = load_tensor(dir / names[0]);
        return p;
    }
    if (static_cast<int>(names.size()) != depth) throw FormatError("pyramid manifest: file count does not match depth");
    for (const auto& n : names) p.levels.push_back(unstack_channels(load_tensor(dir / n)));
    for (std::size_t j = 1; j < p.levels.size(); ++j) {
        const Shape& a = p.levels[j - 1].ll.shape();
        const Shape& b = p.levels[j].ll.shape();
        if (b[2] * 2 != a[2] || b[3] * 2 != a[3]) throw ShapeError("pyramid manifest: inconsistent level extents");
    }
    return p;
}

}  // namespace wvae

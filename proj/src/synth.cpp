// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/synth.hpp"

#include "dualsplat/image_io.hpp"
#include "dualsplat/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace dualsplat {

std::string_view occlusion_name(OcclusionLevel l) {
    switch (l) {
    case OcclusionLevel::None: return "none";
    case OcclusionLevel::Low: return "low";
    case OcclusionLevel::Medium: return "medium";
    case OcclusionLevel::High: return "high";
    }
    return "none";
}

std::string_view illumination_name(IlluminationLevel l) {
    switch (l) {
    case IlluminationLevel::None: return "none";
    case IlluminationLevel::Mild: return "mild";
    case IlluminationLevel::Strong: return "strong";
    }
    return "none";
}

OcclusionLevel occlusion_from_name(std::string_view s) {
    for (auto l : {OcclusionLevel::None, OcclusionLevel::Low, OcclusionLevel::Medium, OcclusionLevel::High})
        if (occlusion_name(l) == s) return l;
    throw ContractError("unknown occlusion level: " + std::string(s));
}

IlluminationLevel illumination_from_name(std::string_view s) {
    for (auto l : {IlluminationLevel::None, IlluminationLevel::Mild, IlluminationLevel::Strong})
        if (illumination_name(l) == s) return l;
    throw ContractError("unknown illumination level: " + std::string(s));
}

OcclusionProfile occlusion_profile(OcclusionLevel l) {
    switch (l) {
    case OcclusionLevel::None: return {0, 0, 0.0, 0.0};
    case OcclusionLevel::Low: return {0, 1, 0.02, 0.08};
    case OcclusionLevel::Medium: return {1, 3, 0.05, 0.15};
    case OcclusionLevel::High: return {3, 6, 0.10, 0.25};
    }
    return {};
}

double illumination_delta(IlluminationLevel l) {
    switch (l) {
    case IlluminationLevel::None: return 0.0;
    case IlluminationLevel::Mild: return 0.1;
    case IlluminationLevel::Strong: return 0.3;
    }
    return 0.0;
}

namespace {

void push_gaussian(GaussianCloud& c, Vec2 p, double sx, double sy, double rot, double opacity, double r, double g,
                   double b, double depth) {
    const std::size_t n = c.size();
    c.resize(n + 1);
    c.positions[2 * n] = p.x;
    c.positions[2 * n + 1] = p.y;
    c.log_scales[2 * n] = std::log(sx);
    c.log_scales[2 * n + 1] = std::log(sy);
    c.rotations[n] = rot;
    c.opacity_logits[n] = logit(opacity);
    c.colors[3 * n] = r;
    c.colors[3 * n + 1] = g;
    c.colors[3 * n + 2] = b;
    c.depths[n] = depth;
}

// Affine about the image center: p = s R (x - c) + c + t0.
void view_affine(Rng& rng, Mat2& A, Vec2& t) {
    const double angle = rng.uniform(-15.0, 15.0) * std::numbers::pi / 180.0;
    const double s = rng.uniform(0.9, 1.1);
    const double tx = rng.uniform(-0.1, 0.1);
    const double ty = rng.uniform(-0.1, 0.1);
    A = Mat2::rotation(angle) * s;
    const Vec2 c = A * Vec2{0.5, 0.5};
    t = {0.5 - c.x + tx, 0.5 - c.y + ty};
}

struct Ellipse {
    Vec2 center;  // normalized view coordinates
    double a = 0.0;
    double b = 0.0;
    double angle = 0.0;
    std::array<double, 3> color{};

    bool contains(double u, double v) const {
        const double dx = u - center.x;
        const double dy = v - center.y;
        const double cs = std::cos(angle);
        const double sn = std::sin(angle);
        const double x = cs * dx + sn * dy;
        const double y = -sn * dx + cs * dy;
        return (x * x) / (a * a) + (y * y) / (b * b) <= 1.0;
    }
};

Ellipse random_ellipse(Rng& rng, double area) {
    Ellipse e;
    e.center = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
    e.a = std::sqrt(area * aspect / std::numbers::pi);
    e.b = area / (std::numbers::pi * e.a);
    e.angle = rng.uniform(0.0, std::numbers::pi);
    for (double& c : e.color) c = rng.uniform(0.05, 0.95);
    return e;
}

// 1 = stable, 0 inside any ellipse (pixel-center test).
Image ellipse_mask(const std::vector<Ellipse>& ellipses, int w, int h) {
    Image m(w, h, 1, 1.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = (x + 0.5) / w;
            const double v = (y + 0.5) / h;
            for (const Ellipse& e : ellipses)
                if (e.contains(u, v)) {
                    m.at(x, y) = 0.0;
                    break;
                }
        }
    return m;
}

// Grows (dilate) or shrinks (erode) the transient region by a disk of radius r.
Image morph_transient(const Image& mask, int r, bool dilate) {
    if (r <= 0) return mask;
    Image out = mask;
    const int w = mask.width;
    const int h = mask.height;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool any_transient = false;
            bool all_transient = true;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    const int xx = std::clamp(x + dx, 0, w - 1);
                    const int yy = std::clamp(y + dy, 0, h - 1);
                    const bool t = mask.at(xx, yy) < 0.5;
                    any_transient |= t;
                    all_transient &= t;
                }
            out.at(x, y) = dilate ? (any_transient ? 0.0 : 1.0) : (all_transient ? 0.0 : 1.0);
        }
    return out;
}

}  // namespace

Image Scene::render(const Camera2D& cam) const { return rasterize_forward(cloud, cam).image; }

Image Scene::render(const Mat2& affine, Vec2 translation) const {
    return render(Camera2D{affine, translation, spec.resolution, spec.resolution});
}

Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    if (spec.resolution < 32) throw ContractError("generate_scene: resolution must be at least 32");
    Scene s;
    s.seed = seed;
    s.spec = spec;
    Rng rng = Rng(seed).fork(0x5CE7E);
    GaussianCloud& c = s.cloud;

    constexpr int kBack = 6;
    const double spacing = 1.6 / (kBack - 1);
    for (int gy = 0; gy < kBack; ++gy)
        for (int gx = 0; gx < kBack; ++gx) {
            const Vec2 p{-0.3 + gx * spacing, -0.3 + gy * spacing};
            push_gaussian(c, p, 0.6 * spacing, 0.6 * spacing, 0.0, 0.97, rng.uniform(0.15, 0.45),
                          rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45), 0.9 + 0.001 * (gy * kBack + gx));
        }
    for (int k = 0; k < spec.blobs; ++k) {
        const Vec2 p{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        push_gaussian(c, p, rng.uniform(0.04, 0.12), rng.uniform(0.04, 0.12), rng.uniform(0.0, std::numbers::pi),
                      rng.uniform(0.6, 0.9), rng.uniform(0.12, 0.7), rng.uniform(0.12, 0.7), rng.uniform(0.12, 0.7),
                      rng.uniform(0.3, 0.8));
    }
    push_gaussian(c, {0.5, 0.5}, 0.08, 0.08, 0.0, 0.9, 0.7, 0.6, 0.2, 0.25);
    for (int k = 0; k < spec.stripes; ++k) {
        const Vec2 p{rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)};
        push_gaussian(c, p, 0.15, 0.0125, rng.uniform(0.0, std::numbers::pi), 0.8, rng.uniform(0.12, 0.7),
                      rng.uniform(0.12, 0.7), rng.uniform(0.12, 0.7), rng.uniform(0.1, 0.2));
    }
    return s;
}

Dataset generate_views(const Scene& scene, int num_views, OcclusionLevel occlusion, IlluminationLevel illumination,
                       std::uint64_t seed, int num_heldout) {
    if (num_views < 2) throw ContractError("generate_views: need at least two views");
    if (num_heldout < 0) throw ContractError("generate_views: negative held-out count");
    Dataset d;
    d.seed = scene.seed;
    d.view_seed = seed;
    d.spec = scene.spec;
    d.occlusion = occlusion;
    d.illumination = illumination;

    const int W = scene.spec.resolution;
    const int H = scene.spec.resolution;
    const OcclusionProfile prof = occlusion_profile(occlusion);
    const double delta = illumination_delta(illumination);
    const Rng base(seed);

    d.views.resize(static_cast<std::size_t>(num_views));
    for (int v = 0; v < num_views; ++v) {
        Rng rng = base.fork(static_cast<std::uint64_t>(v) + 1);
        SynthView& sv = d.views[static_cast<std::size_t>(v)];
        view_affine(rng, sv.affine, sv.translation);
        sv.clean = scene.render(sv.affine, sv.translation);

        std::vector<Ellipse> ellipses;
        if (prof.max_count > 0) {
            const int k = prof.min_count + static_cast<int>(rng.below(
                                               static_cast<std::uint64_t>(prof.max_count - prof.min_count + 1)));
            const double coverage = rng.uniform(prof.min_coverage, prof.max_coverage);
            for (int e = 0; e < k; ++e) ellipses.push_back(random_ellipse(rng, coverage / k * rng.uniform(0.7, 1.3)));
        }
        sv.transient_count = static_cast<int>(ellipses.size());
        sv.true_mask = ellipse_mask(ellipses, W, H);

        for (int ch = 0; ch < 3; ++ch) {
            sv.gain[ch] = rng.uniform(1.0 - delta, 1.0 + delta);
            sv.bias[ch] = rng.uniform(0.0, 0.1 * delta);
        }
        sv.observed = sv.clean;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double u = (x + 0.5) / W;
                const double vv = (y + 0.5) / H;
                // Later ellipses are drawn over earlier ones.
                const Ellipse* top = nullptr;
                for (const Ellipse& e : ellipses)
                    if (e.contains(u, vv)) top = &e;
                for (int ch = 0; ch < 3; ++ch) {
                    const double base_value = top ? top->color[ch] : sv.clean.at(x, y, ch);
                    sv.observed.at(x, y, ch) = std::clamp(sv.gain[ch] * base_value + sv.bias[ch], 0.0, 1.0);
                }
            }

        // Prior: optional region flip on the ellipse list, then morphology.
        std::vector<Ellipse> prior = ellipses;
        if (occlusion != OcclusionLevel::None && rng.uniform() < 0.1) {
            if (!prior.empty() && rng.uniform() < 0.5) {
                prior.erase(prior.begin() + static_cast<std::ptrdiff_t>(rng.below(prior.size())));
            } else {
                prior.push_back(random_ellipse(rng, rng.uniform(0.01, 0.03)));
            }
        }
        const int radius = static_cast<int>(rng.below(3));
        const bool dilate = rng.uniform() < 0.5;
        sv.prior_mask = morph_transient(ellipse_mask(prior, W, H), radius, dilate);
    }

    d.heldout.resize(static_cast<std::size_t>(num_heldout));
    for (int k = 0; k < num_heldout; ++k) {
        Rng rng = base.fork(0x4E1D0000ull + static_cast<std::uint64_t>(k));
        HeldoutView& hv = d.heldout[static_cast<std::size_t>(k)];
        view_affine(rng, hv.affine, hv.translation);
        hv.clean = scene.render(hv.affine, hv.translation);
    }
    return d;
}

Dataset synthesize(const SynthOptions& o) {
    const Scene scene = generate_scene(o.seed, o.spec);
    return generate_views(scene, o.num_views, o.occlusion, o.illumination, mix64(o.seed ^ 0x76696577ull),
                          o.num_heldout);
}

std::vector<View> training_views(const Dataset& d) {
    std::vector<View> out;
    for (std::size_t i = 0; i < d.views.size(); ++i) {
        const SynthView& sv = d.views[i];
        out.push_back({sv.affine, sv.translation, sv.observed, sv.prior_mask, static_cast<int>(i)});
    }
    return out;
}

std::vector<View> heldout_views(const Dataset& d) {
    std::vector<View> out;
    for (std::size_t i = 0; i < d.heldout.size(); ++i) {
        const HeldoutView& hv = d.heldout[i];
        out.push_back({hv.affine, hv.translation, hv.clean, Image(hv.clean.width, hv.clean.height, 1, 1.0),
                       static_cast<int>(i)});
    }
    return out;
}

Scene dataset_scene(const Dataset& d) { return generate_scene(d.seed, d.spec); }

namespace {

using nlohmann::json;

std::string indexed(const char* stem, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
    return buf;
}

json affine_json(const Mat2& A, Vec2 t) {
    return {{"affine", {A.a, A.b, A.c, A.d}}, {"translation", {t.x, t.y}}};
}

void affine_from_json(const json& j, Mat2& A, Vec2& t) {
    const auto a = j.at("affine").get<std::vector<double>>();
    const auto tr = j.at("translation").get<std::vector<double>>();
    if (a.size() != 4 || tr.size() != 2) throw DatasetError("malformed affine in meta.json");
    A = {a[0], a[1], a[2], a[3]};
    t = {tr[0], tr[1]};
}

// (subdirectory, file stem) for each stored image kind.
struct Slot {
    const char* dir;
    const char* stem;
};
constexpr Slot kObserved{"views", "view"};
constexpr Slot kClean{"clean", "view"};
constexpr Slot kTrue{"masks_true", "view"};
constexpr Slot kPrior{"masks_prior", "view"};
constexpr Slot kHeldout{"heldout", "heldout"};

void store(const Image& img, const std::filesystem::path& root, Slot slot, std::size_t i, bool sidecar) {
    write_png(img, root / slot.dir / indexed(slot.stem, i, ".png"));
    if (sidecar) write_raw(img, root / "float" / (std::string(slot.dir) + indexed("", i, ".f64")));
}

Image load(const std::filesystem::path& root, Slot slot, std::size_t i) {
    const auto raw = root / "float" / (std::string(slot.dir) + indexed("", i, ".f64"));
    if (std::filesystem::exists(raw)) return read_raw(raw);
    const auto png = root / slot.dir / indexed(slot.stem, i, ".png");
    if (!std::filesystem::exists(png))
        throw DatasetError("incomplete dataset: missing " + std::string(slot.dir) + "/" + png.filename().string());
    return read_png(png);
}

}  // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& dir, bool float_sidecars) {
    namespace fs = std::filesystem;
    for (const char* sub : {"views", "clean", "masks_true", "masks_prior", "heldout"}) fs::create_directories(dir / sub);
    if (float_sidecars) fs::create_directories(dir / "float");

    json meta;
    meta["schema_version"] = d.schema_version;
    meta["seed"] = d.seed;
    meta["view_seed"] = d.view_seed;
    meta["spec"] = {{"resolution", d.spec.resolution}, {"blobs", d.spec.blobs}, {"stripes", d.spec.stripes}};
    meta["occlusion"] = occlusion_name(d.occlusion);
    meta["illumination"] = illumination_name(d.illumination);
    meta["float_sidecars"] = float_sidecars;
    json views = json::array();
    for (std::size_t i = 0; i < d.views.size(); ++i) {
        const SynthView& sv = d.views[i];
        json v = affine_json(sv.affine, sv.translation);
        v["gain"] = sv.gain;
        v["bias"] = sv.bias;
        v["transients"] = sv.transient_count;
        views.push_back(v);
        store(sv.observed, dir, kObserved, i, float_sidecars);
        store(sv.clean, dir, kClean, i, float_sidecars);
        store(sv.true_mask, dir, kTrue, i, float_sidecars);
        store(sv.prior_mask, dir, kPrior, i, float_sidecars);
    }
    meta["views"] = views;
    json heldout = json::array();
    for (std::size_t i = 0; i < d.heldout.size(); ++i) {
        heldout.push_back(affine_json(d.heldout[i].affine, d.heldout[i].translation));
        store(d.heldout[i].clean, dir, kHeldout, i, float_sidecars);
    }
    meta["heldout"] = heldout;

    std::ofstream out(dir / "meta.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw DatasetError("incomplete dataset: missing meta.json in " + dir.string());
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed meta.json: ") + e.what());
    }
    try {
        Dataset d;
        d.schema_version = meta.at("schema_version").get<int>();
        if (d.schema_version != kDatasetSchemaVersion)
            throw DatasetError("dataset schema version " + std::to_string(d.schema_version) + ", expected " +
                               std::to_string(kDatasetSchemaVersion));
        d.seed = meta.at("seed").get<std::uint64_t>();
        d.view_seed = meta.at("view_seed").get<std::uint64_t>();
        d.spec.resolution = meta.at("spec").at("resolution").get<int>();
        d.spec.blobs = meta.at("spec").at("blobs").get<int>();
        d.spec.stripes = meta.at("spec").at("stripes").get<int>();
        d.occlusion = occlusion_from_name(meta.at("occlusion").get<std::string>());
        d.illumination = illumination_from_name(meta.at("illumination").get<std::string>());
        const json& views = meta.at("views");
        for (std::size_t i = 0; i < views.size(); ++i) {
            SynthView sv;
            affine_from_json(views[i], sv.affine, sv.translation);
            sv.gain = views[i].at("gain").get<std::array<double, 3>>();
            sv.bias = views[i].at("bias").get<std::array<double, 3>>();
            sv.transient_count = views[i].at("transients").get<int>();
            sv.observed = load(dir, kObserved, i);
            sv.clean = load(dir, kClean, i);
            sv.true_mask = load(dir, kTrue, i);
            sv.prior_mask = load(dir, kPrior, i);
            d.views.push_back(std::move(sv));
        }
        const json& heldout = meta.at("heldout");
        for (std::size_t i = 0; i < heldout.size(); ++i) {
            HeldoutView hv;
            affine_from_json(heldout[i], hv.affine, hv.translation);
            hv.clean = load(dir, kHeldout, i);
            d.heldout.push_back(std::move(hv));
        }
        return d;
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed meta.json: ") + e.what());
    } catch (const ContractError& e) {
        throw DatasetError(std::string("malformed meta.json: ") + e.what());
    }
}

}  // namespace dualsplat

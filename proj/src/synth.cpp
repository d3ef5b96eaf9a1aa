#include "vlg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vlg/rng.hpp"

namespace vlg {

namespace {

constexpr double kRayEps = 1e-9;

// Slab test; returns entry parameter or -1.
double ray_box(const SynthBox& box, const Vec3& origin, const Vec3& dir) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < lo[a] || o[a] > hi[a]) return -1;
            continue;
        }
        double t0 = (lo[a] - o[a]) / d[a];
        double t1 = (hi[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return -1;
    }
    if (tmax < kRayEps) return -1;
    return tmin > kRayEps ? tmin : tmax;  // origin inside the box hits the far wall
}

std::uint64_t scene_seed(std::uint64_t suite_seed, int index) {
    return splitmix64(splitmix64(suite_seed) ^
                      (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index + 1)));
}

}  // namespace

double SynthBox::face_area(int face) const {
    const double dx = hi.x - lo.x, dy = hi.y - lo.y, dz = hi.z - lo.z;
    switch (face) {
        case 0:
        case 1: return dy * dz;
        case 2:
        case 3: return dx * dz;
        default: return dx * dy;
    }
}

double SynthBox::surface_area() const {
    double total = 0;
    for (int f = 0; f < 6; ++f) total += face_area(f);
    return total;
}

double ray_boxes_nearest(const SynthSceneGeometry& geometry, const Vec3& origin, const Vec3& dir,
                         int* hit_box) {
    double best = -1;
    int best_box = -1;
    for (int b = 0; b < static_cast<int>(geometry.boxes.size()); ++b) {
        const double t = ray_box(geometry.boxes[static_cast<std::size_t>(b)], origin, dir);
        if (t > 0 && (best < 0 || t < best)) {
            best = t;
            best_box = b;
        }
    }
    if (hit_box) *hit_box = best_box;
    return best;
}

void SynthSpec::validate() const {
    if (train_scenes + test_scenes <= 0) throw ConfigError("synth: no scenes requested");
    if (points_per_scene < 1) throw ConfigError("synth: points_per_scene must be >= 1");
    if (cameras < 1) throw ConfigError("synth: degenerate spec, zero cameras");
    if (objects_max < objects_min || objects_min < 0)
        throw ConfigError("synth: bad objects range");
    if (classes.empty()) throw ConfigError("synth: no classes");
    if (dim < static_cast<int>(classes.size()))
        throw ConfigError("synth: dim must be >= number of classes for near-orthogonal prototypes");
    for (const auto& d : distractors)
        if (std::find(classes.begin(), classes.end(), d) == classes.end())
            throw ConfigError("synth: distractor '" + d + "' is not a class");
    std::size_t instantiable = 0;
    for (const auto& c : classes)
        if (std::find(distractors.begin(), distractors.end(), c) == distractors.end())
            ++instantiable;
    if (instantiable == 0) throw ConfigError("synth: degenerate spec, every class is a distractor");
    if (width < 2 || height < 2) throw ConfigError("synth: image extents too small");
    if (room[0] <= 0 || room[1] <= 0 || room[2] <= 0) throw ConfigError("synth: bad room box");
    if (sigma < 0 || corrupt_rate < 0 || corrupt_rate > 1 || visual_shift < 0)
        throw ConfigError("synth: bad noise settings");
}

TextEmbeddingBank make_prototype_bank(const SynthSpec& spec) {
    spec.validate();
    const int k = static_cast<int>(spec.classes.size());
    const int d = spec.dim;
    Rng rng(splitmix64(spec.seed ^ 0xb4e5a1c3d2f60817ULL));

    // Random orthonormal rows via Gram-Schmidt, then a small blend that keeps
    // pairwise cosines well under the 0.3 bound.
    std::vector<double> rows(static_cast<std::size_t>(k) * d);
    for (int r = 0; r < k; ++r) {
        double* row = rows.data() + static_cast<std::size_t>(r) * d;
        for (;;) {
            for (int c = 0; c < d; ++c) row[c] = rng.normal();
            for (int p = 0; p < r; ++p) {
                const double* prev = rows.data() + static_cast<std::size_t>(p) * d;
                double proj = 0;
                for (int c = 0; c < d; ++c) proj += row[c] * prev[c];
                for (int c = 0; c < d; ++c) row[c] -= proj * prev[c];
            }
            double sq = 0;
            for (int c = 0; c < d; ++c) sq += row[c] * row[c];
            if (sq > 1e-8) {
                const double inv = 1.0 / std::sqrt(sq);
                for (int c = 0; c < d; ++c) row[c] *= inv;
                break;
            }
        }
    }
    // Blend in a little correlation for realism, retrying at half strength
    // whenever a pair would exceed the 0.3 cosine bound. beta = 0 recovers
    // the exactly-orthonormal rows, so this always terminates.
    double beta = 0.08;
    for (int attempt = 0;; ++attempt) {
        std::vector<double> blended = rows;
        for (auto& v : blended) v += beta * rng.normal();
        for (int r = 0; r < k; ++r) {
            double* row = blended.data() + static_cast<std::size_t>(r) * d;
            double sq = 0;
            for (int c = 0; c < d; ++c) sq += row[c] * row[c];
            const double inv = 1.0 / std::sqrt(sq);
            for (int c = 0; c < d; ++c) row[c] *= inv;
        }
        double worst = 0;
        for (int a = 0; a < k; ++a)
            for (int b = a + 1; b < k; ++b) {
                double cosv = 0;
                for (int c = 0; c < d; ++c)
                    cosv += blended[static_cast<std::size_t>(a) * d + static_cast<std::size_t>(c)] *
                            blended[static_cast<std::size_t>(b) * d + static_cast<std::size_t>(c)];
                worst = std::max(worst, std::abs(cosv));
            }
        if (worst <= 0.28) {
            rows = std::move(blended);
            break;
        }
        beta *= 0.5;
        if (attempt > 32)
            throw NumericError("synth prototypes violate the near-orthogonality bound");
    }

    TextEmbeddingBank bank;
    bank.class_names = spec.classes;
    bank.dim = d;
    bank.embeddings.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        bank.embeddings[i] = static_cast<float>(rows[i]);
    bank.validate();
    return bank;
}

TextEmbeddingBank make_visual_prototype_bank(const SynthSpec& spec,
                                             const TextEmbeddingBank& text_bank) {
    TextEmbeddingBank visual = text_bank;
    if (spec.visual_shift == 0) return visual;
    Rng rng(splitmix64(spec.seed ^ 0x6a09e667f3bcc909ULL));
    const int d = text_bank.dim;

    std::vector<int> real_classes, distractor_classes;
    for (int k = 0; k < text_bank.num_classes(); ++k) {
        const std::string& name = text_bank.class_names[static_cast<std::size_t>(k)];
        const bool is_distractor = std::find(spec.distractors.begin(), spec.distractors.end(),
                                             name) != spec.distractors.end();
        (is_distractor ? distractor_classes : real_classes).push_back(k);
    }

    // Half of the instantiable classes drift hard toward a distractor
    // prototype (the 2D model "confuses" them with absent categories the way
    // open-vocabulary encoders do); the rest get a mild random offset. The
    // scene mask and the specialization stage exist to undo exactly this.
    for (std::size_t rank = 0; rank < real_classes.size(); ++rank) {
        const int k = real_classes[rank];
        std::vector<double> row(static_cast<std::size_t>(d));
        const bool hard = !distractor_classes.empty() && rank % 2 == 0;
        double gamma;
        const float* toward = nullptr;
        if (hard) {
            gamma = spec.visual_shift * rng.uniform(1.0, 1.3);
            toward = text_bank.row(distractor_classes[rank % distractor_classes.size()]);
        } else {
            gamma = spec.visual_shift * rng.uniform(0.15, 0.4);
        }
        double sq = 0;
        for (int c = 0; c < d; ++c) {
            double v = text_bank.row(k)[c] + 0.15 * spec.visual_shift * rng.normal() / std::sqrt(d);
            if (toward) v += gamma * toward[c];
            row[static_cast<std::size_t>(c)] = v;
            sq += v * v;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (int c = 0; c < d; ++c)
            visual.embeddings[static_cast<std::size_t>(k) * d + static_cast<std::size_t>(c)] =
                static_cast<float>(row[static_cast<std::size_t>(c)] * inv);
    }
    return visual;
}

namespace {

// Class colors shared by the whole suite: well separated in rgb space so the
// encoder has a learnable, class-correlated input signal.
std::vector<std::array<double, 3>> make_palette(const SynthSpec& spec) {
    Rng rng(splitmix64(spec.seed ^ 0x517cc1b727220a95ULL));
    std::vector<std::array<double, 3>> palette;
    for (std::size_t k = 0; k < spec.classes.size(); ++k) {
        std::array<double, 3> best{0.5, 0.5, 0.5};
        double best_dist = -1;
        for (int attempt = 0; attempt < 64; ++attempt) {
            std::array<double, 3> cand{rng.uniform(0.08, 0.92), rng.uniform(0.08, 0.92),
                                       rng.uniform(0.08, 0.92)};
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& p : palette) {
                const double dd = (cand[0] - p[0]) * (cand[0] - p[0]) +
                                  (cand[1] - p[1]) * (cand[1] - p[1]) +
                                  (cand[2] - p[2]) * (cand[2] - p[2]);
                nearest = std::min(nearest, dd);
            }
            if (nearest > best_dist) {
                best_dist = nearest;
                best = cand;
            }
            if (palette.empty()) break;
        }
        palette.push_back(best);
    }
    return palette;
}

CameraPose make_ring_camera(const SynthSpec& spec, int index, Rng& rng) {
    const double cx_room = spec.room[0] / 2.0;
    const double cy_room = spec.room[1] / 2.0;
    const double radius = 0.42 * std::min(spec.room[0], spec.room[1]);
    const double angle = 2.0 * std::numbers::pi * index / spec.cameras + rng.uniform(-0.1, 0.1);
    // High ring looking steeply down: oblique floor pixels would otherwise
    // exceed the depth tolerance from half-pixel offsets alone.
    const Vec3 eye{cx_room + radius * std::cos(angle), cy_room + radius * std::sin(angle),
                   rng.uniform(0.78, 0.92) * spec.room[2]};
    const Vec3 target{cx_room, cy_room, 0.35};
    return look_at_camera(eye, target, spec.width, spec.height, 0.9 * spec.width);
}

}  // namespace

CameraPose look_at_camera(const Vec3& eye, const Vec3& target, int width, int height,
                          double focal) {
    const Vec3 forward = normalized(target - eye);
    const Vec3 world_up{0, 0, 1};
    Vec3 right = cross(forward, world_up);
    if (norm(right) < 1e-9) right = Vec3{1, 0, 0};  // looking straight up/down
    right = normalized(right);
    const Vec3 down = cross(forward, right);

    CameraPose cam;
    cam.width = width;
    cam.height = height;
    cam.intrinsics(0, 0) = focal;
    cam.intrinsics(1, 1) = focal;
    cam.intrinsics(0, 2) = (width - 1) / 2.0;
    cam.intrinsics(1, 2) = (height - 1) / 2.0;

    Mat4& m = cam.world_to_camera;
    const Vec3 rows[3] = {right, down, forward};
    for (int r = 0; r < 3; ++r) {
        m(r, 0) = rows[r].x;
        m(r, 1) = rows[r].y;
        m(r, 2) = rows[r].z;
        m(r, 3) = -dot(rows[r], eye);
    }
    return cam;
}

View render_view(const SynthSceneGeometry& geometry, const CameraPose& pose,
                 const TextEmbeddingBank& bank, double sigma, double corrupt_rate, Rng& rng) {
    View view;
    view.pose = pose;
    view.dim = bank.dim;
    const int w = pose.width, h = pose.height;
    view.embeddings.resize(static_cast<std::size_t>(h) * w * bank.dim);
    view.depth.assign(static_cast<std::size_t>(h) * w, 0.0f);

    const Mat4 cam_to_world = rigid_inverse(pose.world_to_camera);
    const Vec3 eye{cam_to_world(0, 3), cam_to_world(1, 3), cam_to_world(2, 3)};
    for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px) {
            const Vec3 dir_cam{(px - pose.cx()) / pose.fx(), (py - pose.cy()) / pose.fy(), 1.0};
            const Vec3 dir = cam_to_world.rotate(dir_cam);
            int hit = -1;
            const double t_hit = ray_boxes_nearest(geometry, eye, dir, &hit);
            float* emb = view.embeddings.data() +
                         (static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)) *
                             bank.dim;
            if (t_hit > 0) {
                view.depth[static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)] =
                    static_cast<float>(t_hit);
                int cls = geometry.boxes[static_cast<std::size_t>(hit)].class_id;
                if (corrupt_rate > 0 && rng.uniform() < corrupt_rate)
                    cls = static_cast<int>(rng.next_below(bank.class_names.size()));
                const float* proto = bank.row(cls);
                for (int c = 0; c < bank.dim; ++c)
                    emb[c] = static_cast<float>(proto[c] +
                                                (sigma > 0 ? sigma * rng.normal() : 0.0));
            } else {
                for (int c = 0; c < bank.dim; ++c)
                    emb[c] = static_cast<float>(sigma > 0 ? sigma * rng.normal() : 0.0);
            }
        }
    return view;
}

namespace {

Vec3 sample_on_face(const SynthBox& box, int face, Rng& rng) {
    const double u = rng.uniform();
    const double v = rng.uniform();
    switch (face) {
        case 0: return {box.lo.x, box.lo.y + u * (box.hi.y - box.lo.y), box.lo.z + v * (box.hi.z - box.lo.z)};
        case 1: return {box.hi.x, box.lo.y + u * (box.hi.y - box.lo.y), box.lo.z + v * (box.hi.z - box.lo.z)};
        case 2: return {box.lo.x + u * (box.hi.x - box.lo.x), box.lo.y, box.lo.z + v * (box.hi.z - box.lo.z)};
        case 3: return {box.lo.x + u * (box.hi.x - box.lo.x), box.hi.y, box.lo.z + v * (box.hi.z - box.lo.z)};
        case 4: return {box.lo.x + u * (box.hi.x - box.lo.x), box.lo.y + v * (box.hi.y - box.lo.y), box.lo.z};
        default: return {box.lo.x + u * (box.hi.x - box.lo.x), box.lo.y + v * (box.hi.y - box.lo.y), box.hi.z};
    }
}

}  // namespace

SynthScene generate_scene(const SynthSpec& spec, int scene_index,
                          const TextEmbeddingBank& bank) {
    spec.validate();
    Rng rng(scene_seed(spec.seed, scene_index));
    const auto palette = make_palette(spec);

    auto class_index = [&](const std::string& name) {
        for (std::size_t k = 0; k < spec.classes.size(); ++k)
            if (spec.classes[k] == name) return static_cast<int>(k);
        return -1;
    };
    auto is_distractor = [&](const std::string& name) {
        return std::find(spec.distractors.begin(), spec.distractors.end(), name) !=
               spec.distractors.end();
    };

    std::vector<int> furniture_classes;
    for (std::size_t k = 0; k < spec.classes.size(); ++k) {
        const std::string& name = spec.classes[k];
        if (is_distractor(name) || name == "floor" || name == "wall") continue;
        furniture_classes.push_back(static_cast<int>(k));
    }

    SynthScene out;
    SynthSceneGeometry& geo = out.geometry;

    // Floor slab (falls back to the first instantiable class when the label
    // set has no "floor").
    int floor_class = class_index("floor");
    if (floor_class < 0 || is_distractor("floor")) {
        for (std::size_t k = 0; k < spec.classes.size(); ++k)
            if (!is_distractor(spec.classes[k])) {
                floor_class = static_cast<int>(k);
                break;
            }
    }
    geo.boxes.push_back({{0, 0, -0.08}, {spec.room[0], spec.room[1], 0}, floor_class});

    const int wall_class = class_index("wall");
    if (wall_class >= 0 && !is_distractor("wall") && rng.uniform() < spec.wall_probability) {
        // Interior partition wall: a natural occluder.
        const double wx = rng.uniform(0.35, 0.65) * spec.room[0];
        const double y0 = rng.uniform(0.05, 0.3) * spec.room[1];
        const double y1 = rng.uniform(0.6, 0.95) * spec.room[1];
        const double h = rng.uniform(1.4, 2.2);
        geo.boxes.push_back({{wx - 0.04, y0, 0}, {wx + 0.04, y1, h}, wall_class});
    }

    const int objects = rng.uniform_int(spec.objects_min, spec.objects_max);
    for (int i = 0; i < objects && !furniture_classes.empty(); ++i) {
        const int cls = furniture_classes[static_cast<std::size_t>(
            rng.next_below(furniture_classes.size()))];
        const double sx = rng.uniform(0.4, 1.3);
        const double sy = rng.uniform(0.4, 1.3);
        const double sz = rng.uniform(0.3, 1.1);
        const double x0 = rng.uniform(0.2, std::max(0.21, spec.room[0] - sx - 0.2));
        const double y0 = rng.uniform(0.2, std::max(0.21, spec.room[1] - sy - 0.2));
        geo.boxes.push_back({{x0, y0, 0}, {x0 + sx, y0 + sy, sz}, cls});
    }

    // Surface-area-weighted point sampling. Downward faces (-z) never face a
    // camera and real scans never see them, so they carry no points.
    std::vector<double> cum_area;
    double total_area = 0;
    for (const SynthBox& box : geo.boxes)
        for (int f = 0; f < 6; ++f) {
            if (f != 4) total_area += box.face_area(f);
            cum_area.push_back(total_area);
        }

    const std::int64_t n = spec.points_per_scene;
    PointCloud& cloud = out.scene.cloud;
    cloud.size = n;
    cloud.positions.resize(static_cast<std::size_t>(3 * n));
    cloud.colors.resize(static_cast<std::size_t>(3 * n));
    cloud.gt_labels.resize(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> class_present(spec.classes.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const double pick = rng.uniform(0.0, total_area);
        const auto it = std::upper_bound(cum_area.begin(), cum_area.end(), pick);
        const std::size_t flat = std::min(cum_area.size() - 1,
                                          static_cast<std::size_t>(it - cum_area.begin()));
        const SynthBox& box = geo.boxes[flat / 6];
        const Vec3 p = sample_on_face(box, static_cast<int>(flat % 6), rng);
        cloud.positions[static_cast<std::size_t>(3 * i) + 0] = static_cast<float>(p.x);
        cloud.positions[static_cast<std::size_t>(3 * i) + 1] = static_cast<float>(p.y);
        cloud.positions[static_cast<std::size_t>(3 * i) + 2] = static_cast<float>(p.z);
        const auto& base = palette[static_cast<std::size_t>(box.class_id)];
        for (int c = 0; c < 3; ++c)
            cloud.colors[static_cast<std::size_t>(3 * i + c)] = static_cast<float>(
                std::clamp(base[static_cast<std::size_t>(c)] + rng.uniform(-0.05, 0.05), 0.0, 1.0));
        cloud.gt_labels[static_cast<std::size_t>(i)] = box.class_id;
        class_present[static_cast<std::size_t>(box.class_id)] = 1;
    }

    out.scene.class_names = spec.classes;
    for (std::size_t k = 0; k < spec.classes.size(); ++k)
        if (class_present[k]) out.scene.scene_labels.push_back(spec.classes[k]);
    out.scene.dim = spec.dim;

    // Render exact depth and noisy prototype embeddings per view. Pixels
    // carry the shifted visual prototypes, not the text ones.
    const TextEmbeddingBank visual = make_visual_prototype_bank(spec, bank);
    for (int t = 0; t < spec.cameras; ++t) {
        const CameraPose pose = make_ring_camera(spec, t, rng);
        out.scene.views.push_back(
            render_view(geo, pose, visual, spec.sigma, spec.corrupt_rate, rng));
    }
    return out;
}

SynthSuite generate_suite(const SynthSpec& spec) {
    SynthSuite suite;
    suite.bank = make_prototype_bank(spec);
    for (int i = 0; i < spec.train_scenes; ++i)
        suite.train.push_back(generate_scene(spec, i, suite.bank));
    for (int i = 0; i < spec.test_scenes; ++i)
        suite.test.push_back(generate_scene(spec, spec.train_scenes + i, suite.bank));
    return suite;
}

namespace {

nlohmann::json pose_to_json(const CameraPose& cam) {
    nlohmann::json j;
    nlohmann::json intr = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 3; ++c) row.push_back(cam.intrinsics(r, c));
        intr.push_back(row);
    }
    nlohmann::json extr = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 4; ++c) row.push_back(cam.world_to_camera(r, c));
        extr.push_back(row);
    }
    j["intrinsics"] = intr;
    j["extrinsics"] = extr;
    return j;
}

void write_scene(const Scene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::int64_t n = scene.cloud.size;
    std::vector<float> rows(static_cast<std::size_t>(6 * n));
    for (std::int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            rows[static_cast<std::size_t>(6 * i + c)] =
                scene.cloud.positions[static_cast<std::size_t>(3 * i + c)];
            rows[static_cast<std::size_t>(6 * i + 3 + c)] =
                scene.cloud.colors[static_cast<std::size_t>(3 * i + c)];
        }
    }
    write_tensor(dir / "points.tnsr", Tensor::from_f32({n, 6}, std::move(rows)));

    nlohmann::json manifest;
    manifest["points_file"] = "points.tnsr";
    manifest["class_names"] = scene.class_names;
    manifest["scene_labels"] = scene.scene_labels;
    if (scene.cloud.has_gt()) {
        write_tensor(dir / "gt.tnsr", Tensor::from_i32({n}, scene.cloud.gt_labels));
        manifest["gt_labels_file"] = "gt.tnsr";
    }
    nlohmann::json views = nlohmann::json::array();
    char name[32];
    for (std::size_t t = 0; t < scene.views.size(); ++t) {
        const View& view = scene.views[t];
        nlohmann::json vj = pose_to_json(view.pose);
        std::snprintf(name, sizeof(name), "view%02zu.emb.tnsr", t);
        write_tensor(dir / name, Tensor::from_f32({view.pose.height, view.pose.width, view.dim},
                                                  view.embeddings));
        vj["embedding_file"] = name;
        if (view.has_depth()) {
            std::snprintf(name, sizeof(name), "view%02zu.depth.tnsr", t);
            write_tensor(dir / name,
                         Tensor::from_f32({view.pose.height, view.pose.width}, view.depth));
            vj["depth_file"] = name;
        }
        views.push_back(vj);
    }
    manifest["views"] = views;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write scene manifest under " + dir.string());
    out << manifest.dump(2) << "\n";
}

}  // namespace

std::filesystem::path generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    const SynthSuite suite = generate_suite(spec);
    std::filesystem::create_directories(out_dir);

    save_bank(suite.bank, out_dir / "bank.tnsr", out_dir / "bank.json");
    {
        std::ofstream out(out_dir / "synth_spec.json", std::ios::trunc);
        out << synth_spec_to_json(spec) << "\n";
    }

    nlohmann::json manifest;
    manifest["bank_tensor"] = "bank.tnsr";
    manifest["bank_names"] = "bank.json";
    manifest["class_names"] = spec.classes;
    nlohmann::json train = nlohmann::json::array();
    nlohmann::json test = nlohmann::json::array();
    char name[32];
    for (std::size_t i = 0; i < suite.train.size(); ++i) {
        std::snprintf(name, sizeof(name), "scenes/scene_%03zu", i);
        write_scene(suite.train[i].scene, out_dir / name);
        train.push_back(std::string(name) + "/manifest.json");
    }
    for (std::size_t i = 0; i < suite.test.size(); ++i) {
        std::snprintf(name, sizeof(name), "scenes/scene_%03zu", suite.train.size() + i);
        write_scene(suite.test[i].scene, out_dir / name);
        test.push_back(std::string(name) + "/manifest.json");
    }
    manifest["train"] = train;
    manifest["test"] = test;

    const auto suite_path = out_dir / "suite.json";
    std::ofstream out(suite_path, std::ios::trunc);
    if (!out) throw IoError("cannot write suite manifest: " + suite_path.string());
    out << manifest.dump(2) << "\n";
    return suite_path;
}

EvalSuite load_suite(const std::filesystem::path& suite_path) {
    std::ifstream in(suite_path);
    if (!in) throw MissingArtifactError("cannot open suite manifest: " + suite_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad suite manifest JSON: " + std::string(e.what()));
    }
    const auto base = suite_path.parent_path();
    EvalSuite suite;
    suite.bank = load_bank(base / j.at("bank_tensor").get<std::string>(),
                           base / j.at("bank_names").get<std::string>());
    for (const auto& rel : j.at("train")) suite.train.push_back(load_scene(base / rel.get<std::string>()));
    for (const auto& rel : j.at("test")) suite.test.push_back(load_scene(base / rel.get<std::string>()));
    return suite;
}

std::vector<std::filesystem::path> suite_scene_manifests(const std::filesystem::path& suite_path,
                                                         bool test_split) {
    std::ifstream in(suite_path);
    if (!in) throw MissingArtifactError("cannot open suite manifest: " + suite_path.string());
    nlohmann::json j;
    in >> j;
    const auto base = suite_path.parent_path();
    std::vector<std::filesystem::path> out;
    for (const auto& rel : j.at(test_split ? "test" : "train"))
        out.push_back(base / rel.get<std::string>());
    return out;
}

bool oracle_visibility(const SynthSceneGeometry& geometry, const CameraPose& cam,
                       const Vec3& point, double tau) {
    const Projection proj = project_point(point, cam);
    if (!proj.visible) return false;
    if (!std::isfinite(tau)) return true;
    const double px = static_cast<double>(std::lround(proj.u));
    const double py = static_cast<double>(std::lround(proj.v));
    const Mat4 cam_to_world = rigid_inverse(cam.world_to_camera);
    const Vec3 eye{cam_to_world(0, 3), cam_to_world(1, 3), cam_to_world(2, 3)};
    const Vec3 dir_cam{(px - cam.cx()) / cam.fx(), (py - cam.cy()) / cam.fy(), 1.0};
    const Vec3 dir = cam_to_world.rotate(dir_cam);
    const double t_hit = ray_boxes_nearest(geometry, eye, dir);
    if (!(t_hit > 0)) return false;
    return std::abs(proj.depth - t_hit) <= tau;
}

bool segment_unobstructed(const SynthSceneGeometry& geometry, const Vec3& eye,
                          const Vec3& point) {
    const Vec3 delta = point - eye;
    const double dist = norm(delta);
    if (!(dist > 0)) return true;
    const Vec3 dir = (1.0 / dist) * delta;
    const double t_hit = ray_boxes_nearest(geometry, eye, dir);
    return !(t_hit > 0) || t_hit >= dist - 1e-6;
}

Vec3 camera_center(const CameraPose& cam) {
    const Mat4 cam_to_world = rigid_inverse(cam.world_to_camera);
    return {cam_to_world(0, 3), cam_to_world(1, 3), cam_to_world(2, 3)};
}

SynthSpec synth_spec_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad synth spec JSON: " + std::string(e.what()));
    }
    SynthSpec spec;
    spec.seed = j.value("seed", spec.seed);
    spec.train_scenes = j.value("train_scenes", spec.train_scenes);
    spec.test_scenes = j.value("test_scenes", spec.test_scenes);
    spec.points_per_scene = j.value("points_per_scene", spec.points_per_scene);
    spec.cameras = j.value("cameras", spec.cameras);
    spec.width = j.value("width", spec.width);
    spec.height = j.value("height", spec.height);
    spec.dim = j.value("dim", spec.dim);
    if (j.contains("classes")) spec.classes = j["classes"].get<std::vector<std::string>>();
    if (j.contains("distractors"))
        spec.distractors = j["distractors"].get<std::vector<std::string>>();
    if (j.contains("room")) {
        const auto room = j["room"].get<std::vector<double>>();
        if (room.size() != 3) throw ConfigError("synth spec room must have 3 extents");
        for (int c = 0; c < 3; ++c) spec.room[c] = room[static_cast<std::size_t>(c)];
    }
    spec.objects_min = j.value("objects_min", spec.objects_min);
    spec.objects_max = j.value("objects_max", spec.objects_max);
    spec.sigma = j.value("sigma", spec.sigma);
    spec.corrupt_rate = j.value("corrupt_rate", spec.corrupt_rate);
    spec.visual_shift = j.value("visual_shift", spec.visual_shift);
    spec.wall_probability = j.value("wall_probability", spec.wall_probability);
    spec.validate();
    return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["train_scenes"] = spec.train_scenes;
    j["test_scenes"] = spec.test_scenes;
    j["points_per_scene"] = spec.points_per_scene;
    j["cameras"] = spec.cameras;
    j["width"] = spec.width;
    j["height"] = spec.height;
    j["dim"] = spec.dim;
    j["classes"] = spec.classes;
    j["distractors"] = spec.distractors;
    j["room"] = {spec.room[0], spec.room[1], spec.room[2]};
    j["objects_min"] = spec.objects_min;
    j["objects_max"] = spec.objects_max;
    j["sigma"] = spec.sigma;
    j["corrupt_rate"] = spec.corrupt_rate;
    j["visual_shift"] = spec.visual_shift;
    j["wall_probability"] = spec.wall_probability;
    return j.dump(2);
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open synth spec: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return synth_spec_from_json(text);
}

}  // namespace vlg

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlg/evalkit.hpp"
#include "vlg/scene.hpp"

namespace vlg {

// Axis-aligned box with a class; the only primitive of the synthetic world.
struct SynthBox {
    Vec3 lo, hi;
    int class_id = 0;

    double face_area(int face) const;  // 0..5: -x,+x,-y,+y,-z,+z
    double surface_area() const;
};

struct SynthSceneGeometry {
    std::vector<SynthBox> boxes;
};

// Nearest intersection parameter along origin + t*dir with t > eps, or a
// negative value when nothing is hit. `hit_box` receives the box index.
double ray_boxes_nearest(const SynthSceneGeometry& geometry, const Vec3& origin,
                         const Vec3& dir, int* hit_box = nullptr);

struct SynthSpec {
    std::uint64_t seed = 1;
    int train_scenes = 8;
    int test_scenes = 2;
    int points_per_scene = 8192;
    int cameras = 6;
    int width = 64;
    int height = 64;
    int dim = 16;
    std::vector<std::string> classes{"floor", "wall",   "table", "chair",
                                     "sofa",  "door", "window", "plant"};
    std::vector<std::string> distractors{"door", "window", "plant"};
    double room[3] = {4.5, 3.5, 2.8};
    int objects_min = 3;
    int objects_max = 6;
    double sigma = 0.05;          // per-channel gaussian pixel noise
    double corrupt_rate = 0.1;    // chance a pixel carries a random class prototype
    // Systematic per-class offset between the rendered pixel embeddings and
    // the text prototypes, mimicking the visual/text gap of real
    // vision-language models. 0 renders pure text prototypes.
    double visual_shift = 1.0;
    double wall_probability = 0.5;

    void validate() const;
};

SynthSpec synth_spec_from_json(const std::string& json_text);
std::string synth_spec_to_json(const SynthSpec& spec);
SynthSpec load_synth_spec(const std::filesystem::path& path);

// One generated scene plus the exact geometry it was rendered from.
struct SynthScene {
    Scene scene;
    SynthSceneGeometry geometry;
};

struct SynthSuite {
    std::vector<SynthScene> train;
    std::vector<SynthScene> test;
    TextEmbeddingBank bank;
};

// Near-orthogonal class prototypes (pairwise |cos| <= 0.3 by construction).
TextEmbeddingBank make_prototype_bank(const SynthSpec& spec);

// Class prototypes as the synthetic "2D encoder" sees them: the text
// prototypes displaced by a seed-derived per-class offset of magnitude
// spec.visual_shift, then renormalized.
TextEmbeddingBank make_visual_prototype_bank(const SynthSpec& spec,
                                             const TextEmbeddingBank& text_bank);

// Standard look-at pose: +z forward, +x right, +y down (image v grows down).
CameraPose look_at_camera(const Vec3& eye, const Vec3& target, int width, int height,
                          double focal);

// Renders exact depth plus per-pixel class-prototype embeddings with noise
// and optional corruption for one posed view of the given geometry.
View render_view(const SynthSceneGeometry& geometry, const CameraPose& pose,
                 const TextEmbeddingBank& bank, double sigma, double corrupt_rate, Rng& rng);

// Deterministic per spec.seed; scene seeds derive from hash(seed, index) so
// generation order cannot change outputs.
SynthScene generate_scene(const SynthSpec& spec, int scene_index,
                          const TextEmbeddingBank& bank);
SynthSuite generate_suite(const SynthSpec& spec);

// Writes manifests, clouds, embedding and depth maps, ground truth and the
// bank under out_dir; returns the suite manifest path.
std::filesystem::path generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

// Loads a suite manifest written by generate() into evaluation form.
EvalSuite load_suite(const std::filesystem::path& suite_path);
std::vector<std::filesystem::path> suite_scene_manifests(const std::filesystem::path& suite_path,
                                                         bool test_split);

// Exact ray-vs-boxes visibility for one (point, view) pair: the point must
// project in frame and the analytic depth along its rounded pixel-center ray
// must match the point's depth within tau. This recomputes what the stored
// depth map should contain, validating projection, rendering, file IO and
// the occlusion comparison at once.
bool oracle_visibility(const SynthSceneGeometry& geometry, const CameraPose& cam,
                       const Vec3& point, double tau);

// True iff no scene box blocks the open segment from the camera center to
// the point. Margin-placed points make this agree with oracle_visibility.
bool segment_unobstructed(const SynthSceneGeometry& geometry, const Vec3& eye,
                          const Vec3& point);

Vec3 camera_center(const CameraPose& cam);

}  // namespace vlg

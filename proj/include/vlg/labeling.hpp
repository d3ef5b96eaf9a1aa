#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlg/fusion.hpp"

namespace vlg {

// One text embedding per class name, produced by an external text encoder.
struct TextEmbeddingBank {
    std::vector<std::string> class_names;  // K, ordered
    int dim = 0;
    std::vector<float> embeddings;  // K x d

    int num_classes() const { return static_cast<int>(class_names.size()); }
    const float* row(int k) const { return embeddings.data() + static_cast<std::int64_t>(k) * dim; }
    void validate() const;  // no duplicate names, nonzero row norms
};

// Bank file: tensor file for the K x d matrix plus a JSON sidecar
// {"class_names": [...]} listing names in row order.
TextEmbeddingBank load_bank(const std::filesystem::path& tensor_path,
                            const std::filesystem::path& names_path);
void save_bank(const TextEmbeddingBank& bank, const std::filesystem::path& tensor_path,
               const std::filesystem::path& names_path);

struct SceneMask {
    std::vector<std::uint8_t> present;  // K

    bool any() const;
};

SceneMask make_scene_mask(const std::vector<std::string>& scene_labels,
                          const std::vector<std::string>& class_names);

// Cosine similarity of every fused row against every bank row; both sides are
// L2-normalized before the product. Invalid fused rows yield all-zero logits.
std::vector<float> class_logits(const FusedEmbeddings& fused, const TextEmbeddingBank& bank);

// Entries of absent classes become -inf so they can never win the argmax.
std::vector<float> apply_scene_mask(std::vector<float> logits, int num_classes,
                                    const SceneMask& mask);

struct PseudoLabels {
    std::vector<std::int32_t> labels;   // N, in [0,K) or kIgnoreLabel
    std::vector<float> filtered_logits;  // N x K with -inf at masked entries
};

// Argmax of the filtered logits per valid point, ties to the lowest class
// index; invalid points get kIgnoreLabel.
PseudoLabels pseudo_labels(std::vector<float> filtered, const std::vector<std::uint8_t>& valid,
                           int num_classes);

// Row-wise argmax with ties to the lowest index.
std::int32_t argmax_row(const float* row, int n);

}  // namespace vlg

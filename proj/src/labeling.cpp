#include "vlg/labeling.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

namespace vlg {

void TextEmbeddingBank::validate() const {
    if (class_names.empty()) throw ConfigError("bank has no classes");
    if (static_cast<std::int64_t>(embeddings.size()) !=
        static_cast<std::int64_t>(class_names.size()) * dim)
        throw ConfigError("bank embedding matrix does not match class count");
    std::set<std::string> seen;
    for (const auto& name : class_names) {
        if (!seen.insert(name).second) throw ConfigError("duplicate class name: " + name);
    }
    for (int k = 0; k < num_classes(); ++k) {
        double sq = 0;
        for (int c = 0; c < dim; ++c) sq += static_cast<double>(row(k)[c]) * row(k)[c];
        if (!(sq > 0)) throw ConfigError("bank row '" + class_names[static_cast<std::size_t>(k)] +
                                         "' has zero norm");
    }
}

TextEmbeddingBank load_bank(const std::filesystem::path& tensor_path,
                            const std::filesystem::path& names_path) {
    TextEmbeddingBank bank;
    Tensor t = read_tensor(tensor_path);
    if (t.dtype != Dtype::F32 || t.shape.size() != 2)
        throw ConfigError("bank tensor must be a K x d f32 tensor");
    bank.dim = static_cast<int>(t.shape[1]);
    bank.embeddings = std::move(t.f32);

    std::ifstream in(names_path);
    if (!in) throw MissingArtifactError("cannot open bank sidecar: " + names_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad bank sidecar JSON: " + std::string(e.what()));
    }
    bank.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (static_cast<std::int64_t>(bank.class_names.size()) != t.shape[0])
        throw ConfigError("bank sidecar class count does not match tensor rows");
    bank.validate();
    return bank;
}

void save_bank(const TextEmbeddingBank& bank, const std::filesystem::path& tensor_path,
               const std::filesystem::path& names_path) {
    write_tensor(tensor_path,
                 Tensor::from_f32({bank.num_classes(), bank.dim}, bank.embeddings));
    nlohmann::json j;
    j["class_names"] = bank.class_names;
    std::ofstream out(names_path, std::ios::trunc);
    if (!out) throw IoError("cannot write bank sidecar: " + names_path.string());
    out << j.dump(2) << "\n";
}

bool SceneMask::any() const {
    for (auto p : present)
        if (p) return true;
    return false;
}

SceneMask make_scene_mask(const std::vector<std::string>& scene_labels,
                          const std::vector<std::string>& class_names) {
    SceneMask mask;
    mask.present.assign(class_names.size(), 0);
    for (const auto& label : scene_labels) {
        bool found = false;
        for (std::size_t k = 0; k < class_names.size(); ++k) {
            if (class_names[k] == label) {
                mask.present[k] = 1;
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("scene label '" + label + "' is not in class_names");
    }
    if (!mask.any()) throw ConfigError("scene mask has no present class");
    return mask;
}

namespace {

// L2-normalized copy of a K x d row-major matrix; zero rows stay zero.
std::vector<double> normalized_rows(const float* data, std::int64_t rows, int dim) {
    std::vector<double> out(static_cast<std::size_t>(rows) * dim);
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* src = data + r * dim;
        double sq = 0;
        for (int c = 0; c < dim; ++c) sq += static_cast<double>(src[c]) * src[c];
        const double inv = sq > 0 ? 1.0 / std::sqrt(sq) : 0.0;
        double* dst = out.data() + r * dim;
        for (int c = 0; c < dim; ++c) dst[c] = src[c] * inv;
    }
    return out;
}

}  // namespace

std::vector<float> class_logits(const FusedEmbeddings& fused, const TextEmbeddingBank& bank) {
    if (fused.dim != 0 && fused.dim != bank.dim)
        throw ConfigError("fused embeddings and bank disagree on dimension d");
    const int k = bank.num_classes();
    const int d = bank.dim;
    const std::vector<double> bank_norm = normalized_rows(bank.embeddings.data(), k, d);

    std::vector<float> logits(static_cast<std::size_t>(fused.size) * k, 0.0f);
    for (std::int64_t i = 0; i < fused.size; ++i) {
        if (!fused.valid[static_cast<std::size_t>(i)]) continue;
        const float* src = fused.row(i);
        double sq = 0;
        for (int c = 0; c < d; ++c) sq += static_cast<double>(src[c]) * src[c];
        if (!(sq > 0)) continue;
        const double inv = 1.0 / std::sqrt(sq);
        float* dst = logits.data() + i * k;
        for (int j = 0; j < k; ++j) {
            double s = 0;
            const double* b = bank_norm.data() + static_cast<std::int64_t>(j) * d;
            for (int c = 0; c < d; ++c) s += src[c] * inv * b[c];
            dst[j] = static_cast<float>(s);
        }
    }
    return logits;
}

std::vector<float> apply_scene_mask(std::vector<float> logits, int num_classes,
                                    const SceneMask& mask) {
    if (static_cast<int>(mask.present.size()) != num_classes)
        throw ConfigError("scene mask size does not match K");
    if (!mask.any()) throw ConfigError("scene mask has no present class");
    const float neg_inf = -std::numeric_limits<float>::infinity();
    const std::int64_t n = static_cast<std::int64_t>(logits.size()) / num_classes;
    for (std::int64_t i = 0; i < n; ++i) {
        float* row = logits.data() + i * num_classes;
        for (int j = 0; j < num_classes; ++j)
            if (!mask.present[static_cast<std::size_t>(j)]) row[j] = neg_inf;
    }
    return logits;
}

std::int32_t argmax_row(const float* row, int n) {
    std::int32_t best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

PseudoLabels pseudo_labels(std::vector<float> filtered, const std::vector<std::uint8_t>& valid,
                           int num_classes) {
    const std::int64_t n = static_cast<std::int64_t>(valid.size());
    if (static_cast<std::int64_t>(filtered.size()) != n * num_classes)
        throw ConfigError("filtered logits shape does not match valid mask");
    PseudoLabels out;
    out.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        out.labels[static_cast<std::size_t>(i)] =
            valid[static_cast<std::size_t>(i)]
                ? argmax_row(filtered.data() + i * num_classes, num_classes)
                : kIgnoreLabel;
    }
    out.filtered_logits = std::move(filtered);
    return out;
}

}  // namespace vlg

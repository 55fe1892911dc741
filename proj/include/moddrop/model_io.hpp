#pragma once

#include "moddrop/network.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Model and matrix files: a short text header terminated by a line "end",
// followed by little-endian IEEE-754 float64 values. Layout in
// docs/file_formats.md.
namespace moddrop::io {

inline constexpr int kModelVersion = 1;
inline constexpr int kMatrixVersion = 1;

struct SavedModel {
    NetworkTopology topology;
    std::optional<NetworkParams> network;         // kind = network
    std::vector<ModalityClassifier> classifiers;  // kind = classifiers
};

std::string serialize_network(const NetworkTopology& topo, const NetworkParams& params);
std::string serialize_classifiers(const NetworkTopology& topo,
                                  const std::vector<ModalityClassifier>& classifiers);
SavedModel deserialize_model(const std::string& bytes);

void save_model(const std::filesystem::path& path, const NetworkTopology& topo,
                const NetworkParams& params);
void save_classifiers(const std::filesystem::path& path, const NetworkTopology& topo,
                      const std::vector<ModalityClassifier>& classifiers);
SavedModel load_model(const std::filesystem::path& path);

std::string serialize_matrix(const Matrix& m);
Matrix deserialize_matrix(const std::string& bytes);
void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace moddrop::io

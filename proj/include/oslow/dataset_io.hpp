#pragma once

#include <cstdint>
#include <string>

#include "oslow/scm.hpp"
#include "oslow/tensor.hpp"

namespace oslow::io {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);
std::string sha256_file(const std::string& path);

/// CSV with header x1,...,xd; doubles printed in shortest round-trip form so
/// regeneration is byte-identical.
std::string dataset_to_csv(const Tensor& data);
void write_dataset_csv(const std::string& path, const Tensor& data);
Tensor read_dataset_csv(const std::string& path);

/// Sidecar JSON: full generative description (graph, functions, noise,
/// seed, sample count, data hash). simulate() on the parsed spec with the
/// stored seed reproduces the CSV bit-exactly.
std::string sidecar_to_json(const scm::Dataset& ds, std::size_t n,
                            const std::string& csv_sha256);
void write_sidecar(const std::string& path, const scm::Dataset& ds,
                   std::size_t n, const std::string& csv_sha256);

struct Sidecar {
  scm::ScmSpec spec;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::string csv_sha256;
};

Sidecar read_sidecar(const std::string& path);

}  // namespace oslow::io

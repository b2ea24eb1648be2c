#include "entangle/random.hpp"

namespace entangle {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index) {
  // FNV-1a over the tag, then mixed with the master seed and the counter.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(master ^ h) + index);
}

Vec random_unit_vector(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  double norm = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

Mat random_gaussian(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace entangle

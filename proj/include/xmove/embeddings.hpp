#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "xmove/date.hpp"
#include "xmove/features.hpp"
#include "xmove/matrix.hpp"

namespace xmove::embeddings {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kDefaultDim = 768;
inline constexpr std::uint32_t kDefaultMaxSlices = 362;

// Binary layout, little-endian throughout:
//   "PBEM" | u32 version | u32 dim | u32 max_slices | u32 n_days
//   per day: u16 date length | ISO date bytes | u32 n_slices | n_slices*dim f32 (row-major)
struct EmbeddingFileHeader {
    std::uint32_t version = kFormatVersion;
    std::uint32_t dim = kDefaultDim;
    std::uint32_t max_slices = kDefaultMaxSlices;
    std::uint32_t n_days = 0;
};

struct EmbeddingStack {
    Date date;
    std::size_t n_slices = 0;
    std::size_t dim = 0;
    std::vector<float> values;  // n_slices * dim

    const float* row(std::size_t i) const { return values.data() + i * dim; }
};

struct EmbeddingFile {
    EmbeddingFileHeader header;
    std::vector<EmbeddingStack> stacks;  // sorted by date
};

EmbeddingFile read_embedding_file(const std::string& path, std::uint32_t expected_dim = kDefaultDim);
EmbeddingFile read_embeddings(std::istream& in, std::uint32_t expected_dim = kDefaultDim);

void write_embedding_file(const std::string& path, const std::vector<EmbeddingStack>& stacks,
                          std::uint32_t dim = kDefaultDim, std::uint32_t max_slices = kDefaultMaxSlices);
void write_embeddings(std::ostream& out, const std::vector<EmbeddingStack>& stacks, std::uint32_t dim,
                      std::uint32_t max_slices);

// Copies the stack into the top rows of a max_slices x dim matrix; remaining
// rows are zero. Refuses stacks taller than max_slices.
Matrix pad_stack(const EmbeddingStack& stack, std::size_t max_slices = kDefaultMaxSlices);

struct AlignReport {
    std::size_t joined = 0;
    std::size_t stacks_without_label = 0;
    std::size_t labels_without_stack = 0;
};

// Inner join of stacks and labels on date, sorted by date. Stacks are kept
// unpadded; padded(i) materializes the model input on demand.
struct AlignedDataset {
    std::size_t max_slices = kDefaultMaxSlices;
    std::vector<EmbeddingStack> stacks;
    std::vector<bool> labels;
    AlignReport report;

    std::size_t size() const { return labels.size(); }
    Matrix padded(std::size_t i) const { return pad_stack(stacks[i], max_slices); }
    std::vector<Date> dates() const;
};

AlignedDataset align_with_labels(const std::vector<EmbeddingStack>& stacks, const features::LabelSet& labels,
                                 std::size_t max_slices = kDefaultMaxSlices);

}  // namespace xmove::embeddings

#include "xmove/embeddings.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "xmove/binary_io.hpp"
#include "xmove/error.hpp"

namespace xmove::embeddings {

namespace {

using binary_io::ByteReader;
using binary_io::put_uint;

constexpr std::array<char, 4> kMagic = {'P', 'B', 'E', 'M'};

}  // namespace

EmbeddingFile read_embeddings(std::istream& in, std::uint32_t expected_dim) {
    ByteReader r(in, "embedding file");
    std::array<char, 4> magic{};
    r.read(magic.data(), magic.size());
    if (magic != kMagic) throw FormatError("not an embedding file (bad magic)");

    EmbeddingFile file;
    auto& h = file.header;
    h.version = r.uint<std::uint32_t>();
    if (h.version != kFormatVersion) {
        throw FormatError("unsupported embedding file version " + std::to_string(h.version));
    }
    h.dim = r.uint<std::uint32_t>();
    if (h.dim != expected_dim) {
        throw ShapeError("embedding dimension " + std::to_string(h.dim) + " does not match expected " +
                         std::to_string(expected_dim));
    }
    h.max_slices = r.uint<std::uint32_t>();
    h.n_days = r.uint<std::uint32_t>();

    file.stacks.reserve(h.n_days);
    for (std::uint32_t d = 0; d < h.n_days; ++d) {
        const auto record_offset = r.offset();
        const auto len = r.uint<std::uint16_t>();
        std::string date_text(len, '\0');
        r.read(date_text.data(), len);
        EmbeddingStack stack;
        try {
            stack.date = Date::parse(date_text);
        } catch (const ValidationError&) {
            throw FormatError("bad date '" + date_text + "' in record at byte offset " +
                              std::to_string(record_offset));
        }
        stack.n_slices = r.uint<std::uint32_t>();
        stack.dim = h.dim;
        if (stack.n_slices == 0 || stack.n_slices > h.max_slices) {
            throw FormatError("record " + date_text + " declares " + std::to_string(stack.n_slices) +
                              " slices (allowed 1.." + std::to_string(h.max_slices) + ")");
        }
        stack.values.resize(stack.n_slices * h.dim);
        std::vector<std::uint32_t> raw(stack.values.size());
        r.read(raw.data(), raw.size() * sizeof(std::uint32_t));
        for (std::size_t i = 0; i < raw.size(); ++i) {
            std::uint32_t bits = raw[i];
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            stack.values[i] = std::bit_cast<float>(bits);
            if (!std::isfinite(stack.values[i])) {
                throw FormatError("non-finite embedding value in record " + date_text);
            }
        }
        file.stacks.push_back(std::move(stack));
    }
    if (!r.at_end()) {
        throw FormatError("embedding file has trailing bytes after " + std::to_string(h.n_days) +
                          " declared records (offset " + std::to_string(r.offset()) + ")");
    }
    std::stable_sort(file.stacks.begin(), file.stacks.end(),
                     [](const EmbeddingStack& a, const EmbeddingStack& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < file.stacks.size(); ++i) {
        if (file.stacks[i].date == file.stacks[i - 1].date) {
            throw FormatError("duplicate embedding record for " + file.stacks[i].date.iso());
        }
    }
    return file;
}

EmbeddingFile read_embedding_file(const std::string& path, std::uint32_t expected_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("cannot open '" + path + "'");
    return read_embeddings(in, expected_dim);
}

void write_embeddings(std::ostream& out, const std::vector<EmbeddingStack>& stacks, std::uint32_t dim,
                      std::uint32_t max_slices) {
    out.write(kMagic.data(), kMagic.size());
    put_uint<std::uint32_t>(out, kFormatVersion);
    put_uint<std::uint32_t>(out, dim);
    put_uint<std::uint32_t>(out, max_slices);
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(stacks.size()));
    for (const auto& s : stacks) {
        if (s.dim != dim || s.values.size() != s.n_slices * dim) {
            throw ShapeError("stack " + s.date.iso() + " does not have dimension " + std::to_string(dim));
        }
        if (s.n_slices == 0 || s.n_slices > max_slices) {
            throw ValidationError("stack " + s.date.iso() + " has " + std::to_string(s.n_slices) +
                                  " slices (allowed 1.." + std::to_string(max_slices) + ")");
        }
        const auto iso = s.date.iso();
        put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(iso.size()));
        out.write(iso.data(), static_cast<std::streamsize>(iso.size()));
        put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(s.n_slices));
        for (float v : s.values) put_uint<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
}

void write_embedding_file(const std::string& path, const std::vector<EmbeddingStack>& stacks, std::uint32_t dim,
                          std::uint32_t max_slices) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DependencyError("cannot write '" + path + "'");
    write_embeddings(out, stacks, dim, max_slices);
}

Matrix pad_stack(const EmbeddingStack& stack, std::size_t max_slices) {
    if (stack.n_slices > max_slices) {
        throw ValidationError("stack " + stack.date.iso() + " has " + std::to_string(stack.n_slices) +
                              " slices, more than the " + std::to_string(max_slices) + " allowed");
    }
    Matrix m(max_slices, stack.dim, 0.0);
    for (std::size_t i = 0; i < stack.n_slices; ++i) {
        auto dst = m.row(i);
        const float* src = stack.row(i);
        for (std::size_t j = 0; j < stack.dim; ++j) dst[j] = src[j];
    }
    return m;
}

std::vector<Date> AlignedDataset::dates() const {
    std::vector<Date> out;
    out.reserve(stacks.size());
    for (const auto& s : stacks) out.push_back(s.date);
    return out;
}

AlignedDataset align_with_labels(const std::vector<EmbeddingStack>& stacks, const features::LabelSet& labels,
                                 std::size_t max_slices) {
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return labels.dates[a] < labels.dates[b]; });
    std::vector<const EmbeddingStack*> sorted;
    for (const auto& s : stacks) sorted.push_back(&s);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->date < b->date; });

    AlignedDataset ds;
    ds.max_slices = max_slices;
    std::size_t si = 0, li = 0;
    while (si < sorted.size() && li < order.size()) {
        const Date sd = sorted[si]->date;
        const Date ld = labels.dates[order[li]];
        if (sd < ld) {
            ++ds.report.stacks_without_label;
            ++si;
        } else if (ld < sd) {
            ++ds.report.labels_without_stack;
            ++li;
        } else {
            if (sorted[si]->n_slices > max_slices) {
                throw ValidationError("stack " + sd.iso() + " exceeds " + std::to_string(max_slices) + " slices");
            }
            ds.stacks.push_back(*sorted[si]);
            ds.labels.push_back(labels.values[order[li]]);
            ++si;
            ++li;
        }
    }
    ds.report.stacks_without_label += sorted.size() - si;
    ds.report.labels_without_stack += order.size() - li;
    ds.report.joined = ds.labels.size();
    if (ds.labels.empty()) throw AlignmentError("embedding and label dates do not intersect");
    return ds;
}

}  // namespace xmove::embeddings

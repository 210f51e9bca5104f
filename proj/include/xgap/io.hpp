#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xgap/tensor.hpp"

namespace xgap {

// Binary container shared by checkpoints, corpus image stacks and the binary
// FeatureSet variant: magic "XGAP", u32 format version, named f64 metadata
// entries, then named tensors as (name length, name bytes, rank, dims,
// little-endian 64-bit floats). Loading validates magic/version and fails on
// truncation without partial results.
struct Archive {
    static constexpr char kMagic[4] = {'X', 'G', 'A', 'P'};
    static constexpr std::uint32_t kVersion = 1;

    std::vector<std::pair<std::string, double>> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    double meta_value(const std::string& name) const;
    bool has_meta(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;

    void save(const std::string& path) const;
    static Archive load(const std::string& path);

    // True when the file starts with the archive magic (sniffing for format
    // dispatch); false also for unreadable/short files.
    static bool sniff(const std::string& path);
};

// Line-oriented helpers used by the text formats.
std::vector<std::string> split_ws(const std::string& line);
std::string format_f64(double v);  // shortest round-trippable decimal

}  // namespace xgap

#pragma once

#include "hyperfuse/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace hyperfuse {

// Text layout: a `shape=c,h,w` header, then one line per slice along the last
// axis (rank-0 tensors write `shape=` and a single value). Values use 17
// significant digits, which round-trips every double exactly.
void write_tensor_csv(std::ostream& out, const Tensor& t);
Tensor read_tensor_csv(std::istream& in);

void save_tensor_csv(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor_csv(const std::filesystem::path& path);

std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace hyperfuse

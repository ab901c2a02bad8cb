#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace foxp2 {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace foxp2

#pragma once

#include <string>

#include "pacq/synth/generator.hpp"

namespace pacq::synth {

// "PACQ" container: header (dims + generator config echo, CRC32) followed by
// fixed-size per-study records and a trailing CRC32 over all record bytes.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

void save_split(const DatasetSplit& split, const std::string& path);
DatasetSplit load_split(const std::string& path);

}  // namespace pacq::synth

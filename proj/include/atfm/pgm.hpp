// atfm/pgm.hpp
//
// Binary (P5) portable graymap I/O, maxval 255. Images map linearly between
// [0,1] and 0..255; masks are stored as 0/255.

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef ATFM_PGM_HPP_
#define ATFM_PGM_HPP_

#include <string>

#include "atfm/grid.hpp"

namespace atfm {

void write_pgm(const std::string& path, const Grid& image);
void write_pgm(const std::string& path, const Mask& mask);

Grid read_pgm_grid(const std::string& path);
Mask read_pgm_mask(const std::string& path);  // requires values in {0, 255}

}  // namespace atfm

#endif  // ATFM_PGM_HPP_

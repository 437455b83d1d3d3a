// pgm.cpp

// Copyright 2026  ATFM authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "atfm/pgm.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "atfm/errors.hpp"

namespace atfm {

namespace {

void write_pgm_bytes(const std::string& path, int h, int w, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot open for writing: " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("pgm: write failed: " + path);
}

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  int ch = in.peek();
  while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    ch = in.peek();
  }
  int value = 0;
  if (!(in >> value)) throw IoError("pgm: malformed header: " + path);
  return value;
}

std::vector<uint8_t> read_pgm_bytes(const std::string& path, int* h, int* w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open: " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw IoError("pgm: not a binary P5 graymap: " + path);
  *w = next_header_int(in, path);
  *h = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (*w <= 0 || *h <= 0 || maxval != 255)
    throw IoError("pgm: unsupported header (need maxval 255): " + path);
  in.get();  // single whitespace after maxval
  std::vector<uint8_t> bytes(static_cast<size_t>(*h) * *w);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("pgm: truncated pixel data: " + path);
  return bytes;
}

}  // namespace

void write_pgm(const std::string& path, const Grid& image) {
  std::vector<uint8_t> bytes(image.v.size());
  for (size_t i = 0; i < image.v.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, image.v[i]));
    bytes[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  write_pgm_bytes(path, image.h, image.w, bytes);
}

void write_pgm(const std::string& path, const Mask& mask) {
  std::vector<uint8_t> bytes(mask.v.size());
  for (size_t i = 0; i < mask.v.size(); ++i) bytes[i] = mask.v[i] ? 255 : 0;
  write_pgm_bytes(path, mask.h, mask.w, bytes);
}

Grid read_pgm_grid(const std::string& path) {
  int h = 0, w = 0;
  const std::vector<uint8_t> bytes = read_pgm_bytes(path, &h, &w);
  Grid g(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) g.v[i] = bytes[i] / 255.0;
  return g;
}

Mask read_pgm_mask(const std::string& path) {
  int h = 0, w = 0;
  const std::vector<uint8_t> bytes = read_pgm_bytes(path, &h, &w);
  Mask m(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255)
      throw IoError("pgm: mask value not in {0,255}: " + path);
    m.v[i] = bytes[i] ? 1 : 0;
  }
  return m;
}

}  // namespace atfm

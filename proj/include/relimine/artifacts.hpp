#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "relimine/embedder.hpp"
#include "relimine/encode.hpp"

namespace relimine {

class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "<participant>/<task>/w<window>/s<start>"
std::string segment_id(const Segment& s);

// Binary segment file "RLMSEG01" (event ids and feature vectors) plus a
// JSONL index with one metadata line per segment, in the same order.
// Numbers are stored little-endian.
void write_segments(const std::vector<Segment>& segments, const std::string& binPath,
                    const std::string& indexPath);
std::vector<Segment> read_segments(const std::string& binPath, const std::string& indexPath);

// Embedding matrix file "RLMEMB01": rows, cols, then row-major doubles.
void write_embeddings(const RowMatrix& m, const std::string& path);
RowMatrix read_embeddings(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace relimine

#pragma once

#include <string>
#include <vector>

#include "jaa/tensor.hpp"

namespace jaa {

struct SampleRecord {
  std::string image;    // path as written in the manifest
  std::string subject;
  std::vector<double> landmarks;  // x0,y0,...  (2*n_align)
  std::vector<double> labels;     // n_au, binary or intensity 0-5
};

struct ManifestError {
  int line = 0;
  std::string message;
};

struct Manifest {
  std::vector<SampleRecord> records;
  std::vector<ManifestError> errors;
  int n_align = 0;
  int n_au = 0;
};

// CSV with a header row: image,subject,lm0_x,lm0_y,...,au0,...
// Image paths are interpreted relative to the manifest's directory when
// loading; check_images verifies each file exists.
Manifest load_manifest(const std::string& path, bool fail_fast = true,
                       bool check_images = true);
void write_manifest(const std::string& path, const std::vector<SampleRecord>& records,
                    int n_align, int n_au);

// Portable pixmap family. load_image returns [3,H,W] in [0,1]; grayscale
// input is broadcast to 3 channels.
Tensor load_image(const std::string& path);
void save_ppm(const std::string& path, const Tensor& img);  // [3,H,W] in [0,1]
void save_pgm(const std::string& path, const std::vector<double>& values, int h, int w);

struct SynthConfig {
  int image_size = 32;
  int n_align = 3;
  int n_au = 2;
  int eye_left = 0;   // landmark index of the left outer eye corner
  int eye_right = 1;  // landmark index of the right outer eye corner
};

struct SynthDataset {
  std::vector<SampleRecord> records;  // image paths relative to dir
  std::vector<double> rates;          // empirical per-AU occurrence rates
};

// Deterministic face-like blob images: landmark-positioned eye/mouth blobs
// plus one indicator blob per AU whose brightness encodes the label.
SynthDataset synth_dataset(const std::string& dir, int n_subjects, int frames_per_subject,
                           std::uint64_t seed, const SynthConfig& cfg);

double inter_ocular_distance(const std::vector<double>& landmarks, int eye_left, int eye_right);

}  // namespace jaa

#pragma once

#include <string>
#include <vector>

#include "eisderm/errors.hpp"

namespace eisderm {

// EIS feature layout: 10 electrode-depth permutations x 35 log-spaced
// frequencies x (log-magnitude, phase), depth-major, frequency-minor.
constexpr size_t kEisDepths = 10;
constexpr size_t kEisFrequencies = 35;
constexpr size_t kEisFeatures = kEisDepths * kEisFrequencies * 2;  // 700
constexpr double kEisFreqLo = 1e3;
constexpr double kEisFreqHi = 2.5e6;

using Measurement = std::vector<double>;  // exactly kEisFeatures entries

enum class Subtype { Nevus, Melanoma, OtherMalignant, Dysplastic };

const char* subtype_name(Subtype s);
Subtype subtype_from_name(const std::string& name);

// RGB image, planar (3,h,w) row-major, values in [0,1].
struct DermImage {
  int h = 0, w = 0;
  std::vector<double> px;

  DermImage() = default;
  DermImage(int h_, int w_) : h(h_), w(w_), px((size_t)3 * h_ * w_, 0.0) {}
  double& at(int c, int y, int x) { return px[((size_t)c * h + y) * w + x]; }
  double at(int c, int y, int x) const {
    return px[((size_t)c * h + y) * w + x];
  }
};

struct Lesion {
  std::string id;
  int label = 0;  // 1 = malignant
  Subtype subtype = Subtype::Nevus;
  int fold = 0;
  DermImage image;
  std::vector<Measurement> measurements;

  bool in_eval_subset() const {
    return label == 0 || subtype == Subtype::Melanoma;
  }
};

struct Dataset {
  std::vector<Lesion> lesions;

  std::vector<size_t> fold_indices(int fold) const;
  std::vector<size_t> indices_except_fold(int fold) const;
};

void write_ppm(const std::string& path, const DermImage& img);
DermImage read_ppm(const std::string& path);

// Reads manifest.csv (lesion_id,image_path,label,subtype,fold) and
// eis.csv (lesion_id,measurement_index,f000..f699) plus the referenced images.
Dataset load_dataset(const std::string& dir);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace eisderm

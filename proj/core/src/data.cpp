#include "eisderm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

namespace eisderm {

const char* subtype_name(Subtype s) {
  switch (s) {
    case Subtype::Nevus: return "nevus";
    case Subtype::Melanoma: return "melanoma";
    case Subtype::OtherMalignant: return "other_malignant";
    case Subtype::Dysplastic: return "dysplastic";
  }
  return "nevus";
}

Subtype subtype_from_name(const std::string& name) {
  if (name == "nevus") return Subtype::Nevus;
  if (name == "melanoma") return Subtype::Melanoma;
  if (name == "other_malignant") return Subtype::OtherMalignant;
  if (name == "dysplastic") return Subtype::Dysplastic;
  throw ContractError("unknown subtype '" + name + "'");
}

std::vector<size_t> Dataset::fold_indices(int fold) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < lesions.size(); ++i)
    if (lesions[i].fold == fold) out.push_back(i);
  return out;
}

std::vector<size_t> Dataset::indices_except_fold(int fold) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < lesions.size(); ++i)
    if (lesions[i].fold != fold) out.push_back(i);
  return out;
}

void write_ppm(const std::string& path, const DermImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot write " + path);
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> row((size_t)img.w * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        row[(size_t)x * 3 + c] =
            (unsigned char)std::lround(v * 255.0);
      }
    os.write(reinterpret_cast<const char*>(row.data()),
             (std::streamsize)row.size());
  }
}

DermImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot read " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw ContractError(path + ": not a binary PPM (P6)");
  auto skip_ws_comments = [&]() {
    while (true) {
      int ch = is.peek();
      if (ch == '#') {
        std::string line;
        std::getline(is, line);
      } else if (isspace(ch)) {
        is.get();
      } else {
        break;
      }
    }
  };
  int w, h, maxval;
  skip_ws_comments();
  is >> w;
  skip_ws_comments();
  is >> h;
  skip_ws_comments();
  is >> maxval;
  is.get();  // single whitespace before payload
  if (maxval != 255) throw ContractError(path + ": only maxval 255 supported");
  DermImage img(h, w);
  std::vector<unsigned char> buf((size_t)w * h * 3);
  is.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)buf.size());
  if (!is) throw ContractError(path + ": truncated PPM payload");
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = buf[((size_t)y * w + x) * 3 + c] / 255.0;
  return img;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream manifest(dir + "/manifest.csv");
  if (!manifest) throw ContractError("cannot read " + dir + "/manifest.csv");
  std::string line;
  std::getline(manifest, line);  // header
  Dataset ds;
  std::map<std::string, size_t> by_id;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 5)
      throw ContractError("manifest.csv: expected 5 columns, got line '" +
                          line + "'");
    Lesion l;
    l.id = f[0];
    l.label = std::stoi(f[2]);
    l.subtype = subtype_from_name(f[3]);
    l.fold = std::stoi(f[4]);
    l.image = read_ppm(dir + "/" + f[1]);
    by_id[l.id] = ds.lesions.size();
    ds.lesions.push_back(std::move(l));
  }

  std::ifstream eis(dir + "/eis.csv");
  if (!eis) throw ContractError("cannot read " + dir + "/eis.csv");
  std::getline(eis, line);  // header
  while (std::getline(eis, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 2 + kEisFeatures)
      throw ContractError("eis.csv: wrong column count");
    auto it = by_id.find(f[0]);
    if (it == by_id.end())
      throw ContractError("eis.csv: unknown lesion id " + f[0]);
    Measurement m(kEisFeatures);
    for (size_t i = 0; i < kEisFeatures; ++i) {
      m[i] = std::stod(f[2 + i]);
      if (!std::isfinite(m[i]))
        throw NumericError("eis.csv: non-finite feature for lesion " + f[0]);
    }
    ds.lesions[it->second].measurements.push_back(std::move(m));
  }
  for (const auto& l : ds.lesions)
    if (l.measurements.empty())
      throw ContractError("lesion " + l.id + " has no EIS measurements");
  return ds;
}

}  // namespace eisderm

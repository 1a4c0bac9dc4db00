#include "mvi/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mvi/image_ops.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mvi::data {

// --- LabeledImageSet ------------------------------------------------------

Tensor LabeledImageSet::image(int64_t i) const {
  int64_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out({c, h, w});
  std::memcpy(out.ptr(), images.ptr() + i * c * h * w,
              static_cast<size_t>(c * h * w) * sizeof(float));
  return out;
}

void LabeledImageSet::set_image(int64_t i, const Tensor& img) {
  int64_t chw = images.dim(1) * images.dim(2) * images.dim(3);
  if (img.numel() != chw)
    throw std::invalid_argument("set_image: shape mismatch");
  std::memcpy(images.ptr() + i * chw, img.ptr(),
              static_cast<size_t>(chw) * sizeof(float));
}

void LabeledImageSet::validate() const {
  if (count() != static_cast<int64_t>(labels.size()))
    throw std::runtime_error("image/label count mismatch");
  for (int32_t l : labels)
    if (l < 0 || l >= class_count)
      throw std::runtime_error("label out of range");
  for (float v : images.data)
    if (v < 0.0f || v > 1.0f)
      throw std::runtime_error("intensity outside [0,1]");
}

std::vector<int64_t> FoldAssignment::fold_indices(int fold) const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < fold_of_sample.size(); ++i)
    if (fold_of_sample[i] == fold) out.push_back(static_cast<int64_t>(i));
  return out;
}

std::vector<int64_t> FoldAssignment::complement_indices(int fold) const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < fold_of_sample.size(); ++i)
    if (fold_of_sample[i] != fold) out.push_back(static_cast<int64_t>(i));
  return out;
}

FoldAssignment stratified_kfold_split(const std::vector<int32_t>& labels, int k,
                                      uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold_split: k >= 2");
  std::map<int32_t, std::vector<int64_t>> by_class;
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<int64_t>(i));

  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.fold_of_sample.assign(labels.size(), -1);
  Rng rng(seed);
  for (auto& [cls, idx] : by_class) {
    if (static_cast<int>(idx.size()) < k)
      throw std::runtime_error("stratification error: class " +
                               std::to_string(cls) + " has fewer than k members");
    rng.shuffle(idx);
    for (size_t i = 0; i < idx.size(); ++i)
      fa.fold_of_sample[static_cast<size_t>(idx[i])] =
          static_cast<int32_t>(i % static_cast<size_t>(k));
  }
  return fa;
}

void MultiViewDataset::validate() const {
  view_a.validate();
  view_b.validate();
  if (pairs.size() != labels.size())
    throw std::runtime_error("pair/label count mismatch");
  for (size_t i = 0; i < pairs.size(); ++i) {
    auto [a, b] = pairs[i];
    if (view_a.labels[static_cast<size_t>(a)] != labels[i] ||
        view_b.labels[static_cast<size_t>(b)] != labels[i])
      throw std::runtime_error("pair label inconsistency at " +
                               std::to_string(i));
    if (pairing_mode == PairingMode::by_subject && a != b)
      throw std::runtime_error("by_subject pair with mismatched indices");
  }
}

// --- IDX loader -----------------------------------------------------------

namespace {

std::vector<uint8_t> read_maybe_gz(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> out;
  uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0)
    out.insert(out.end(), buf, buf + n);
  gzclose(f);
  if (n < 0) throw std::runtime_error("decompress failed: " + path);
  return out;
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

}  // namespace

LabeledImageSet load_idx(const std::string& images_path,
                         const std::string& labels_path) {
  auto ib = read_maybe_gz(images_path);
  auto lb = read_maybe_gz(labels_path);
  if (ib.size() < 16 || be32(ib.data()) != 0x803)
    throw std::runtime_error("not an idx3 image file: " + images_path);
  if (lb.size() < 8 || be32(lb.data()) != 0x801)
    throw std::runtime_error("not an idx1 label file: " + labels_path);
  int64_t n = be32(ib.data() + 4), h = be32(ib.data() + 8),
          w = be32(ib.data() + 12);
  if (static_cast<int64_t>(be32(lb.data() + 4)) != n)
    throw std::runtime_error("image/label count mismatch in idx pair");
  if (static_cast<int64_t>(ib.size()) < 16 + n * h * w)
    throw std::runtime_error("truncated idx image payload");

  LabeledImageSet set;
  set.class_count = 10;
  set.images = Tensor({n, 1, h, w});
  set.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n * h * w; ++i)
    set.images.data[static_cast<size_t>(i)] = ib[16 + i] / 255.0f;
  for (int64_t i = 0; i < n; ++i)
    set.labels[static_cast<size_t>(i)] = lb[8 + i];
  return set;
}

// --- SVHN MAT v5 loader ---------------------------------------------------

namespace {

struct MatArray {
  std::string name;
  int matlab_class = 0;
  std::vector<int64_t> dims;
  std::vector<uint8_t> bytes;  // raw real-part payload
  int data_type = 0;           // mi type of the real part
};

constexpr int kMiInt8 = 1, kMiUint8 = 2, kMiInt32 = 5, kMiUint32 = 6,
              kMiDouble = 9, kMiCompressed = 15, kMiMatrix = 14;

size_t element_size(int mi_type) {
  switch (mi_type) {
    case kMiInt8:
    case kMiUint8:
      return 1;
    case kMiInt32:
    case kMiUint32:
      return 4;
    case kMiDouble:
      return 8;
    default:
      throw std::runtime_error("mat: unsupported element type " +
                               std::to_string(mi_type));
  }
}

// Reads one sub-element (handles the small-data packing); advances pos.
void read_subelement(const std::vector<uint8_t>& buf, size_t& pos, int& type,
                     std::vector<uint8_t>& payload) {
  if (pos + 8 > buf.size()) throw std::runtime_error("mat: truncated element");
  uint32_t tag;
  std::memcpy(&tag, buf.data() + pos, 4);
  if (tag >> 16) {  // small data element: size in upper half
    type = static_cast<int>(tag & 0xffff);
    size_t size = tag >> 16;
    payload.assign(buf.begin() + pos + 4, buf.begin() + pos + 4 + size);
    pos += 8;
  } else {
    type = static_cast<int>(tag);
    uint32_t size;
    std::memcpy(&size, buf.data() + pos + 4, 4);
    if (pos + 8 + size > buf.size())
      throw std::runtime_error("mat: truncated payload");
    payload.assign(buf.begin() + pos + 8, buf.begin() + pos + 8 + size);
    pos += 8 + size;
    pos = (pos + 7) / 8 * 8;  // 8-byte alignment
  }
}

MatArray parse_matrix(const std::vector<uint8_t>& buf) {
  size_t pos = 0;
  int type;
  std::vector<uint8_t> payload;

  MatArray arr;
  read_subelement(buf, pos, type, payload);  // array flags
  if (payload.size() < 4) throw std::runtime_error("mat: bad array flags");
  arr.matlab_class = payload[0];

  read_subelement(buf, pos, type, payload);  // dimensions
  for (size_t i = 0; i + 4 <= payload.size(); i += 4) {
    int32_t d;
    std::memcpy(&d, payload.data() + i, 4);
    arr.dims.push_back(d);
  }

  read_subelement(buf, pos, type, payload);  // name
  arr.name.assign(payload.begin(), payload.end());

  read_subelement(buf, pos, arr.data_type, arr.bytes);  // real part
  return arr;
}

std::vector<uint8_t> zlib_inflate(const uint8_t* src, size_t len) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw std::runtime_error("inflateInit failed");
  std::vector<uint8_t> out;
  uint8_t buf[1 << 16];
  zs.next_in = const_cast<uint8_t*>(src);
  zs.avail_in = static_cast<uInt>(len);
  int ret;
  do {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("mat: inflate error");
    }
    out.insert(out.end(), buf, buf + sizeof(buf) - zs.avail_out);
  } while (ret != Z_STREAM_END && zs.avail_in > 0);
  inflateEnd(&zs);
  return out;
}

double mat_value(const MatArray& a, size_t i) {
  switch (a.data_type) {
    case kMiUint8:
    case kMiInt8:
      return a.bytes[i];
    case kMiDouble: {
      double v;
      std::memcpy(&v, a.bytes.data() + i * 8, 8);
      return v;
    }
    case kMiInt32: {
      int32_t v;
      std::memcpy(&v, a.bytes.data() + i * 4, 4);
      return v;
    }
    default:
      throw std::runtime_error("mat: unsupported value type");
  }
}

}  // namespace

LabeledImageSet load_svhn_mat(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 128 + 8) throw std::runtime_error("not a mat file: " + path);
  uint16_t endian;
  std::memcpy(&endian, buf.data() + 126, 2);
  if (endian != 0x4d49)  // "IM" read little-endian
    throw std::runtime_error("mat: unsupported byte order");

  std::map<std::string, MatArray> arrays;
  size_t pos = 128;
  while (pos + 8 <= buf.size()) {
    uint32_t type, size;
    std::memcpy(&type, buf.data() + pos, 4);
    std::memcpy(&size, buf.data() + pos + 4, 4);
    if (pos + 8 + size > buf.size()) throw std::runtime_error("mat: truncated");
    if (type == kMiCompressed) {
      auto inflated = zlib_inflate(buf.data() + pos + 8, size);
      uint32_t itype;
      std::memcpy(&itype, inflated.data(), 4);
      if (itype == kMiMatrix) {
        std::vector<uint8_t> body(inflated.begin() + 8, inflated.end());
        MatArray a = parse_matrix(body);
        arrays[a.name] = std::move(a);
      }
    } else if (type == kMiMatrix) {
      std::vector<uint8_t> body(buf.begin() + pos + 8,
                                buf.begin() + pos + 8 + size);
      MatArray a = parse_matrix(body);
      arrays[a.name] = std::move(a);
    }
    pos += 8 + size;
    // Compressed elements are stored back to back with no padding; only
    // uncompressed elements are aligned to 8 bytes.
    if (type != kMiCompressed) pos = (pos + 7) / 8 * 8;
  }

  auto xi = arrays.find("X");
  auto yi = arrays.find("y");
  if (xi == arrays.end() || yi == arrays.end())
    throw std::runtime_error("mat: expected arrays X and y in " + path);
  const MatArray& X = xi->second;
  const MatArray& Y = yi->second;
  if (X.dims.size() != 4)
    throw std::runtime_error("mat: X must be 4-d (h,w,c,n)");
  int64_t h = X.dims[0], w = X.dims[1], c = X.dims[2], n = X.dims[3];

  LabeledImageSet set;
  set.class_count = 10;
  set.images = Tensor({n, c, h, w});
  set.labels.resize(static_cast<size_t>(n));
  // MATLAB arrays are column-major: X(i,j,k,m) at i + h*j + h*w*k + h*w*c*m.
  for (int64_t m = 0; m < n; ++m)
    for (int64_t k = 0; k < c; ++k)
      for (int64_t j = 0; j < w; ++j)
        for (int64_t i = 0; i < h; ++i) {
          double v = mat_value(X, static_cast<size_t>(i + h * (j + w * (k + c * m))));
          set.images.data[static_cast<size_t>(((m * c + k) * h + i) * w + j)] =
              static_cast<float>(v / 255.0);
        }
  for (int64_t m = 0; m < n; ++m) {
    int32_t l = static_cast<int32_t>(mat_value(Y, static_cast<size_t>(m)));
    set.labels[static_cast<size_t>(m)] = (l == 10) ? 0 : l;  // 10 encodes digit 0
  }
  return set;
}

LabeledImageSet subsample(const LabeledImageSet& corpus, double fraction,
                          uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("subsample: fraction in (0,1]");
  std::map<int32_t, std::vector<int64_t>> by_class;
  for (int64_t i = 0; i < corpus.count(); ++i)
    by_class[corpus.labels[static_cast<size_t>(i)]].push_back(i);
  Rng rng(seed);
  std::vector<int64_t> keep;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    size_t m = std::max<size_t>(1, static_cast<size_t>(idx.size() * fraction));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<int64_t>(m));
  }
  std::sort(keep.begin(), keep.end());

  int64_t chw = corpus.images.numel() / corpus.count();
  LabeledImageSet out;
  out.class_count = corpus.class_count;
  out.images = Tensor({static_cast<int64_t>(keep.size()), corpus.images.dim(1),
                       corpus.images.dim(2), corpus.images.dim(3)});
  out.labels.resize(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    std::memcpy(out.images.ptr() + static_cast<int64_t>(i) * chw,
                corpus.images.ptr() + keep[i] * chw,
                static_cast<size_t>(chw) * sizeof(float));
    out.labels[i] = corpus.labels[static_cast<size_t>(keep[i])];
  }
  return out;
}

// --- two-view MNIST -------------------------------------------------------

namespace {

LabeledImageSet rescale_resize_corpus(const LabeledImageSet& corpus,
                                      int64_t side) {
  LabeledImageSet out;
  out.class_count = corpus.class_count;
  out.labels = corpus.labels;
  out.images =
      Tensor({corpus.count(), corpus.images.dim(1), side, side});
  for (int64_t i = 0; i < corpus.count(); ++i) {
    Tensor im = img::rescale_unit_interval(corpus.image(i));
    out.set_image(i, img::resize_bilinear(im, side, side));
  }
  return out;
}

// Builds the two corrupted views over one corpus; angles recorded.
void corrupt_two_views(const LabeledImageSet& base, Rng& rng,
                       LabeledImageSet& rotated, LabeledImageSet& noisy,
                       std::vector<float>& angles) {
  rotated = base;
  noisy = base;
  angles.resize(static_cast<size_t>(base.count()));
  for (int64_t i = 0; i < base.count(); ++i) {
    Tensor im = base.image(i);
    double angle = rng.uniform(-M_PI / 4, M_PI / 4);
    angles[static_cast<size_t>(i)] = static_cast<float>(angle);
    rotated.set_image(i, img::rotate_bilinear(im, angle));
    Tensor n = im;
    for (auto& v : n.data) v += static_cast<float>(rng.uniform());
    noisy.set_image(i, img::rescale_unit_interval(n));
  }
}

MultiViewDataset by_subject_pairs(LabeledImageSet a, LabeledImageSet b) {
  MultiViewDataset d;
  d.labels = a.labels;
  d.pairing_mode = PairingMode::by_subject;
  d.pairs.resize(static_cast<size_t>(a.count()));
  for (int64_t i = 0; i < a.count(); ++i)
    d.pairs[static_cast<size_t>(i)] = {i, i};
  d.view_a = std::move(a);
  d.view_b = std::move(b);
  return d;
}

}  // namespace

TwoViewData make_two_view_mnist(const LabeledImageSet& train_corpus,
                                const LabeledImageSet& test_corpus,
                                uint64_t seed, int k_folds) {
  Rng rng(seed);
  TwoViewData out;
  out.seed = seed;
  out.name = "two_view_mnist";

  LabeledImageSet train32 = rescale_resize_corpus(train_corpus, 32);
  LabeledImageSet test32 = rescale_resize_corpus(test_corpus, 32);

  LabeledImageSet rot, noisy;
  std::vector<float> angles;
  Rng train_rng = rng.fork(1);
  corrupt_two_views(train32, train_rng, rot, noisy, angles);
  out.train = by_subject_pairs(std::move(rot), std::move(noisy));
  out.train.metadata["rotation_angle"] = angles;
  out.train.folds =
      stratified_kfold_split(out.train.labels, k_folds, rng.fork(2).raw());

  Rng test_rng = rng.fork(3);
  corrupt_two_views(test32, test_rng, rot, noisy, angles);
  out.test = by_subject_pairs(std::move(rot), std::move(noisy));
  out.test.metadata["rotation_angle"] = angles;
  return out;
}

// --- MNIST-SVHN -----------------------------------------------------------

namespace {

MultiViewDataset label_pairs(LabeledImageSet a, LabeledImageSet b,
                             int pairs_per_instance, Rng& rng) {
  std::map<int32_t, std::vector<int64_t>> idx_a, idx_b;
  for (int64_t i = 0; i < a.count(); ++i) idx_a[a.labels[static_cast<size_t>(i)]].push_back(i);
  for (int64_t i = 0; i < b.count(); ++i) idx_b[b.labels[static_cast<size_t>(i)]].push_back(i);

  MultiViewDataset d;
  d.pairing_mode = PairingMode::by_label;
  for (auto& [cls, ia] : idx_a) {
    auto it = idx_b.find(cls);
    if (it == idx_b.end() || it->second.empty() || ia.empty())
      throw std::runtime_error("pairing error: class " + std::to_string(cls) +
                               " empty in one corpus");
    auto& ib = it->second;
    size_t n = std::min(ia.size(), ib.size());
    for (int rep = 0; rep < pairs_per_instance; ++rep) {
      rng.shuffle(ia);
      rng.shuffle(ib);
      for (size_t i = 0; i < n; ++i) {
        d.pairs.push_back({ia[i], ib[i]});
        d.labels.push_back(cls);
      }
    }
  }
  d.view_a = std::move(a);
  d.view_b = std::move(b);
  return d;
}

}  // namespace

TwoViewData make_mnist_svhn(const LabeledImageSet& mnist_train,
                            const LabeledImageSet& mnist_test,
                            const LabeledImageSet& svhn_train,
                            const LabeledImageSet& svhn_test,
                            int pairs_per_instance, uint64_t seed,
                            int k_folds) {
  Rng rng(seed);
  TwoViewData out;
  out.seed = seed;
  out.name = "mnist_svhn";

  LabeledImageSet m_train = rescale_resize_corpus(mnist_train, 32);
  LabeledImageSet m_test = rescale_resize_corpus(mnist_test, 32);

  Rng train_rng = rng.fork(1);
  out.train = label_pairs(std::move(m_train), svhn_train, pairs_per_instance,
                          train_rng);
  out.train.folds =
      stratified_kfold_split(out.train.labels, k_folds, rng.fork(2).raw());

  Rng test_rng = rng.fork(3);
  out.test =
      label_pairs(std::move(m_test), svhn_test, pairs_per_instance, test_rng);
  return out;
}

LabeledImageSet make_synthetic_corpus(int per_class, int class_count,
                                      int64_t side, uint64_t seed,
                                      double noise_sd) {
  Rng rng(seed);
  LabeledImageSet set;
  set.class_count = class_count;
  int64_t n = static_cast<int64_t>(per_class) * class_count;
  set.images = Tensor({n, 1, side, side});
  set.labels.resize(static_cast<size_t>(n));

  // One blob center per class on a circle; samples jitter around it.
  for (int64_t i = 0; i < n; ++i) {
    int cls = static_cast<int>(i % class_count);
    set.labels[static_cast<size_t>(i)] = cls;
    double theta = 2.0 * M_PI * cls / class_count;
    double r = side / 3.5;
    double cy = side / 2.0 + r * std::sin(theta) + rng.uniform(-2.0, 2.0);
    double cx = side / 2.0 + r * std::cos(theta) + rng.uniform(-2.0, 2.0);
    double sigma = side / 9.0;
    float* im = set.images.ptr() + i * side * side;
    for (int64_t y = 0; y < side; ++y)
      for (int64_t x = 0; x < side; ++x) {
        double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        double v = std::exp(-0.5 * d2 / (sigma * sigma)) +
                   noise_sd * rng.normal();
        im[y * side + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return set;
}

// --- synthetic pipeline views ---------------------------------------------

namespace {

Tensor apply_transform(const Tensor& im, const TransformSpec& spec, Rng& rng) {
  auto param = [&](const std::string& key, double dflt) {
    auto it = spec.params.find(key);
    return it == spec.params.end() ? dflt : it->second;
  };
  if (spec.name == "identity") return im;
  if (spec.name == "gaussian_smooth")
    return img::gaussian_smooth(im, param("sigma", 1.0));
  if (spec.name == "affine_warp")
    return img::affine_warp(im, param("max_rotation", 0.1),
                            param("max_shift", 2.0), rng);
  if (spec.name == "intensity_bias")
    return img::intensity_bias(im, param("strength", 0.3),
                               static_cast<int>(param("grid", 4)), rng);
  if (spec.name == "additive_noise")
    return img::additive_noise(im, spec.noise_distribution,
                               param("scale", 0.2), rng);
  throw std::invalid_argument("unknown transform: " + spec.name);
}

}  // namespace

std::vector<LabeledImageSet> synthetic_pipeline_views(
    const LabeledImageSet& corpus, const std::vector<TransformSpec>& specs,
    uint64_t seed) {
  if (specs.size() < 2)
    throw std::invalid_argument("synthetic_pipeline_views: need >= 2 views");
  Rng root(seed);
  std::vector<LabeledImageSet> views;
  for (size_t v = 0; v < specs.size(); ++v) {
    Rng rng = root.fork(v + 1);
    LabeledImageSet view = corpus;
    for (int64_t i = 0; i < corpus.count(); ++i)
      view.set_image(i, apply_transform(corpus.image(i), specs[v], rng));
    views.push_back(std::move(view));
  }
  return views;
}

TwoViewData pair_views(const LabeledImageSet& view_a,
                       const LabeledImageSet& view_b, uint64_t seed,
                       int k_folds, double test_fraction) {
  if (view_a.count() != view_b.count())
    throw std::invalid_argument("pair_views: view size mismatch");
  Rng rng(seed);
  // Stratified train/test split.
  std::map<int32_t, std::vector<int64_t>> by_class;
  for (int64_t i = 0; i < view_a.count(); ++i)
    by_class[view_a.labels[static_cast<size_t>(i)]].push_back(i);
  std::vector<int64_t> test_idx, train_idx;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    size_t m = static_cast<size_t>(idx.size() * test_fraction);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<int64_t>(m));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<int64_t>(m), idx.end());
  }
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  auto gather = [&](const LabeledImageSet& s, const std::vector<int64_t>& idx) {
    LabeledImageSet out;
    out.class_count = s.class_count;
    out.images = Tensor({static_cast<int64_t>(idx.size()), s.images.dim(1),
                         s.images.dim(2), s.images.dim(3)});
    out.labels.resize(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      out.set_image(static_cast<int64_t>(i), s.image(idx[i]));
      out.labels[i] = s.labels[static_cast<size_t>(idx[i])];
    }
    return out;
  };

  TwoViewData out;
  out.seed = seed;
  out.name = "synthetic_pair";
  out.train = by_subject_pairs(gather(view_a, train_idx), gather(view_b, train_idx));
  out.train.folds =
      stratified_kfold_split(out.train.labels, k_folds, rng.fork(2).raw());
  out.test = by_subject_pairs(gather(view_a, test_idx), gather(view_b, test_idx));
  return out;
}

// --- disk cache -----------------------------------------------------------

namespace {

json split_manifest(const MultiViewDataset& d) {
  json j;
  j["pairing_mode"] =
      d.pairing_mode == PairingMode::by_subject ? "by_subject" : "by_label";
  j["labels"] = d.labels;
  j["view_a_labels"] = d.view_a.labels;
  j["view_b_labels"] = d.view_b.labels;
  j["class_count"] = d.view_a.class_count;
  json pairs = json::array();
  for (auto& [a, b] : d.pairs) pairs.push_back({a, b});
  j["pairs"] = pairs;
  if (d.folds.k > 0) {
    j["folds"] = {{"k", d.folds.k},
                  {"seed", d.folds.seed},
                  {"fold_of_sample", d.folds.fold_of_sample}};
  }
  for (auto& [key, vals] : d.metadata) j["metadata"][key] = vals;
  return j;
}

void load_split_manifest(const json& j, MultiViewDataset& d) {
  d.pairing_mode = j.at("pairing_mode") == "by_subject"
                       ? PairingMode::by_subject
                       : PairingMode::by_label;
  d.labels = j.at("labels").get<std::vector<int32_t>>();
  d.view_a.labels = j.at("view_a_labels").get<std::vector<int32_t>>();
  d.view_b.labels = j.at("view_b_labels").get<std::vector<int32_t>>();
  d.view_a.class_count = d.view_b.class_count = j.at("class_count");
  for (auto& p : j.at("pairs"))
    d.pairs.push_back({p[0].get<int64_t>(), p[1].get<int64_t>()});
  if (j.contains("folds")) {
    d.folds.k = j["folds"]["k"];
    d.folds.seed = j["folds"]["seed"];
    d.folds.fold_of_sample =
        j["folds"]["fold_of_sample"].get<std::vector<int32_t>>();
  }
  if (j.contains("metadata"))
    for (auto& [key, vals] : j["metadata"].items())
      d.metadata[key] = vals.get<std::vector<float>>();
}

}  // namespace

void save_two_view(const std::string& dir, const TwoViewData& d) {
  fs::create_directories(dir);
  save_npy(dir + "/train_view_a.npy", d.train.view_a.images);
  save_npy(dir + "/train_view_b.npy", d.train.view_b.images);
  save_npy(dir + "/test_view_a.npy", d.test.view_a.images);
  save_npy(dir + "/test_view_b.npy", d.test.view_b.images);
  json j;
  j["name"] = d.name;
  j["seed"] = d.seed;
  j["train"] = split_manifest(d.train);
  j["test"] = split_manifest(d.test);
  std::ofstream f(dir + "/manifest.json");
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write manifest in " + dir);
}

TwoViewData load_two_view(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("no manifest.json in " + dir);
  json j = json::parse(f);
  TwoViewData d;
  d.name = j.at("name");
  d.seed = j.at("seed");
  load_split_manifest(j.at("train"), d.train);
  load_split_manifest(j.at("test"), d.test);
  d.train.view_a.images = load_npy(dir + "/train_view_a.npy");
  d.train.view_b.images = load_npy(dir + "/train_view_b.npy");
  d.test.view_a.images = load_npy(dir + "/test_view_a.npy");
  d.test.view_b.images = load_npy(dir + "/test_view_b.npy");
  return d;
}

}  // namespace mvi::data

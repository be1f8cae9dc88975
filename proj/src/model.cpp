#include "dictcert/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "dictcert/errors.hpp"
#include "dictcert/matrix_io.hpp"
#include "dictcert/rng.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "model";

}  // namespace

std::string to_string(DictionaryKind kind) {
  return kind == DictionaryKind::orthonormal ? "orthonormal" : "gaussian_unit";
}

DictionaryKind parse_dictionary_kind(const std::string& s) {
  if (s == "gaussian_unit") return DictionaryKind::gaussian_unit;
  if (s == "orthonormal") return DictionaryKind::orthonormal;
  throw ValidationError(kModule, "unknown dictionary kind '" + s + "'");
}

Dictionary gen_dictionary(Index m, Index n, DictionaryKind kind, uint64_t seed) {
  if (m < 1 || n < 1) throw ValidationError(kModule, "gen_dictionary: need m >= 1 and n >= 1");
  if (kind == DictionaryKind::gaussian_unit && m > n) {
    throw ValidationError(kModule, "gen_dictionary: gaussian_unit requires m <= n");
  }
  if (kind == DictionaryKind::orthonormal && m != n) {
    throw ValidationError(kModule, "gen_dictionary: orthonormal requires m == n");
  }
  Rng root(seed);
  Matrix g(m, n);
  for (Index j = 0; j < n; ++j) {
    Rng rng = root.split(static_cast<uint64_t>(j));
    for (Index i = 0; i < m; ++i) g(i, j) = rng.normal();
  }
  if (kind == DictionaryKind::orthonormal) {
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix& r = qr.matrixQR();
    for (Index j = 0; j < n; ++j) {
      if (r(j, j) < 0) q.col(j) = -q.col(j);
    }
    g = q;
  }
  return Dictionary::normalized(std::move(g));
}

SupportPattern::SupportPattern(int n, int k, std::vector<std::vector<int>> col_supports)
    : n_(n), k_(k), cols_(std::move(col_supports)) {
  if (n < 1 || k < 1 || k > n) {
    throw ValidationError(kModule, "support pattern needs 1 <= k <= n (n=" + std::to_string(n) +
                                       ", k=" + std::to_string(k) + ")");
  }
  rows_.assign(static_cast<std::size_t>(n), {});
  for (std::size_t j = 0; j < cols_.size(); ++j) {
    auto& c = cols_[j];
    if (static_cast<int>(c.size()) != k) {
      throw ValidationError(kModule, "column " + std::to_string(j) + " support has size " +
                                         std::to_string(c.size()) + ", expected " +
                                         std::to_string(k));
    }
    std::sort(c.begin(), c.end());
    if (std::adjacent_find(c.begin(), c.end()) != c.end() || c.front() < 0 || c.back() >= n) {
      throw ValidationError(kModule, "column " + std::to_string(j) + " support is invalid");
    }
    for (int i : c) rows_[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
  }
}

bool SupportPattern::contains(int i, int j) const {
  const auto& c = col(j);
  return std::binary_search(c.begin(), c.end(), i);
}

SparseCoeffs::SparseCoeffs(SupportPattern support, Matrix values, double sigma)
    : support_(std::move(support)), values_(std::move(values)), sigma_(sigma) {
  if (values_.rows() != support_.n() || values_.cols() != support_.p()) {
    throw ValidationError(kModule, "coefficient matrix shape does not match its support");
  }
  signs_ = Matrix::Zero(values_.rows(), values_.cols());
  for (int j = 0; j < support_.p(); ++j) {
    int on = 0;
    for (int i = 0; i < support_.n(); ++i) {
      double v = values_(i, j);
      bool in = on < support_.k() && support_.col(j)[static_cast<std::size_t>(on)] == i;
      if (in) {
        ++on;
        if (v == 0.0 || !std::isfinite(v)) {
          throw ValidationError(kModule, "coefficient (" + std::to_string(i) + "," +
                                             std::to_string(j) + ") on the support must be nonzero");
        }
        signs_(i, j) = v > 0 ? 1.0 : -1.0;
      } else if (v != 0.0) {
        throw ValidationError(kModule, "coefficient (" + std::to_string(i) + "," +
                                           std::to_string(j) + ") off the support must be zero");
      }
    }
  }
}

SparseCoeffs SparseCoeffs::from_dense(const Matrix& x, double sigma) {
  if (x.cols() == 0 || x.rows() == 0) throw ValidationError(kModule, "empty coefficient matrix");
  std::vector<std::vector<int>> cols(static_cast<std::size_t>(x.cols()));
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      if (x(i, j) != 0.0) cols[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
    }
  }
  int k = static_cast<int>(cols[0].size());
  SupportPattern s(static_cast<int>(x.rows()), k, std::move(cols));
  return SparseCoeffs(std::move(s), x, sigma);
}

double model_sigma(int n, int p, int k) {
  return std::sqrt(static_cast<double>(n) / (static_cast<double>(k) * static_cast<double>(p)));
}

std::vector<int> sample_k_subset(int n, int k, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int t = 0; t < k; ++t) {
    auto r = static_cast<std::size_t>(t) + rng.below(static_cast<uint64_t>(n - t));
    std::swap(perm[static_cast<std::size_t>(t)], perm[r]);
  }
  std::vector<int> out(perm.begin(), perm.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

SparseCoeffs gen_coefficients(int n, int p, int k, uint64_t seed) {
  if (n < 1 || p < 1) throw ValidationError(kModule, "gen_coefficients: need n >= 1 and p >= 1");
  if (k < 1 || k > n) {
    throw ValidationError(kModule, "gen_coefficients: k must satisfy 1 <= k <= n (got k=" +
                                       std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  const double sigma = model_sigma(n, p, k);
  Rng root(seed);
  std::vector<std::vector<int>> cols(static_cast<std::size_t>(p));
  Matrix values = Matrix::Zero(n, p);
  for (int j = 0; j < p; ++j) {
    Rng rng = root.split(static_cast<uint64_t>(j));
    auto& c = cols[static_cast<std::size_t>(j)];
    c = sample_k_subset(n, k, rng);
    for (int i : c) {
      double v = 0.0;
      while (v == 0.0) v = sigma * rng.normal();
      values(i, j) = v;
    }
  }
  return SparseCoeffs(SupportPattern(n, k, std::move(cols)), std::move(values), sigma);
}

Matrix observe(const Dictionary& a, const Matrix& x) {
  if (a.cols() != x.rows()) {
    throw ValidationError(kModule, "observe: dictionary has " + std::to_string(a.cols()) +
                                       " columns but X has " + std::to_string(x.rows()) + " rows");
  }
  return a.entries() * x;
}

Instance observe(const Dictionary& a, const SparseCoeffs& x, uint64_t seed) {
  Matrix y = observe(a, x.dense());
  return Instance{a, x, std::move(y), seed};
}

Instance gen_instance(const InstanceParams& params) {
  if (params.m < 1 || params.n < 1 || params.p < 1) {
    throw ValidationError(kModule, "instance dimensions must be positive");
  }
  if (params.k < 1 || params.k > params.n) {
    throw ValidationError(kModule, "k must satisfy 1 <= k <= n (got k=" +
                                       std::to_string(params.k) + ")");
  }
  Dictionary a = gen_dictionary(params.m, params.n, params.kind, derive_seed(params.seed, 0));
  SparseCoeffs x = gen_coefficients(params.n, params.p, params.k, derive_seed(params.seed, 1));
  return observe(a, x, params.seed);
}

Instance gen_incoherent_instance(const InstanceParams& params, double k_mu_limit,
                                 int max_attempts, int* attempts) {
  for (int t = 0; t < max_attempts; ++t) {
    InstanceParams q = params;
    q.seed = derive_seed(params.seed, static_cast<uint64_t>(t));
    Dictionary a = gen_dictionary(q.m, q.n, q.kind, derive_seed(q.seed, 0));
    if (params.k * a.mu() < k_mu_limit) {
      if (attempts) *attempts = t + 1;
      return gen_instance(q);
    }
  }
  throw ValidationError(kModule, "no dictionary with k*mu < " + std::to_string(k_mu_limit) +
                                     " after " + std::to_string(max_attempts) + " draws");
}

DesirableSupportReport is_desirable_support(const SupportPattern& s) {
  DesirableSupportReport r;
  const int n = s.n();
  for (int i = 0; i < n; ++i) r.max_row = std::max(r.max_row, static_cast<int>(s.row(i).size()));
  if (n > 1) {
    std::vector<int> pair(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
    for (const auto& c : s.col_supports()) {
      for (std::size_t a = 0; a < c.size(); ++a) {
        for (std::size_t b = a + 1; b < c.size(); ++b) {
          ++pair[static_cast<std::size_t>(c[a]) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(c[b])];
        }
      }
    }
    r.max_pair = *std::max_element(pair.begin(), pair.end());
  }
  const double p = s.p(), k = s.k(), nn = n;
  r.row_limit = 1.5 * p * k / nn;
  r.pair_limit = 1.5 * p * k * k / (nn * nn);
  r.in_O = r.max_row <= r.row_limit && r.max_pair <= r.pair_limit;
  return r;
}

void save_instance(const Instance& inst, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dlmat(dir / "A.mat", inst.dict.entries());
  save_dlmat(dir / "X.mat", inst.coeffs.dense());
  save_dlmat(dir / "Y.mat", inst.obs);
  nlohmann::ordered_json j;
  j["n"] = inst.dict.cols();
  j["m"] = inst.dict.rows();
  j["p"] = inst.coeffs.p();
  j["k"] = inst.coeffs.k();
  j["seed"] = inst.seed;
  j["sigma"] = inst.coeffs.sigma();
  j["mu"] = inst.dict.mu();
  std::ofstream out(dir / "instance.json");
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError(kModule, "cannot write " + (dir / "instance.json").string());
}

Instance load_instance(const std::filesystem::path& dir) {
  std::ifstream in(dir / "instance.json");
  if (!in) throw ValidationError(kModule, "cannot open " + (dir / "instance.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(kModule, std::string("instance.json: ") + e.what());
  }
  Matrix a = load_dlmat(dir / "A.mat");
  Matrix x = load_dlmat(dir / "X.mat");
  Matrix y = load_dlmat(dir / "Y.mat");
  Dictionary dict(std::move(a));
  try {
    if (j.at("n").get<Index>() != dict.cols() || j.at("m").get<Index>() != dict.rows() ||
        j.at("p").get<Index>() != x.cols()) {
      throw ValidationError(kModule, "instance.json dimensions do not match the matrices");
    }
    SparseCoeffs coeffs = SparseCoeffs::from_dense(x, j.at("sigma").get<double>());
    if (coeffs.k() != j.at("k").get<int>()) {
      throw ValidationError(kModule, "instance.json k does not match the nonzeros of X");
    }
    if (y.rows() != dict.rows() || y.cols() != x.cols()) {
      throw ValidationError(kModule, "Y.mat has the wrong shape");
    }
    return Instance{std::move(dict), std::move(coeffs), std::move(y), j.at("seed").get<uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(kModule, std::string("instance.json: ") + e.what());
  }
}

}  // namespace dictcert

#include "steerkit/group.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>

namespace steerkit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

std::array<double, 9> matmul3(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Single-term evaluation of the explicit Wigner sum; exact when
// l = max(|m1|, |m2|), which is the only place it is used.
double small_d_seed(int l, int m1, int m2, double beta) {
  const double c = std::cos(beta / 2.0);
  const double s = std::sin(beta / 2.0);
  const int s_min = std::max(0, m2 - m1);
  const int s_max = std::min(l + m2, l - m1);
  double sum = 0.0;
  for (int k = s_min; k <= s_max; ++k) {
    const double sign = ((m1 - m2 + k) % 2 == 0) ? 1.0 : -1.0;
    const double denom = factorial(l + m2 - k) * factorial(k) * factorial(m1 - m2 + k) * factorial(l - m1 - k);
    sum += sign * std::pow(c, 2 * l + m2 - m1 - 2 * k) * std::pow(s, m1 - m2 + 2 * k) / denom;
  }
  return sum * std::sqrt(factorial(l + m1) * factorial(l - m1) * factorial(l + m2) * factorial(l - m2));
}

}  // namespace

IrrepId IrrepId::so3(int l) {
  if (l < 0) throw std::invalid_argument("SO(3) irrep degree must be non-negative, got " + std::to_string(l));
  return {Group::SO3, l};
}

// ---------------------------------------------------------------- CMatrix

CMatrix CMatrix::identity(int n) {
  CMatrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CMatrix CMatrix::operator*(const CMatrix& rhs) const {
  if (cols != rhs.rows) throw std::invalid_argument("CMatrix: shape mismatch in product");
  CMatrix out(rows, rhs.cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k) {
      const cplx a = (*this)(i, k);
      for (int j = 0; j < rhs.cols; ++j) out(i, j) += a * rhs(k, j);
    }
  return out;
}

CMatrix CMatrix::adjoint() const {
  CMatrix out(cols, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(j, i) = std::conj((*this)(i, j));
  return out;
}

double CMatrix::max_abs_diff(const CMatrix& other) const {
  if (rows != other.rows || cols != other.cols) throw std::invalid_argument("CMatrix: shape mismatch in diff");
  double m = 0.0;
  for (size_t i = 0; i < data.size(); ++i) m = std::max(m, std::abs(data[i] - other.data[i]));
  return m;
}

// ---------------------------------------------------------------- Rotation

Rotation Rotation::identity(int dim) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("rotation dimension must be 2 or 3");
  return Rotation(dim, {1, 0, 0, 0, 1, 0, 0, 0, 1});
}

Rotation Rotation::so2(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return Rotation(2, {c, s, 0, -s, c, 0, 0, 0, 1});
}

Rotation Rotation::euler_zyz(double alpha, double beta, double gamma) {
  auto rz = [](double a) {
    const double c = std::cos(a), s = std::sin(a);
    return std::array<double, 9>{c, -s, 0, s, c, 0, 0, 0, 1};
  };
  const double cb = std::cos(beta), sb = std::sin(beta);
  const std::array<double, 9> ry{cb, 0, sb, 0, 1, 0, -sb, 0, cb};
  return Rotation(3, matmul3(matmul3(rz(alpha), ry), rz(gamma)));
}

Rotation Rotation::from_matrix(int dim, const std::array<double, 9>& m) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("rotation dimension must be 2 or 3");
  std::array<double, 9> full = m;
  if (dim == 2) {
    full[2] = full[5] = full[6] = full[7] = 0.0;
    full[8] = 1.0;
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += full[k * 3 + i] * full[k * 3 + j];
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > 1e-9) throw std::invalid_argument("matrix is not orthogonal");
    }
  const double det = full[0] * (full[4] * full[8] - full[5] * full[7]) - full[1] * (full[3] * full[8] - full[5] * full[6]) +
                     full[2] * (full[3] * full[7] - full[4] * full[6]);
  if (std::abs(det - 1.0) > 1e-9) throw std::invalid_argument("matrix has determinant != 1");
  return Rotation(dim, full);
}

double Rotation::angle() const {
  if (dim_ != 2) throw std::invalid_argument("angle() requires an SO(2) rotation");
  return wrap_angle(std::atan2(m_[1], m_[0]));
}

std::array<double, 3> Rotation::euler() const {
  if (dim_ != 3) throw std::invalid_argument("euler() requires an SO(3) rotation");
  const double sb = std::hypot(m_[6], m_[7]);
  const double beta = std::atan2(sb, m_[8]);
  double alpha, gamma;
  if (sb > 1e-12) {
    alpha = std::atan2(m_[5], m_[2]);
    gamma = std::atan2(m_[7], -m_[6]);
  } else if (m_[8] > 0) {
    alpha = std::atan2(m_[3], m_[0]);
    gamma = 0.0;
  } else {
    alpha = std::atan2(-m_[3], -m_[0]);
    gamma = 0.0;
  }
  return {wrap_angle(alpha), beta, wrap_angle(gamma)};
}

Vec3 Rotation::apply(const Vec3& x) const {
  Vec3 y{0.0, 0.0, 0.0};
  const int d = dim_;
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += m_[i * 3 + j] * x[j];
    y[i] = s;
  }
  return y;
}

Rotation Rotation::compose(const Rotation& rhs) const {
  if (dim_ != rhs.dim_) throw std::invalid_argument("cannot compose rotations of different dimension");
  return Rotation(dim_, matmul3(m_, rhs.m_));
}

Rotation Rotation::inverse() const {
  std::array<double, 9> t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i * 3 + j] = m_[j * 3 + i];
  return Rotation(dim_, t);
}

bool Rotation::is_lattice(double tol) const {
  for (double v : m_)
    if (std::abs(v - std::round(v)) > tol) return false;
  return true;
}

// ---------------------------------------------------------------- SE(d)

GroupElement GroupElement::identity(int dim) { return {dim, {0.0, 0.0, 0.0}, Rotation::identity(dim)}; }

GroupElement GroupElement::pure_rotation(const Rotation& r) { return {r.dim(), {0.0, 0.0, 0.0}, r}; }

GroupElement se_compose(const GroupElement& g1, const GroupElement& g2) {
  if (g1.dim != g2.dim || g1.rotation.dim() != g2.rotation.dim())
    throw std::invalid_argument("se_compose: dimension mismatch");
  GroupElement out;
  out.dim = g1.dim;
  out.rotation = g1.rotation.compose(g2.rotation);
  const Vec3 rt = g1.rotation.apply(g2.translation);
  for (int i = 0; i < g1.dim; ++i) out.translation[i] = g1.translation[i] + rt[i];
  return out;
}

GroupElement se_inverse(const GroupElement& g) {
  GroupElement out;
  out.dim = g.dim;
  out.rotation = g.rotation.inverse();
  const Vec3 rt = out.rotation.apply(g.translation);
  for (int i = 0; i < g.dim; ++i) out.translation[i] = -rt[i];
  return out;
}

Vec3 se_apply(const GroupElement& g, const Vec3& x) {
  if (g.rotation.dim() != g.dim) throw std::invalid_argument("se_apply: inconsistent element");
  Vec3 y = g.rotation.apply(x);
  for (int i = 0; i < g.dim; ++i) y[i] += g.translation[i];
  return y;
}

// ---------------------------------------------------------------- irreps

std::vector<double> wigner_small_d(int l, double beta) {
  if (l < 0) throw std::invalid_argument("wigner_small_d: negative degree");
  const int n = 2 * l + 1;
  std::vector<double> d(static_cast<size_t>(n) * n);
  const double cb = std::cos(beta);
  for (int m1 = -l; m1 <= l; ++m1)
    for (int m2 = -l; m2 <= l; ++m2) {
      // Seed at j0 = max(|m1|, |m2|), then the three-term recursion in j.
      const int j0 = std::max(std::abs(m1), std::abs(m2));
      double prev = 0.0;
      double cur = small_d_seed(j0, m1, m2, beta);
      for (int j = j0; j < l; ++j) {
        const double jj = j, j1 = j + 1.0;
        const double mix = (j == 0) ? 0.0 : static_cast<double>(m1) * m2 / (jj * j1);
        const double lower = (j == 0) ? 0.0 : std::sqrt((jj * jj - m1 * m1) * (jj * jj - m2 * m2)) / (jj * (2 * jj + 1));
        const double norm = j1 * (2 * jj + 1) / std::sqrt((j1 * j1 - m1 * m1) * (j1 * j1 - m2 * m2));
        const double next = norm * ((cb - mix) * cur - lower * prev);
        prev = cur;
        cur = next;
      }
      d[static_cast<size_t>(m1 + l) * n + (m2 + l)] = cur;
    }
  return d;
}

CMatrix irrep_eval(IrrepId irrep, const Rotation& rotation) {
  if (group_dim(irrep.group) != rotation.dim())
    throw std::invalid_argument("irrep_eval: irrep and rotation belong to different groups");
  if (irrep.group == Group::SO2) {
    CMatrix m(1, 1);
    m(0, 0) = std::polar(1.0, irrep.index * rotation.angle());
    return m;
  }
  const int l = irrep.index;
  if (l < 0) throw std::invalid_argument("irrep_eval: negative SO(3) degree");
  const auto [alpha, beta, gamma] = rotation.euler();
  const auto d = wigner_small_d(l, beta);
  const int n = 2 * l + 1;
  CMatrix m(n, n);
  for (int a = -l; a <= l; ++a)
    for (int b = -l; b <= l; ++b)
      m(a + l, b + l) = std::polar(d[static_cast<size_t>(a + l) * n + (b + l)], a * alpha + b * gamma);
  return m;
}

std::vector<cplx> spherical_harmonics(int l, const Vec3& direction) {
  if (l < 0) throw std::invalid_argument("spherical_harmonics: negative degree");
  const double norm = std::sqrt(direction[0] * direction[0] + direction[1] * direction[1] + direction[2] * direction[2]);
  if (!(std::abs(norm - 1.0) <= 1e-9)) throw std::invalid_argument("spherical_harmonics: direction is not a unit vector");
  const double x = direction[2];
  const double sin_theta = std::hypot(direction[0], direction[1]);
  const double phi = std::atan2(direction[1], direction[0]);

  std::vector<cplx> y(2 * l + 1);
  for (int m = 0; m <= l; ++m) {
    // Normalized associated Legendre N_lm P_l^m(x), no Condon-Shortley phase.
    double pmm = std::sqrt(1.0 / (4.0 * std::numbers::pi));
    for (int k = 1; k <= m; ++k) pmm *= std::sqrt((2.0 * k + 1.0) / (2.0 * k)) * sin_theta;
    double plm = pmm;
    if (l > m) {
      double p_prev = pmm;
      double p_cur = std::sqrt(2.0 * m + 3.0) * x * pmm;
      for (int ll = m + 2; ll <= l; ++ll) {
        const double a = std::sqrt((4.0 * ll * ll - 1.0) / (static_cast<double>(ll) * ll - m * m));
        const double a_prev = std::sqrt((4.0 * (ll - 1) * (ll - 1) - 1.0) / (static_cast<double>(ll - 1) * (ll - 1) - m * m));
        const double p_next = a * (x * p_cur - p_prev / a_prev);
        p_prev = p_cur;
        p_cur = p_next;
      }
      plm = p_cur;
    }
    const double cs = (m % 2 == 0) ? 1.0 : -1.0;
    const cplx ylm = std::polar(cs * plm, m * phi);
    y[l + m] = ylm;
    if (m > 0) y[l - m] = cs * std::conj(ylm);
  }
  return y;
}

// ---------------------------------------------------------------- Clebsch-Gordan

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

cpp_int big_factorial(int n) {
  cpp_int f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

double clebsch_gordan_coefficient(int l1, int m1, int l2, int m2, int l, int m) {
  if (l1 < 0 || l2 < 0 || l < 0) throw std::invalid_argument("clebsch_gordan: negative degree");
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m) > l) return 0.0;
  if (m1 + m2 != m) return 0.0;
  if (l < std::abs(l1 - l2) || l > l1 + l2) return 0.0;

  const cpp_rational pre_sq =
      cpp_rational(cpp_int(2 * l + 1) * big_factorial(l + l1 - l2) * big_factorial(l - l1 + l2) * big_factorial(l1 + l2 - l),
                   big_factorial(l1 + l2 + l + 1)) *
      cpp_rational(big_factorial(l + m) * big_factorial(l - m) * big_factorial(l1 - m1) * big_factorial(l1 + m1) *
                   big_factorial(l2 - m2) * big_factorial(l2 + m2));

  cpp_rational sum = 0;
  const int k_min = std::max({0, l2 - l - m1, l1 - l + m2});
  const int k_max = std::min({l1 + l2 - l, l1 - m1, l2 + m2});
  for (int k = k_min; k <= k_max; ++k) {
    const cpp_int denom = big_factorial(k) * big_factorial(l1 + l2 - l - k) * big_factorial(l1 - m1 - k) *
                          big_factorial(l2 + m2 - k) * big_factorial(l - l2 + m1 + k) * big_factorial(l - l1 - m2 + k);
    const cpp_rational term(1, denom);
    sum += (k % 2 == 0) ? term : cpp_rational(-term);
  }
  if (sum == 0) return 0.0;
  const cpp_rational squared = pre_sq * sum * sum;
  const double magnitude = std::sqrt(squared.convert_to<double>());
  return sum > 0 ? magnitude : -magnitude;
}

bool CGBlock::is_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

const CGBlock& clebsch_gordan(int l1, int l2, int l) {
  if (l1 < 0 || l2 < 0 || l < 0) throw std::invalid_argument("clebsch_gordan: negative degree");
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::unique_ptr<CGBlock>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[{l1, l2, l}];
  if (!slot) {
    std::vector<double> values(static_cast<size_t>(2 * l1 + 1) * (2 * l2 + 1) * (2 * l + 1), 0.0);
    const bool allowed = l >= std::abs(l1 - l2) && l <= l1 + l2;
    if (allowed) {
      for (int m1 = -l1; m1 <= l1; ++m1)
        for (int m2 = -l2; m2 <= l2; ++m2) {
          const int m = m1 + m2;
          if (std::abs(m) > l) continue;
          values[(static_cast<size_t>(m1 + l1) * (2 * l2 + 1) + (m2 + l2)) * (2 * l + 1) + (m + l)] =
              clebsch_gordan_coefficient(l1, m1, l2, m2, l, m);
        }
    }
    slot = std::make_unique<CGBlock>(l1, l2, l, std::move(values));
  }
  return *slot;
}

// ---------------------------------------------------------------- sampling

Rotation haar_random_rotation(Group group, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (group == Group::SO2) return Rotation::so2(kTwoPi * unit(rng));
  const double alpha = kTwoPi * unit(rng);
  // beta has density sin(beta) / 2 on [0, pi].
  const double beta = std::acos(std::clamp(1.0 - 2.0 * unit(rng), -1.0, 1.0));
  const double gamma = kTwoPi * unit(rng);
  return Rotation::euler_zyz(alpha, beta, gamma);
}

Rotation haar_random_rotation(Group group, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return haar_random_rotation(group, rng);
}

GroupElement random_se(int dim, std::mt19937_64& rng, double translation_scale) {
  GroupElement g;
  g.dim = dim;
  g.rotation = haar_random_rotation(group_for_dim(dim), rng);
  std::uniform_real_distribution<double> shift(-translation_scale, translation_scale);
  for (int i = 0; i < dim; ++i) g.translation[i] = shift(rng);
  return g;
}

// ---------------------------------------------------------------- Fourier on SO(2)

std::vector<cplx> fourier_so2(std::span<const cplx> samples, int cutoff) {
  const int a_count = static_cast<int>(samples.size());
  if (cutoff < 0) throw std::invalid_argument("fourier_so2: negative cutoff");
  if (a_count <= 2 * cutoff)
    throw std::invalid_argument("fourier_so2: " + std::to_string(a_count) + " angles alias cutoff " + std::to_string(cutoff));
  std::vector<cplx> coeffs(2 * cutoff + 1);
  for (int k = -cutoff; k <= cutoff; ++k) {
    cplx acc = 0.0;
    for (int a = 0; a < a_count; ++a) {
      // Reduce k*a mod A before scaling so the phase stays exact for large grids.
      const long long idx = ((static_cast<long long>(k) * a) % a_count + a_count) % a_count;
      acc += samples[a] * std::polar(1.0, kTwoPi * static_cast<double>(idx) / a_count);
    }
    coeffs[k + cutoff] = acc / static_cast<double>(a_count);
  }
  return coeffs;
}

std::vector<cplx> inverse_fourier_so2(std::span<const cplx> coefficients, int num_angles) {
  if (coefficients.size() % 2 != 1) throw std::invalid_argument("inverse_fourier_so2: need 2K+1 coefficients");
  const int cutoff = static_cast<int>(coefficients.size() / 2);
  if (num_angles <= 2 * cutoff)
    throw std::invalid_argument("inverse_fourier_so2: " + std::to_string(num_angles) + " angles alias cutoff " +
                                std::to_string(cutoff));
  std::vector<cplx> samples(num_angles);
  for (int a = 0; a < num_angles; ++a) {
    cplx acc = 0.0;
    for (int k = -cutoff; k <= cutoff; ++k) {
      const long long idx = ((static_cast<long long>(-k) * a) % num_angles + num_angles) % num_angles;
      acc += coefficients[k + cutoff] * std::polar(1.0, kTwoPi * static_cast<double>(idx) / num_angles);
    }
    samples[a] = acc;
  }
  return samples;
}

}  // namespace steerkit

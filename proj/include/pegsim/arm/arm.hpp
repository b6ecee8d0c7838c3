#pragma once

// Planar n-link torque-controlled arm in the x-z plane. Gravity acts along
// -z. Joint angles are cumulative: link i points along (cos t_i, sin t_i)
// with t_i = q_1 + ... + q_i, so q = 0 is a straight arm along +x.
//
// Mass matrix by composite-rigid-body accumulation over COM Jacobians,
// Coriolis/gravity bias by planar recursive Newton-Euler, and the
// operational-space inertia by Lambda = (J M^-1 J^T)^-1 with Tikhonov
// damping near singular configurations.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SVD>

#include <stdexcept>
#include <vector>

namespace pegsim::arm {

using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

inline Vector2d perp(const Vector2d& v) { return {-v.y(), v.x()}; }
inline double cross2(const Vector2d& a, const Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

struct ArmModel {
  int n_links = 3;
  VectorXd link_lengths;   // m
  VectorXd link_masses;    // kg
  VectorXd link_inertias;  // kg m^2, about each link's COM
  VectorXd link_coms;      // m, COM distance from the parent joint
  double joint_damping = 0.1;  // N m s / rad
  double gravity = 9.81;       // m/s^2 along -z
  double velocity_cap = 30.0;  // rad/s

  static ArmModel uniform_rods(const std::vector<double>& lengths,
                               const std::vector<double>& masses) {
    ArmModel m;
    m.n_links = static_cast<int>(lengths.size());
    m.link_lengths = Eigen::Map<const VectorXd>(lengths.data(), m.n_links);
    m.link_masses = Eigen::Map<const VectorXd>(masses.data(), m.n_links);
    m.link_coms = 0.5 * m.link_lengths;
    m.link_inertias.resize(m.n_links);
    for (int i = 0; i < m.n_links; ++i)
      m.link_inertias[i] =
          masses[static_cast<std::size_t>(i)] * lengths[static_cast<std::size_t>(i)] *
          lengths[static_cast<std::size_t>(i)] / 12.0;
    m.validate();
    return m;
  }

  void validate() const {
    if (n_links < 1) throw std::invalid_argument("arm needs >= 1 link");
    for (int i = 0; i < n_links; ++i) {
      if (link_lengths[i] <= 0.0 || link_masses[i] <= 0.0 ||
          link_inertias[i] <= 0.0)
        throw std::invalid_argument("link lengths/masses/inertias must be > 0");
    }
  }

  // Rigidly attaches an extra body to the last link (e.g. a tool) whose COM
  // lies on the link axis at `dist` from the last joint. Returns the merged
  // model used for dynamics.
  ArmModel with_tool_body(double mass, double inertia_about_com,
                          double dist) const {
    ArmModel m = *this;
    const int k = n_links - 1;
    const double m0 = m.link_masses[k];
    const double c0 = m.link_coms[k];
    const double mt = m0 + mass;
    const double ct = (m0 * c0 + mass * dist) / mt;
    m.link_inertias[k] += m0 * (c0 - ct) * (c0 - ct) + inertia_about_com +
                          mass * (dist - ct) * (dist - ct);
    m.link_masses[k] = mt;
    m.link_coms[k] = ct;
    return m;
  }
};

struct JointState {
  VectorXd q;
  VectorXd dq;
};

struct EndEffectorState {
  Vector2d x = Vector2d::Zero();
  Vector2d v = Vector2d::Zero();
  double theta = 0.0;
  double dtheta = 0.0;
};

// Joint origins p_0..p_n (p_n is the tip) and cumulative angles.
struct FrameChain {
  std::vector<Vector2d> joints;  // n+1 points
  std::vector<double> angles;    // n cumulative angles
};

inline FrameChain frames(const ArmModel& m, const VectorXd& q) {
  FrameChain f;
  f.joints.resize(static_cast<std::size_t>(m.n_links) + 1);
  f.angles.resize(static_cast<std::size_t>(m.n_links));
  f.joints[0] = Vector2d::Zero();
  double t = 0.0;
  for (int i = 0; i < m.n_links; ++i) {
    t += q[i];
    f.angles[static_cast<std::size_t>(i)] = t;
    f.joints[static_cast<std::size_t>(i) + 1] =
        f.joints[static_cast<std::size_t>(i)] +
        m.link_lengths[i] * Vector2d(std::cos(t), std::sin(t));
  }
  return f;
}

// Position Jacobian (2 x n) of an arbitrary point rigidly attached to the
// chain and currently located at `point` in world coordinates.
inline MatrixXd point_jacobian(const ArmModel& m, const FrameChain& f,
                               const Vector2d& point) {
  MatrixXd J(2, m.n_links);
  for (int i = 0; i < m.n_links; ++i)
    J.col(i) = perp(point - f.joints[static_cast<std::size_t>(i)]);
  return J;
}

inline MatrixXd jacobian(const ArmModel& m, const VectorXd& q) {
  const FrameChain f = frames(m, q);
  return point_jacobian(m, f, f.joints.back());
}

// Rows: d(tip)/dq (2 x n) plus the tool-angle row (all ones).
inline MatrixXd full_jacobian(const ArmModel& m, const VectorXd& q) {
  MatrixXd J(3, m.n_links);
  J.topRows(2) = jacobian(m, q);
  J.row(2).setOnes();
  return J;
}

inline EndEffectorState forward_kinematics(const ArmModel& m,
                                           const JointState& s) {
  const FrameChain f = frames(m, s.q);
  EndEffectorState e;
  e.x = f.joints.back();
  e.theta = f.angles.back();
  e.v = point_jacobian(m, f, e.x) * s.dq;
  e.dtheta = s.dq.sum();
  return e;
}

inline MatrixXd mass_matrix(const ArmModel& m, const VectorXd& q) {
  const FrameChain f = frames(m, q);
  std::vector<Vector2d> coms(static_cast<std::size_t>(m.n_links));
  for (int k = 0; k < m.n_links; ++k) {
    const double t = f.angles[static_cast<std::size_t>(k)];
    coms[static_cast<std::size_t>(k)] =
        f.joints[static_cast<std::size_t>(k)] +
        m.link_coms[k] * Vector2d(std::cos(t), std::sin(t));
  }
  MatrixXd M = MatrixXd::Zero(m.n_links, m.n_links);
  for (int i = 0; i < m.n_links; ++i)
    for (int j = i; j < m.n_links; ++j) {
      double acc = 0.0;
      for (int k = j; k < m.n_links; ++k) {
        const Vector2d rki = coms[static_cast<std::size_t>(k)] -
                             f.joints[static_cast<std::size_t>(i)];
        const Vector2d rkj = coms[static_cast<std::size_t>(k)] -
                             f.joints[static_cast<std::size_t>(j)];
        acc += m.link_masses[k] * rki.dot(rkj) + m.link_inertias[k];
      }
      M(i, j) = acc;
      M(j, i) = acc;
    }
  return M;
}

// Planar recursive Newton-Euler: joint torques realizing ddq at (q, dq)
// under gravity, excluding joint damping and external wrenches.
inline VectorXd rne(const ArmModel& m, const VectorXd& q, const VectorXd& dq,
                    const VectorXd& ddq) {
  const int n = m.n_links;
  const FrameChain f = frames(m, q);
  std::vector<double> omega(static_cast<std::size_t>(n)),
      alpha(static_cast<std::size_t>(n));
  double w = 0.0, a = 0.0;
  for (int i = 0; i < n; ++i) {
    w += dq[i];
    a += ddq[i];
    omega[static_cast<std::size_t>(i)] = w;
    alpha[static_cast<std::size_t>(i)] = a;
  }
  // Accelerating the base by +g along z folds gravity into the pass.
  std::vector<Vector2d> acc_joint(static_cast<std::size_t>(n) + 1),
      acc_com(static_cast<std::size_t>(n));
  acc_joint[0] = Vector2d(0.0, m.gravity);
  for (int i = 0; i < n; ++i) {
    const double t = f.angles[static_cast<std::size_t>(i)];
    const Vector2d u(std::cos(t), std::sin(t));
    const Vector2d r = m.link_lengths[i] * u;
    const Vector2d rc = m.link_coms[i] * u;
    const double wi = omega[static_cast<std::size_t>(i)];
    const double ai = alpha[static_cast<std::size_t>(i)];
    acc_com[static_cast<std::size_t>(i)] =
        acc_joint[static_cast<std::size_t>(i)] + ai * perp(rc) - wi * wi * rc;
    acc_joint[static_cast<std::size_t>(i) + 1] =
        acc_joint[static_cast<std::size_t>(i)] + ai * perp(r) - wi * wi * r;
  }
  VectorXd tau(n);
  Vector2d f_child = Vector2d::Zero();
  double n_child = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const double t = f.angles[static_cast<std::size_t>(i)];
    const Vector2d u(std::cos(t), std::sin(t));
    const Vector2d rc = m.link_coms[i] * u;
    const Vector2d r = m.link_lengths[i] * u;
    const Vector2d F = m.link_masses[i] * acc_com[static_cast<std::size_t>(i)];
    const double ni = m.link_inertias[i] * alpha[static_cast<std::size_t>(i)] +
                      cross2(rc, F) + n_child + cross2(r, f_child);
    tau[i] = ni;
    f_child += F;
    n_child = ni;
  }
  return tau;
}

inline VectorXd gravity_torque(const ArmModel& m, const VectorXd& q) {
  const VectorXd zero = VectorXd::Zero(m.n_links);
  return rne(m, q, zero, zero);
}

// Coriolis/centrifugal plus gravity bias.
inline VectorXd bias_torque(const ArmModel& m, const VectorXd& q,
                            const VectorXd& dq) {
  return rne(m, q, dq, VectorXd::Zero(m.n_links));
}

struct LambdaResult {
  MatrixXd lambda;
  bool damped = false;
};

inline constexpr double kSingularJacobianThreshold = 1e-4;
inline constexpr double kLambdaDamping = 1e-6;

// Task-space inertia for an arbitrary task Jacobian (rows x n).
inline LambdaResult lambda_for(const MatrixXd& J, const MatrixXd& M) {
  LambdaResult r;
  const MatrixXd Minv_Jt = M.llt().solve(J.transpose());
  MatrixXd A = J * Minv_Jt;
  const Eigen::JacobiSVD<MatrixXd> svd(J);
  const double sigma_min = svd.singularValues().minCoeff();
  if (sigma_min < kSingularJacobianThreshold) {
    A += kLambdaDamping * MatrixXd::Identity(A.rows(), A.cols());
    r.damped = true;
  }
  r.lambda = A.llt().solve(MatrixXd::Identity(A.rows(), A.cols()));
  return r;
}

inline LambdaResult lambda_matrix(const ArmModel& m, const VectorXd& q) {
  return lambda_for(jacobian(m, q), mass_matrix(m, q));
}

// ddq = M^-1 (tau + Jf^T w - bias(q,dq) - damping*dq) where w = (fx, fz, my)
// is an external wrench applied at the tip.
inline VectorXd forward_dynamics(const ArmModel& m, const JointState& s,
                                 const VectorXd& tau,
                                 const Eigen::Vector3d& tool_wrench) {
  VectorXd rhs = tau - bias_torque(m, s.q, s.dq) - m.joint_damping * s.dq;
  if (tool_wrench.squaredNorm() > 0.0)
    rhs += full_jacobian(m, s.q).transpose() * tool_wrench;
  return mass_matrix(m, s.q).llt().solve(rhs);
}

// Kinetic plus gravitational potential energy (PE zero at z = 0 per link COM).
inline double total_energy(const ArmModel& m, const JointState& s) {
  const FrameChain f = frames(m, s.q);
  double e = 0.0;
  double w = 0.0;
  for (int i = 0; i < m.n_links; ++i) {
    w += s.dq[i];
    const double t = f.angles[static_cast<std::size_t>(i)];
    const Vector2d com = f.joints[static_cast<std::size_t>(i)] +
                         m.link_coms[i] * Vector2d(std::cos(t), std::sin(t));
    // COM velocity via the point Jacobian rows up to link i.
    Vector2d v = Vector2d::Zero();
    for (int j = 0; j <= i; ++j)
      v += perp(com - f.joints[static_cast<std::size_t>(j)]) * s.dq[j];
    e += 0.5 * m.link_masses[i] * v.squaredNorm() +
         0.5 * m.link_inertias[i] * w * w + m.link_masses[i] * m.gravity * com.y();
  }
  return e;
}

}  // namespace pegsim::arm

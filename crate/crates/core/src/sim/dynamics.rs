//! Planar floating-base multibody dynamics in generalized coordinates
//! `q = [x, z, pitch, left joints.., right joints..]`.
//!
//! Every body point is written as `base + Σ (a·d(θ_k) + b·d'(θ_k))` where
//! `d(θ) = (sin θ, -cos θ)`, `d'(θ) = (cos θ, sin θ)` and each absolute angle
//! `θ_k` is a fixed linear combination of coordinates. That keeps Jacobians
//! and velocity-product terms in closed form.

use nalgebra::{DMatrix, DVector};

use super::morphology::RobotMorphology;

#[derive(Debug, Clone)]
struct Term {
    angle: usize,
    a: f64,
    b: f64,
}

#[derive(Debug, Clone)]
struct Body {
    mass: f64,
    inertia: f64,
    angle: usize,
    com: Vec<Term>,
}

/// Mass, geometry and kinematic tree of the biped after randomization.
#[derive(Debug, Clone)]
pub struct Multibody {
    n: usize,
    /// Sparse rows `θ_k = Σ coef · q_j`.
    angles: Vec<Vec<(usize, f64)>>,
    bodies: Vec<Body>,
    feet: [Vec<Term>; 2],
}

/// Positions, Jacobian and velocity-product acceleration of one point.
#[derive(Debug, Clone)]
pub struct PointKinematics {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    /// 2 x n, row-major.
    pub jac: Vec<f64>,
    pub bias: [f64; 2],
}

impl Multibody {
    /// `torso_mass_delta` is added to the torso; `com_shift` moves the torso
    /// centre of mass fore-aft in the torso frame.
    pub fn new(morph: &RobotMorphology, torso_mass_delta: f64, com_shift: f64) -> Self {
        let nj = morph.joints_per_leg();
        let n = 3 + 2 * nj;
        let mut angles = vec![vec![(2usize, 1.0)]];
        for side in 0..2 {
            for i in 0..nj {
                let mut row = vec![(2usize, 1.0)];
                for j in 0..=i {
                    row.push((3 + side * nj + j, morph.joint_signs[j]));
                }
                angles.push(row);
            }
        }
        let torso_mass = morph.torso_mass + torso_mass_delta;
        let mut bodies = vec![Body {
            mass: torso_mass,
            inertia: torso_mass * morph.torso_length * morph.torso_length / 12.0,
            angle: 0,
            // up vector is -d(φ), fore-aft axis is d'(φ)
            com: vec![Term {
                angle: 0,
                a: -morph.torso_com_height,
                b: com_shift,
            }],
        }];
        let mut feet: [Vec<Term>; 2] = [Vec::new(), Vec::new()];
        for side in 0..2 {
            let mut chain: Vec<Term> = Vec::new();
            for i in 0..nj {
                let angle = 1 + side * nj + i;
                let len = morph.link_lengths[i];
                let mut com = chain.clone();
                com.push(Term { angle, a: 0.5 * len, b: 0.0 });
                bodies.push(Body {
                    mass: morph.link_masses[i],
                    inertia: morph.link_masses[i] * len * len / 12.0,
                    angle,
                    com,
                });
                chain.push(Term { angle, a: len, b: 0.0 });
            }
            feet[side] = chain;
        }
        Multibody { n, angles, bodies, feet }
    }

    pub fn dofs(&self) -> usize {
        self.n
    }

    fn angle_values(&self, q: &[f64], qd: &[f64]) -> Vec<(f64, f64, f64)> {
        self.angles
            .iter()
            .map(|row| {
                let th: f64 = row.iter().map(|&(j, c)| c * q[j]).sum();
                let om: f64 = row.iter().map(|&(j, c)| c * qd[j]).sum();
                let (s, c) = th.sin_cos();
                (s, c, om)
            })
            .collect()
    }

    fn point(&self, terms: &[Term], ang: &[(f64, f64, f64)], q: &[f64], qd: &[f64]) -> PointKinematics {
        let n = self.n;
        let mut jac = vec![0.0; 2 * n];
        jac[0] = 1.0;
        jac[n + 1] = 1.0;
        let mut pos = [q[0], q[1]];
        let mut bias = [0.0, 0.0];
        for t in terms {
            let (s, c, om) = ang[t.angle];
            let d = [s, -c];
            let dp = [c, s];
            pos[0] += t.a * d[0] + t.b * dp[0];
            pos[1] += t.a * d[1] + t.b * dp[1];
            let dv = [t.a * dp[0] - t.b * d[0], t.a * dp[1] - t.b * d[1]];
            for &(j, coef) in &self.angles[t.angle] {
                jac[j] += coef * dv[0];
                jac[n + j] += coef * dv[1];
            }
            let w2 = om * om;
            bias[0] -= w2 * (t.a * d[0] + t.b * dp[0]);
            bias[1] -= w2 * (t.a * d[1] + t.b * dp[1]);
        }
        let mut vel = [0.0, 0.0];
        for j in 0..n {
            vel[0] += jac[j] * qd[j];
            vel[1] += jac[n + j] * qd[j];
        }
        PointKinematics { pos, vel, jac, bias }
    }

    pub fn foot(&self, side: usize, q: &[f64], qd: &[f64]) -> PointKinematics {
        let ang = self.angle_values(q, qd);
        self.point(&self.feet[side], &ang, q, qd)
    }

    pub fn feet(&self, q: &[f64], qd: &[f64]) -> [PointKinematics; 2] {
        let ang = self.angle_values(q, qd);
        [
            self.point(&self.feet[0], &ang, q, qd),
            self.point(&self.feet[1], &ang, q, qd),
        ]
    }

    pub fn mass_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let zeros = vec![0.0; self.n];
        let ang = self.angle_values(q, &zeros);
        let mut m = DMatrix::zeros(self.n, self.n);
        for body in &self.bodies {
            let pk = self.point(&body.com, &ang, q, &zeros);
            self.add_body_mass(&mut m, body, &pk);
        }
        m
    }

    fn add_body_mass(&self, m: &mut DMatrix<f64>, body: &Body, pk: &PointKinematics) {
        let n = self.n;
        for i in 0..n {
            let (jxi, jzi) = (pk.jac[i], pk.jac[n + i]);
            if jxi == 0.0 && jzi == 0.0 {
                continue;
            }
            for j in 0..n {
                m[(i, j)] += body.mass * (jxi * pk.jac[j] + jzi * pk.jac[n + j]);
            }
        }
        let row = &self.angles[body.angle];
        for &(i, ci) in row {
            for &(j, cj) in row {
                m[(i, j)] += body.inertia * ci * cj;
            }
        }
    }

    /// Generalized accelerations for joint torques `tau` (one per joint) and
    /// external forces applied at the feet.
    pub fn accelerations(
        &self,
        q: &[f64],
        qd: &[f64],
        tau: &[f64],
        foot_forces: [[f64; 2]; 2],
        gravity: f64,
    ) -> Option<DVector<f64>> {
        let n = self.n;
        let ang = self.angle_values(q, qd);
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for body in &self.bodies {
            let pk = self.point(&body.com, &ang, q, qd);
            self.add_body_mass(&mut m, body, &pk);
            let f = [-body.mass * pk.bias[0], -body.mass * (gravity + pk.bias[1])];
            for j in 0..n {
                rhs[j] += pk.jac[j] * f[0] + pk.jac[n + j] * f[1];
            }
        }
        for (side, force) in foot_forces.iter().enumerate() {
            if force[0] == 0.0 && force[1] == 0.0 {
                continue;
            }
            let pk = self.point(&self.feet[side], &ang, q, qd);
            for j in 0..n {
                rhs[j] += pk.jac[j] * force[0] + pk.jac[n + j] * force[1];
            }
        }
        for (j, t) in tau.iter().enumerate() {
            rhs[3 + j] += t;
        }
        m.cholesky().map(|c| c.solve(&rhs))
    }

    pub fn kinetic_energy(&self, q: &[f64], qd: &[f64]) -> f64 {
        let m = self.mass_matrix(q);
        let v = DVector::from_column_slice(qd);
        0.5 * v.dot(&(m * &v))
    }

    pub fn potential_energy(&self, q: &[f64], gravity: f64) -> f64 {
        let zeros = vec![0.0; self.n];
        let ang = self.angle_values(q, &zeros);
        self.bodies
            .iter()
            .map(|b| b.mass * gravity * self.point(&b.com, &ang, q, &zeros).pos[1])
            .sum()
    }

    pub fn center_of_mass(&self, q: &[f64]) -> [f64; 2] {
        let zeros = vec![0.0; self.n];
        let ang = self.angle_values(q, &zeros);
        let mut c = [0.0; 2];
        for b in &self.bodies {
            let p = self.point(&b.com, &ang, q, &zeros).pos;
            c[0] += b.mass * p[0];
            c[1] += b.mass * p[1];
        }
        let m = self.total_mass();
        [c[0] / m, c[1] / m]
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }
}

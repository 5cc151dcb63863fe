//! Test problems: data (initial, boundary, forcing) and exact solutions.

use std::f64::consts::PI;

use crate::mesh::{BoundaryTag, Point};

/// A closed-form solution of the Navier-Stokes equations.
pub trait ExactSolution: Send + Sync {
    fn velocity(&self, x: Point, t: f64) -> [f64; 2];
    /// Rows are components: `grad[i][j] = d u_i / d x_j`.
    fn velocity_gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2];
    fn pressure(&self, x: Point, t: f64) -> f64;
}

/// Data of an initial-boundary value problem with Dirichlet data on every
/// boundary edge.
pub trait FlowProblem: Send + Sync {
    fn name(&self) -> &str;

    fn initial_velocity(&self, x: Point) -> [f64; 2];

    fn boundary_velocity(&self, x: Point, tag: BoundaryTag, t: f64) -> [f64; 2];

    fn forcing(&self, _x: Point, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    /// Lets the solver skip assembling a forcing vector that is known to be
    /// zero.
    fn has_forcing(&self) -> bool {
        false
    }

    fn exact(&self) -> Option<&dyn ExactSolution> {
        None
    }
}

/// Smooth solution on the unit square with homogeneous boundary values:
/// `u = (sin^2(pi x) sin(2 pi y), -sin^2(pi y) sin(2 pi x)) (1 + sin(pi t))`,
/// `p = (1 + sin(pi t)) cos(pi x) cos(pi y)`.
#[derive(Clone, Copy, Debug)]
pub struct Manufactured {
    pub nu: f64,
}

impl Manufactured {
    fn g(t: f64) -> f64 {
        1.0 + (PI * t).sin()
    }

    /// `u_t - nu lap u + (u . grad) u + grad p`, derived by hand.
    pub fn forcing_at(&self, x: Point, t: f64) -> [f64; 2] {
        let g = Self::g(t);
        let dg = PI * (PI * t).cos();
        let [sx, sy] = [(PI * x[0]).sin(), (PI * x[1]).sin()];
        let [cx, cy] = [(PI * x[0]).cos(), (PI * x[1]).cos()];
        let [s2x, s2y] = [(2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin()];
        let [c2x, c2y] = [(2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos()];
        let pi2 = PI * PI;

        let u = self.velocity(x, t);
        let gu = self.velocity_gradient(x, t);
        let lap = [
            g * (2.0 * pi2 * c2x * s2y - 4.0 * pi2 * sx * sx * s2y),
            -g * (2.0 * pi2 * c2y * s2x - 4.0 * pi2 * sy * sy * s2x),
        ];
        let grad_p = [-g * PI * sx * cy, -g * PI * cx * sy];
        let mut f = [0.0; 2];
        for i in 0..2 {
            let conv = u[0] * gu[i][0] + u[1] * gu[i][1];
            f[i] = dg / g * u[i] - self.nu * lap[i] + conv + grad_p[i];
        }
        f
    }
}

impl ExactSolution for Manufactured {
    fn velocity(&self, x: Point, t: f64) -> [f64; 2] {
        let g = Self::g(t);
        let [sx, sy] = [(PI * x[0]).sin(), (PI * x[1]).sin()];
        [
            g * sx * sx * (2.0 * PI * x[1]).sin(),
            -g * sy * sy * (2.0 * PI * x[0]).sin(),
        ]
    }

    fn velocity_gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2] {
        let g = Self::g(t);
        let [sx, sy] = [(PI * x[0]).sin(), (PI * x[1]).sin()];
        let [s2x, s2y] = [(2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin()];
        let [c2x, c2y] = [(2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos()];
        [
            [g * PI * s2x * s2y, g * 2.0 * PI * sx * sx * c2y],
            [-g * 2.0 * PI * sy * sy * c2x, -g * PI * s2y * s2x],
        ]
    }

    fn pressure(&self, x: Point, t: f64) -> f64 {
        Self::g(t) * (PI * x[0]).cos() * (PI * x[1]).cos()
    }
}

impl FlowProblem for Manufactured {
    fn name(&self) -> &str {
        "manufactured"
    }

    fn initial_velocity(&self, x: Point) -> [f64; 2] {
        self.velocity(x, 0.0)
    }

    fn boundary_velocity(&self, x: Point, _tag: BoundaryTag, t: f64) -> [f64; 2] {
        self.velocity(x, t)
    }

    fn forcing(&self, x: Point, t: f64) -> [f64; 2] {
        self.forcing_at(x, t)
    }

    fn has_forcing(&self) -> bool {
        true
    }

    fn exact(&self) -> Option<&dyn ExactSolution> {
        Some(self)
    }
}

/// Lattice of counter-rotating vortices on the unit square, decaying by
/// viscosity: `u = (sin 2pi x sin 2pi y, cos 2pi x cos 2pi y) exp(-8 nu pi^2 t)`.
/// The boundary data is the exact solution, which is nonzero on `y = 0, 1`.
#[derive(Clone, Copy, Debug)]
pub struct LatticeVortex {
    pub nu: f64,
}

impl LatticeVortex {
    fn decay(&self, t: f64) -> f64 {
        (-8.0 * self.nu * PI * PI * t).exp()
    }
}

impl ExactSolution for LatticeVortex {
    fn velocity(&self, x: Point, t: f64) -> [f64; 2] {
        let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        let e = self.decay(t);
        [a.sin() * b.sin() * e, a.cos() * b.cos() * e]
    }

    fn velocity_gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2] {
        let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        let k = 2.0 * PI * self.decay(t);
        [
            [k * a.cos() * b.sin(), k * a.sin() * b.cos()],
            [-k * a.sin() * b.cos(), -k * a.cos() * b.sin()],
        ]
    }

    /// Decays with the square of the velocity amplitude.
    fn pressure(&self, x: Point, t: f64) -> f64 {
        let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
        let e = self.decay(t);
        -0.5 * (a.sin().powi(2) + b.cos().powi(2)) * e * e
    }
}

impl FlowProblem for LatticeVortex {
    fn name(&self) -> &str {
        "lattice-vortex"
    }

    fn initial_velocity(&self, x: Point) -> [f64; 2] {
        self.velocity(x, 0.0)
    }

    fn boundary_velocity(&self, x: Point, _tag: BoundaryTag, t: f64) -> [f64; 2] {
        self.velocity(x, t)
    }

    fn exact(&self) -> Option<&dyn ExactSolution> {
        Some(self)
    }
}

/// Time modulation of the channel inflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InflowSchedule {
    /// `min(1, t / ramp)`; a zero ramp switches the inflow on at once.
    Ramp { ramp: f64 },
    /// `sin(pi t / period)`, half a sine wave over `[0, period]`.
    HalfSine { period: f64 },
}

impl InflowSchedule {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            InflowSchedule::Ramp { ramp } if ramp > 0.0 => (t / ramp).min(1.0),
            InflowSchedule::Ramp { .. } => 1.0,
            InflowSchedule::HalfSine { period } => (PI * t / period).sin(),
        }
    }
}

/// Channel `(0, length) x (0, height)` around a cylinder, parabolic profile
/// `peak * 4 y (height - y) / height^2` on inflow and outflow, no-slip on
/// walls and the cylinder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelFlow {
    pub height: f64,
    pub peak: f64,
    pub schedule: InflowSchedule,
}

impl ChannelFlow {
    pub fn profile(&self, y: f64, t: f64) -> f64 {
        let h = self.height;
        self.peak * 4.0 * y * (h - y) / (h * h) * self.schedule.factor(t)
    }
}

impl FlowProblem for ChannelFlow {
    fn name(&self) -> &str {
        "cylinder"
    }

    fn initial_velocity(&self, _x: Point) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn boundary_velocity(&self, x: Point, tag: BoundaryTag, t: f64) -> [f64; 2] {
        match tag {
            BoundaryTag::INFLOW | BoundaryTag::OUTFLOW => [self.profile(x[1], t), 0.0],
            _ => [0.0, 0.0],
        }
    }
}
